//! End to end in memory: generate a log, train briefly, predict suffixes
//! with beam search and score them with edit-distance similarity and MAE.
//!
//! ```bash
//! cargo run --release --example predict_and_evaluate
//! ```

use suffixgan::decode::predict_suffixes;
use suffixgan::encoding::{decode_labels, make_pairs_for_log, TimeNormalizer, Vocabulary};
use suffixgan::eventlog::split_log;
use suffixgan::metrics::{evaluate_with, DlVariant, EvaluationInput};
use suffixgan::seq2seq::{DiscriminatorModel, GeneratorModel, ModelConfig};
use suffixgan::synth::{generate_synthetic_log, SyntheticProcessModel};
use suffixgan::training::{train, TrainConfig};

fn main() {
    let log = generate_synthetic_log(&SyntheticProcessModel::desk_scale(), 80, 11).unwrap();
    let (train_log, test_log, val_log) = split_log(&log, (0.7, 0.2, 0.1), 11).unwrap();
    let vocab = Vocabulary::build(&train_log).unwrap();
    let norm = TimeNormalizer::fit(&train_log);
    let train_pairs = make_pairs_for_log(&train_log, &vocab, &norm).unwrap();
    let val_pairs = make_pairs_for_log(&val_log, &vocab, &norm).unwrap();
    let test_pairs = make_pairs_for_log(&test_log, &vocab, &norm).unwrap();

    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        hidden: 32,
        depth: 1,
        init_std: 0.05,
    };
    let config = TrainConfig {
        epochs: 40,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: 11,
        ..TrainConfig::default()
    };
    println!("training on {} pairs...", train_pairs.len());
    let result = train(
        GeneratorModel::new(model_config.clone(), 1),
        DiscriminatorModel::new(model_config, 2),
        &train_pairs,
        &val_pairs,
        &config,
    )
    .unwrap();
    let generator = result.best_generator;

    let max_len = log.max_trace_len() + 5;
    let mut inputs = Vec::new();
    for pair in &test_pairs {
        let ranked = predict_suffixes(&generator, &pair.prefix, 3, max_len).unwrap();
        let top = &ranked[0];
        inputs.push(EvaluationInput {
            case_id: pair.case_id.clone(),
            prefix_len: pair.prefix_len,
            predicted_labels: top.labels.clone(),
            true_labels: pair
                .suffix
                .iter()
                .map(|v| v.label)
                .filter(|&l| l != vocab.eos_index())
                .collect(),
            predicted_remaining_days: top.remaining_time * norm.scale,
            true_remaining_days: pair.remaining_time_days,
        });
    }

    // show a couple of ranked predictions next to the truth
    for pair in test_pairs.iter().take(3) {
        let ranked = predict_suffixes(&generator, &pair.prefix, 3, max_len).unwrap();
        println!("\ncase {} (prefix length {}):", pair.case_id, pair.prefix_len);
        println!("  truth: {:?}", decode_labels(&pair.suffix, &vocab));
        for (rank, p) in ranked.iter().enumerate() {
            let labels: Vec<&str> = p.labels.iter().map(|&l| vocab.label_of(l)).collect();
            println!("  #{}: {labels:?} @ {:.3}", rank + 1, p.score);
        }
    }

    let report = evaluate_with(DlVariant::Restricted, &inputs).unwrap();
    println!(
        "\nheld-out over {} prefixes: mean similarity {:.4}, MAE {:.3} days",
        report.n(),
        report.mean_similarity,
        report.mae_days
    );
}
