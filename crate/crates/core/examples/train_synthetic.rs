//! A short adversarial training run on a synthetic log, printing the loss
//! trajectory and the convergence report.
//!
//! ```bash
//! cargo run --release --example train_synthetic
//! ```

use suffixgan::encoding::{make_pairs_for_log, TimeNormalizer, Vocabulary};
use suffixgan::eventlog::split_log;
use suffixgan::seq2seq::{DiscriminatorModel, GeneratorModel, ModelConfig};
use suffixgan::synth::{generate_synthetic_log, SyntheticProcessModel};
use suffixgan::training::{convergence_report, train, TrainConfig};

fn main() {
    let log = generate_synthetic_log(&SyntheticProcessModel::desk_scale(), 60, 3).unwrap();
    let (train_log, _, val_log) = split_log(&log, (0.7, 0.15, 0.15), 3).unwrap();
    let vocab = Vocabulary::build(&train_log).unwrap();
    let norm = TimeNormalizer::fit(&train_log);
    let train_pairs = make_pairs_for_log(&train_log, &vocab, &norm).unwrap();
    let val_pairs = make_pairs_for_log(&val_log, &vocab, &norm).unwrap();
    println!("{} training pairs, {} validation pairs", train_pairs.len(), val_pairs.len());

    let model_config = ModelConfig {
        vocab_size: vocab.len(),
        hidden: 16,
        depth: 1,
        init_std: 0.05,
    };
    let config = TrainConfig {
        epochs: 15,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: 3,
        ..TrainConfig::default()
    };
    let result = train(
        GeneratorModel::new(model_config.clone(), 1),
        DiscriminatorModel::new(model_config, 2),
        &train_pairs,
        &val_pairs,
        &config,
    )
    .unwrap();

    println!("\nepoch  d_loss  g_adv   g_sup   val");
    for r in &result.records {
        println!(
            "{:>5}  {:.4}  {:+.4} {:.4}  {:.4}",
            r.epoch, r.d_loss, r.g_adv_loss, r.g_supervised_loss, r.validation_loss
        );
    }

    let report = convergence_report(&result.records);
    println!("\nvalidation slope {:+.5} per epoch", report.validation_loss_slope);
    println!("implied D(fake) at the last epoch: {:.3}", report.mean_d_fake_last_epoch);
    println!("diverged: {}", report.diverged);
    println!(
        "best validation loss {:.4} at epoch {}",
        result.best_validation_loss, result.best_epoch
    );
}
