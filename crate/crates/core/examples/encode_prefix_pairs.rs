//! Turn traces into training material: a vocabulary with an EOS marker,
//! max-based time normalization, and one (prefix, suffix) pair per prefix
//! length.
//!
//! ```bash
//! cargo run --example encode_prefix_pairs
//! ```

use suffixgan::encoding::{decode_labels, make_pairs_for_log, TimeNormalizer, Vocabulary};
use suffixgan::synth::{generate_synthetic_log, SyntheticProcessModel};

fn main() {
    let log = generate_synthetic_log(&SyntheticProcessModel::desk_scale(), 3, 1).unwrap();

    let vocab = Vocabulary::build(&log).unwrap();
    println!("vocabulary ({} labels, EOS last): {:?}", vocab.len(), vocab.labels());

    let norm = TimeNormalizer::fit(&log);
    println!("duration scale: {:.3} days -> 1.0", norm.scale);

    let pairs = make_pairs_for_log(&log, &vocab, &norm).unwrap();
    println!("{} pairs from {} traces\n", pairs.len(), log.traces.len());
    for pair in pairs.iter().take(4) {
        println!(
            "case {} | prefix (k={}): {:?}",
            pair.case_id,
            pair.prefix_len,
            decode_labels(&pair.prefix, &vocab)
        );
        println!(
            "          suffix: {:?} + EOS, remaining {:.2} days",
            decode_labels(&pair.suffix, &vocab),
            pair.remaining_time_days
        );
        // each position is a one-hot over the vocabulary plus a duration
        let first = &pair.prefix[0];
        println!("          first position dense width: {}", first.dense().len());
    }
}
