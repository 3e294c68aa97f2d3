//! Beam search over a transparent three-step model, contrasted with greedy
//! and stochastic decoding.
//!
//! ```bash
//! cargo run --example beam_search_walkthrough
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use suffixgan::decode::{beam_search, hallucinate_search, BeamConfig, FixedDistributions};

fn letters(labels: &[usize]) -> String {
    labels.iter().map(|&l| (b'a' + l as u8) as char).collect()
}

fn main() {
    // per-position distributions over the labels a, b, c, d
    let model = FixedDistributions::new(vec![
        vec![0.3, 0.35, 0.3, 0.05],
        vec![0.35, 0.3, 0.3, 0.05],
        vec![0.05, 0.3, 0.35, 0.3],
    ]);

    // k = 1 is greedy decoding: argmax at every step
    let greedy = beam_search(&model, &BeamConfig::new(1, 3));
    println!(
        "k=1 -> {} with score {:.3} (sum of -ln p)",
        letters(&greedy[0].labels),
        greedy[0].score
    );

    // wider beams surface near-misses in ranked order
    println!("\nk=3 ranked suffixes:");
    for p in beam_search(&model, &BeamConfig::new(3, 3)) {
        println!("  {} @ {:.4}", letters(&p.labels), p.score);
    }

    // stochastic sampling gives a different suffix per run
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let runs = hallucinate_search(&model, 3, 8, &mut rng);
    println!("\n8 hallucinated runs:");
    for p in &runs {
        println!("  {} @ {:.4}", letters(&p.labels), p.score);
    }
}
