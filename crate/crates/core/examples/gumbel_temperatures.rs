//! The Gumbel-Max trick and its softmax relaxation at different
//! temperatures, plus the exponential annealing schedule used in training.
//!
//! ```bash
//! cargo run --example gumbel_temperatures
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use suffixgan::gumbel::{
    gumbel_max_sample, gumbel_softmax_sample, CategoricalDistribution, TemperatureSchedule,
};

fn main() {
    let dist = CategoricalDistribution::new(vec![0.1, 0.15, 0.05, 0.70]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);

    // exact categorical sampling via argmax over log pi + Gumbel noise
    let n = 50_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let z = gumbel_max_sample(&dist, &mut rng);
        counts[z.iter().position(|&v| v == 1.0).unwrap()] += 1;
    }
    println!("Gumbel-Max frequencies over {n} draws (target {:?}):", dist.probs());
    for (i, c) in counts.iter().enumerate() {
        println!("  class {i}: {:.4}", *c as f64 / n as f64);
    }

    // the relaxation interpolates between uniform and one-hot
    println!("\nGumbel-Softmax samples (one draw each, shared seed per row):");
    for tau in [10.0, 1.0, 0.5, 0.1] {
        let mut local = ChaCha8Rng::seed_from_u64(9);
        let y = gumbel_softmax_sample(&dist, tau, &mut local).unwrap();
        let formatted: Vec<String> = y.iter().map(|v| format!("{v:.3}")).collect();
        println!("  tau = {tau:>5}: [{}]", formatted.join(", "));
    }

    let schedule = TemperatureSchedule::default();
    println!("\nannealing schedule over {} epochs:", schedule.total_epochs);
    for epoch in [0, 100, 250, 400, 500] {
        println!("  epoch {epoch:>3}: tau = {:.4}", schedule.tau_at(epoch));
    }
}
