//! Gradient-norm clipping and an RMSprop optimizer over a `ParamSet`.

use super::params::ParamSet;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipScope {
    /// one norm per layer tag
    #[default]
    Layer,
    /// single norm over every tensor
    Global,
}

/// Rescales gradients in place so each group's L2 norm is at most
/// `clip_norm`; direction is preserved. Returns the largest post-clip group
/// norm (for instrumentation).
pub fn clip_gradients(
    params: &ParamSet,
    grads: &mut [Vec<f64>],
    clip_norm: f64,
    scope: ClipScope,
) -> f64 {
    assert!(clip_norm > 0.0);
    assert_eq!(grads.len(), params.len());
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in params.tensors().iter().enumerate() {
        let key = match scope {
            ClipScope::Layer => t.layer.as_str(),
            ClipScope::Global => "",
        };
        groups.entry(key).or_default().push(i);
    }
    let mut max_norm = 0.0_f64;
    for indices in groups.values() {
        let sq: f64 = indices
            .iter()
            .flat_map(|&i| grads[i].iter())
            .map(|g| g * g)
            .sum();
        let norm = sq.sqrt();
        if norm > clip_norm {
            let factor = clip_norm / norm;
            for &i in indices {
                for g in &mut grads[i] {
                    *g *= factor;
                }
            }
            max_norm = max_norm.max(clip_norm);
        } else {
            max_norm = max_norm.max(norm);
        }
    }
    max_norm
}

/// Adaptive per-parameter steps from a squared-gradient moving average:
/// ms = decay * ms + (1 - decay) * g^2; p -= lr * g / (sqrt(ms) + eps).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    mean_square: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(params: &ParamSet, learning_rate: f64) -> RmsProp {
        RmsProp {
            learning_rate,
            decay: 0.99,
            epsilon: 1e-8,
            mean_square: params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.len()])
                .collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) {
        assert_eq!(grads.len(), params.len());
        for (idx, grad) in grads.iter().enumerate() {
            let ms = &mut self.mean_square[idx];
            let mut delta = vec![0.0; grad.len()];
            for (j, &g) in grad.iter().enumerate() {
                ms[j] = self.decay * ms[j] + (1.0 - self.decay) * g * g;
                delta[j] = -self.learning_rate * g / (ms[j].sqrt() + self.epsilon);
            }
            params.apply_delta(idx, &delta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn two_layer_params() -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::new();
        p.add_matrix("w0", "l0", 1, 2, 0.05, &mut rng);
        p.add_matrix("w1", "l1", 1, 2, 0.05, &mut rng);
        p
    }

    #[test]
    fn small_gradients_pass_through() {
        let p = two_layer_params();
        let mut grads = vec![vec![0.3, 0.4], vec![0.1, 0.1]];
        let before = grads.clone();
        clip_gradients(&p, &mut grads, 1.0, ClipScope::Layer);
        assert_eq!(grads, before);
    }

    #[test]
    fn three_four_five_clip() {
        let p = two_layer_params();
        let mut grads = vec![vec![3.0, 4.0], vec![0.0, 0.0]];
        clip_gradients(&p, &mut grads, 1.0, ClipScope::Layer);
        assert!((grads[0][0] - 0.6).abs() < 1e-12);
        assert!((grads[0][1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn layer_scope_clips_independently_global_jointly() {
        let p = two_layer_params();
        let mut layer = vec![vec![3.0, 4.0], vec![0.6, 0.8]];
        clip_gradients(&p, &mut layer, 1.0, ClipScope::Layer);
        // second layer norm was exactly 1, untouched
        assert!((layer[1][0] - 0.6).abs() < 1e-12);

        let mut global = vec![vec![3.0, 4.0], vec![0.6, 0.8]];
        clip_gradients(&p, &mut global, 1.0, ClipScope::Global);
        let sq: f64 = global.iter().flatten().map(|g| g * g).sum();
        assert!((sq.sqrt() - 1.0).abs() < 1e-9);
        // direction preserved
        assert!((global[0][0] / global[0][1] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn clipped_norm_never_exceeds_bound() {
        let p = two_layer_params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let mut grads = vec![
                (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect::<Vec<f64>>(),
                (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect::<Vec<f64>>(),
            ];
            clip_gradients(&p, &mut grads, 1.0, ClipScope::Layer);
            for layer in &grads {
                let norm: f64 = layer.iter().map(|g| g * g).sum::<f64>().sqrt();
                assert!(norm <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn rmsprop_descends_a_quadratic() {
        // minimize sum((p - target)^2) over a 1x2 matrix
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamSet::new();
        params.add_matrix("w", "l0", 1, 2, 1.0, &mut rng);
        let target = [2.0, -1.5];
        let mut opt = RmsProp::new(&params, 0.05);
        let loss = |p: &ParamSet| -> f64 {
            p.get(0)
                .values
                .iter()
                .zip(&target)
                .map(|(v, t)| (v - t) * (v - t))
                .sum()
        };
        let initial = loss(&params);
        for _ in 0..500 {
            let grads = vec![params
                .get(0)
                .values
                .iter()
                .zip(&target)
                .map(|(v, t)| 2.0 * (v - t))
                .collect::<Vec<f64>>()];
            opt.step(&mut params, &grads);
        }
        assert!(loss(&params) < initial * 1e-3);
    }
}
