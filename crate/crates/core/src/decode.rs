//! Level-wise beam search over step models. The beam keeps the k lowest
//! cumulative costs (sum of negative log probabilities); ties are broken by
//! candidate generation order, which is parent rank then label index.

use crate::encoding::AugmentedVector;
use crate::nn::LstmState;
use crate::seq2seq::{GeneratorModel, ModelError};
use ndarray::Array1;
use rand::Rng;
use serde::Serialize;

/// Step-wise sequence model the beam can search over.
pub trait SuffixModel {
    type State: Clone;
    fn start(&self) -> Self::State;
    /// Probability vector and duration for the next position, plus the
    /// recurrent state after consuming the pending input.
    fn step(&self, state: &Self::State) -> (Vec<f64>, f64, Self::State);
    /// Successor state once `label` has been chosen for this position.
    fn feed(&self, stepped: &Self::State, label: usize, duration: f64) -> Self::State;
    /// Terminating label, if the model has one.
    fn eos(&self) -> Option<usize>;
    fn vocab_size(&self) -> usize;
}

/// Fixed per-position distributions, independent of the path taken. Useful
/// as a transparent reference model: beam search over it is exactly the
/// k-best selection over independent positions.
pub struct FixedDistributions {
    pub distributions: Vec<Vec<f64>>,
    pub eos: Option<usize>,
}

impl FixedDistributions {
    pub fn new(distributions: Vec<Vec<f64>>) -> FixedDistributions {
        assert!(!distributions.is_empty());
        let width = distributions[0].len();
        assert!(distributions.iter().all(|d| d.len() == width));
        FixedDistributions {
            distributions,
            eos: None,
        }
    }
}

impl SuffixModel for FixedDistributions {
    type State = usize;

    fn start(&self) -> usize {
        0
    }

    fn step(&self, state: &usize) -> (Vec<f64>, f64, usize) {
        (self.distributions[*state].clone(), 0.0, *state)
    }

    fn feed(&self, stepped: &usize, _label: usize, _duration: f64) -> usize {
        stepped + 1
    }

    fn eos(&self) -> Option<usize> {
        self.eos
    }

    fn vocab_size(&self) -> usize {
        self.distributions[0].len()
    }
}

/// Beam adapter for a trained generator, starting from an encoded prefix.
pub struct GeneratorBeamModel<'a> {
    generator: &'a GeneratorModel,
    encoded: LstmState,
}

impl<'a> GeneratorBeamModel<'a> {
    pub fn new(
        generator: &'a GeneratorModel,
        prefix: &[AugmentedVector],
    ) -> Result<GeneratorBeamModel<'a>, ModelError> {
        Ok(GeneratorBeamModel {
            generator,
            encoded: generator.encode(prefix)?,
        })
    }
}

impl SuffixModel for GeneratorBeamModel<'_> {
    type State = (LstmState, Array1<f64>);

    fn start(&self) -> Self::State {
        (self.encoded.clone(), self.generator.start_input())
    }

    fn step(&self, state: &Self::State) -> (Vec<f64>, f64, Self::State) {
        let (lstm, input) = state;
        let mut next = lstm.clone();
        let out = self
            .generator
            .decode_step(&mut next, input)
            .expect("input width fixed by adapter");
        let duration = out.duration;
        (
            out.activity_probs,
            duration,
            (next, input.clone()),
        )
    }

    fn feed(&self, stepped: &Self::State, label: usize, duration: f64) -> Self::State {
        let mut input = vec![0.0; self.generator.config.vocab_size];
        input[label] = 1.0;
        input.push(duration);
        (stepped.0.clone(), Array1::from(input))
    }

    fn eos(&self) -> Option<usize> {
        Some(self.generator.eos_index())
    }

    fn vocab_size(&self) -> usize {
        self.generator.config.vocab_size
    }
}

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub k: usize,
    pub max_len: usize,
    /// include the EOS step's negative log probability in the score
    pub score_eos: bool,
}

impl BeamConfig {
    pub fn new(k: usize, max_len: usize) -> BeamConfig {
        BeamConfig {
            k,
            max_len,
            score_eos: true,
        }
    }
}

/// One ranked beam output. `labels` and `durations` exclude the EOS step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub durations: Vec<f64>,
    /// sum of negative log probabilities along the path (lower is better)
    pub score: f64,
    /// sum of the emitted durations, in the model's normalized units
    pub remaining_time: f64,
    /// hit max_len without the model emitting EOS
    pub truncated: bool,
}

struct Hypothesis<S> {
    labels: Vec<usize>,
    durations: Vec<f64>,
    score: f64,
    state: Option<S>,
    finished: bool,
}

/// Breadth-first beam search: at each level every live hypothesis is
/// expanded over the whole vocabulary, then the pool (finished hypotheses
/// included) is cut back to the k lowest scores with a stable sort.
pub fn beam_search<M: SuffixModel>(model: &M, config: &BeamConfig) -> Vec<Prediction> {
    assert!(config.k >= 1 && config.max_len >= 1);
    let vocab = model.vocab_size();
    let eos = model.eos();
    let mut beam: Vec<Hypothesis<M::State>> = vec![Hypothesis {
        labels: Vec::new(),
        durations: Vec::new(),
        score: 0.0,
        state: Some(model.start()),
        finished: false,
    }];

    for _ in 0..config.max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut pool: Vec<Hypothesis<M::State>> = Vec::new();
        for hyp in beam {
            if hyp.finished {
                pool.push(hyp);
                continue;
            }
            let state = hyp.state.as_ref().expect("live hypothesis keeps state");
            let (probs, duration, stepped) = model.step(state);
            assert_eq!(probs.len(), vocab);
            for label in 0..vocab {
                let step_cost = -probs[label].max(1e-300).ln();
                if eos == Some(label) {
                    pool.push(Hypothesis {
                        labels: hyp.labels.clone(),
                        durations: hyp.durations.clone(),
                        score: hyp.score + if config.score_eos { step_cost } else { 0.0 },
                        state: None,
                        finished: true,
                    });
                } else {
                    let mut labels = hyp.labels.clone();
                    labels.push(label);
                    let mut durations = hyp.durations.clone();
                    durations.push(duration);
                    pool.push(Hypothesis {
                        labels,
                        durations,
                        score: hyp.score + step_cost,
                        state: Some(model.feed(&stepped, label, duration)),
                        finished: false,
                    });
                }
            }
        }
        // live memory stays bounded by the beam and one expansion of it
        assert!(pool.len() <= config.k + config.k * vocab);
        pool.sort_by(|a, b| a.score.partial_cmp(&b.score).unwrap());
        pool.truncate(config.k);
        beam = pool;
    }

    beam.into_iter()
        .map(|h| Prediction {
            remaining_time: h.durations.iter().sum(),
            truncated: !h.finished && eos.is_some(),
            labels: h.labels,
            durations: h.durations,
            score: h.score,
        })
        .collect()
}

/// Greedy decoding for a generator: equivalent to beam search with k = 1.
pub fn argmax_decode(
    generator: &GeneratorModel,
    prefix: &[AugmentedVector],
    max_len: usize,
) -> Result<Prediction, ModelError> {
    let model = GeneratorBeamModel::new(generator, prefix)?;
    Ok(beam_search(&model, &BeamConfig::new(1, max_len))
        .into_iter()
        .next()
        .expect("beam is non-empty"))
}

/// Stochastic stepwise sampling over any step model: each position draws a
/// label from the model's distribution. Baseline only; different runs give
/// different suffixes.
pub fn hallucinate_search<M: SuffixModel, R: Rng + ?Sized>(
    model: &M,
    max_len: usize,
    runs: usize,
    rng: &mut R,
) -> Vec<Prediction> {
    assert!(runs >= 1 && max_len >= 1);
    let eos = model.eos();
    (0..runs)
        .map(|_| {
            let mut state = model.start();
            let mut labels = Vec::new();
            let mut durations = Vec::new();
            let mut score = 0.0;
            let mut finished = false;
            for _ in 0..max_len {
                let (probs, duration, stepped) = model.step(&state);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut label = probs.len() - 1;
                for (i, &p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        label = i;
                        break;
                    }
                }
                score += -probs[label].max(1e-300).ln();
                if eos == Some(label) {
                    finished = true;
                    break;
                }
                labels.push(label);
                durations.push(duration);
                state = model.feed(&stepped, label, duration);
            }
            Prediction {
                remaining_time: durations.iter().sum(),
                truncated: !finished && eos.is_some(),
                labels,
                durations,
                score,
            }
        })
        .collect()
}

/// Process-hallucination baseline for a generator: `runs` sampled suffixes.
pub fn hallucinate_decode<R: Rng + ?Sized>(
    generator: &GeneratorModel,
    prefix: &[AugmentedVector],
    max_len: usize,
    rng: &mut R,
    runs: usize,
) -> Result<Vec<Prediction>, ModelError> {
    let model = GeneratorBeamModel::new(generator, prefix)?;
    Ok(hallucinate_search(&model, max_len, runs, rng))
}

/// Remaining cycle time of a prediction in days: the sum of its step
/// durations mapped back through the time normalizer. The EOS step carries
/// no duration and is already excluded.
pub fn remaining_time_of(prediction: &Prediction, norm: &crate::encoding::TimeNormalizer) -> f64 {
    norm.denormalize(prediction.remaining_time)
}

/// Ranked top-k suffix predictions for a prefix.
pub fn predict_suffixes(
    generator: &GeneratorModel,
    prefix: &[AugmentedVector],
    k: usize,
    max_len: usize,
) -> Result<Vec<Prediction>, ModelError> {
    let model = GeneratorBeamModel::new(generator, prefix)?;
    Ok(beam_search(&model, &BeamConfig::new(k, max_len)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::{DecodeMode, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn worked_example() -> FixedDistributions {
        FixedDistributions::new(vec![
            vec![0.3, 0.35, 0.3, 0.05],
            vec![0.35, 0.3, 0.3, 0.05],
            vec![0.05, 0.3, 0.35, 0.3],
        ])
    }

    fn labels_to_string(labels: &[usize]) -> String {
        labels.iter().map(|&l| (b'a' + l as u8) as char).collect()
    }

    #[test]
    fn three_step_example_with_width_one() {
        let model = worked_example();
        let out = beam_search(&model, &BeamConfig::new(1, 3));
        assert_eq!(out.len(), 1);
        assert_eq!(labels_to_string(&out[0].labels), "bac");
        assert!((out[0].score - 3.149).abs() < 0.001);
        assert!((out[0].score - 3.0 * (1.0 / 0.35_f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn three_step_example_with_width_three() {
        let model = worked_example();
        let out = beam_search(&model, &BeamConfig::new(3, 3));
        let got: Vec<(String, f64)> = out
            .iter()
            .map(|p| (labels_to_string(&p.labels), p.score))
            .collect();
        assert_eq!(got[0].0, "bac");
        assert!((got[0].1 - 3.149).abs() < 0.001);
        assert_eq!(got[1].0, "bab");
        assert!((got[1].1 - 3.3036).abs() < 0.001);
        assert_eq!(got[2].0, "bad");
        assert!((got[2].1 - 3.3036).abs() < 0.001);
    }

    /// Enumerates every full-length sequence and its cost.
    fn brute_force(dists: &[Vec<f64>]) -> Vec<(Vec<usize>, f64)> {
        let vocab = dists[0].len();
        let mut all: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
        for dist in dists {
            let mut next = Vec::with_capacity(all.len() * vocab);
            for (labels, score) in &all {
                for l in 0..vocab {
                    let mut labels = labels.clone();
                    labels.push(l);
                    next.push((labels, score - dist[l].ln()));
                }
            }
            all = next;
        }
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        all
    }

    #[test]
    fn beam_matches_brute_force_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..200 {
            let vocab = rng.gen_range(2..=5);
            let horizon = rng.gen_range(1..=5);
            let k = rng.gen_range(1..=4);
            let dists: Vec<Vec<f64>> = (0..horizon)
                .map(|_| {
                    let raw: Vec<f64> = (0..vocab).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let sum: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / sum).collect()
                })
                .collect();
            let model = FixedDistributions::new(dists.clone());
            let beam = beam_search(&model, &BeamConfig::new(k, horizon));
            let exact = brute_force(&dists);
            let want = k.min(exact.len());
            assert_eq!(beam.len(), want, "trial {trial}");
            for (b, e) in beam.iter().zip(&exact) {
                // continuous random distributions: ties have measure zero
                assert_eq!(b.labels, e.0, "trial {trial}");
                assert!((b.score - e.1).abs() < 1e-9, "trial {trial}");
            }
        }
    }

    #[test]
    fn beam_scores_are_sorted_and_pool_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dists: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let raw: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        let model = FixedDistributions::new(dists);
        let out = beam_search(&model, &BeamConfig::new(5, 4));
        for w in out.windows(2) {
            assert!(w[0].score <= w[1].score);
        }
    }

    fn small_generator(seed: u64) -> GeneratorModel {
        GeneratorModel::new(
            ModelConfig {
                vocab_size: 5,
                hidden: 8,
                depth: 1,
                init_std: 0.5,
            },
            seed,
        )
    }

    fn prefix() -> Vec<AugmentedVector> {
        [0usize, 2, 1]
            .iter()
            .map(|&label| AugmentedVector {
                label,
                width: 5,
                duration: 0.3,
            })
            .collect()
    }

    #[test]
    fn width_one_beam_agrees_with_greedy_free_running() {
        for seed in 0..20 {
            let generator = small_generator(seed);
            let prefix = prefix();
            let beam = argmax_decode(&generator, &prefix, 12).unwrap();
            let h = generator.encode(&prefix).unwrap();
            let free = generator
                .decode_free_running(&h, 12, &mut DecodeMode::Argmax)
                .unwrap();
            let free_labels: Vec<usize> = free
                .emitted
                .iter()
                .map(|v| v.label)
                .filter(|&l| l != generator.eos_index())
                .collect();
            assert_eq!(beam.labels, free_labels, "seed {seed}");
            assert_eq!(beam.truncated, free.truncated, "seed {seed}");
            let free_durations: Vec<f64> = free
                .emitted
                .iter()
                .filter(|v| v.label != generator.eos_index())
                .map(|v| v.duration)
                .collect();
            for (a, b) in beam.durations.iter().zip(&free_durations) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_beam_scores_are_cumulative_negative_log_probs() {
        let generator = small_generator(3);
        let prefix = prefix();
        let out = predict_suffixes(&generator, &prefix, 3, 8).unwrap();
        assert!(!out.is_empty());
        for p in &out {
            assert!(p.score >= 0.0);
            assert!((p.remaining_time - p.durations.iter().sum::<f64>()).abs() < 1e-12);
            // replay the path step by step and rebuild the score
            let model = GeneratorBeamModel::new(&generator, &prefix).unwrap();
            let mut state = model.start();
            let mut score = 0.0;
            for &label in &p.labels {
                let (probs, duration, stepped) = model.step(&state);
                score += -probs[label].ln();
                state = model.feed(&stepped, label, duration);
            }
            if !p.truncated {
                let (probs, _, _) = model.step(&state);
                score += -probs[generator.eos_index()].ln();
            }
            assert!((score - p.score).abs() < 1e-9);
        }
    }

    #[test]
    fn one_hot_distributions_give_a_unique_zero_cost_suffix() {
        let model = FixedDistributions::new(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let out = beam_search(&model, &BeamConfig::new(4, 2));
        assert_eq!(out[0].labels, vec![1, 2]);
        assert_eq!(out[0].score, 0.0);
        // hallucination has no choice either
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let runs = hallucinate_search(&model, 2, 10, &mut rng);
        assert!(runs.iter().all(|p| p.labels == vec![1, 2] && p.score == 0.0));
    }

    #[test]
    fn hallucination_varies_and_tracks_the_first_distribution() {
        let model = worked_example();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let runs = hallucinate_search(&model, 3, 10_000, &mut rng);
        let distinct: std::collections::BTreeSet<Vec<usize>> =
            runs.iter().map(|p| p.labels.clone()).collect();
        assert!(distinct.len() > 10);
        for label in 0..4 {
            let freq = runs.iter().filter(|p| p.labels[0] == label).count() as f64 / 1e4;
            assert!(
                (freq - model.distributions[0][label]).abs() < 0.02,
                "label {label}: {freq}"
            );
        }
    }

    #[test]
    fn hallucinated_generator_suffixes_stop_at_eos() {
        let generator = small_generator(9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let runs = hallucinate_decode(&generator, &prefix(), 10, &mut rng, 50).unwrap();
        assert_eq!(runs.len(), 50);
        for p in &runs {
            assert!(p.labels.len() <= 10);
            assert!(p.labels.iter().all(|&l| l != generator.eos_index()));
        }
    }

    #[test]
    fn remaining_time_denormalizes_the_duration_sum() {
        let norm = crate::encoding::TimeNormalizer { scale: 4.0 };
        let p = Prediction {
            labels: vec![0, 1],
            durations: vec![0.375, 0.625],
            score: 1.0,
            remaining_time: 1.0,
            truncated: false,
        };
        assert!((remaining_time_of(&p, &norm) - 4.0).abs() < 1e-12);
        let empty = Prediction {
            labels: vec![],
            durations: vec![],
            score: 0.0,
            remaining_time: 0.0,
            truncated: false,
        };
        assert_eq!(remaining_time_of(&empty, &norm), 0.0);
    }

    #[test]
    fn truncation_is_flagged_at_max_len() {
        let generator = small_generator(3);
        let prefix = prefix();
        let out = predict_suffixes(&generator, &prefix, 1, 1).unwrap();
        // with max_len 1 a non-EOS first step must be truncated
        if !out[0].labels.is_empty() {
            assert!(out[0].truncated);
        } else {
            assert!(!out[0].truncated);
        }
    }
}
