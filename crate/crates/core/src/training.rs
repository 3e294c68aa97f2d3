//! Supervised and adversarial losses and the alternating minimax training
//! loop: one discriminator update then one generator update per batch, with
//! per-layer gradient clipping and temperature annealing.

use crate::encoding::{AugmentedVector, EncodedPair};
use crate::gumbel::{gumbel_noise, gumbel_softmax_with_noise, TemperatureSchedule};
use crate::nn::{clip_gradients, ClipScope, RmsProp, Tape, TensorId};
use crate::seq2seq::{DecodeMode, DiscriminatorModel, GeneratorModel, StepOutput};
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

const PROB_CLAMP: f64 = 1e-7;
/// fake suffixes may run this many steps past the ground-truth length
const FAKE_LEN_SLACK: usize = 5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("output lengths differ: {0} outputs vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("no training pairs")]
    EmptyTrainingSet,
    #[error(transparent)]
    Model(#[from] crate::seq2seq::ModelError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub clip_scope: ClipScope,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: TemperatureSchedule,
    pub supervised_time_weight: f64,
    /// 0 disables the adversarial term entirely (pure supervised training)
    pub adversarial_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            clip_norm: 1.0,
            clip_scope: ClipScope::Layer,
            epochs: 500,
            batch_size: 128,
            seed: 0,
            schedule: TemperatureSchedule::default(),
            supervised_time_weight: 1.0,
            adversarial_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv_loss: f64,
    pub g_supervised_loss: f64,
    pub validation_loss: f64,
}

/// Per-step average of negative log probability of the target activity plus
/// `time_weight` times the absolute duration error (normalized units).
pub fn supervised_loss(
    outputs: &[StepOutput],
    target: &[AugmentedVector],
    time_weight: f64,
) -> Result<f64, TrainError> {
    if outputs.len() != target.len() {
        return Err(TrainError::LengthMismatch(outputs.len(), target.len()));
    }
    let mut total = 0.0;
    for (out, t) in outputs.iter().zip(target) {
        let p = out.activity_probs[t.label].max(PROB_CLAMP);
        total += -p.ln() + time_weight * (out.duration - t.duration).abs();
    }
    Ok(total / outputs.len() as f64)
}

/// L(D;G) = -log D(real) - log(1 - D(fake)), inputs clamped away from {0,1}.
pub fn discriminator_loss(d_real: f64, d_fake: f64) -> f64 {
    let r = d_real.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let f = d_fake.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -r.ln() - (1.0 - f).ln()
}

/// L(G;D) = -[log D(fake) - log(1 - D(fake))]: negative log-odds, zero at
/// d_fake = 0.5, negative once the generator fools the discriminator.
pub fn generator_adversarial_loss(d_fake: f64) -> f64 {
    let f = d_fake.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(f.ln() - (1.0 - f).ln())
}

/// Epoch-level training summary: least-squares slope per loss series, the
/// discriminator's implied confusion on fakes, and a divergence flag.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub d_loss_slope: f64,
    pub g_adv_loss_slope: f64,
    pub g_supervised_loss_slope: f64,
    pub validation_loss_slope: f64,
    /// mean D(fake) implied by the last epoch's adversarial loss (log-odds
    /// inverse); 0.5 means D is fully confused
    pub mean_d_fake_last_epoch: f64,
    /// validation loss rose for >= 10 consecutive epochs
    pub diverged: bool,
}

fn slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y: f64 = values.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn convergence_report(records: &[LossRecord]) -> ConvergenceReport {
    assert!(records.len() >= 2, "need at least two epochs");
    let series = |f: fn(&LossRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let val = series(|r| r.validation_loss);
    let mut rising = 0usize;
    let mut max_rising = 0usize;
    for w in val.windows(2) {
        if w[1] > w[0] {
            rising += 1;
            max_rising = max_rising.max(rising);
        } else {
            rising = 0;
        }
    }
    let last_adv = records.last().unwrap().g_adv_loss;
    ConvergenceReport {
        d_loss_slope: slope(&series(|r| r.d_loss)),
        g_adv_loss_slope: slope(&series(|r| r.g_adv_loss)),
        g_supervised_loss_slope: slope(&series(|r| r.g_supervised_loss)),
        validation_loss_slope: slope(&val),
        mean_d_fake_last_epoch: crate::nn::tape::sigmoid(-last_adv),
        diverged: max_rising >= 10,
    }
}

/// Gradient accumulator aligned with a `ParamSet`.
struct GradAccum {
    sums: Vec<Vec<f64>>,
    count: usize,
}

impl GradAccum {
    fn new(params: &crate::nn::ParamSet) -> GradAccum {
        GradAccum {
            sums: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            count: 0,
        }
    }

    fn add(&mut self, grads: Vec<Vec<f64>>) {
        for (sum, g) in self.sums.iter_mut().zip(grads) {
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v;
            }
        }
        self.count += 1;
    }

    fn mean(mut self) -> Vec<Vec<f64>> {
        let n = self.count.max(1) as f64;
        for sum in &mut self.sums {
            for s in sum.iter_mut() {
                *s /= n;
            }
        }
        self.sums
    }
}

pub struct TrainResult {
    pub generator: GeneratorModel,
    pub discriminator: DiscriminatorModel,
    pub best_generator: GeneratorModel,
    pub best_discriminator: DiscriminatorModel,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub records: Vec<LossRecord>,
}

/// Smooths a tape-resident probability vector and relaxes it with
/// Gumbel-Softmax noise, all differentiably.
fn relax_on_tape(
    tape: &mut Tape,
    probs: TensorId,
    tau: f64,
    noise: &[f64],
) -> TensorId {
    let k = noise.len() as f64;
    // probs sums to 1, so (p + eps) / (1 + k*eps) is the exact smoothing
    let eps = 1e-10;
    let shifted = tape.add_scalar(probs, eps);
    let smoothed = tape.scale(shifted, 1.0 / (1.0 + k * eps));
    let logs = tape.ln(smoothed);
    let noisy = tape.add_const(logs, Array1::from(noise.to_vec()));
    let scaled = tape.scale(noisy, 1.0 / tau);
    tape.softmax(scaled)
}

/// -log(x) with the clamp used by the loss closed forms.
fn neg_log_clamped(tape: &mut Tape, x: TensorId) -> TensorId {
    let clamped = tape.clamp(x, PROB_CLAMP, 1.0 - PROB_CLAMP);
    let ln = tape.ln(clamped);
    tape.neg(ln)
}

/// Relaxes a ground-truth suffix (one-hot + duration) into dense value rows.
fn relax_real_suffix(
    suffix: &[AugmentedVector],
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    suffix
        .iter()
        .map(|v| {
            let noise = gumbel_noise(rng, v.width);
            let mut dense =
                gumbel_softmax_with_noise(&v.onehot(), tau, &noise).expect("tau > 0");
            dense.push(v.duration);
            dense
        })
        .collect()
}

/// Alternating adversarial training (mini-batch variant): per batch the
/// discriminator is updated on real-vs-fake relaxed suffixes, then the
/// generator on its adversarial loss plus the teacher-forced supervised
/// loss. All gradients are clipped before any update.
pub fn train(
    mut generator: GeneratorModel,
    mut discriminator: DiscriminatorModel,
    train_pairs: &[EncodedPair],
    val_pairs: &[EncodedPair],
    config: &TrainConfig,
) -> Result<TrainResult, TrainError> {
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut g_opt = RmsProp::new(&generator.params, config.learning_rate);
    let mut d_opt = RmsProp::new(&discriminator.params, config.learning_rate);

    let mut records = Vec::with_capacity(config.epochs);
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    let mut best_generator = generator.clone();
    let mut best_discriminator = discriminator.clone();

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    for epoch in 0..config.epochs {
        let tau = config.schedule.tau_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_d = 0.0;
        let mut epoch_adv = 0.0;
        let mut epoch_sup = 0.0;
        let mut n_pairs = 0usize;

        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            // --- discriminator step (generator detached) ---
            if config.adversarial_weight != 0.0 {
                let mut accum = GradAccum::new(&discriminator.params);
                let mut batch_d = 0.0;
                for &i in batch.iter() {
                    let pair = &train_pairs[i];
                    let h = generator.encode(&pair.prefix)?;
                    let max_len = pair.suffix.len() + FAKE_LEN_SLACK;
                    let fake = generator.decode_free_running(
                        &h,
                        max_len,
                        &mut DecodeMode::Gumbel { tau, rng: &mut rng },
                    )?;
                    // re-relax the fake's emitted argmax labels so both
                    // branches pass through the same relaxation
                    let fake_rows = relax_real_suffix(&fake.emitted, tau, &mut rng);
                    let real_rows = relax_real_suffix(&pair.suffix, tau, &mut rng);

                    let mut tape = Tape::new();
                    let binding = discriminator.params.bind(&mut tape);
                    let to_ids = |tape: &mut Tape, rows: &[Vec<f64>]| {
                        rows.iter()
                            .map(|r| tape.leaf_vec(Array1::from(r.clone())))
                            .collect::<Vec<_>>()
                    };
                    let real_ids = to_ids(&mut tape, &real_rows);
                    let fake_ids = to_ids(&mut tape, &fake_rows);
                    let d_real = discriminator.discriminate_tape(&mut tape, &binding, &real_ids);
                    let d_fake = discriminator.discriminate_tape(&mut tape, &binding, &fake_ids);
                    let term_real = neg_log_clamped(&mut tape, d_real);
                    let neg_fake = tape.neg(d_fake);
                    let one_minus_fake = tape.add_scalar(neg_fake, 1.0);
                    let term_fake = neg_log_clamped(&mut tape, one_minus_fake);
                    let loss = tape.add(term_real, term_fake);
                    let loss_value = tape.scalar_value(loss);
                    if !loss_value.is_finite() {
                        return Err(TrainError::NonFiniteLoss {
                            epoch,
                            batch: batch_idx,
                            detail: format!("discriminator loss {loss_value}"),
                        });
                    }
                    batch_d += loss_value;
                    let grads = tape.backward(loss);
                    accum.add(binding.collect_gradients(&discriminator.params, &grads));
                }
                let mut grads = accum.mean();
                let max_norm = clip_gradients(
                    &discriminator.params,
                    &mut grads,
                    config.clip_norm,
                    config.clip_scope,
                );
                assert!(max_norm <= config.clip_norm + 1e-9);
                d_opt.step(&mut discriminator.params, &grads);
                epoch_d += batch_d;
            }

            // --- generator step ---
            let mut accum = GradAccum::new(&generator.params);
            let mut batch_adv = 0.0;
            let mut batch_sup = 0.0;
            for &i in batch.iter() {
                let pair = &train_pairs[i];
                let mut tape = Tape::new();
                let g_binding = generator.params.bind(&mut tape);
                let state = generator.encode_tape(&mut tape, &g_binding, &pair.prefix);

                // supervised branch: teacher forcing over the true suffix
                let mut sup_terms: Option<TensorId> = None;
                let mut tf_state = state.clone();
                let mut input = generator.start_input_tape(&mut tape);
                for target in &pair.suffix {
                    let (next, _, log_probs, dur) =
                        generator.decode_step_tape(&mut tape, &g_binding, &tf_state, input);
                    let nll = tape.pick(log_probs, target.label);
                    let nll = tape.neg(nll);
                    let target_dur = tape.scalar(target.duration);
                    let diff = tape.sub(dur, target_dur);
                    let abs_diff = tape.abs(diff);
                    let weighted = tape.scale(abs_diff, config.supervised_time_weight);
                    let term = tape.add(nll, weighted);
                    sup_terms = Some(match sup_terms {
                        None => term,
                        Some(acc) => tape.add(acc, term),
                    });
                    tf_state = next;
                    input = tape.leaf_vec(Array1::from(target.dense()));
                }
                let sup_sum = sup_terms.expect("suffix is non-empty");
                let sup = tape.scale(sup_sum, 1.0 / pair.suffix.len() as f64);

                let mut loss = sup;
                let mut adv_value = 0.0;
                if config.adversarial_weight != 0.0 {
                    // adversarial branch: free-running fake with relaxed
                    // feedback, scored by the discriminator on-tape
                    let d_binding = discriminator.params.bind(&mut tape);
                    let mut fr_state = state.clone();
                    let mut fr_input = generator.start_input_tape(&mut tape);
                    let max_len = pair.suffix.len() + FAKE_LEN_SLACK;
                    let mut fake_rows = Vec::new();
                    for t in 0..max_len {
                        let (next, probs, _, dur) =
                            generator.decode_step_tape(&mut tape, &g_binding, &fr_state, fr_input);
                        let noise = gumbel_noise(&mut rng, generator.config.vocab_size);
                        let relaxed = relax_on_tape(&mut tape, probs, tau, &noise);
                        let row = tape.concat(relaxed, dur);
                        fake_rows.push(row);
                        let label = crate::seq2seq::argmax(tape.vec(relaxed).as_slice().unwrap());
                        if label == generator.eos_index() || t + 1 == max_len {
                            break;
                        }
                        fr_state = next;
                        fr_input = row;
                    }
                    let d_fake =
                        discriminator.discriminate_tape(&mut tape, &d_binding, &fake_rows);
                    // -[log D(fake) - log(1 - D(fake))]
                    let log_d = {
                        let c = tape.clamp(d_fake, PROB_CLAMP, 1.0 - PROB_CLAMP);
                        tape.ln(c)
                    };
                    let log_one_minus = {
                        let neg = tape.neg(d_fake);
                        let one_minus = tape.add_scalar(neg, 1.0);
                        let c = tape.clamp(one_minus, PROB_CLAMP, 1.0 - PROB_CLAMP);
                        tape.ln(c)
                    };
                    let odds = tape.sub(log_d, log_one_minus);
                    let adv = tape.neg(odds);
                    adv_value = tape.scalar_value(adv);
                    let weighted_adv = tape.scale(adv, config.adversarial_weight);
                    loss = tape.add(loss, weighted_adv);
                }

                let sup_value = tape.scalar_value(sup);
                let loss_value = tape.scalar_value(loss);
                if !loss_value.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                        detail: format!(
                            "generator loss {loss_value} (supervised {sup_value}, adversarial {adv_value})"
                        ),
                    });
                }
                batch_sup += sup_value;
                batch_adv += adv_value;
                let grads = tape.backward(loss);
                accum.add(g_binding.collect_gradients(&generator.params, &grads));
            }
            let mut grads = accum.mean();
            let max_norm = clip_gradients(
                &generator.params,
                &mut grads,
                config.clip_norm,
                config.clip_scope,
            );
            assert!(max_norm <= config.clip_norm + 1e-9);
            g_opt.step(&mut generator.params, &grads);

            epoch_adv += batch_adv;
            epoch_sup += batch_sup;
            n_pairs += batch.len();
        }

        let n = n_pairs as f64;
        let n_batches = order.chunks(config.batch_size).count() as f64;
        let validation_loss = if val_pairs.is_empty() {
            epoch_sup / n
        } else {
            validation_supervised_loss(&generator, val_pairs, config.supervised_time_weight)?
        };
        let record = LossRecord {
            epoch,
            d_loss: if config.adversarial_weight != 0.0 {
                epoch_d / n_batches / (n / n_batches)
            } else {
                0.0
            },
            g_adv_loss: epoch_adv / n,
            g_supervised_loss: epoch_sup / n,
            validation_loss,
        };
        if !record.validation_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: 0,
                detail: format!("validation loss {}", record.validation_loss),
            });
        }
        if record.validation_loss < best_val {
            best_val = record.validation_loss;
            best_epoch = epoch;
            best_generator = generator.clone();
            best_discriminator = discriminator.clone();
        }
        records.push(record);
    }

    Ok(TrainResult {
        generator,
        discriminator,
        best_generator,
        best_discriminator,
        best_epoch,
        best_validation_loss: best_val,
        records,
    })
}

/// Mean teacher-forced supervised loss over a pair set.
pub fn validation_supervised_loss(
    generator: &GeneratorModel,
    pairs: &[EncodedPair],
    time_weight: f64,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for pair in pairs {
        let h = generator.encode(&pair.prefix)?;
        let outputs = generator.decode_teacher_forced(&h, &pair.suffix)?;
        total += supervised_loss(&outputs, &pair.suffix, time_weight)?;
    }
    Ok(total / pairs.len().max(1) as f64)
}

pub fn write_loss_history<W: Write>(records: &[LossRecord], writer: W) -> Result<(), TrainError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["epoch", "d_loss", "g_adv_loss", "g_supervised_loss", "validation_loss"])
        .map_err(csv_io)?;
    for r in records {
        out.write_record([
            r.epoch.to_string(),
            r.d_loss.to_string(),
            r.g_adv_loss.to_string(),
            r.g_supervised_loss.to_string(),
            r.validation_loss.to_string(),
        ])
        .map_err(csv_io)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> TrainError {
    TrainError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::ModelConfig;

    fn small_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 4,
            hidden: 8,
            depth: 1,
            init_std: 0.05,
        }
    }

    fn vector(label: usize, duration: f64) -> AugmentedVector {
        AugmentedVector {
            label,
            width: 4,
            duration,
        }
    }

    fn toy_pair(case: &str, prefix_labels: &[usize], suffix_labels: &[usize]) -> EncodedPair {
        let prefix: Vec<_> = prefix_labels.iter().map(|&l| vector(l, 0.1)).collect();
        let mut suffix: Vec<_> = suffix_labels.iter().map(|&l| vector(l, 0.2)).collect();
        suffix.push(vector(3, 0.0)); // EOS
        EncodedPair {
            case_id: case.into(),
            prefix_len: prefix.len(),
            remaining_time_days: 0.2 * suffix_labels.len() as f64,
            prefix,
            suffix,
        }
    }

    #[test]
    fn supervised_loss_closed_forms() {
        // probability 1 on every target, exact durations -> 0
        let target = vec![vector(1, 0.3), vector(3, 0.0)];
        let perfect: Vec<StepOutput> = target
            .iter()
            .map(|t| {
                let mut p = vec![0.0; 4];
                p[t.label] = 1.0;
                StepOutput {
                    activity_probs: p,
                    duration: t.duration,
                }
            })
            .collect();
        assert!(supervised_loss(&perfect, &target, 1.0).unwrap().abs() < 1e-9);

        // uniform probabilities, exact durations -> ln V per step
        let uniform: Vec<StepOutput> = target
            .iter()
            .map(|t| StepOutput {
                activity_probs: vec![0.25; 4],
                duration: t.duration,
            })
            .collect();
        let loss = supervised_loss(&uniform, &target, 1.0).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-12);

        assert!(matches!(
            supervised_loss(&uniform, &target[..1], 1.0),
            Err(TrainError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn adversarial_loss_closed_forms() {
        assert!(discriminator_loss(1.0 - 1e-7, 1e-7) < 1e-5);
        assert!((discriminator_loss(0.5, 0.5) - 2.0 * 2.0_f64.ln()).abs() < 1e-9);
        assert!((discriminator_loss(0.8, 0.3) - 0.5798).abs() < 1e-4);

        assert!(generator_adversarial_loss(0.5).abs() < 1e-9);
        assert!((generator_adversarial_loss(0.3) - 0.8473).abs() < 1e-4);
        assert!((generator_adversarial_loss(0.7) + 0.8473).abs() < 1e-4);
    }

    #[test]
    fn supervised_gradient_matches_finite_differences() {
        // d(loss)/d(logits) via the tape path vs central differences on a
        // width-8 depth-1 generator
        let generator = GeneratorModel::new(small_config(), 3);
        let pair = toy_pair("c", &[0, 1], &[2, 1]);

        let loss_of = |gen: &GeneratorModel| {
            let h = gen.encode(&pair.prefix).unwrap();
            let outputs = gen.decode_teacher_forced(&h, &pair.suffix).unwrap();
            supervised_loss(&outputs, &pair.suffix, 1.0).unwrap()
        };

        // analytic gradient via tape
        let mut tape = Tape::new();
        let binding = generator.params.bind(&mut tape);
        let state = generator.encode_tape(&mut tape, &binding, &pair.prefix);
        let mut tf_state = state;
        let mut input = generator.start_input_tape(&mut tape);
        let mut acc: Option<TensorId> = None;
        for target in &pair.suffix {
            let (next, _, log_probs, dur) =
                generator.decode_step_tape(&mut tape, &binding, &tf_state, input);
            let nll = tape.pick(log_probs, target.label);
            let nll = tape.neg(nll);
            let td = tape.scalar(target.duration);
            let diff = tape.sub(dur, td);
            let abs_diff = tape.abs(diff);
            let term = tape.add(nll, abs_diff);
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term),
            });
            tf_state = next;
            input = tape.leaf_vec(Array1::from(target.dense()));
        }
        let sum = acc.unwrap();
        let loss = tape.scale(sum, 1.0 / pair.suffix.len() as f64);
        assert!((tape.scalar_value(loss) - loss_of(&generator)).abs() < 1e-12);
        let grads = tape.backward(loss);
        let analytic = binding.collect_gradients(&generator.params, &grads);

        let h = 1e-5;
        for (idx, tensor) in generator.params.tensors().iter().enumerate() {
            // spot-check a few scalars per tensor
            for j in (0..tensor.len()).step_by(tensor.len().max(7) / 7) {
                let mut up = generator.clone();
                let mut vals = tensor.values.clone();
                vals[j] += h;
                up.params.set_values(idx, vals);
                let mut down = generator.clone();
                let mut vals = tensor.values.clone();
                vals[j] -= h;
                down.params.set_values(idx, vals);
                let numeric = (loss_of(&up) - loss_of(&down)) / (2.0 * h);
                let denom = analytic[idx][j].abs().max(1e-3);
                assert!(
                    ((numeric - analytic[idx][j]) / denom).abs() < 1e-4,
                    "tensor {} [{j}]: numeric {numeric} vs {}",
                    tensor.name,
                    analytic[idx][j]
                );
            }
        }
    }

    #[test]
    fn teacher_forced_log_prob_consistency() {
        // log-prob of target under outputs = -(activity-only loss) * L
        let generator = GeneratorModel::new(small_config(), 4);
        let pair = toy_pair("c", &[0, 2], &[1, 0, 2]);
        let h = generator.encode(&pair.prefix).unwrap();
        let outputs = generator.decode_teacher_forced(&h, &pair.suffix).unwrap();
        let loss = supervised_loss(&outputs, &pair.suffix, 0.0).unwrap();
        let log_prob: f64 = outputs
            .iter()
            .zip(&pair.suffix)
            .map(|(o, t)| o.activity_probs[t.label].ln())
            .sum();
        assert!((log_prob + loss * pair.suffix.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn one_epoch_moves_parameters_and_records_losses() {
        let generator = GeneratorModel::new(small_config(), 5);
        let discriminator = DiscriminatorModel::new(small_config(), 6);
        let initial = generator.params.get(0).values.clone();
        let pairs: Vec<_> = (0..10)
            .map(|i| toy_pair(&format!("c{i}"), &[0, 1], &[2, 1]))
            .collect();
        let config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let result = train(generator, discriminator, &pairs, &[], &config).unwrap();
        assert_eq!(result.records.len(), 1);
        let r = &result.records[0];
        for v in [r.d_loss, r.g_adv_loss, r.g_supervised_loss, r.validation_loss] {
            assert!(v.is_finite());
        }
        assert_ne!(result.generator.params.get(0).values, initial);
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let pairs: Vec<_> = (0..6)
            .map(|i| toy_pair(&format!("c{i}"), &[0, 1], &[2]))
            .collect();
        let config = TrainConfig {
            epochs: 2,
            batch_size: 3,
            learning_rate: 1e-3,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            train(
                GeneratorModel::new(small_config(), 1),
                DiscriminatorModel::new(small_config(), 2),
                &pairs,
                &[],
                &config,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.records, b.records);
        assert_eq!(
            a.generator.params.get(0).values,
            b.generator.params.get(0).values
        );
    }

    #[test]
    fn memorizes_five_pairs_without_adversarial_term() {
        let pairs = vec![
            toy_pair("c0", &[0, 1], &[2, 1]),
            toy_pair("c1", &[1, 0], &[0, 2]),
            toy_pair("c2", &[2, 2], &[1]),
            toy_pair("c3", &[0, 2], &[2]),
            toy_pair("c4", &[1, 1], &[0]),
        ];
        // batch size 1: one update per pair, 5 per epoch
        let config = TrainConfig {
            epochs: 400, // 2000 steps
            batch_size: 1,
            learning_rate: 5e-3,
            adversarial_weight: 0.0,
            supervised_time_weight: 1.0,
            seed: 3,
            ..TrainConfig::default()
        };
        let result = train(
            GeneratorModel::new(small_config(), 1),
            DiscriminatorModel::new(small_config(), 2),
            &pairs,
            &[],
            &config,
        )
        .unwrap();
        let final_loss = result.records.last().unwrap().g_supervised_loss;
        assert!(final_loss < 0.05, "final supervised loss {final_loss}");
    }

    #[test]
    fn convergence_report_slopes_and_flags() {
        let make = |vals: &[f64]| -> Vec<LossRecord> {
            vals.iter()
                .enumerate()
                .map(|(i, &v)| LossRecord {
                    epoch: i,
                    d_loss: v,
                    g_adv_loss: 0.0,
                    g_supervised_loss: v,
                    validation_loss: v,
                })
                .collect()
        };
        let falling = make(&[5.0, 4.0, 3.0, 2.0]);
        let report = convergence_report(&falling);
        assert!(report.validation_loss_slope < 0.0);
        assert!(!report.diverged);
        assert!((report.mean_d_fake_last_epoch - 0.5).abs() < 1e-12);

        let rising = make(&(0..12).map(|i| i as f64).collect::<Vec<_>>());
        assert!(convergence_report(&rising).diverged);

        let constant = make(&[1.0; 5]);
        assert_eq!(convergence_report(&constant).validation_loss_slope, 0.0);
    }

    #[test]
    fn loss_history_csv_round_trips() {
        let records = vec![
            LossRecord {
                epoch: 0,
                d_loss: 1.5,
                g_adv_loss: 0.2,
                g_supervised_loss: 2.0,
                validation_loss: 2.1,
            },
            LossRecord {
                epoch: 1,
                d_loss: 1.4,
                g_adv_loss: 0.1,
                g_supervised_loss: 1.8,
                validation_loss: 1.9,
            },
        ];
        let mut buf = Vec::new();
        write_loss_history(&records, &mut buf).unwrap();
        let mut reader = csv::Reader::from_reader(&buf[..]);
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(&rows[1][0], "1");
        assert_eq!(rows[1][3].parse::<f64>().unwrap(), 1.8);
    }
}
