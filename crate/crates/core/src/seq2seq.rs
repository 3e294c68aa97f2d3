//! The generator (recurrent encoder-decoder emitting activity logits and a
//! duration per step) and the discriminator (recurrent classifier over
//! relaxed suffixes), with both differentiable (tape) and value-only
//! (inference) forward paths, plus the checkpoint container.

use crate::encoding::{AugmentedVector, Vocabulary};
use crate::gumbel::{gumbel_noise, gumbel_softmax_with_noise, TemperatureSchedule};
use crate::nn::tape::stable_softmax;
use crate::nn::{lstm_cell_infer, lstm_cell_tape, LstmState, ParamSet, Tape, TapeBinding, TensorId};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected input width {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot read checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared shape of the recurrent stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// |vocabulary|, EOS included
    pub vocab_size: usize,
    pub hidden: usize,
    pub depth: usize,
    /// weights are N(0,1) scaled by this; raw unit variance destabilizes
    /// deep recurrent stacks
    pub init_std: f64,
}

impl ModelConfig {
    pub fn full_scale(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden: 200,
            depth: 5,
            init_std: 0.05,
        }
    }

    pub fn desk_scale(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            hidden: 64,
            depth: 2,
            init_std: 0.05,
        }
    }

    /// one-hot + duration scalar
    pub fn input_width(&self) -> usize {
        self.vocab_size + 1
    }
}

/// Softmax activity distribution and non-negative normalized duration for
/// one decoder step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub activity_probs: Vec<f64>,
    pub duration: f64,
}

impl StepOutput {
    pub fn argmax(&self) -> usize {
        argmax(&self.activity_probs)
    }
}

pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap()
}

fn stack_layer_names(prefix: &str, depth: usize) -> Vec<(String, String, String, String)> {
    (0..depth)
        .map(|l| {
            let layer = format!("{prefix}.l{l}");
            (
                format!("{layer}.w_ih"),
                format!("{layer}.w_hh"),
                format!("{layer}.b"),
                layer,
            )
        })
        .collect()
}

fn add_stack<R: Rng + ?Sized>(
    params: &mut ParamSet,
    prefix: &str,
    input: usize,
    hidden: usize,
    depth: usize,
    init_std: f64,
    rng: &mut R,
) {
    for (l, (w_ih, w_hh, b, layer)) in stack_layer_names(prefix, depth).iter().enumerate() {
        let in_width = if l == 0 { input } else { hidden };
        params.add_matrix(w_ih, layer, 4 * hidden, in_width, init_std, rng);
        params.add_matrix(w_hh, layer, 4 * hidden, hidden, init_std, rng);
        params.add_vector(b, layer, 4 * hidden);
    }
}

/// Runs one stacked-LSTM step in the value domain.
fn stack_step_infer(
    params: &ParamSet,
    prefix: &str,
    depth: usize,
    state: &mut LstmState,
    input: &Array1<f64>,
) {
    let mut x = input.clone();
    for l in 0..depth {
        let w_ih = param_mat(params, &format!("{prefix}.l{l}.w_ih"));
        let w_hh = param_mat(params, &format!("{prefix}.l{l}.w_hh"));
        let b = param_vec(params, &format!("{prefix}.l{l}.b"));
        let (h, c) = lstm_cell_infer(&w_ih, &w_hh, &b, &x, &state.h[l], &state.c[l]);
        x = h.clone();
        state.h[l] = h;
        state.c[l] = c;
    }
}

fn param_mat(params: &ParamSet, name: &str) -> Array2<f64> {
    match params.get(params.index_of(name)).to_data() {
        crate::nn::Data::Mat(m) => m,
        crate::nn::Data::Vec(_) => panic!("{name} is not a matrix"),
    }
}

fn param_vec(params: &ParamSet, name: &str) -> Array1<f64> {
    match params.get(params.index_of(name)).to_data() {
        crate::nn::Data::Vec(v) => v,
        crate::nn::Data::Mat(_) => panic!("{name} is not a vector"),
    }
}

/// Tape-side per-layer state as node ids.
#[derive(Debug, Clone)]
pub struct TapeState {
    pub h: Vec<TensorId>,
    pub c: Vec<TensorId>,
}

fn stack_zero_state(tape: &mut Tape, depth: usize, hidden: usize) -> TapeState {
    let h = (0..depth).map(|_| tape.leaf_vec(Array1::zeros(hidden))).collect();
    let c = (0..depth).map(|_| tape.leaf_vec(Array1::zeros(hidden))).collect();
    TapeState { h, c }
}

fn stack_step_tape(
    tape: &mut Tape,
    params: &ParamSet,
    binding: &TapeBinding,
    prefix: &str,
    depth: usize,
    state: &TapeState,
    input: TensorId,
) -> TapeState {
    let mut x = input;
    let mut new = TapeState {
        h: Vec::with_capacity(depth),
        c: Vec::with_capacity(depth),
    };
    for l in 0..depth {
        let w_ih = binding.id(params.index_of(&format!("{prefix}.l{l}.w_ih")));
        let w_hh = binding.id(params.index_of(&format!("{prefix}.l{l}.w_hh")));
        let b = binding.id(params.index_of(&format!("{prefix}.l{l}.b")));
        let (h, c) = lstm_cell_tape(tape, w_ih, w_hh, b, x, state.h[l], state.c[l]);
        x = h;
        new.h.push(h);
        new.c.push(c);
    }
    new
}

/// Encoder-decoder generator. The decoder's initial state is the encoder's
/// final state; its first input is the EOS vector with duration 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl GeneratorModel {
    pub fn new(config: ModelConfig, seed: u64) -> GeneratorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new_with_rng(config, &mut rng)
    }

    pub fn new_with_rng<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> GeneratorModel {
        let mut params = ParamSet::new();
        add_stack(&mut params, "enc", config.input_width(), config.hidden, config.depth, config.init_std, rng);
        add_stack(&mut params, "dec", config.input_width(), config.hidden, config.depth, config.init_std, rng);
        params.add_matrix("dec.head.w_act", "dec.head", config.vocab_size, config.hidden, config.init_std, rng);
        params.add_vector("dec.head.b_act", "dec.head", config.vocab_size);
        params.add_matrix("dec.head.w_dur", "dec.head", 1, config.hidden, config.init_std, rng);
        params.add_vector("dec.head.b_dur", "dec.head", 1);
        GeneratorModel { config, params }
    }

    pub fn eos_index(&self) -> usize {
        self.config.vocab_size - 1
    }

    /// EOS one-hot with duration 0, the decoder start token.
    pub fn start_input(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.config.input_width());
        v[self.eos_index()] = 1.0;
        v
    }

    fn check_width(&self, actual: usize) -> Result<(), ModelError> {
        if actual != self.config.input_width() {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.input_width(),
                actual,
            });
        }
        Ok(())
    }

    /// Maps a prefix to the encoder's final hidden state (fixed size,
    /// independent of prefix length).
    pub fn encode(&self, prefix: &[AugmentedVector]) -> Result<LstmState, ModelError> {
        let mut state = LstmState::zeros(self.config.depth, self.config.hidden);
        for v in prefix {
            let dense = Array1::from(v.dense());
            self.check_width(dense.len())?;
            stack_step_infer(&self.params, "enc", self.config.depth, &mut state, &dense);
        }
        Ok(state)
    }

    /// One decoder step in the value domain.
    pub fn decode_step(&self, state: &mut LstmState, input: &Array1<f64>) -> Result<StepOutput, ModelError> {
        self.check_width(input.len())?;
        stack_step_infer(&self.params, "dec", self.config.depth, state, input);
        let top = &state.h[self.config.depth - 1];
        let logits = param_mat(&self.params, "dec.head.w_act").dot(top)
            + param_vec(&self.params, "dec.head.b_act");
        let probs = stable_softmax(&logits);
        let dur_pre = param_mat(&self.params, "dec.head.w_dur").dot(top)[0]
            + param_vec(&self.params, "dec.head.b_dur")[0];
        Ok(StepOutput {
            activity_probs: probs.to_vec(),
            duration: crate::nn::tape::softplus(dur_pre),
        })
    }

    /// Teacher forcing: step t consumes the ground-truth vector t-1; one
    /// StepOutput per target position. The target must end with EOS.
    pub fn decode_teacher_forced(
        &self,
        h: &LstmState,
        target_suffix: &[AugmentedVector],
    ) -> Result<Vec<StepOutput>, ModelError> {
        assert!(!target_suffix.is_empty(), "target suffix must be non-empty");
        let mut state = h.clone();
        let mut outputs = Vec::with_capacity(target_suffix.len());
        let mut input = self.start_input();
        for target in target_suffix {
            outputs.push(self.decode_step(&mut state, &input)?);
            input = Array1::from(target.dense());
        }
        Ok(outputs)
    }

    /// Free-running decoding, feeding back the model's own emissions.
    pub fn decode_free_running(
        &self,
        h: &LstmState,
        max_len: usize,
        mode: &mut DecodeMode<'_>,
    ) -> Result<FreeRunResult, ModelError> {
        assert!(max_len >= 1);
        let mut state = h.clone();
        let mut input = self.start_input();
        let mut steps = Vec::new();
        let mut emitted = Vec::new();
        let mut truncated = false;
        for t in 0..max_len {
            let step = self.decode_step(&mut state, &input)?;
            let (label, feedback) = match mode {
                DecodeMode::Argmax => {
                    let label = step.argmax();
                    let mut fb = vec![0.0; self.config.vocab_size];
                    fb[label] = 1.0;
                    (label, fb)
                }
                DecodeMode::Gumbel { tau, rng } => {
                    let noise = gumbel_noise(*rng, self.config.vocab_size);
                    let relaxed =
                        gumbel_softmax_with_noise(&step.activity_probs, *tau, &noise)
                            .expect("tau validated by caller");
                    (argmax(&relaxed), relaxed)
                }
            };
            emitted.push(AugmentedVector {
                label,
                width: self.config.vocab_size,
                duration: step.duration,
            });
            let duration = step.duration;
            steps.push(step);
            if label == self.eos_index() {
                break;
            }
            if t + 1 == max_len {
                truncated = true;
                break;
            }
            let mut next = Array1::from(feedback);
            next.append(ndarray::Axis(0), ndarray::ArrayView1::from(&[duration]))
                .expect("append scalar");
            input = next;
        }
        Ok(FreeRunResult {
            steps,
            emitted,
            truncated,
        })
    }

    // --- tape-side forward passes used by training ---

    pub fn encode_tape(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        prefix: &[AugmentedVector],
    ) -> TapeState {
        let mut state = stack_zero_state(tape, self.config.depth, self.config.hidden);
        for v in prefix {
            let x = tape.leaf_vec(Array1::from(v.dense()));
            state = stack_step_tape(tape, &self.params, binding, "enc", self.config.depth, &state, x);
        }
        state
    }

    /// One differentiable decoder step; returns the new state plus node ids
    /// for (softmax probs, log-softmax, softplus duration scalar).
    pub fn decode_step_tape(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        state: &TapeState,
        input: TensorId,
    ) -> (TapeState, TensorId, TensorId, TensorId) {
        let new =
            stack_step_tape(tape, &self.params, binding, "dec", self.config.depth, state, input);
        let top = new.h[self.config.depth - 1];
        let w_act = binding.id(self.params.index_of("dec.head.w_act"));
        let b_act = binding.id(self.params.index_of("dec.head.b_act"));
        let wh = tape.matvec(w_act, top);
        let logits = tape.add(wh, b_act);
        let probs = tape.softmax(logits);
        let log_probs = tape.log_softmax(logits);
        let w_dur = binding.id(self.params.index_of("dec.head.w_dur"));
        let b_dur = binding.id(self.params.index_of("dec.head.b_dur"));
        let dh = tape.matvec(w_dur, top);
        let dur_pre = tape.add(dh, b_dur);
        let duration = tape.softplus(dur_pre);
        (new, probs, log_probs, duration)
    }

    pub fn start_input_tape(&self, tape: &mut Tape) -> TensorId {
        tape.leaf_vec(self.start_input())
    }
}

/// How free-running decoding picks its feedback vector.
pub enum DecodeMode<'a> {
    Argmax,
    Gumbel { tau: f64, rng: &'a mut dyn rand::RngCore },
}

#[derive(Debug, Clone)]
pub struct FreeRunResult {
    pub steps: Vec<StepOutput>,
    /// argmax labels with predicted durations, one per step
    pub emitted: Vec<AugmentedVector>,
    /// hit max_len without emitting EOS
    pub truncated: bool,
}

/// Recurrent stack plus a sigmoid head scoring a relaxed suffix as real.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl DiscriminatorModel {
    pub fn new(config: ModelConfig, seed: u64) -> DiscriminatorModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new_with_rng(config, &mut rng)
    }

    pub fn new_with_rng<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> DiscriminatorModel {
        let mut params = ParamSet::new();
        add_stack(&mut params, "dis", config.input_width(), config.hidden, config.depth, config.init_std, rng);
        params.add_matrix("dis.head.w", "dis.head", 1, config.hidden, config.init_std, rng);
        params.add_vector("dis.head.b", "dis.head", 1);
        DiscriminatorModel { config, params }
    }

    /// Probability in (0,1) that the relaxed suffix is real. Each element is
    /// a probability vector over the vocabulary plus a duration scalar.
    pub fn discriminate(&self, relaxed_suffix: &[(Vec<f64>, f64)]) -> Result<f64, ModelError> {
        assert!(!relaxed_suffix.is_empty(), "suffix must be non-empty");
        let mut state = LstmState::zeros(self.config.depth, self.config.hidden);
        for (probs, duration) in relaxed_suffix {
            if probs.len() != self.config.vocab_size {
                return Err(ModelError::DimensionMismatch {
                    expected: self.config.vocab_size,
                    actual: probs.len(),
                });
            }
            let mut dense = probs.clone();
            dense.push(*duration);
            stack_step_infer(&self.params, "dis", self.config.depth, &mut state, &Array1::from(dense));
        }
        let top = &state.h[self.config.depth - 1];
        let pre = param_mat(&self.params, "dis.head.w").dot(top)[0]
            + param_vec(&self.params, "dis.head.b")[0];
        Ok(crate::nn::tape::sigmoid(pre))
    }

    /// Differentiable twin of [`discriminate`] over tape nodes, each a
    /// (vocab_size + 1)-wide dense input.
    pub fn discriminate_tape(
        &self,
        tape: &mut Tape,
        binding: &TapeBinding,
        relaxed_suffix: &[TensorId],
    ) -> TensorId {
        assert!(!relaxed_suffix.is_empty());
        let mut state = stack_zero_state(tape, self.config.depth, self.config.hidden);
        for &x in relaxed_suffix {
            state = stack_step_tape(tape, &self.params, binding, "dis", self.config.depth, &state, x);
        }
        let top = state.h[self.config.depth - 1];
        let w = binding.id(self.params.index_of("dis.head.w"));
        let b = binding.id(self.params.index_of("dis.head.b"));
        let wh = tape.matvec(w, top);
        let pre = tape.add(wh, b);
        tape.sigmoid(pre)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing training snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub generator: GeneratorModel,
    pub discriminator: DiscriminatorModel,
    pub vocabulary: Vocabulary,
    pub normalizer_scale: f64,
    pub schedule: TemperatureSchedule,
    pub seed: u64,
    /// epochs already trained (resume point)
    pub epochs_completed: usize,
    pub max_trace_len: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Checkpoint, ModelError> {
        let json = std::fs::read_to_string(path)?;
        let mut ckpt: Checkpoint =
            serde_json::from_str(&json).map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::BadCheckpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.generator.params.reindex();
        ckpt.discriminator.params.reindex();
        Ok(ckpt)
    }
}
