//! Synthetic event-log generation from a small Markov process model:
//! row-stochastic activity transitions with an explicit stop column, and a
//! per-activity duration law. Used for deterministic test fixtures and
//! desk-scale training data.

use crate::eventlog::{Event, EventLog, Trace};
use chrono::NaiveDateTime;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A trace still running after this many events means the model's stop
/// probabilities are unreachable.
const MAX_TRACE_STEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("distribution does not sum to 1 (sum = {0})")]
    NotStochastic(f64),
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("transition matrix shape mismatch: expected {expected} rows of width {width}")]
    BadShape { expected: usize, width: usize },
    #[error("model failed to terminate a trace within {MAX_TRACE_STEPS} steps")]
    NonAbsorbing,
    #[error("mean duration must be positive, got {0}")]
    NonPositiveMean(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DurationLaw {
    /// every occurrence takes exactly this many days
    Fixed(f64),
    /// exponentially distributed with this mean, in days
    Exponential { mean_days: f64 },
}

impl DurationLaw {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64, SynthError> {
        match self {
            DurationLaw::Fixed(d) => Ok(*d),
            DurationLaw::Exponential { mean_days } => {
                if *mean_days <= 0.0 {
                    return Err(SynthError::NonPositiveMean(*mean_days));
                }
                Ok(Exp::new(1.0 / mean_days).unwrap().sample(rng))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivityDef {
    pub name: String,
    pub duration: DurationLaw,
}

/// Markov process model. `transitions` has one row per activity, each of
/// width n+1: columns 0..n give the next-activity probabilities, column n
/// the probability of ending the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticProcessModel {
    pub activities: Vec<ActivityDef>,
    pub start: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
}

fn check_distribution(probs: &[f64]) -> Result<(), SynthError> {
    for &p in probs {
        if p < 0.0 {
            return Err(SynthError::NegativeProbability(p));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SynthError::NotStochastic(sum));
    }
    Ok(())
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl SyntheticProcessModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        let n = self.activities.len();
        if self.start.len() != n || self.transitions.len() != n {
            return Err(SynthError::BadShape {
                expected: n,
                width: n + 1,
            });
        }
        check_distribution(&self.start)?;
        for row in &self.transitions {
            if row.len() != n + 1 {
                return Err(SynthError::BadShape {
                    expected: n,
                    width: n + 1,
                });
            }
            check_distribution(row)?;
        }
        Ok(())
    }

    /// A linear chain a0 -> a1 -> ... -> a(n-1) -> stop with fixed one-day
    /// durations: every generated trace is identical.
    pub fn deterministic_chain(n: usize) -> SyntheticProcessModel {
        assert!(n >= 1);
        let activities = (0..n)
            .map(|i| ActivityDef {
                name: format!("a{i}"),
                duration: DurationLaw::Fixed(1.0),
            })
            .collect();
        let mut start = vec![0.0; n];
        start[0] = 1.0;
        let transitions = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n + 1];
                if i + 1 < n {
                    row[i + 1] = 1.0;
                } else {
                    row[n] = 1.0;
                }
                row
            })
            .collect();
        SyntheticProcessModel {
            activities,
            start,
            transitions,
        }
    }

    /// Six-activity model with a branch after the first step and a rework
    /// loop, exponential durations. Small enough for desk-scale training but
    /// not memorizable from a handful of traces.
    pub fn desk_scale() -> SyntheticProcessModel {
        let names = ["register", "triage", "analyze", "fix", "verify", "close"];
        let activities = names
            .iter()
            .enumerate()
            .map(|(i, name)| ActivityDef {
                name: name.to_string(),
                duration: DurationLaw::Exponential {
                    mean_days: 0.5 + 0.25 * i as f64,
                },
            })
            .collect();
        let mut start = vec![0.0; 6];
        start[0] = 1.0;
        // columns: register triage analyze fix verify close stop
        let transitions = vec![
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.7, 0.3, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.8, 0.0, 0.2, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.25, 0.0, 0.75, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        SyntheticProcessModel {
            activities,
            start,
            transitions,
        }
    }
}

/// Samples `n_traces` cases from the model. Timestamps start at a fixed
/// epoch per case and advance by the sampled durations, so re-parsing the
/// log reproduces the same durations (up to whole-millisecond rounding).
pub fn generate_synthetic_log(
    model: &SyntheticProcessModel,
    n_traces: usize,
    seed: u64,
) -> Result<EventLog, SynthError> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = NaiveDateTime::parse_from_str("2020-01-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap();
    let n = model.activities.len();
    let mut traces = Vec::with_capacity(n_traces);
    for case in 0..n_traces {
        let case_id = format!("case-{case}");
        let mut events = Vec::new();
        let mut current = sample_index(&model.start, &mut rng);
        let mut clock = base;
        loop {
            if events.len() >= MAX_TRACE_STEPS {
                return Err(SynthError::NonAbsorbing);
            }
            let duration = if events.is_empty() {
                0.0
            } else {
                model.activities[current].duration.sample(&mut rng)?
            };
            // timestamps carry second resolution, so round durations to
            // whole seconds to keep CSV round-trips faithful
            let seconds = (duration * 86_400.0).round().max(0.0);
            let duration = seconds / 86_400.0;
            clock += chrono::Duration::seconds(seconds as i64);
            events.push(Event {
                case_id: case_id.clone(),
                activity: model.activities[current].name.clone(),
                timestamp: clock,
                duration,
            });
            let next = sample_index(&model.transitions[current], &mut rng);
            if next == n {
                break;
            }
            current = next;
        }
        traces.push(Trace { case_id, events });
    }
    Ok(EventLog { traces })
}
