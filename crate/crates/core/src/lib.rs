//! Suffix and remaining-time prediction for running business process cases.
//!
//! The pipeline: parse an event log from CSV ([`eventlog`]), encode traces as
//! augmented one-hot prefix/suffix pairs ([`encoding`]), train an adversarial
//! encoder-decoder generator against a recurrent discriminator ([`seq2seq`],
//! [`training`], [`gumbel`]), decode ranked suffix predictions with beam
//! search ([`decode`]) and score them with sequence similarity and MAE
//! ([`metrics`]). The [`app`] module wires these stages behind a small CLI and
//! [`synth`] provides a Markov-chain log generator for benchmarks and tests.

pub mod app;
pub mod decode;
pub mod encoding;
pub mod eventlog;
pub mod gumbel;
pub mod metrics;
pub mod nn;
pub mod seq2seq;
pub mod synth;
pub mod training;
