//! Minimal reverse-mode autodiff and the recurrent building blocks used by
//! the generator and discriminator. Everything is f64 so gradient checks
//! against central finite differences are meaningful.

pub mod lstm;
pub mod optim;
pub mod params;
pub mod tape;

pub use lstm::{lstm_cell_infer, lstm_cell_tape, LstmState};
pub use optim::{clip_gradients, ClipScope, RmsProp};
pub use params::{ParamSet, TapeBinding};
pub use tape::{Data, Gradients, Tape, TensorId};
