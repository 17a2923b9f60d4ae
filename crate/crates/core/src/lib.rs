pub mod changepoint;
pub mod config;
pub mod detect;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod ground_truth;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod record;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
