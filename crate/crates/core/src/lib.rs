pub mod channel;
pub mod dbp;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod rng;
pub mod rxdsp;
pub mod seqsel;
pub mod shaping;
pub mod signal;
pub mod splitstep;

pub use error::{Error, Result};
