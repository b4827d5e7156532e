pub mod agc;
pub mod audio_io;
pub mod cli;
pub mod corruption;
pub mod diffusion;
pub mod error;
pub mod scorenet;
pub mod stft;
pub mod training;

pub use error::{Error, Result};
