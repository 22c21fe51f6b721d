//! Micro-Doppler arm-gesture recognition: CW-radar signal synthesis,
//! spectrograms, power-burst segmentation, Doppler envelope features and
//! nearest-neighbour classification under Lp, DTW and Fréchet distances.

pub mod classify;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod signals;
pub mod tfr;

pub use error::{Error, ParseError, Result};
