//! Image-conditioned room impulse response synthesis.
//!
//! The crate covers the whole chain: log-magnitude spectrograms of impulse
//! responses, Schroeder-integration T60 analysis and its differentiable
//! spectrogram proxy, a small reverse-mode autodiff engine, a conditional
//! least-squares GAN mapping (RGB + depth) images to spectrograms, rendering
//! of spectrograms back to audio, partitioned FFT convolution, a synthetic
//! paired corpus, and the evaluation harness.

pub mod acoustics;
pub mod autodiff;
pub mod convolver;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gan;
pub mod irsynth;
pub mod preset;

pub use error::{Error, Result};
