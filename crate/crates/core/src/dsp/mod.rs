//! Signal primitives: audio buffers, WAV I/O, resampling, and the STFT
//! spectrogram representation.

mod audio;
pub mod container;
mod resample;
mod stft;
pub mod wav;

pub use audio::{AudioBuffer, MultichannelAudio};
pub use container::{read_spectrogram, write_spectrogram};
pub use resample::resample;
pub use stft::{
    analyze_log_spectrogram, istft, log_magnitude, stft, trim_nyquist, Spectrogram, SpectrogramData, StftConfig,
    WindowKind, LOG_FLOOR,
};
pub use wav::{read_wav, read_wav_mono, write_wav, WavFormat};
