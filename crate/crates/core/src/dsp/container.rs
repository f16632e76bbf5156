//! Little-endian binary container for spectrograms.
//!
//! ```text
//! offset size  field
//! 0      4     magic "RKSG"
//! 4      2     version (u16) = 1
//! 6      1     kind: 0 = complex, 1 = log-magnitude
//! 7      1     window: 0 = hann, 1 = hamming, 2 = rectangular
//! 8      1     centered (0/1)
//! 9      3     reserved, zero
//! 12     4     window size M (u32)
//! 16     4     hop R (u32)
//! 20     4     sample rate (u32)
//! 24     4     frames (u32)
//! 28     4     bins (u32)
//! 32     8     signal length in samples (u64)
//! 40     ..    row-major f32 data, frame-major; complex entries as (re, im)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex32;

use super::stft::{Spectrogram, SpectrogramData, StftConfig, WindowKind};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RKSG";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 40;

pub fn encode_spectrogram(spec: &Spectrogram) -> Vec<u8> {
    let cfg = spec.config();
    let (kind, floats): (u8, Vec<f32>) = match spec.data() {
        SpectrogramData::Complex(v) => (0, v.iter().flat_map(|c| [c.re, c.im]).collect()),
        SpectrogramData::LogMagnitude(v) => (1, v.clone()),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + floats.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.push(cfg.window.code());
    out.push(cfg.center as u8);
    out.extend_from_slice(&[0, 0, 0]);
    for v in [cfg.window_size, cfg.hop, cfg.sample_rate as usize, spec.frames(), spec.bins()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(cfg.num_samples as u64).to_le_bytes());
    for f in floats {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out
}

pub fn decode_spectrogram(bytes: &[u8]) -> Result<Spectrogram> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("spectrogram", "truncated header"));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format("spectrogram", "bad magic"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::format("spectrogram", format!("unsupported version {version}")));
    }
    let kind = bytes[6];
    let window = WindowKind::from_code(bytes[7])
        .ok_or_else(|| Error::format("spectrogram", format!("unknown window code {}", bytes[7])))?;
    let center = bytes[8] != 0;
    let config = StftConfig {
        window_size: u32_at(12) as usize,
        hop: u32_at(16) as usize,
        sample_rate: u32_at(20),
        window,
        center,
        num_samples: u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize,
    };
    let frames = u32_at(24) as usize;
    let bins = u32_at(28) as usize;
    let per_entry = if kind == 0 { 2 } else { 1 };
    let expected = HEADER_LEN + frames * bins * per_entry * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            "spectrogram",
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let floats: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = match kind {
        0 => SpectrogramData::Complex(floats.chunks_exact(2).map(|p| Complex32::new(p[0], p[1])).collect()),
        1 => SpectrogramData::LogMagnitude(floats),
        k => return Err(Error::format("spectrogram", format!("unknown kind {k}"))),
    };
    Spectrogram::new(data, frames, bins, config)
}

pub fn write_spectrogram(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_spectrogram(spec)).map_err(|e| Error::io(path, e))
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_spectrogram(&bytes)
}
