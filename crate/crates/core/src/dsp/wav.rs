//! WAV reading and writing (PCM16, PCM24, float32) on top of `hound`.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::audio::{AudioBuffer, MultichannelAudio};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

impl WavFormat {
    fn spec(self, channels: u16, sample_rate: u32) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            WavFormat::Pcm16 => (16, SampleFormat::Int),
            WavFormat::Pcm24 => (24, SampleFormat::Int),
            WavFormat::Float32 => (32, SampleFormat::Float),
        };
        WavSpec {
            channels,
            sample_rate,
            bits_per_sample,
            sample_format,
        }
    }
}

impl std::str::FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(WavFormat::Pcm16),
            "pcm24" => Ok(WavFormat::Pcm24),
            "float32" | "f32" => Ok(WavFormat::Float32),
            other => Err(Error::invalid("wav format", format!("unknown format `{other}`"))),
        }
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelAudio> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<Result<_, _>>()?
        }
    };
    if channels == 0 {
        return Err(Error::format("wav", "zero channels"));
    }
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (ch, &s) in out.iter_mut().zip(frame) {
            ch.push(s);
        }
    }
    if out.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("wav samples"));
    }
    Ok(MultichannelAudio {
        channels: out,
        sample_rate: spec.sample_rate,
    })
}

/// Reads a single-channel file. Multichannel files are rejected; use
/// [`crate::dataset::downmix`] for those.
pub fn read_wav_mono(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let audio = read_wav(path)?;
    if audio.channel_count() != 1 {
        return Err(Error::ChannelLayout {
            layout: "mono",
            expected: 1,
            actual: audio.channel_count(),
        });
    }
    let sample_rate = audio.sample_rate;
    AudioBuffer::new(audio.channels.into_iter().next().unwrap_or_default(), sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    let spec = format.spec(1, audio.sample_rate());
    let mut writer = WavWriter::create(path, spec)?;
    match format {
        WavFormat::Float32 => {
            for &s in audio.samples() {
                writer.write_sample(s)?;
            }
        }
        WavFormat::Pcm16 | WavFormat::Pcm24 => {
            let full_scale = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f32;
            for &s in audio.samples() {
                let v = (s.clamp(-1.0, 1.0) * full_scale).round() as i32;
                writer.write_sample(v)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
