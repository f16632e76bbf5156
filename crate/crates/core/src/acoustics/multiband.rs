use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use super::decay::estimate_t60;
use super::filters::FilterChain;
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Standard octave centers analysed by default.
pub const OCTAVE_CENTERS_HZ: [f64; 7] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
/// Upper band edges are kept below this fraction of the sample rate.
const MAX_EDGE_FRACTION: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub center_hz: f64,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub fn octave(center_hz: f64) -> Self {
        Self {
            center_hz,
            low_hz: center_hz / SQRT_2,
            high_hz: center_hz * SQRT_2,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::invalid(
                "band",
                format!(
                    "edges {:.1}..{:.1} Hz must satisfy 0 < low < high < {nyquist} Hz",
                    self.low_hz, self.high_hz
                ),
            ));
        }
        Ok(())
    }
}

/// Octave bands 125 Hz - 8 kHz. Upper edges that would cross
/// `0.45 * sample_rate` are pulled down to it; bands whose lower edge is
/// already past that point are dropped.
pub fn octave_bands(sample_rate: u32) -> Vec<Band> {
    let limit = MAX_EDGE_FRACTION * sample_rate as f64;
    OCTAVE_CENTERS_HZ
        .iter()
        .map(|&c| Band::octave(c))
        .filter(|b| b.low_hz < limit)
        .map(|b| Band {
            high_hz: b.high_hz.min(limit),
            ..b
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T60Source {
    TimeDomainIr,
    LogSpectrogramProxy,
}

impl T60Source {
    fn as_str(self) -> &'static str {
        match self {
            T60Source::TimeDomainIr => "time_domain_ir",
            T60Source::LogSpectrogramProxy => "log_spectrogram_proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandT60 {
    pub center_hz: f64,
    /// `None` when the band never decayed far enough to fit.
    pub t60: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct T60Report {
    pub fullband_t60: f64,
    /// Sorted by center frequency.
    pub bands: Vec<BandT60>,
    pub source: T60Source,
}

impl T60Report {
    pub fn band(&self, center_hz: f64) -> Option<f64> {
        self.bands
            .iter()
            .find(|b| (b.center_hz - center_hz).abs() < 1e-6)
            .and_then(|b| b.t60)
    }

    /// The present band values, in frequency order.
    pub fn feature_vector(&self) -> Vec<f64> {
        self.bands.iter().filter_map(|b| b.t60).collect()
    }
}

/// Band-filters `ir` per band and runs [`estimate_t60`] on each output.
pub fn multiband_t60(ir: &AudioBuffer, bands: &[Band]) -> Result<T60Report> {
    for band in bands {
        band.validate(ir.sample_rate())?;
    }
    let fullband_t60 = estimate_t60(ir)?.t60;
    let fs = ir.sample_rate() as f64;
    let source: Vec<f64> = ir.samples().iter().map(|&s| s as f64).collect();
    let mut out: Vec<BandT60> = bands
        .iter()
        .map(|band| {
            let mut x = source.clone();
            FilterChain::bandpass(band.low_hz, band.high_hz, fs).process(&mut x);
            let filtered = AudioBuffer::new(x.iter().map(|&v| v as f32).collect(), ir.sample_rate());
            let t60 = filtered.and_then(|f| estimate_t60(&f)).ok().map(|a| a.t60);
            BandT60 {
                center_hz: band.center_hz,
                t60,
            }
        })
        .collect();
    out.sort_by(|a, b| a.center_hz.total_cmp(&b.center_hz));
    Ok(T60Report {
        fullband_t60,
        bands: out,
        source: T60Source::TimeDomainIr,
    })
}

/// Line-oriented text form:
///
/// ```text
/// # source time_domain_ir
/// fullband 0.512300
/// 125 0.498100
/// 250 absent
/// ```
impl fmt::Display for T60Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# source {}", self.source.as_str())?;
        writeln!(f, "fullband {:.6}", self.fullband_t60)?;
        for band in &self.bands {
            match band.t60 {
                Some(t) => writeln!(f, "{} {:.6}", band.center_hz, t)?,
                None => writeln!(f, "{} absent", band.center_hz)?,
            }
        }
        Ok(())
    }
}

impl FromStr for T60Report {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |line: &str| Error::format("t60 report", format!("bad line `{line}`"));
        let mut source = T60Source::TimeDomainIr;
        let mut fullband = None;
        let mut bands = Vec::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(name) = rest.trim().strip_prefix("source ") {
                    source = match name.trim() {
                        "time_domain_ir" => T60Source::TimeDomainIr,
                        "log_spectrogram_proxy" => T60Source::LogSpectrogramProxy,
                        _ => return Err(bad(line)),
                    };
                }
                continue;
            }
            let (key, value) = line.split_once(char::is_whitespace).ok_or_else(|| bad(line))?;
            let value = value.trim();
            if key == "fullband" {
                fullband = Some(value.parse::<f64>().map_err(|_| bad(line))?);
                continue;
            }
            let center_hz = key.parse::<f64>().map_err(|_| bad(line))?;
            let t60 = match value {
                "absent" => None,
                v => Some(v.parse::<f64>().map_err(|_| bad(line))?),
            };
            bands.push(BandT60 { center_hz, t60 });
        }
        let fullband_t60 = fullband.ok_or_else(|| Error::format("t60 report", "missing fullband row"))?;
        bands.sort_by(|a, b| a.center_hz.total_cmp(&b.center_hz));
        Ok(T60Report {
            fullband_t60,
            bands,
            source,
        })
    }
}
