//! Turning magnitude spectrograms back into impulse responses, and
//! parametric shaped-noise IRs with known per-band decay times.

use std::f64::consts::{LN_10, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acoustics::filters::FilterChain;
use crate::dsp::{istft, stft, AudioBuffer, Spectrogram, SpectrogramData};
use crate::error::{Error, Result};

/// Phase-refinement passes used by [`PhaseMode::iterative`].
pub const DEFAULT_ITERATIONS: usize = 32;

/// How phases are chosen when inverting a magnitude-only spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// Independent uniform phase per bin.
    Random,
    /// Alternating ISTFT/STFT magnitude projection, starting from random phase.
    Iterative { iterations: usize },
}

impl PhaseMode {
    pub fn iterative() -> Self {
        PhaseMode::Iterative {
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

impl Default for PhaseMode {
    fn default() -> Self {
        PhaseMode::Random
    }
}

impl FromStr for PhaseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PhaseMode::Random),
            "iterative" | "griffin-lim" => Ok(PhaseMode::iterative()),
            other => Err(Error::invalid("phase mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Full-band magnitudes (`M/2 + 1` bins per frame) of a log-magnitude
/// spectrogram. A trimmed input gets a zero Nyquist bin back.
fn full_magnitudes(logmag: &Spectrogram) -> Result<Vec<f64>> {
    let values = logmag.log_magnitude()?;
    let full = logmag.config().full_bins();
    let bins = logmag.bins();
    let mut mags = vec![0.0f64; logmag.frames() * full];
    for (row, src) in mags.chunks_exact_mut(full).zip(values.chunks_exact(bins)) {
        for (dst, &v) in row.iter_mut().zip(src) {
            *dst = (v as f64).exp();
        }
    }
    if mags.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("magnitudes"));
    }
    Ok(mags)
}

fn complex_spectrogram(values: Vec<Complex32>, frames: usize, config: &crate::dsp::StftConfig) -> Result<Spectrogram> {
    Spectrogram::new(SpectrogramData::Complex(values), frames, config.full_bins(), *config)
}

/// Renders a log-magnitude spectrogram to audio of the configured length.
pub fn spectrogram_to_ir(logmag: &Spectrogram, mode: PhaseMode, seed: u64) -> Result<AudioBuffer> {
    let config = *logmag.config();
    let frames = logmag.frames();
    let mags = full_magnitudes(logmag)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full = config.full_bins();
    let mut values: Vec<Complex32> = mags
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let bin = i % full;
            if bin == 0 || bin == full - 1 {
                // DC and Nyquist of a real signal are real; keep a random sign.
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Complex32::new((sign * m) as f32, 0.0)
            } else {
                let phase = rng.random_range(0.0..2.0 * PI);
                let c = Complex64::from_polar(m, phase);
                Complex32::new(c.re as f32, c.im as f32)
            }
        })
        .collect();
    let mut audio = istft(&complex_spectrogram(values.clone(), frames, &config)?)?;
    if let PhaseMode::Iterative { iterations } = mode {
        for _ in 0..iterations {
            let estimate = stft(&audio, &config)?;
            let estimate = estimate.complex()?;
            for ((v, e), &m) in values.iter_mut().zip(estimate).zip(&mags) {
                let norm = e.norm();
                *v = if norm > 0.0 {
                    *e * (m as f32 / norm)
                } else {
                    Complex32::new(m as f32, 0.0)
                };
            }
            audio = istft(&complex_spectrogram(values.clone(), frames, &config)?)?;
        }
    }
    Ok(audio)
}

/// `|| |STFT(audio)| - target || / || target ||` over the bins the target
/// covers, with `target = exp(logmag)`.
pub fn spectral_convergence(audio: &AudioBuffer, logmag: &Spectrogram) -> Result<f64> {
    let spec = stft(audio, logmag.config())?;
    let got = spec.complex()?;
    let target = logmag.log_magnitude()?;
    let (full, bins) = (spec.bins(), logmag.bins());
    if spec.frames() != logmag.frames() {
        return Err(Error::ShapeMismatch {
            expected: vec![logmag.frames(), bins],
            actual: vec![spec.frames(), full],
        });
    }
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for (row, trow) in got.chunks_exact(full).zip(target.chunks_exact(bins)) {
        for (g, &t) in row.iter().zip(trow) {
            let t = (t as f64).exp();
            diff += (g.norm() as f64 - t).powi(2);
            norm += t * t;
        }
    }
    Ok((diff / norm).sqrt())
}

/// Decay time constant for a 60 dB amplitude drop over `t60` seconds.
pub fn tau_for_t60(t60: f64) -> f64 {
    t60 / (3.0 * LN_10)
}

/// Parameters of a synthetic decaying-noise impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedNoiseParams {
    /// `(center_hz, t60_seconds)`; a single entry means broadband noise.
    pub band_t60: Vec<(f64, f64)>,
    pub direct_to_reverb_db: f64,
    pub onset_delay: f64,
    pub duration: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl ShapedNoiseParams {
    pub fn broadband(t60: f64, duration: f64, sample_rate: u32, seed: u64) -> Self {
        Self {
            band_t60: vec![(1000.0, t60)],
            direct_to_reverb_db: -10.0,
            onset_delay: 0.0,
            duration,
            sample_rate,
            seed,
        }
    }

    pub fn max_t60(&self) -> f64 {
        self.band_t60.iter().map(|b| b.1).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_t60.is_empty() {
            return Err(Error::invalid("band_t60", "needs at least one band"));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for &(center, t60) in &self.band_t60 {
            if !(t60 > 0.0 && t60.is_finite()) {
                return Err(Error::invalid("band_t60", format!("T60 must be positive, got {t60}")));
            }
            if !(center > 0.0 && center < nyquist) {
                return Err(Error::invalid("band_t60", format!("center {center} Hz outside (0, {nyquist})")));
            }
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if !(self.duration > 0.0) || !(self.onset_delay >= 0.0) || self.onset_delay >= self.duration {
            return Err(Error::invalid("duration", "need 0 <= onset_delay < duration"));
        }
        if !self.direct_to_reverb_db.is_finite() {
            return Err(Error::NonFinite("direct_to_reverb_db"));
        }
        Ok(())
    }
}

/// Plain `key = value` lines; bands as `center:t60` pairs separated by commas.
impl fmt::Display for ShapedNoiseParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bands: Vec<String> = self.band_t60.iter().map(|(c, t)| format!("{c}:{t}")).collect();
        writeln!(f, "band_t60 = {}", bands.join(", "))?;
        writeln!(f, "direct_to_reverb_db = {}", self.direct_to_reverb_db)?;
        writeln!(f, "onset_delay = {}", self.onset_delay)?;
        writeln!(f, "duration = {}", self.duration)?;
        writeln!(f, "sample_rate = {}", self.sample_rate)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

impl FromStr for ShapedNoiseParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::format("shaped noise params", format!("bad value for {key}: `{v}`")))
        }
        let mut band_t60 = None;
        let (mut drr, mut onset, mut duration, mut rate, mut seed) = (None, None, None, None, None);
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format("shaped noise params", format!("expected key = value, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "band_t60" => {
                    let bands = value
                        .split(',')
                        .map(|pair| {
                            let (c, t) = pair
                                .trim()
                                .split_once(':')
                                .ok_or_else(|| Error::format("shaped noise params", format!("bad band `{pair}`")))?;
                            Ok((num(key, c.trim())?, num(key, t.trim())?))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    band_t60 = Some(bands);
                }
                "direct_to_reverb_db" => drr = Some(num(key, value)?),
                "onset_delay" => onset = Some(num(key, value)?),
                "duration" => duration = Some(num(key, value)?),
                "sample_rate" => rate = Some(num(key, value)?),
                "seed" => seed = Some(num(key, value)?),
                other => return Err(Error::format("shaped noise params", format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::format("shaped noise params", format!("missing `{k}`"));
        let params = ShapedNoiseParams {
            band_t60: band_t60.ok_or_else(|| missing("band_t60"))?,
            direct_to_reverb_db: drr.ok_or_else(|| missing("direct_to_reverb_db"))?,
            onset_delay: onset.ok_or_else(|| missing("onset_delay"))?,
            duration: duration.ok_or_else(|| missing("duration"))?,
            sample_rate: rate.ok_or_else(|| missing("sample_rate"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Crossover filters splitting the spectrum among bands with the given
/// (sorted) centers; edges sit at the geometric means of neighbours.
fn crossover_partition(centers: &[f64], sample_rate: f64) -> Vec<FilterChain> {
    let edges: Vec<f64> = centers.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    (0..centers.len())
        .map(|i| {
            let mut chain = FilterChain::default();
            if i > 0 {
                chain = chain.then(FilterChain::crossover_high(edges[i - 1], sample_rate));
            }
            if i < edges.len() {
                chain = chain.then(FilterChain::crossover_low(edges[i], sample_rate));
            }
            chain
        })
        .collect()
}

/// Exponentially decaying Gaussian noise per band, summed, with a direct-path
/// impulse at `onset_delay`. Output peak is normalized to 1.
pub fn shaped_noise_ir(params: &ShapedNoiseParams) -> Result<AudioBuffer> {
    params.validate()?;
    if params.duration < 2.0 * params.max_t60() {
        log::warn!(
            "shaped noise duration {:.3} s is under twice the longest T60 ({:.3} s)",
            params.duration,
            params.max_t60()
        );
    }
    render_shaped_noise(params)
}

/// [`shaped_noise_ir`] without the duration warning, for bulk generation
/// where the caller reports once.
pub(crate) fn render_shaped_noise(params: &ShapedNoiseParams) -> Result<AudioBuffer> {
    params.validate()?;
    let fs = params.sample_rate as f64;
    let n = (params.duration * fs).round() as usize;
    let onset = ((params.onset_delay * fs).round() as usize).min(n - 1);
    let mut bands = params.band_t60.clone();
    bands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let centers: Vec<f64> = bands.iter().map(|b| b.0).collect();
    let filters = if bands.len() == 1 {
        vec![FilterChain::default()]
    } else {
        crossover_partition(&centers, fs)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut reverb = vec![0.0f64; n];
    for ((_, t60), filter) in bands.iter().zip(&filters) {
        let tau = tau_for_t60(*t60);
        let mut band: Vec<f64> = (0..n - onset)
            .map(|i| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * (-(i as f64) / fs / tau).exp()
            })
            .collect();
        filter.process(&mut band);
        for (r, b) in reverb[onset..].iter_mut().zip(&band) {
            *r += b;
        }
    }
    let reverb_energy: f64 = reverb.iter().map(|v| v * v).sum();
    let direct = (reverb_energy * 10f64.powf(params.direct_to_reverb_db / 10.0)).sqrt();
    reverb[onset] += direct;
    let peak = reverb.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::Silent);
    }
    AudioBuffer::new(reverb.iter().map(|v| (v / peak) as f32).collect(), params.sample_rate)
}
