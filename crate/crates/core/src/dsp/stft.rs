//! Centered short-time Fourier transform, its overlap-add inverse, and the
//! log-magnitude / Nyquist-trim steps of the spectrogram representation.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use realfft::RealFftPlanner;

use super::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Floor applied to linear magnitudes before taking the logarithm.
pub const LOG_FLOOR: f32 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `m`.
    pub fn build(self, m: usize) -> Vec<f64> {
        (0..m)
            .map(|n| {
                let phase = 2.0 * PI * n as f64 / m as f64;
                match self {
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            WindowKind::Hann => 0,
            WindowKind::Hamming => 1,
            WindowKind::Rectangular => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(WindowKind::Hann),
            1 => Some(WindowKind::Hamming),
            2 => Some(WindowKind::Rectangular),
            _ => None,
        }
    }
}

/// Analysis geometry. The signal length is stored in samples so presets such
/// as 16256 samples at 22.05 kHz are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub center: bool,
}

impl StftConfig {
    /// 22.05 kHz, 5.94 s, M=1024, R=256: 512 frames x 512 bins after trimming.
    pub const fn paper() -> Self {
        Self {
            window_size: 1024,
            hop: 256,
            window: WindowKind::Hann,
            sample_rate: 22050,
            num_samples: 130_977,
            center: true,
        }
    }

    /// 22.05 kHz, 16256 samples, M=256, R=128: 128 frames x 128 bins after trimming.
    pub const fn toy() -> Self {
        Self {
            window_size: 256,
            hop: 128,
            window: WindowKind::Hann,
            sample_rate: 22050,
            num_samples: 16_256,
            center: true,
        }
    }

    pub fn duration(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate as f64
    }

    /// Seconds between successive frames.
    pub fn frame_period(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn full_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn trimmed_bins(&self) -> usize {
        self.window_size / 2
    }

    pub fn frames_for(&self, n: usize) -> usize {
        if self.center {
            1 + n / self.hop
        } else if n >= self.window_size {
            1 + (n - self.window_size) / self.hop
        } else {
            0
        }
    }

    pub fn frames(&self) -> usize {
        self.frames_for(self.num_samples)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || self.window_size % 2 != 0 {
            return Err(Error::invalid("window_size", "must be even and at least 2"));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::invalid("hop", "must satisfy 0 < R <= M"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if self.num_samples < self.window_size {
            return Err(Error::invalid(
                "num_samples",
                format!("{} samples is shorter than one window", self.num_samples),
            ));
        }
        Ok(())
    }

    /// Whether shifted copies of the analysis window sum to a constant.
    pub fn is_cola(&self) -> bool {
        if self.hop == 0 || self.window_size % self.hop != 0 {
            return false;
        }
        let w = self.window.build(self.window_size);
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| w.iter().skip(n).step_by(self.hop).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        mean > 0.0 && sums.iter().all(|s| (s - mean).abs() <= 1e-9 * mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrogramData {
    Complex(Vec<Complex32>),
    LogMagnitude(Vec<f32>),
}

/// Time-frequency grid stored frame-major: entry `(frame, bin)` lives at
/// `frame * bins + bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: SpectrogramData,
    frames: usize,
    bins: usize,
    config: StftConfig,
}

impl Spectrogram {
    pub fn new(data: SpectrogramData, frames: usize, bins: usize, config: StftConfig) -> Result<Self> {
        let len = match &data {
            SpectrogramData::Complex(v) => v.len(),
            SpectrogramData::LogMagnitude(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("log-magnitude spectrogram"));
                }
                v.len()
            }
        };
        if len != frames * bins {
            return Err(Error::ShapeMismatch {
                expected: vec![frames, bins],
                actual: vec![len],
            });
        }
        if bins != config.full_bins() && bins != config.trimmed_bins() {
            return Err(Error::invalid(
                "bins",
                format!("{bins} bins does not match window size {}", config.window_size),
            ));
        }
        Ok(Self {
            data,
            frames,
            bins,
            config,
        })
    }

    pub fn from_log_magnitude(values: Vec<f32>, frames: usize, bins: usize, config: StftConfig) -> Result<Self> {
        Self::new(SpectrogramData::LogMagnitude(values), frames, bins, config)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn data(&self) -> &SpectrogramData {
        &self.data
    }

    pub fn kind_name(&self) -> &'static str {
        match self.data {
            SpectrogramData::Complex(_) => "complex",
            SpectrogramData::LogMagnitude(_) => "log_magnitude",
        }
    }

    pub fn is_trimmed(&self) -> bool {
        self.bins == self.config.trimmed_bins()
    }

    pub fn complex(&self) -> Result<&[Complex32]> {
        match &self.data {
            SpectrogramData::Complex(v) => Ok(v),
            SpectrogramData::LogMagnitude(_) => Err(Error::WrongSpectrogramKind {
                expected: "complex",
                actual: "log_magnitude",
            }),
        }
    }

    pub fn log_magnitude(&self) -> Result<&[f32]> {
        match &self.data {
            SpectrogramData::LogMagnitude(v) => Ok(v),
            SpectrogramData::Complex(_) => Err(Error::WrongSpectrogramKind {
                expected: "log_magnitude",
                actual: "complex",
            }),
        }
    }

    pub fn into_data(self) -> SpectrogramData {
        self.data
    }
}

/// Centered (or uncentered) STFT with zero padding of M/2 on both sides.
///
/// Frame count is `1 + floor(N / R)` when centered; bins are `M/2 + 1`.
pub fn stft(signal: &AudioBuffer, config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if signal.sample_rate() != config.sample_rate {
        return Err(Error::SampleRateMismatch {
            left: signal.sample_rate(),
            right: config.sample_rate,
        });
    }
    let m = config.window_size;
    let n = signal.len();
    let frames = config.frames_for(n);
    if n == 0 || frames == 0 {
        return Err(Error::invalid(
            "signal",
            format!("{n} samples is shorter than one window after padding"),
        ));
    }
    let pad = if config.center { m / 2 } else { 0 };
    let window = config.window.build(m);
    let bins = config.full_bins();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let mut frame_buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let samples = signal.samples();

    let mut data = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = (f * config.hop) as i64 - pad as i64;
        for (j, slot) in frame_buf.iter_mut().enumerate() {
            let idx = start + j as i64;
            *slot = if idx >= 0 && (idx as usize) < n {
                samples[idx as usize] as f64 * window[j]
            } else {
                0.0
            };
        }
        fft.process_with_scratch(&mut frame_buf, &mut spectrum, &mut scratch)
            .expect("fft buffer sizes come from the planner");
        data.extend(spectrum.iter().map(|c| Complex32::new(c.re as f32, c.im as f32)));
    }
    Spectrogram::new(SpectrogramData::Complex(data), frames, bins, *config)
}

/// Weighted overlap-add inverse of [`stft`], normalized by the summed squared
/// window. The output has `config.num_samples` samples.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    let config = spec.config();
    config.validate()?;
    if !config.is_cola() {
        return Err(Error::NotCola {
            window: config.window_size,
            hop: config.hop,
        });
    }
    let values = spec.complex()?;
    if spec.is_trimmed() {
        return Err(Error::invalid("spectrogram", "inverse needs the Nyquist bin"));
    }
    let m = config.window_size;
    let bins = spec.bins();
    let pad = if config.center { m / 2 } else { 0 };
    let out_len = config.num_samples;
    let span = (spec.frames().saturating_sub(1)) * config.hop + m;
    let window = config.window.build(m);

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(m);
    let mut spectrum = ifft.make_input_vec();
    let mut frame_buf = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    let mut acc = vec![0.0f64; span];
    let mut norm = vec![0.0f64; span];
    let scale = 1.0 / m as f64;
    for f in 0..spec.frames() {
        let row = &values[f * bins..(f + 1) * bins];
        for (dst, src) in spectrum.iter_mut().zip(row) {
            *dst = Complex64::new(src.re as f64, src.im as f64);
        }
        // A real signal has purely real DC and Nyquist bins.
        spectrum[0].im = 0.0;
        spectrum[bins - 1].im = 0.0;
        ifft.process_with_scratch(&mut spectrum, &mut frame_buf, &mut scratch)
            .expect("fft buffer sizes come from the planner");
        let start = f * config.hop;
        for j in 0..m {
            acc[start + j] += frame_buf[j] * scale * window[j];
            norm[start + j] += window[j] * window[j];
        }
    }

    let out: Vec<f32> = (0..out_len)
        .map(|i| {
            let p = i + pad;
            if p < span && norm[p] > 1e-10 {
                (acc[p] / norm[p]) as f32
            } else {
                0.0
            }
        })
        .collect();
    AudioBuffer::new(out, config.sample_rate)
}

/// `ln(max(|X|, LOG_FLOOR))` elementwise.
pub fn log_magnitude(spec: &Spectrogram) -> Result<Spectrogram> {
    let values = spec.complex()?;
    let logs = values.iter().map(|c| c.norm().max(LOG_FLOOR).ln()).collect();
    Spectrogram::new(
        SpectrogramData::LogMagnitude(logs),
        spec.frames(),
        spec.bins(),
        *spec.config(),
    )
}

/// Drops the Nyquist bin, leaving `M/2` bins.
pub fn trim_nyquist(spec: &Spectrogram) -> Result<Spectrogram> {
    if spec.is_trimmed() {
        return Err(Error::AlreadyTrimmed { bins: spec.bins() });
    }
    let (bins, keep) = (spec.bins(), spec.bins() - 1);
    let data = match spec.data() {
        SpectrogramData::Complex(v) => {
            SpectrogramData::Complex(v.chunks_exact(bins).flat_map(|r| r[..keep].iter().copied()).collect())
        }
        SpectrogramData::LogMagnitude(v) => {
            SpectrogramData::LogMagnitude(v.chunks_exact(bins).flat_map(|r| r[..keep].iter().copied()).collect())
        }
    };
    Spectrogram::new(data, spec.frames(), keep, *spec.config())
}

/// Resample-free analysis chain: fit to preset length, STFT, log-magnitude,
/// Nyquist trim.
pub fn analyze_log_spectrogram(signal: &AudioBuffer, config: &StftConfig) -> Result<Spectrogram> {
    let mut samples = signal.samples().to_vec();
    samples.resize(config.num_samples, 0.0);
    let fitted = AudioBuffer::new(samples, signal.sample_rate())?;
    trim_nyquist(&log_magnitude(&stft(&fitted, config)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 22050).unwrap()
    }

    fn snr_db(reference: &[f32], estimate: &[f32]) -> f64 {
        let signal: f64 = reference.iter().map(|&x| (x as f64).powi(2)).sum();
        let error: f64 = reference
            .iter()
            .zip(estimate)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum();
        10.0 * (signal / error).log10()
    }

    #[test]
    fn paper_preset_geometry() {
        let cfg = StftConfig::paper();
        let spec = stft(&noise(cfg.num_samples, 1), &cfg).unwrap();
        assert_eq!((spec.frames(), spec.bins()), (512, 513));
        let trimmed = trim_nyquist(&spec).unwrap();
        assert_eq!((trimmed.frames(), trimmed.bins()), (512, 512));
    }

    #[test]
    fn toy_preset_geometry() {
        let cfg = StftConfig::toy();
        let spec = trim_nyquist(&stft(&noise(cfg.num_samples, 2), &cfg).unwrap()).unwrap();
        assert_eq!((spec.frames(), spec.bins()), (128, 128));
    }

    #[test]
    fn frame_count_formula() {
        let cfg = StftConfig::toy();
        for n in [256, 257, 1000, 4095, 4096, 9999] {
            let spec = stft(&noise(n, 3), &cfg).unwrap();
            assert_eq!(spec.frames(), 1 + n / cfg.hop);
        }
    }

    #[test]
    fn presets_are_cola() {
        assert!(StftConfig::paper().is_cola());
        assert!(StftConfig::toy().is_cola());
        let bad = StftConfig {
            hop: 100,
            ..StftConfig::toy()
        };
        assert!(!bad.is_cola());
    }

    #[test]
    fn impulse_frame_is_window_spectrum() {
        let cfg = StftConfig::toy();
        let frame = 10;
        let mut x = vec![0.0f32; cfg.num_samples];
        x[frame * cfg.hop] = 1.0;
        let spec = stft(&AudioBuffer::new(x, 22050).unwrap(), &cfg).unwrap();
        let row = &spec.complex().unwrap()[frame * spec.bins()..(frame + 1) * spec.bins()];
        // The impulse sits at window index M/2 where the Hann window is 1:
        // |X_k| = 1 for every bin.
        for c in row {
            assert!((c.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::toy();
        let x = noise(cfg.num_samples, 4);
        let spec = stft(&x, &cfg).unwrap();
        let w = cfg.window.build(cfg.window_size);
        let m = cfg.window_size;
        let values = spec.complex().unwrap();
        let (mut time_energy, mut freq_energy) = (0.0f64, 0.0f64);
        for f in 0..spec.frames() {
            let start = (f * cfg.hop) as i64 - (m / 2) as i64;
            for j in 0..m {
                let idx = start + j as i64;
                if idx >= 0 && (idx as usize) < x.len() {
                    time_energy += (x.samples()[idx as usize] as f64 * w[j]).powi(2);
                }
            }
            let row = &values[f * spec.bins()..(f + 1) * spec.bins()];
            for (k, c) in row.iter().enumerate() {
                let weight = if k == 0 || k == m / 2 { 1.0 } else { 2.0 };
                freq_energy += weight * (c.norm_sqr() as f64);
            }
        }
        freq_energy /= m as f64;
        assert!((freq_energy - time_energy).abs() / time_energy < 1e-6);
    }

    #[test]
    fn round_trip_snr() {
        for cfg in [StftConfig::toy(), StftConfig::paper()] {
            let x = noise(cfg.num_samples, 5);
            let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
            assert_eq!(y.len(), x.len());
            assert!(snr_db(x.samples(), y.samples()) > 60.0);
        }
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let cfg = StftConfig::toy();
        let spec = Spectrogram::new(
            SpectrogramData::Complex(vec![Complex32::new(0.0, 0.0); cfg.frames() * cfg.full_bins()]),
            cfg.frames(),
            cfg.full_bins(),
            cfg,
        )
        .unwrap();
        assert!(istft(&spec).unwrap().is_silent());
    }

    #[test]
    fn single_frame_windowed_sine_is_recovered() {
        let cfg = StftConfig {
            num_samples: 256,
            center: false,
            hop: 128,
            ..StftConfig::toy()
        };
        let x: Vec<f32> = (0..256).map(|n| (2.0 * std::f32::consts::PI * 8.0 * n as f32 / 256.0).sin()).collect();
        let buf = AudioBuffer::new(x.clone(), 22050).unwrap();
        let spec = stft(&buf, &cfg).unwrap();
        assert_eq!(spec.frames(), 1);
        let y = istft(&spec).unwrap();
        // Inside the window support (w > 0) the sine comes back exactly.
        for n in 1..256 {
            assert!((y.samples()[n] - x[n]).abs() < 1e-4, "n={n}");
        }
    }

    #[test]
    fn non_cola_inverse_is_rejected() {
        let cfg = StftConfig {
            hop: 100,
            ..StftConfig::toy()
        };
        let spec = stft(&noise(cfg.num_samples, 6), &cfg).unwrap();
        assert!(matches!(istft(&spec), Err(Error::NotCola { .. })));
    }

    #[test]
    fn log_magnitude_values() {
        let cfg = StftConfig::toy();
        let bins = cfg.full_bins();
        let mut data = vec![Complex32::new(1.0, 0.0); bins];
        data[1] = Complex32::new(0.0, 0.0);
        data[2] = Complex32::new(0.0, std::f32::consts::E);
        let spec = Spectrogram::new(SpectrogramData::Complex(data), 1, bins, cfg).unwrap();
        let logs = log_magnitude(&spec).unwrap();
        let v = logs.log_magnitude().unwrap();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], LOG_FLOOR.ln());
        assert!((v[2] - 1.0).abs() < 1e-6);
        assert!(log_magnitude(&logs).is_err());
    }

    #[test]
    fn trim_keeps_bins_and_rejects_twice() {
        let cfg = StftConfig::toy();
        let spec = stft(&noise(cfg.num_samples, 7), &cfg).unwrap();
        let trimmed = trim_nyquist(&spec).unwrap();
        let (full, cut) = (spec.complex().unwrap(), trimmed.complex().unwrap());
        for f in 0..spec.frames() {
            assert_eq!(&full[f * 129..f * 129 + 128], &cut[f * 128..(f + 1) * 128]);
        }
        assert!(matches!(trim_nyquist(&trimmed), Err(Error::AlreadyTrimmed { bins: 128 })));
    }

    #[test]
    fn empty_signal_is_rejected() {
        let cfg = StftConfig::toy();
        assert!(stft(&AudioBuffer::new(vec![], 22050).unwrap(), &cfg).is_err());
    }
}
