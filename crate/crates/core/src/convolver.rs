//! Linear convolution of dry audio with impulse responses: an O(N*M) direct
//! reference and a uniformly partitioned FFT engine (overlap-save framing)
//! that can run block by block.

use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::dsp::{resample, AudioBuffer};
use crate::error::{Error, Result};

/// Smallest accepted partition size.
pub const MIN_BLOCK_SIZE: usize = 64;
/// -1 dBFS as a linear amplitude.
pub const PEAK_TARGET: f32 = 0.891;

fn check_rates(dry: &AudioBuffer, ir: &AudioBuffer) -> Result<()> {
    if dry.sample_rate() != ir.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: dry.sample_rate(),
            right: ir.sample_rate(),
        });
    }
    Ok(())
}

/// Full linear convolution, `len(dry) + len(ir) - 1` samples, accumulated in f64.
pub fn convolve_direct(dry: &AudioBuffer, ir: &AudioBuffer) -> Result<AudioBuffer> {
    check_rates(dry, ir)?;
    let (x, h) = (dry.samples(), ir.samples());
    let mut out = vec![0.0f64; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let xv = xv as f64;
        for (o, &hv) in out[i..i + h.len()].iter_mut().zip(h) {
            *o += xv * hv as f64;
        }
    }
    AudioBuffer::new(out.into_iter().map(|v| v as f32).collect(), dry.sample_rate())
}

/// Frequency-domain IR partitions for a fixed block size. Immutable; share
/// it across streams with [`Arc`].
pub struct ConvolutionPlan {
    partitions: Vec<Vec<Complex64>>,
    block_size: usize,
    ir_length: usize,
    sample_rate: u32,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("block_size", &self.block_size)
            .field("ir_length", &self.ir_length)
            .field("partitions", &self.partitions.len())
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl ConvolutionPlan {
    pub fn new(ir: &AudioBuffer, block_size: usize) -> Result<Self> {
        if block_size < MIN_BLOCK_SIZE || !block_size.is_power_of_two() {
            return Err(Error::invalid(
                "block_size",
                format!("must be a power of two >= {MIN_BLOCK_SIZE}, got {block_size}"),
            ));
        }
        if ir.is_empty() {
            return Err(Error::EmptyInput("impulse response"));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(2 * block_size);
        let inverse = planner.plan_fft_inverse(2 * block_size);
        let partitions = ir
            .samples()
            .chunks(block_size)
            .map(|chunk| {
                let mut buf = vec![0.0f64; 2 * block_size];
                for (b, &s) in buf.iter_mut().zip(chunk) {
                    *b = s as f64;
                }
                let mut spectrum = forward.make_output_vec();
                forward.process(&mut buf, &mut spectrum).expect("fft length");
                spectrum
            })
            .collect();
        Ok(Self {
            partitions,
            block_size,
            ir_length: ir.len(),
            sample_rate: ir.sample_rate(),
            forward,
            inverse,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn ir_length(&self) -> usize {
        self.ir_length
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Convolves a whole signal, returning `len(dry) + ir_length - 1` samples.
    pub fn convolve(self: &Arc<Self>, dry: &AudioBuffer) -> Result<AudioBuffer> {
        if dry.sample_rate() != self.sample_rate {
            return Err(Error::SampleRateMismatch {
                left: dry.sample_rate(),
                right: self.sample_rate,
            });
        }
        let total = dry.len() + self.ir_length - 1;
        let mut stream = StreamState::new(Arc::clone(self));
        let mut out = Vec::with_capacity(total + self.block_size);
        let mut block = vec![0.0f32; self.block_size];
        let mut fed = 0;
        while out.len() < total {
            block.iter_mut().for_each(|v| *v = 0.0);
            if fed < dry.len() {
                let end = (fed + self.block_size).min(dry.len());
                block[..end - fed].copy_from_slice(&dry.samples()[fed..end]);
                fed = end;
            }
            out.extend_from_slice(&stream.process_block(&block)?);
        }
        out.truncate(total);
        AudioBuffer::new(out, self.sample_rate)
    }
}

/// Running state of one block-streaming convolution.
#[derive(Debug)]
pub struct StreamState {
    plan: Arc<ConvolutionPlan>,
    /// Previous and current input block, as one FFT frame.
    window: Vec<f64>,
    /// Spectra of recent input frames, newest at `head`.
    delay_line: Vec<Vec<Complex64>>,
    head: usize,
    scratch_in: Vec<f64>,
    accumulator: Vec<Complex64>,
    scratch_out: Vec<f64>,
}

impl StreamState {
    pub fn new(plan: Arc<ConvolutionPlan>) -> Self {
        let b = plan.block_size;
        let spectrum_len = b + 1;
        Self {
            window: vec![0.0; 2 * b],
            delay_line: vec![vec![Complex64::new(0.0, 0.0); spectrum_len]; plan.partitions.len()],
            head: 0,
            scratch_in: vec![0.0; 2 * b],
            accumulator: vec![Complex64::new(0.0, 0.0); spectrum_len],
            scratch_out: vec![0.0; 2 * b],
            plan,
        }
    }

    pub fn plan(&self) -> &Arc<ConvolutionPlan> {
        &self.plan
    }

    /// Consumes exactly `block_size` dry samples and returns as many wet ones.
    pub fn process_block(&mut self, dry_block: &[f32]) -> Result<Vec<f32>> {
        let b = self.plan.block_size;
        if dry_block.len() != b {
            return Err(Error::ShapeMismatch {
                expected: vec![b],
                actual: vec![dry_block.len()],
            });
        }
        // Overlap-save framing: [previous block | current block].
        self.window.copy_within(b.., 0);
        for (w, &s) in self.window[b..].iter_mut().zip(dry_block) {
            *w = s as f64;
        }
        let parts = self.delay_line.len();
        self.head = (self.head + parts - 1) % parts;
        self.scratch_in.copy_from_slice(&self.window);
        self.plan
            .forward
            .process(&mut self.scratch_in, &mut self.delay_line[self.head])
            .expect("fft length");

        self.accumulator.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (k, h) in self.plan.partitions.iter().enumerate() {
            let x = &self.delay_line[(self.head + k) % parts];
            for ((acc, &xv), &hv) in self.accumulator.iter_mut().zip(x).zip(h) {
                *acc += xv * hv;
            }
        }
        // The inverse transform requires purely real DC and Nyquist bins.
        self.accumulator[0].im = 0.0;
        self.accumulator[b].im = 0.0;
        self.plan
            .inverse
            .process(&mut self.accumulator, &mut self.scratch_out)
            .expect("fft length");
        let scale = 1.0 / (2 * b) as f64;
        Ok(self.scratch_out[b..].iter().map(|&v| (v * scale) as f32).collect())
    }

    /// Clears all history so the state can start a new stream.
    pub fn reset(&mut self) {
        self.window.iter_mut().for_each(|v| *v = 0.0);
        for spectrum in &mut self.delay_line {
            spectrum.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
        self.head = 0;
    }
}

/// Output leveling applied by [`apply_ir`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalize {
    None,
    /// Scale so the peak sits at -1 dBFS.
    #[default]
    Peak,
    /// Scale so the output RMS equals the dry RMS.
    MatchRms,
}

impl FromStr for Normalize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "off" => Ok(Normalize::None),
            "peak" => Ok(Normalize::Peak),
            "rms" | "match-rms" => Ok(Normalize::MatchRms),
            other => Err(Error::invalid("normalize", format!("unknown policy `{other}`"))),
        }
    }
}

/// Block size used by [`apply_ir`] for a given IR length.
pub fn default_block_size(ir_length: usize) -> usize {
    (ir_length / 8).next_power_of_two().clamp(256, 8192)
}

/// Places `dry` in the space described by `ir`. The IR is resampled to the
/// dry rate if the two differ.
pub fn apply_ir(dry: &AudioBuffer, ir: &AudioBuffer, normalize: Normalize) -> Result<AudioBuffer> {
    apply_ir_with(dry, ir, normalize, None)
}

/// [`apply_ir`] with an explicit partition size; `None` picks
/// [`default_block_size`].
pub fn apply_ir_with(dry: &AudioBuffer, ir: &AudioBuffer, normalize: Normalize, block_size: Option<usize>) -> Result<AudioBuffer> {
    if ir.is_silent() {
        return Err(Error::Silent);
    }
    let resampled;
    let ir = if ir.sample_rate() == dry.sample_rate() {
        ir
    } else {
        resampled = resample(ir, dry.sample_rate())?;
        &resampled
    };
    let plan = Arc::new(ConvolutionPlan::new(ir, block_size.unwrap_or_else(|| default_block_size(ir.len())))?);
    let wet = plan.convolve(dry)?;
    let gain = match normalize {
        Normalize::None => return Ok(wet),
        Normalize::Peak => {
            let peak = wet.peak();
            if peak == 0.0 {
                return Ok(wet);
            }
            PEAK_TARGET / peak
        }
        Normalize::MatchRms => {
            let wet_rms = wet.rms();
            if wet_rms == 0.0 {
                return Ok(wet);
            }
            (dry.rms() / wet_rms) as f32
        }
    };
    Ok(wet.scaled(gain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect(), 16000).unwrap()
    }

    fn max_diff(a: &[f32], b: &[f32]) -> f32 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    }

    #[test]
    fn direct_identity_and_shift() {
        let x = noise(100, 1);
        let mut d = vec![0.0; 5];
        d[0] = 1.0;
        let y = convolve_direct(&x, &AudioBuffer::new(d.clone(), 16000).unwrap()).unwrap();
        assert_eq!(y.len(), 104);
        assert_eq!(&y.samples()[..100], x.samples());
        assert!(y.samples()[100..].iter().all(|&v| v == 0.0));
        d.swap(0, 3);
        let y = convolve_direct(&x, &AudioBuffer::new(d, 16000).unwrap()).unwrap();
        assert_eq!(&y.samples()[3..103], x.samples());
    }

    #[test]
    fn direct_rejects_rate_mismatch() {
        let a = noise(10, 1);
        let b = AudioBuffer::new(vec![1.0], 8000).unwrap();
        assert!(matches!(convolve_direct(&a, &b), Err(Error::SampleRateMismatch { .. })));
    }

    #[test]
    fn partition_counts() {
        for (len, expect) in [(8192, 4), (8193, 5), (1, 1), (2048, 1)] {
            let plan = ConvolutionPlan::new(&noise(len, 2), 2048).unwrap();
            assert_eq!(plan.partition_count(), expect);
        }
        assert!(ConvolutionPlan::new(&noise(10, 2), 100).is_err());
        assert!(ConvolutionPlan::new(&noise(10, 2), 32).is_err());
    }

    #[test]
    fn impulse_probe_reproduces_ir() {
        let ir = noise(1000, 3);
        let plan = Arc::new(ConvolutionPlan::new(&ir, 128).unwrap());
        let mut delta = vec![0.0; 1];
        delta[0] = 1.0;
        let out = plan.convolve(&AudioBuffer::new(delta, 16000).unwrap()).unwrap();
        assert!(max_diff(out.samples(), ir.samples()) < 1e-6);
    }

    #[test]
    fn stream_tail_then_silence() {
        let ir = noise(300, 4);
        let plan = Arc::new(ConvolutionPlan::new(&ir, 64).unwrap());
        let mut state = StreamState::new(plan);
        let mut first = vec![0.0; 64];
        first[0] = 1.0;
        let mut out = state.process_block(&first).unwrap();
        for _ in 0..6 {
            out.extend(state.process_block(&[0.0; 64]).unwrap());
        }
        assert!(max_diff(&out[..300], ir.samples()) < 1e-6);
        assert!(out[300..].iter().all(|v| v.abs() < 1e-6));
        assert!(state.process_block(&[0.0; 10]).is_err());
    }

    #[test]
    fn partitioned_matches_direct() {
        for (n, m, b) in [(5000, 700, 64), (3000, 4096, 512), (100, 9000, 1024)] {
            let x = noise(n, n as u64);
            let h = noise(m, m as u64);
            let direct = convolve_direct(&x, &h).unwrap();
            let fast = Arc::new(ConvolutionPlan::new(&h, b).unwrap()).convolve(&x).unwrap();
            let peak = direct.peak();
            assert!(max_diff(fast.samples(), direct.samples()) < 1e-6 * peak);
        }
    }

    #[test]
    fn apply_ir_policies() {
        let x = noise(2000, 5);
        let mut d = vec![0.0; 50];
        d[0] = 1.0;
        let ir = AudioBuffer::new(d, 16000).unwrap();
        let y = apply_ir(&x, &ir, Normalize::None).unwrap();
        assert_eq!(y.len(), 2049);
        assert!(max_diff(&y.samples()[..2000], x.samples()) < 1e-6);
        let y = apply_ir(&x, &noise(400, 6), Normalize::Peak).unwrap();
        assert!((y.peak() - PEAK_TARGET).abs() < 1e-6);
        let y = apply_ir(&x, &noise(400, 6), Normalize::MatchRms).unwrap();
        assert!((y.rms() - x.rms()).abs() < 1e-4 * x.rms());
        let silent = AudioBuffer::new(vec![0.0; 10], 16000).unwrap();
        assert!(matches!(apply_ir(&x, &silent, Normalize::None), Err(Error::Silent)));
    }

    #[test]
    fn apply_ir_resamples_ir() {
        let x = noise(1000, 7);
        let ir = AudioBuffer::new(vec![0.0; 2000].into_iter().enumerate().map(|(i, _)| (-(i as f32) / 200.0).exp()).collect(), 8000).unwrap();
        let y = apply_ir(&x, &ir, Normalize::None).unwrap();
        assert_eq!(y.sample_rate(), 16000);
        assert_eq!(y.len(), 1000 + 4000 - 1);
    }
}
