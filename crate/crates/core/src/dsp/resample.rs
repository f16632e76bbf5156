//! Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.

use super::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Zero crossings of the sinc on each side of the kernel center.
const ZERO_CROSSINGS: usize = 32;
const KAISER_BETA: f64 = 9.0;
/// Passband edge relative to the lower of the two Nyquist rates.
const ROLLOFF: f64 = 0.95;
/// Above this many phases the kernel is evaluated per output sample
/// instead of being tabulated.
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    /// Cutoff as a fraction of the input Nyquist frequency.
    cutoff: f64,
    /// Half width of the kernel in input samples.
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(up: u64, down: u64) -> Self {
        let cutoff = (up as f64 / down as f64).min(1.0) * ROLLOFF;
        Self {
            cutoff,
            half_width: ZERO_CROSSINGS as f64 / cutoff,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    /// Kernel value at `d` input samples from the interpolation point.
    fn eval(&self, d: f64) -> f64 {
        if d.abs() >= self.half_width {
            return 0.0;
        }
        let arg = std::f64::consts::PI * self.cutoff * d;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        let r = d / self.half_width;
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        self.cutoff * sinc * window
    }
}

/// Band-limited sample-rate conversion.
///
/// Output length is `round(len · target / source)`. Equal rates return the
/// input unchanged.
pub fn resample(signal: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::invalid("target_rate", "must be positive"));
    }
    if signal.is_empty() {
        return Err(Error::EmptyInput("resample input"));
    }
    let source_rate = signal.sample_rate();
    if source_rate == target_rate {
        return Ok(signal.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;

    let input = signal.samples();
    let n_in = input.len();
    let n_out = ((n_in as f64) * up as f64 / down as f64).round() as usize;
    let kernel = Kernel::new(up, down);
    let reach = kernel.half_width.ceil() as i64;
    let taps = (2 * reach + 1) as usize;

    // table[phase][i] holds the kernel for offset (phase/up + reach - i).
    let table: Option<Vec<f64>> = (up as usize <= MAX_TABLE_PHASES).then(|| {
        let mut t = Vec::with_capacity(up as usize * taps);
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            for i in 0..taps {
                t.push(kernel.eval(frac + reach as f64 - i as f64));
            }
        }
        t
    });

    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let first = base - reach;
        let mut acc = 0.0f64;
        for i in 0..taps {
            let k = first + i as i64;
            if k < 0 || k >= n_in as i64 {
                continue;
            }
            let w = match &table {
                Some(t) => t[phase * taps + i],
                None => kernel.eval(phase as f64 / up as f64 + reach as f64 - i as f64),
            };
            acc += w * input[k as usize] as f64;
        }
        out.push(acc as f32);
    }
    AudioBuffer::new(out, target_rate)
}
