//! Second-order Butterworth sections (bilinear transform) used for band
//! analysis and band-limited noise synthesis.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn from_raw(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Self {
            b: [b0 / a0, b1 / a0, b2 / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    pub fn lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        Self::from_raw(
            (1.0 - cos) / 2.0,
            1.0 - cos,
            (1.0 - cos) / 2.0,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    pub fn highpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        Self::from_raw(
            (1.0 + cos) / 2.0,
            -(1.0 + cos),
            (1.0 + cos) / 2.0,
            1.0 + alpha,
            -2.0 * cos,
            1.0 - alpha,
        )
    }

    /// Direct form II transposed, in place.
    pub fn process(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * out + z2;
            z2 = self.b[2] * input - self.a[1] * out;
            *v = out;
        }
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        (num / den).norm()
    }
}

/// A cascade of sections applied in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterChain(pub Vec<Biquad>);

impl FilterChain {
    /// 4th-order band-pass: 2nd-order Butterworth high-pass at `low_hz`
    /// followed by a 2nd-order Butterworth low-pass at `high_hz`.
    pub fn bandpass(low_hz: f64, high_hz: f64, sample_rate: f64) -> Self {
        FilterChain(vec![
            Biquad::highpass(low_hz, sample_rate),
            Biquad::lowpass(high_hz, sample_rate),
        ])
    }

    /// Linkwitz-Riley (squared Butterworth) low-pass, 4th order.
    pub fn crossover_low(freq_hz: f64, sample_rate: f64) -> Self {
        let s = Biquad::lowpass(freq_hz, sample_rate);
        FilterChain(vec![s, s])
    }

    /// Linkwitz-Riley high-pass, 4th order.
    pub fn crossover_high(freq_hz: f64, sample_rate: f64) -> Self {
        let s = Biquad::highpass(freq_hz, sample_rate);
        FilterChain(vec![s, s])
    }

    pub fn then(mut self, other: FilterChain) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn process(&self, x: &mut [f64]) {
        for section in &self.0 {
            section.process(x);
        }
    }

    pub fn gain_at(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        self.0.iter().map(|s| s.gain_at(freq_hz, sample_rate)).product()
    }
}
