//! Differentiable T60 estimate computed directly on a log-magnitude
//! spectrogram.
//!
//! Forward chain: `exp` -> sum over one axis -> square -> reverse cumulative
//! sum -> dB -> least squares over the [-5, -20] dB span -> -60 / slope.
//! The span indices are found on the forward pass and held fixed for the
//! backward pass, so the loss is piecewise smooth with jumps wherever a
//! perturbation moves the first sample below -5 dB or -20 dB.

use super::decay::{backward_sums, fit_line, locate_span, FitStatus, Span, DB_PER_NEPER_POWER};
use crate::dsp::Spectrogram;
use crate::error::Result;

/// Which axis the `exp` values are summed over to form the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProxyAxis {
    /// Sum across frequency bins: one envelope value per frame.
    #[default]
    Frequency,
    /// Sum across frames: one value per bin, treated as a sequence with the
    /// frame period as its step. Kept for comparison only.
    Time,
}

impl std::str::FromStr for ProxyAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" | "freq" => Ok(ProxyAxis::Frequency),
            "time" => Ok(ProxyAxis::Time),
            other => Err(crate::Error::invalid("proxy axis", format!("unknown axis `{other}`"))),
        }
    }
}

/// Memory order of a `frames x bins` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    /// `index = frame * bins + bin` (the [`Spectrogram`] order).
    FrameMajor,
    /// `index = bin * frames + frame` (image order: rows are frequencies).
    BinMajor,
}

#[derive(Debug, Clone, Copy)]
pub struct GridShape {
    pub frames: usize,
    pub bins: usize,
    pub layout: GridLayout,
}

impl GridShape {
    #[inline]
    fn index(&self, frame: usize, bin: usize) -> usize {
        match self.layout {
            GridLayout::FrameMajor => frame * self.bins + bin,
            GridLayout::BinMajor => bin * self.frames + frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyOutput {
    pub t60: f64,
    /// dT60/dx for every grid entry, in the input's layout.
    pub gradient: Vec<f64>,
    pub status: FitStatus,
    pub span: Option<(usize, usize)>,
}

/// T60 proxy of a log-magnitude [`Spectrogram`] with its gradient.
pub fn t60_proxy(spec: &Spectrogram) -> Result<ProxyOutput> {
    t60_proxy_with_axis(spec, ProxyAxis::Frequency)
}

pub fn t60_proxy_with_axis(spec: &Spectrogram, axis: ProxyAxis) -> Result<ProxyOutput> {
    let values: Vec<f64> = spec.log_magnitude()?.iter().map(|&v| v as f64).collect();
    let shape = GridShape {
        frames: spec.frames(),
        bins: spec.bins(),
        layout: GridLayout::FrameMajor,
    };
    Ok(t60_proxy_grid(&values, shape, spec.config().frame_period(), axis))
}

/// Core routine on a raw grid. Never fails: an unreachable span falls back to
/// a full-length fit and a delta-like decay yields one time step, both flagged.
pub fn t60_proxy_grid(values: &[f64], shape: GridShape, time_step: f64, axis: ProxyAxis) -> ProxyOutput {
    assert_eq!(values.len(), shape.frames * shape.bins, "grid size");
    // The result is invariant to a constant shift, which keeps exp() in range.
    let shift = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (steps, width) = match axis {
        ProxyAxis::Frequency => (shape.frames, shape.bins),
        ProxyAxis::Time => (shape.bins, shape.frames),
    };
    let at = |step: usize, j: usize| match axis {
        ProxyAxis::Frequency => shape.index(step, j),
        ProxyAxis::Time => shape.index(j, step),
    };

    let mut envelope = vec![0.0f64; steps];
    for (s, env) in envelope.iter_mut().enumerate() {
        *env = (0..width).map(|j| (values[at(s, j)] - shift).exp()).sum();
    }
    let energy: Vec<f64> = envelope.iter().map(|e| e * e).collect();
    let tails = backward_sums(&energy);
    let total = tails[0];
    let edc: Vec<f64> = tails.iter().map(|&s| DB_PER_NEPER_POWER * (s / total).ln()).collect();

    let zero = || vec![0.0; values.len()];
    let (start, end, status) = match locate_span(&edc) {
        Span::Fit { start, end } => (start, end, FitStatus::Regular),
        Span::Unreached if steps >= 2 => (0, steps - 1, FitStatus::FullSpanFallback),
        _ => {
            return ProxyOutput {
                t60: time_step,
                gradient: zero(),
                status: FitStatus::Degenerate,
                span: None,
            }
        }
    };
    let fit = fit_line(&edc, start, end, time_step);
    if !(fit.slope < 0.0) {
        return ProxyOutput {
            t60: time_step,
            gradient: zero(),
            status: FitStatus::Degenerate,
            span: None,
        };
    }
    let t60 = -60.0 / fit.slope;

    // Reverse pass.
    let d_slope = 60.0 / (fit.slope * fit.slope);
    let n = (end - start + 1) as f64;
    let t_mean = (start + end) as f64 / 2.0 * time_step;
    let sxx: f64 = (start..=end).map(|i| (i as f64 * time_step - t_mean).powi(2)).sum();
    let mut g_tail = vec![0.0f64; steps];
    let mut g_total = 0.0;
    for i in start..=end {
        let g_edc = d_slope * (i as f64 * time_step - t_mean) / sxx;
        g_tail[i] += g_edc * DB_PER_NEPER_POWER / tails[i];
        g_total -= g_edc * DB_PER_NEPER_POWER / total;
    }
    debug_assert!(n >= 2.0);
    g_tail[0] += g_total;
    // tails[i] = sum_{k>=i} energy[k]  =>  d/d energy[k] = sum_{i<=k} g_tail[i].
    let mut gradient = zero();
    let mut prefix = 0.0;
    for s in 0..steps {
        prefix += g_tail[s];
        let g_env = prefix * 2.0 * envelope[s];
        for j in 0..width {
            let idx = at(s, j);
            gradient[idx] = g_env * (values[idx] - shift).exp();
        }
    }
    ProxyOutput {
        t60,
        gradient,
        status,
        span: Some((start, end)),
    }
}
