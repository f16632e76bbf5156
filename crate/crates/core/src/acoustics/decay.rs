//! Schroeder backward integration and line-fit T60 extrapolation.

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Lowest value reported by an energy decay curve once the remaining energy
/// is exactly zero.
pub const EDC_FLOOR_DB: f64 = -300.0;
/// Upper edge of the regression span.
pub const FIT_START_DB: f64 = -5.0;
/// Lower edge of the regression span.
pub const FIT_END_DB: f64 = -20.0;

pub(crate) const DB_PER_NEPER_POWER: f64 = 10.0 / std::f64::consts::LN_10;

/// Normalized backward-integrated energy in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDecay {
    pub edc_db: Vec<f64>,
    pub time_step: f64,
}

/// How the T60 value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    /// Least squares over the [-5, -20] dB span.
    Regular,
    /// The curve fell below -20 dB within the first step; t60 is one time step.
    Degenerate,
    /// -20 dB was never reached; the whole curve was fitted instead.
    FullSpanFallback,
}

/// Regression over `edc_db[start..=end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub start: usize,
    pub end: usize,
    /// dB per second, negative for a decay.
    pub slope: f64,
    pub intercept_db: f64,
}

impl LineFit {
    /// The (time, dB) endpoints of the fitted segment.
    pub fn fit_points(&self, time_step: f64) -> [(f64, f64); 2] {
        let at = |i: usize| {
            let t = i as f64 * time_step;
            (t, self.intercept_db + self.slope * t)
        };
        [at(self.start), at(self.end)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayAnalysis {
    pub decay: EnergyDecay,
    pub t60: f64,
    pub fit: Option<LineFit>,
    pub status: FitStatus,
}

/// `edc_db[n] = 10 log10(sum_{k>=n} e[k]^2 / sum_k e[k]^2)`, floored at
/// [`EDC_FLOOR_DB`].
pub fn schroeder_edc(envelope: &[f64], time_step: f64) -> Result<EnergyDecay> {
    if envelope.is_empty() {
        return Err(Error::EmptyInput("envelope"));
    }
    if envelope.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("envelope", "must be finite and non-negative"));
    }
    let energy: Vec<f64> = envelope.iter().map(|v| v * v).collect();
    let tails = backward_sums(&energy);
    let total = tails[0];
    if total <= 0.0 {
        return Err(Error::Silent);
    }
    let edc_db = tails.iter().map(|&s| ratio_db(s / total)).collect();
    Ok(EnergyDecay { edc_db, time_step })
}

pub(crate) fn backward_sums(energy: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; energy.len()];
    let mut acc = 0.0;
    for (t, e) in tails.iter_mut().zip(energy).rev() {
        acc += e;
        *t = acc;
    }
    tails
}

fn ratio_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (DB_PER_NEPER_POWER * ratio.ln()).max(EDC_FLOOR_DB)
    } else {
        EDC_FLOOR_DB
    }
}

/// Where the regression span sits on a decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Span {
    Fit { start: usize, end: usize },
    Degenerate,
    Unreached,
}

pub(crate) fn locate_span(edc_db: &[f64]) -> Span {
    let first_below = |level: f64| edc_db.iter().position(|&v| v <= level);
    let Some(end) = first_below(FIT_END_DB) else {
        return Span::Unreached;
    };
    if end <= 1 {
        return Span::Degenerate;
    }
    let start = first_below(FIT_START_DB).unwrap_or(0).min(end - 1);
    Span::Fit { start, end }
}

/// Least-squares line through `(i * time_step, y[i])` for `i` in `start..=end`.
pub(crate) fn fit_line(y: &[f64], start: usize, end: usize, time_step: f64) -> LineFit {
    let n = (end - start + 1) as f64;
    let t_mean = (start + end) as f64 / 2.0 * time_step;
    let y_mean = y[start..=end].iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &v) in y.iter().enumerate().take(end + 1).skip(start) {
        let dt = i as f64 * time_step - t_mean;
        sxy += dt * (v - y_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    LineFit {
        start,
        end,
        slope,
        intercept_db: y_mean - slope * t_mean,
    }
}

/// Turns a decay curve into a T60 estimate. `allow_fallback` selects the
/// proxy behaviour (fit everything) over the strict error.
pub(crate) fn analyze_decay(decay: EnergyDecay, allow_fallback: bool) -> Result<DecayAnalysis> {
    let time_step = decay.time_step;
    let (fit, status) = match locate_span(&decay.edc_db) {
        Span::Degenerate => {
            return Ok(DecayAnalysis {
                decay,
                t60: time_step,
                fit: None,
                status: FitStatus::Degenerate,
            })
        }
        Span::Fit { start, end } => (fit_line(&decay.edc_db, start, end, time_step), FitStatus::Regular),
        Span::Unreached if allow_fallback && decay.edc_db.len() >= 2 => (
            fit_line(&decay.edc_db, 0, decay.edc_db.len() - 1, time_step),
            FitStatus::FullSpanFallback,
        ),
        Span::Unreached => {
            let reached_db = decay.edc_db.iter().copied().fold(0.0, f64::min);
            return Err(Error::InsufficientDecay { reached_db });
        }
    };
    if !(fit.slope < 0.0) {
        return Ok(DecayAnalysis {
            decay,
            t60: time_step,
            fit: None,
            status: FitStatus::Degenerate,
        });
    }
    Ok(DecayAnalysis {
        t60: -60.0 / fit.slope,
        decay,
        fit: Some(fit),
        status,
    })
}

/// T60 of a time-domain impulse response: Schroeder curve of `|ir|`, least
/// squares over [-5, -20] dB, extrapolated to -60 dB.
pub fn estimate_t60(ir: &AudioBuffer) -> Result<DecayAnalysis> {
    if ir.is_empty() {
        return Err(Error::EmptyInput("impulse response"));
    }
    if ir.is_silent() {
        return Err(Error::Silent);
    }
    let envelope: Vec<f64> = ir.samples().iter().map(|s| s.abs() as f64).collect();
    let decay = schroeder_edc(&envelope, 1.0 / ir.sample_rate() as f64)?;
    analyze_decay(decay, false)
}
