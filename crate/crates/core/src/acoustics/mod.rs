//! Energy-decay analysis: Schroeder integration, T60 estimation on impulse
//! responses and on log-spectrograms, octave-band T60, and percent error.

mod decay;
pub mod filters;
mod multiband;
mod proxy;

pub use decay::{
    estimate_t60, schroeder_edc, DecayAnalysis, EnergyDecay, FitStatus, LineFit, EDC_FLOOR_DB, FIT_END_DB,
    FIT_START_DB,
};
pub use multiband::{multiband_t60, octave_bands, Band, BandT60, T60Report, T60Source, OCTAVE_CENTERS_HZ};
pub use proxy::{t60_proxy, t60_proxy_grid, t60_proxy_with_axis, GridLayout, GridShape, ProxyAxis, ProxyOutput};

use crate::error::{Error, Result};

/// Signed and absolute relative T60 error, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentError {
    pub signed: f64,
    pub absolute: f64,
}

/// `100 (generated - reference) / reference` and its magnitude.
pub fn t60_percent_error(generated: f64, reference: f64) -> Result<PercentError> {
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::invalid("reference", format!("T60 must be positive, got {reference}")));
    }
    if !generated.is_finite() {
        return Err(Error::NonFinite("generated T60"));
    }
    let signed = 100.0 * (generated - reference) / reference;
    Ok(PercentError {
        signed,
        absolute: signed.abs(),
    })
}
