//! Reconstruction quality in decibels.
//!
//! Both metrics return `+∞` when the reconstruction is exact.

use crate::error::{Error, Result};
use crate::grid::ComplexImage;

fn error_norm(rec: &ComplexImage, orig: &ComplexImage) -> Result<f64> {
    orig.check_dims(rec)?;
    Ok(rec
        .as_slice()
        .iter()
        .zip(orig.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `20·log10(‖orig‖ / ‖rec − orig‖)`.
pub fn snr_db(rec: &ComplexImage, orig: &ComplexImage) -> Result<f64> {
    let err = error_norm(rec, orig)?;
    let reference = orig.norm();
    if reference == 0.0 {
        return Err(Error::DegenerateReference);
    }
    Ok(20.0 * (reference / err).log10())
}

/// `20·log10(MAX·√(W·H) / ‖rec − orig‖)`.
pub fn psnr_db(rec: &ComplexImage, orig: &ComplexImage, max_intensity: f64) -> Result<f64> {
    if !(max_intensity > 0.0) {
        return Err(Error::BadParams(format!(
            "max intensity must be positive, got {max_intensity}"
        )));
    }
    let err = error_norm(rec, orig)?;
    let peak = max_intensity * (orig.len() as f64).sqrt();
    Ok(20.0 * (peak / err).log10())
}
