//! The quadratic image update.
//!
//! With the shrunk differences `h_q` fixed the image solves
//!
//! ```text
//! (2 AᴴA + λβκ Σ_q D_qᴴ D_q) f = 2 Aᴴb + λβ Σ_q D_qᴴ h_q
//! ```
//!
//! where `κ = |B|` counts how many patch pairs share each pixel difference
//! (every pixel difference `f(x) − f(x+q)` appears in `|B|` patch
//! differences). For Fourier-diagonal `A` this is one entrywise division in
//! k-space; otherwise it is solved by preconditioned CG.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cg::{conjugate_gradient, CgOutcome};
use crate::error::{Error, Result};
use crate::grid::fourier::{diff_power_sum, Fft2d};
use crate::grid::{shift_diff, shift_diff_adjoint, ComplexImage, OffsetSet, PatchGeometry, RealImage};
use crate::model::{LinearOperator, MeasurementModel};

/// `Σ_q D_qᴴ h_q`, summed in neighborhood order.
pub fn adjoint_difference_sum(h: &[ComplexImage], neighborhood: &OffsetSet) -> ComplexImage {
    assert_eq!(h.len(), neighborhood.len(), "one h image per shift");
    let parts: Vec<ComplexImage> = neighborhood
        .as_slice()
        .par_iter()
        .zip(h.par_iter())
        .map(|(&q, hq)| shift_diff_adjoint(hq, q))
        .collect();
    sum_in_order(parts, h[0].dims())
}

pub(crate) fn sum_in_order(parts: Vec<ComplexImage>, dims: (usize, usize)) -> ComplexImage {
    let mut acc = ComplexImage::zeros(dims.0, dims.1);
    for part in parts {
        acc.as_mut_slice()
            .iter_mut()
            .zip(part.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    acc
}

/// Precomputed k-space pieces of the analytic update for one model and geometry.
#[derive(Debug, Clone)]
pub struct FourierUpdate {
    fft: Fft2d,
    indicator: RealImage,
    diff_power: RealImage,
    patch_weight: f64,
    dc_epsilon: f64,
}

impl FourierUpdate {
    pub fn new(model: &MeasurementModel, geometry: &PatchGeometry, dc_epsilon: f64) -> Self {
        let (w, h) = model.dims();
        FourierUpdate {
            fft: Fft2d::new(w, h),
            indicator: model.mask().indicator(),
            diff_power: diff_power_sum(&geometry.neighborhood, w, h),
            patch_weight: geometry.patch_len() as f64,
            dc_epsilon,
        }
    }

    pub fn fft(&self) -> &Fft2d {
        &self.fft
    }

    /// Solves the update given `b0` and `g = Σ_q D_qᴴ h_q`.
    ///
    /// Where the denominator vanishes (only DC, and only if DC is unsampled) the
    /// numerator vanishes too since differences annihilate DC; that coefficient
    /// is set to zero.
    pub fn solve(&self, b0: &ComplexImage, adjoint_sum: &ComplexImage, lambda_beta: f64) -> ComplexImage {
        let mut spec = self.fft.forward(adjoint_sum);
        let kappa = self.patch_weight;
        spec.as_mut_slice()
            .iter_mut()
            .zip(b0.as_slice())
            .zip(self.indicator.as_slice().iter().zip(self.diff_power.as_slice()))
            .for_each(|((g, b), (a, d2))| {
                let denom = 2.0 * a + lambda_beta * kappa * d2;
                *g = if denom.abs() <= self.dc_epsilon {
                    Complex64::new(0.0, 0.0)
                } else {
                    (2.0 * b + lambda_beta * *g) / denom
                };
            });
        self.fft.inverse_in_place(&mut spec);
        spec
    }
}

/// Analytic Fourier-domain image update.
pub fn f_update_fourier(
    model: &MeasurementModel,
    h: &[ComplexImage],
    lambda: f64,
    beta: f64,
    geometry: &PatchGeometry,
    dc_epsilon: f64,
) -> Result<ComplexImage> {
    for hq in h {
        if hq.dims() != model.dims() {
            return Err(Error::InvalidModel(format!(
                "h image is {:?} but the model grid is {:?}",
                hq.dims(),
                model.dims()
            )));
        }
    }
    if h.len() != geometry.neighborhood.len() {
        return Err(Error::BadParams(format!(
            "{} h images for {} shifts",
            h.len(),
            geometry.neighborhood.len()
        )));
    }
    let update = FourierUpdate::new(model, geometry, dc_epsilon);
    let g = adjoint_difference_sum(h, &geometry.neighborhood);
    Ok(update.solve(model.b0(), &g, lambda * beta))
}

/// Left-hand operator `f ↦ 2AᴴA f + λβκ Σ_q D_qᴴ D_q f`, applied in image space.
pub fn normal_operator_apply(
    op: &dyn LinearOperator,
    f: &ComplexImage,
    lambda_beta: f64,
    geometry: &PatchGeometry,
) -> ComplexImage {
    let kappa = geometry.patch_len() as f64;
    let data = op.normal(f);
    let parts: Vec<ComplexImage> = geometry
        .neighborhood
        .as_slice()
        .par_iter()
        .map(|&q| shift_diff_adjoint(&shift_diff(f, q), q))
        .collect();
    let reg = sum_in_order(parts, f.dims());
    data.zip_map(&reg, |a, r| 2.0 * a + lambda_beta * kappa * r)
}

/// Right-hand side `2Aᴴb + λβ Σ_q D_qᴴ h_q`.
pub fn normal_rhs(
    op: &dyn LinearOperator,
    b: &[Complex64],
    h: &[ComplexImage],
    lambda_beta: f64,
    neighborhood: &OffsetSet,
) -> ComplexImage {
    let g = adjoint_difference_sum(h, neighborhood);
    op.adjoint(b).zip_map(&g, |a, gi| 2.0 * a + lambda_beta * gi)
}

/// Preconditioned CG image update for a general operator, warm-started at `x0`.
///
/// The preconditioner inverts `2·diag + λβκ Σ|d_q|²` in k-space, with `diag`
/// the operator's own Fourier diagonal when it has one and 1 otherwise.
#[allow(clippy::too_many_arguments)]
pub fn f_update_cg(
    op: &dyn LinearOperator,
    b: &[Complex64],
    h: &[ComplexImage],
    lambda: f64,
    beta: f64,
    geometry: &PatchGeometry,
    x0: ComplexImage,
    cg_iters: usize,
    cg_tol: f64,
) -> Result<CgOutcome> {
    let (w, hgt) = op.dims();
    if x0.dims() != (w, hgt) {
        return Err(Error::DimensionMismatch {
            expected: (w, hgt),
            found: x0.dims(),
        });
    }
    let lb = lambda * beta;
    let rhs = normal_rhs(op, b, h, lb, &geometry.neighborhood);
    let precond = FourierPreconditioner::new(op, geometry, lb);
    conjugate_gradient(
        |f| normal_operator_apply(op, f, lb, geometry),
        |r| precond.apply(r),
        &rhs,
        x0,
        cg_iters,
        cg_tol,
        |_, _| {},
    )
}

pub(crate) struct FourierPreconditioner {
    fft: Fft2d,
    inv: RealImage,
}

impl FourierPreconditioner {
    pub(crate) fn new(op: &dyn LinearOperator, geometry: &PatchGeometry, lambda_beta: f64) -> Self {
        let (w, h) = op.dims();
        let diag = op
            .fourier_diagonal()
            .unwrap_or_else(|| RealImage::filled(w, h, 1.0));
        let kappa = geometry.patch_len() as f64;
        let d2 = diff_power_sum(&geometry.neighborhood, w, h);
        let inv = diag.zip_map(&d2, |a, d| {
            let m = 2.0 * a + lambda_beta * kappa * d;
            if m > 1e-12 {
                1.0 / m
            } else {
                1.0
            }
        });
        FourierPreconditioner {
            fft: Fft2d::new(w, h),
            inv,
        }
    }

    pub(crate) fn apply(&self, r: &ComplexImage) -> ComplexImage {
        let mut spec = self.fft.forward(r);
        spec.as_mut_slice()
            .iter_mut()
            .zip(self.inv.as_slice())
            .for_each(|(z, m)| *z *= m);
        self.fft.inverse_in_place(&mut spec);
        spec
    }
}

/// Relative residual `‖M f − rhs‖ / ‖rhs‖` of the update's normal equations,
/// evaluated with spatial difference operators.
pub fn euler_lagrange_residual(
    op: &dyn LinearOperator,
    b: &[Complex64],
    f: &ComplexImage,
    h: &[ComplexImage],
    lambda: f64,
    beta: f64,
    geometry: &PatchGeometry,
) -> f64 {
    let lb = lambda * beta;
    let lhs = normal_operator_apply(op, f, lb, geometry);
    let rhs = normal_rhs(op, b, h, lb, &geometry.neighborhood);
    let num: f64 = lhs
        .as_slice()
        .iter()
        .zip(rhs.as_slice())
        .map(|(a, c)| (a - c).norm_sqr())
        .sum();
    (num / rhs.norm_sqr().max(f64::MIN_POSITIVE)).sqrt()
}
