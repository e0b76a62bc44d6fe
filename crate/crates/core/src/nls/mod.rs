//! Non-local shrinkage reconstruction.
//!
//! Each inner iteration shrinks every patch-pair difference by `ν` and then
//! solves the resulting quadratic problem for the image; `β` grows and the
//! saturation threshold shrinks between outer iterations.

pub mod config;
pub mod cost;
pub mod trace;
pub mod update;
pub mod weights;

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::fourier::Fft2d;
use crate::grid::{box_sum_filter, shift_diff, ComplexImage, PatchGeometry, RealImage};
use crate::metrics::snr_db;
use crate::model::{LinearOperator, MeasurementModel};
use crate::penalty::{PenaltySpec, Shrinkage};

pub use config::{FUpdateMethod, SolverConfig, SolverSettings};
pub use cost::{
    cost_terms, eval_cost, patch_distances, patch_form_objective, pixel_form_objective,
    regularizer_sums, CostTerms, PatchField,
};
pub use trace::{SolverTrace, TraceRecord};
pub use update::{
    adjoint_difference_sum, euler_lagrange_residual, f_update_cg, f_update_fourier, FourierUpdate,
};
pub use weights::{
    h_images, patch_distance_sq, patch_weights_bruteforce, patch_weights_fast,
    shrunk_patch_difference, PatchWeights,
};

/// Raw cost growth between consecutive outer blocks that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Penalty parameters along the continuation path.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Continuation {
    spec: PenaltySpec,
    t_floor: Option<f64>,
    t_decfactor: f64,
    sigma_decfactor: f64,
}

impl Continuation {
    pub(crate) fn new(spec: PenaltySpec, t_decfactor: f64, t_min_fraction: f64, sigma_decfactor: f64) -> Self {
        Continuation {
            spec,
            t_floor: spec.threshold().map(|t| t * t_min_fraction),
            t_decfactor,
            sigma_decfactor,
        }
    }

    pub(crate) fn spec(&self) -> PenaltySpec {
        self.spec
    }

    pub(crate) fn threshold(&self) -> f64 {
        self.spec.threshold().unwrap_or(f64::INFINITY)
    }

    pub(crate) fn advance(&mut self) {
        if let (Some(t), Some(floor)) = (self.spec.threshold(), self.t_floor) {
            self.spec = self.spec.with_threshold((t * self.t_decfactor).max(floor));
        }
        if let Some(s) = self.spec.sigma() {
            self.spec = self.spec.with_sigma(s * self.sigma_decfactor);
        }
    }
}

/// Cumulative stopwatch that only runs while solver work is in progress.
#[derive(Debug, Default)]
pub(crate) struct Stopwatch {
    elapsed: f64,
}

impl Stopwatch {
    pub(crate) fn time<T>(&mut self, work: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = work();
        self.elapsed += start.elapsed().as_secs_f64();
        out
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.elapsed
    }
}

enum Updater<'a> {
    Fourier { update: FourierUpdate, b0: &'a ComplexImage },
    Cg { op: &'a dyn LinearOperator, b: &'a [Complex64] },
}

/// Reconstructs from a Fourier sampling model, starting at the zero-filled image.
pub fn run_nls(
    model: &MeasurementModel,
    config: &SolverConfig,
    ground_truth: Option<&ComplexImage>,
) -> Result<(ComplexImage, SolverTrace)> {
    config.validate()?;
    check_truth(ground_truth, model.dims())?;
    let (w, h) = model.dims();
    let fft = Fft2d::new(w, h);
    let op = model.operator();
    let b = model.measurements();
    let updater = match config.f_update {
        FUpdateMethod::AnalyticFourier => Updater::Fourier {
            update: FourierUpdate::new(model, &config.geometry, config.dc_epsilon),
            b0: model.b0(),
        },
        FUpdateMethod::PreconditionedCg => Updater::Cg { op: &op, b: &b },
    };
    let data = |f: &ComplexImage| model.data_misfit_with(&fft, f);
    solve(model.zero_filled(), updater, &data, config, ground_truth)
}

/// Reconstructs for a general operator with preconditioned CG image updates,
/// starting at `Aᴴb`.
pub fn run_nls_with_operator(
    op: &dyn LinearOperator,
    b: &[Complex64],
    config: &SolverConfig,
    ground_truth: Option<&ComplexImage>,
) -> Result<(ComplexImage, SolverTrace)> {
    config.validate()?;
    check_truth(ground_truth, op.dims())?;
    let data = |f: &ComplexImage| {
        op.apply(f)
            .iter()
            .zip(b)
            .map(|(a, y)| (a - y).norm_sqr())
            .sum::<f64>()
    };
    solve(op.adjoint(b), Updater::Cg { op, b }, &data, config, ground_truth)
}

pub(crate) fn check_truth(truth: Option<&ComplexImage>, dims: (usize, usize)) -> Result<()> {
    match truth {
        Some(t) if t.dims() != dims => Err(Error::DimensionMismatch {
            expected: dims,
            found: t.dims(),
        }),
        _ => Ok(()),
    }
}

fn solve(
    mut f: ComplexImage,
    updater: Updater<'_>,
    data: &(dyn Fn(&ComplexImage) -> f64 + Sync),
    config: &SolverConfig,
    truth: Option<&ComplexImage>,
) -> Result<(ComplexImage, SolverTrace)> {
    let geometry = &config.geometry;
    let patch = &geometry.patch;
    let reflected = patch.reflected();
    let lambda = config.lambda;
    let mut cont = Continuation::new(
        config.penalty,
        config.t_decfactor,
        config.t_min_fraction,
        config.sigma_decfactor,
    );
    let mut beta = config.beta_init;
    let mut clock = Stopwatch::default();
    let mut trace = SolverTrace::default();
    let mut previous_block_cost: Option<f64> = None;

    let (mut diffs, mut dist) = clock.time(|| differences(&f, geometry, &reflected));

    for outer in 0..config.outer_iters {
        let shrink = Shrinkage::new(cont.spec(), beta)?;
        let record = |f: &ComplexImage, dist: &[RealImage], inner: usize, seconds: f64| -> Result<TraceRecord> {
            let (cost_hat, cost_raw) = if config.track_cost {
                let d = data(f);
                let (raw, hat) = regularizer_sums(dist, &shrink);
                (d + lambda * hat, d + lambda * raw)
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok(TraceRecord {
                outer,
                inner,
                beta,
                t: cont.threshold(),
                cost_hat,
                cost_raw,
                seconds,
                snr_db: truth.map(|t| snr_db(f, t)).transpose()?,
            })
        };
        trace.push(record(&f, &dist, 0, clock.seconds())?);

        for inner in 1..=config.inner_iters {
            f = clock.time(|| -> Result<ComplexImage> {
                let v: Vec<RealImage> = dist
                    .par_iter()
                    .map(|d2| box_sum_of_nu(d2, patch, &shrink))
                    .collect();
                let hq: Vec<ComplexImage> = diffs
                    .par_iter()
                    .zip(&v)
                    .map(|(d, vq)| d.zip_map(vq, |z, w| z * w))
                    .collect();
                match &updater {
                    Updater::Fourier { update, b0 } => {
                        let g = adjoint_difference_sum(&hq, &geometry.neighborhood);
                        Ok(update.solve(b0, &g, lambda * beta))
                    }
                    Updater::Cg { op, b } => Ok(f_update_cg(
                        *op,
                        b,
                        &hq,
                        lambda,
                        beta,
                        geometry,
                        f.clone(),
                        config.cg_iters,
                        config.cg_tol,
                    )?
                    .x),
                }
            })?;
            if !f.all_finite() {
                return Err(Error::NonFiniteIterate { iteration: inner });
            }
            (diffs, dist) = clock.time(|| differences(&f, geometry, &reflected));
            trace.push(record(&f, &dist, inner, clock.seconds())?);
        }

        if config.track_cost {
            let current = trace.last().map_or(f64::NAN, |r| r.cost_raw);
            if let Some(previous) = previous_block_cost {
                if previous > 0.0 && current > DIVERGENCE_FACTOR * previous {
                    return Err(Error::Diverged {
                        outer,
                        previous,
                        current,
                    });
                }
            }
            previous_block_cost = Some(current);
        }

        beta *= config.beta_incfactor;
        cont.advance();
    }
    Ok((f, trace))
}

// D_q f for every shift, with the squared patch distances built from them.
fn differences(
    f: &ComplexImage,
    geometry: &PatchGeometry,
    reflected: &crate::grid::OffsetSet,
) -> (Vec<ComplexImage>, Vec<RealImage>) {
    geometry
        .neighborhood
        .as_slice()
        .par_iter()
        .map(|&q| {
            let d = shift_diff(f, q);
            let d2 = box_sum_filter(&d.map(|z| z.norm_sqr()), reflected);
            (d, d2)
        })
        .unzip()
}

fn box_sum_of_nu(dist_sq: &RealImage, patch: &crate::grid::OffsetSet, shrink: &Shrinkage) -> RealImage {
    let u = dist_sq.map(|d2| shrink.nu(d2.sqrt()));
    crate::grid::box_sum_filter(&u, patch)
}
