//! Iteratively reweighted non-local reconstruction.
//!
//! Each step majorizes the patch penalty by a weighted sum of squared patch
//! distances with weights `w_q(x) = φ'(d)/(2d)` taken at the current image,
//! then minimizes `‖Af − b‖² + λ Σ_x Σ_q w_q(x) ‖P_x f − P_{x+q} f‖²` by CG.
//! Because every pixel difference sits in `|B|` patches, the quadratic term
//! is `Σ_q ⟨|D_q f|², W_q⟩` with `W_q = box_sum(w_q, B)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cg::{conjugate_gradient, CgOutcome};
use crate::error::{Error, Result};
use crate::grid::{box_sum_filter, shift_diff, shift_diff_adjoint, ComplexImage, Offset, PatchGeometry, RealImage};
use crate::metrics::snr_db;
use crate::model::{LinearOperator, MeasurementModel};
use crate::nls::cost::{patch_distances, regularizer_sums};
use crate::nls::trace::{SolverTrace, TraceRecord};
use crate::nls::update::sum_in_order;
use crate::nls::{check_truth, Continuation, SolverConfig, Stopwatch, DIVERGENCE_FACTOR};
use crate::penalty::{PenaltySpec, Shrinkage};

#[derive(Debug, Clone, PartialEq)]
pub struct IrwConfig {
    pub lambda: f64,
    pub outer_iters: usize,
    /// Reweighting steps per continuation level.
    pub inner_iters: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub geometry: PatchGeometry,
    pub penalty: PenaltySpec,
    /// Smallest patch distance at which weights are evaluated; weights of
    /// closer pairs are held at the value for this distance.
    pub weight_floor: f64,
    pub t_decfactor: f64,
    pub t_min_fraction: f64,
    pub sigma_decfactor: f64,
    pub track_cost: bool,
}

impl IrwConfig {
    pub fn new(lambda: f64, penalty: PenaltySpec) -> Self {
        IrwConfig {
            lambda,
            outer_iters: 35,
            inner_iters: 1,
            cg_iters: 40,
            cg_tol: 1e-8,
            geometry: PatchGeometry::default(),
            penalty,
            weight_floor: 1e-3,
            t_decfactor: 0.95,
            t_min_fraction: 0.05,
            sigma_decfactor: 1.0,
            track_cost: true,
        }
    }

    /// Same weight, penalty, geometry and continuation schedule as an NLS run.
    pub fn from_solver(cfg: &SolverConfig) -> Self {
        IrwConfig {
            geometry: cfg.geometry.clone(),
            outer_iters: cfg.outer_iters,
            t_decfactor: cfg.t_decfactor,
            t_min_fraction: cfg.t_min_fraction,
            sigma_decfactor: cfg.sigma_decfactor,
            track_cost: cfg.track_cost,
            ..IrwConfig::new(cfg.lambda, cfg.penalty)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::BadParams(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 || self.cg_iters == 0 {
            return Err(Error::BadParams("iteration counts must be positive".into()));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::BadParams("cg_tol must be positive".into()));
        }
        if !(self.weight_floor >= 0.0) || !self.weight_floor.is_finite() {
            return Err(Error::BadParams("weight_floor must be non-negative".into()));
        }
        if !(self.t_decfactor > 0.0 && self.t_decfactor <= 1.0) {
            return Err(Error::BadParams("t_decfactor must lie in (0, 1]".into()));
        }
        if !(self.t_min_fraction > 0.0 && self.t_min_fraction <= 1.0) {
            return Err(Error::BadParams("t_min_fraction must lie in (0, 1]".into()));
        }
        if !(self.sigma_decfactor > 0.0) {
            return Err(Error::BadParams("sigma_decfactor must be positive".into()));
        }
        Ok(())
    }
}

/// Majorization weights `w_q(x)` at `f_n`, one image per shift.
pub fn irw_weights(
    f_n: &ComplexImage,
    geometry: &PatchGeometry,
    penalty: &PenaltySpec,
    weight_floor: f64,
) -> Vec<RealImage> {
    weights_from_distances(&patch_distances(f_n, geometry), penalty, weight_floor)
}

fn weights_from_distances(dist_sq: &[RealImage], penalty: &PenaltySpec, floor: f64) -> Vec<RealImage> {
    dist_sq
        .par_iter()
        .map(|d2| d2.map(|v| penalty.reweight(v.sqrt(), floor)))
        .collect()
}

/// Weights by explicit patch extraction.
pub fn irw_weights_bruteforce(
    f_n: &ComplexImage,
    geometry: &PatchGeometry,
    penalty: &PenaltySpec,
    weight_floor: f64,
) -> Vec<RealImage> {
    let (w, h) = f_n.dims();
    geometry
        .neighborhood
        .iter()
        .map(|&q| {
            RealImage::from_fn(w, h, |x, y| {
                let d2: f64 = geometry
                    .patch
                    .iter()
                    .map(|&p| {
                        (f_n.get_wrapped(x, y, p) - f_n.get_wrapped(x, y, Offset::new(p.dx + q.dx, p.dy + q.dy)))
                            .norm_sqr()
                    })
                    .sum();
                penalty.reweight(d2.sqrt(), weight_floor)
            })
        })
        .collect()
}

/// `Σ_x Σ_q w_q(x) ‖P_x f − P_{x+q} f‖²`.
pub fn weighted_patch_energy(f: &ComplexImage, weights: &[RealImage], geometry: &PatchGeometry) -> f64 {
    let pixel = pixel_weights(weights, geometry);
    geometry
        .neighborhood
        .iter()
        .zip(&pixel)
        .map(|(&q, wq)| {
            shift_diff(f, q)
                .as_slice()
                .iter()
                .zip(wq.as_slice())
                .map(|(d, w)| w * d.norm_sqr())
                .sum::<f64>()
        })
        .sum()
}

fn pixel_weights(weights: &[RealImage], geometry: &PatchGeometry) -> Vec<RealImage> {
    weights
        .par_iter()
        .map(|w| box_sum_filter(w, &geometry.patch))
        .collect()
}

struct WeightedSystem<'a> {
    op: &'a dyn LinearOperator,
    geometry: &'a PatchGeometry,
    pixel: Vec<RealImage>,
    lambda: f64,
}

impl WeightedSystem<'_> {
    fn apply(&self, f: &ComplexImage) -> ComplexImage {
        let parts: Vec<ComplexImage> = self
            .geometry
            .neighborhood
            .as_slice()
            .par_iter()
            .zip(self.pixel.par_iter())
            .map(|(&q, wq)| shift_diff_adjoint(&shift_diff(f, q).zip_map(wq, |d, w| d * w), q))
            .collect();
        let reg = sum_in_order(parts, f.dims());
        self.op.normal(f).zip_map(&reg, |a, r| a + self.lambda * r)
    }
}

/// One majorize-minimize step: CG on `(AᴴA + λ Σ_q D_qᴴ W_q D_q) f = Aᴴb`,
/// warm-started at `f_n`.
#[allow(clippy::too_many_arguments)]
pub fn irw_step(
    f_n: &ComplexImage,
    op: &dyn LinearOperator,
    b: &[Complex64],
    weights: &[RealImage],
    lambda: f64,
    geometry: &PatchGeometry,
    cg_iters: usize,
    cg_tol: f64,
) -> Result<CgOutcome> {
    irw_step_observed(f_n, op, b, weights, lambda, geometry, cg_iters, cg_tol, |_, _| {})
}

/// [`irw_step`] with a callback on every CG iterate.
#[allow(clippy::too_many_arguments)]
pub fn irw_step_observed(
    f_n: &ComplexImage,
    op: &dyn LinearOperator,
    b: &[Complex64],
    weights: &[RealImage],
    lambda: f64,
    geometry: &PatchGeometry,
    cg_iters: usize,
    cg_tol: f64,
    on_iterate: impl FnMut(usize, &ComplexImage),
) -> Result<CgOutcome> {
    if weights.len() != geometry.neighborhood.len() {
        return Err(Error::BadParams(format!(
            "{} weight images for {} shifts",
            weights.len(),
            geometry.neighborhood.len()
        )));
    }
    if weights.iter().any(|w| w.as_slice().iter().any(|v| !v.is_finite())) {
        return Err(Error::BadParams(
            "weights are not finite; set a positive weight floor".into(),
        ));
    }
    let sys = WeightedSystem {
        op,
        geometry,
        pixel: pixel_weights(weights, geometry),
        lambda,
    };
    let rhs = op.adjoint(b);
    conjugate_gradient(
        |f| sys.apply(f),
        |r| r.clone(),
        &rhs,
        f_n.clone(),
        cg_iters,
        cg_tol,
        on_iterate,
    )
}

pub fn run_irw(
    model: &MeasurementModel,
    config: &IrwConfig,
    ground_truth: Option<&ComplexImage>,
) -> Result<(ComplexImage, SolverTrace)> {
    let op = model.operator();
    let b = model.measurements();
    run_irw_with_operator(&op, &b, config, ground_truth)
}

/// IRW for a general operator, starting at `Aᴴb`. The trace has the NLS
/// schema; with no surrogate, `cost_hat` repeats the true cost.
pub fn run_irw_with_operator(
    op: &dyn LinearOperator,
    b: &[Complex64],
    config: &IrwConfig,
    ground_truth: Option<&ComplexImage>,
) -> Result<(ComplexImage, SolverTrace)> {
    config.validate()?;
    check_truth(ground_truth, op.dims())?;
    let geometry = &config.geometry;
    let data = |f: &ComplexImage| -> f64 {
        op.apply(f)
            .iter()
            .zip(b)
            .map(|(a, y)| (a - y).norm_sqr())
            .sum()
    };
    let mut cont = Continuation::new(
        config.penalty,
        config.t_decfactor,
        config.t_min_fraction,
        config.sigma_decfactor,
    );
    let mut clock = Stopwatch::default();
    let mut trace = SolverTrace::default();
    let mut f = clock.time(|| op.adjoint(b));
    let mut dist = clock.time(|| patch_distances(&f, geometry));
    let mut previous_block_cost: Option<f64> = None;

    for outer in 0..config.outer_iters {
        let spec = cont.spec();
        // β only enters φ̂, which is not used here
        let shrink = Shrinkage::new(spec, 1.0)?;
        let record = |f: &ComplexImage, dist: &[RealImage], inner: usize, seconds: f64| -> Result<TraceRecord> {
            let cost = if config.track_cost {
                data(f) + config.lambda * regularizer_sums(dist, &shrink).0
            } else {
                f64::NAN
            };
            Ok(TraceRecord {
                outer,
                inner,
                beta: f64::NAN,
                t: cont.threshold(),
                cost_hat: cost,
                cost_raw: cost,
                seconds,
                snr_db: ground_truth.map(|t| snr_db(f, t)).transpose()?,
            })
        };
        trace.push(record(&f, &dist, 0, clock.seconds())?);
        for inner in 1..=config.inner_iters {
            f = clock.time(|| -> Result<ComplexImage> {
                let w = weights_from_distances(&dist, &spec, config.weight_floor);
                Ok(irw_step(&f, op, b, &w, config.lambda, geometry, config.cg_iters, config.cg_tol)?.x)
            })?;
            dist = clock.time(|| patch_distances(&f, geometry));
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
        cont.advance();
    }
    Ok((f, trace))
}
