use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PatchGeometry;
use crate::penalty::{PenaltyKind, PenaltySpec};

/// How the quadratic image update is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FUpdateMethod {
    /// Exact solve by one FFT/IFFT pair; needs a Fourier-diagonal operator.
    AnalyticFourier,
    /// A few preconditioned CG steps warm-started at the previous iterate.
    PreconditionedCg,
}

impl fmt::Display for FUpdateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FUpdateMethod::AnalyticFourier => "analytic_fourier",
            FUpdateMethod::PreconditionedCg => "preconditioned_cg",
        })
    }
}

impl FromStr for FUpdateMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "analytic_fourier" | "fourier" | "analytic" => Ok(FUpdateMethod::AnalyticFourier),
            "preconditioned_cg" | "cg" | "pcg" => Ok(FUpdateMethod::PreconditionedCg),
            _ => Err(Error::BadParams(format!("unknown f-update method `{s}`"))),
        }
    }
}

/// Parameters of the non-local shrinkage solver.
///
/// The initial saturation threshold `T` and width `σ` are those of `penalty`;
/// after every outer iteration `β ← β·beta_incfactor`, `T ← max(T·t_decfactor,
/// T_init·t_min_fraction)` and `σ ← σ·sigma_decfactor`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub beta_init: f64,
    pub beta_incfactor: f64,
    pub t_decfactor: f64,
    pub t_min_fraction: f64,
    pub sigma_decfactor: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub geometry: PatchGeometry,
    pub penalty: PenaltySpec,
    pub f_update: FUpdateMethod,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub dc_epsilon: f64,
    /// Evaluate both costs after every update. Costs are NaN in the trace
    /// when disabled, and the divergence guard is skipped.
    pub track_cost: bool,
}

impl SolverConfig {
    pub fn new(lambda: f64, penalty: PenaltySpec) -> Self {
        SolverConfig {
            lambda,
            beta_init: 0.01,
            beta_incfactor: 2.0,
            t_decfactor: 0.95,
            t_min_fraction: 0.05,
            sigma_decfactor: 1.0,
            inner_iters: 20,
            outer_iters: 35,
            geometry: PatchGeometry::default(),
            penalty,
            f_update: FUpdateMethod::AnalyticFourier,
            cg_iters: 5,
            cg_tol: 1e-8,
            dc_epsilon: 1e-12,
            track_cost: true,
        }
    }

    /// Anisotropic local TV: unthresholded `ℓ1` between single pixels and their
    /// right/lower neighbours.
    pub fn local_tv(lambda: f64) -> Self {
        SolverConfig {
            geometry: PatchGeometry::local_tv(),
            ..SolverConfig::new(lambda, PenaltySpec::l1())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::BadParams(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::BadParams(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        positive("beta_init", self.beta_init)?;
        if !(self.beta_incfactor >= 1.0) {
            return Err(Error::BadParams(format!(
                "beta_incfactor must be >= 1, got {}",
                self.beta_incfactor
            )));
        }
        if !(self.t_decfactor > 0.0 && self.t_decfactor <= 1.0) {
            return Err(Error::BadParams(format!(
                "t_decfactor must lie in (0, 1], got {}",
                self.t_decfactor
            )));
        }
        if !(self.t_min_fraction > 0.0 && self.t_min_fraction <= 1.0) {
            return Err(Error::BadParams(format!(
                "t_min_fraction must lie in (0, 1], got {}",
                self.t_min_fraction
            )));
        }
        positive("sigma_decfactor", self.sigma_decfactor)?;
        if self.inner_iters == 0 || self.outer_iters == 0 {
            return Err(Error::BadParams("iteration counts must be positive".into()));
        }
        let final_beta = self.beta_init * self.beta_incfactor.powi(self.outer_iters as i32);
        if !final_beta.is_finite() {
            return Err(Error::BadParams("beta schedule overflows".into()));
        }
        if self.cg_iters == 0 {
            return Err(Error::BadParams("cg_iters must be positive".into()));
        }
        positive("cg_tol", self.cg_tol)?;
        if !(self.dc_epsilon >= 0.0) {
            return Err(Error::BadParams("dc_epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Partial solver settings as read from a config file or command-line flags.
/// Unset fields leave the base configuration untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub lambda: Option<f64>,
    pub penalty: Option<PenaltyKind>,
    pub p: Option<f64>,
    #[serde(rename = "T", alias = "t_init", alias = "threshold")]
    pub threshold: Option<f64>,
    pub sigma: Option<f64>,
    pub beta_init: Option<f64>,
    pub beta_incfactor: Option<f64>,
    pub t_decfactor: Option<f64>,
    pub t_min_fraction: Option<f64>,
    pub sigma_decfactor: Option<f64>,
    pub inner_iters: Option<usize>,
    pub outer_iters: Option<usize>,
    pub patch_radius: Option<usize>,
    pub search_radius: Option<usize>,
    pub f_update: Option<FUpdateMethod>,
    pub cg_iters: Option<usize>,
    pub cg_tol: Option<f64>,
    pub dc_epsilon: Option<f64>,
    pub track_cost: Option<bool>,
}

impl SolverSettings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Field-wise override: values set in `other` win.
    pub fn merged(&self, other: &SolverSettings) -> SolverSettings {
        macro_rules! pick {
            ($($f:ident),*) => {
                SolverSettings { $($f: other.$f.clone().or_else(|| self.$f.clone()),)* }
            };
        }
        pick!(
            lambda, penalty, p, threshold, sigma, beta_init, beta_incfactor, t_decfactor,
            t_min_fraction, sigma_decfactor, inner_iters, outer_iters, patch_radius,
            search_radius, f_update, cg_iters, cg_tol, dc_epsilon, track_cost
        )
    }

    /// The penalty described by these settings; `p`, `T` and `σ` fall back to
    /// the values of `base` when the kind is unchanged.
    pub fn penalty_spec(&self, base: Option<&PenaltySpec>) -> Result<Option<PenaltySpec>> {
        let kind = match (self.penalty, base) {
            (Some(k), _) => k,
            (None, Some(b)) => b.kind(),
            (None, None) => return Ok(None),
        };
        let same = base.filter(|b| b.kind() == kind);
        let p = self.p.or(same.map(|b| b.p()));
        let t = self.threshold.or(same.and_then(|b| b.threshold()));
        let s = self.sigma.or(same.and_then(|b| b.sigma()));
        PenaltySpec::new(kind, p, t, s).map(Some)
    }

    /// Applies the settings on top of `base`.
    pub fn apply(&self, base: &SolverConfig) -> Result<SolverConfig> {
        let mut cfg = base.clone();
        if let Some(spec) = self.penalty_spec(Some(&base.penalty))? {
            cfg.penalty = spec;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            lambda, beta_init, beta_incfactor, t_decfactor, t_min_fraction, sigma_decfactor,
            inner_iters, outer_iters, f_update, cg_iters, cg_tol, dc_epsilon, track_cost
        );
        if self.patch_radius.is_some() || self.search_radius.is_some() {
            let current_patch = square_radius(&cfg.geometry.patch).unwrap_or(1);
            let current_search = square_radius(&cfg.geometry.neighborhood).unwrap_or(3);
            cfg.geometry = PatchGeometry::square(
                self.patch_radius.unwrap_or(current_patch),
                self.search_radius.unwrap_or(current_search),
            )?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a full configuration; `lambda` and `penalty` must be set.
    pub fn build(&self) -> Result<SolverConfig> {
        let lambda = self
            .lambda
            .ok_or_else(|| Error::BadParams("lambda is required".into()))?;
        let penalty = self
            .penalty_spec(None)?
            .ok_or_else(|| Error::BadParams("penalty is required".into()))?;
        self.apply(&SolverConfig::new(lambda, penalty))
    }
}

fn square_radius(set: &crate::grid::OffsetSet) -> Option<usize> {
    let ((x0, x1), (y0, y1)) = set.rectangle_bounds().or_else(|| {
        // neighborhoods are squares minus the origin
        let r = set.iter().map(|o| o.dx.abs().max(o.dy.abs())).max()?;
        Some(((-r, r), (-r, r)))
    })?;
    (x0 == -x1 && y0 == -y1 && x1 == y1).then_some(x1 as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_schedule() {
        let c = SolverConfig::new(1e-3, PenaltySpec::l1());
        assert_eq!(c.beta_init, 0.01);
        assert_eq!(c.beta_incfactor, 2.0);
        assert_eq!(c.inner_iters, 20);
        assert_eq!(c.outer_iters, 35);
        assert_eq!(c.geometry.patch_len(), 9);
        assert_eq!(c.geometry.neighborhood.len(), 48);
        assert_eq!(c.cg_iters, 5);
        c.validate().unwrap();
    }

    #[test]
    fn settings_from_toml_and_override() {
        let file = SolverSettings::from_toml_str(
            r#"
            lambda = 0.5
            penalty = "lp_thresholded"
            p = 0.5
            T = 40.0
            outer_iters = 10
            search_radius = 2
            f_update = "preconditioned_cg"
            "#,
        )
        .unwrap();
        let flags = SolverSettings {
            lambda: Some(2.0),
            outer_iters: Some(12),
            ..Default::default()
        };
        let cfg = file.merged(&flags).build().unwrap();
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.outer_iters, 12);
        assert_eq!(cfg.penalty.threshold(), Some(40.0));
        assert_eq!(cfg.geometry.neighborhood.len(), 24);
        assert_eq!(cfg.geometry.patch_len(), 9);
        assert_eq!(cfg.f_update, FUpdateMethod::PreconditionedCg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SolverSettings::from_toml_str("lamda = 1.0").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = SolverConfig::new(1.0, PenaltySpec::l1());
        c.t_decfactor = 1.5;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::new(1.0, PenaltySpec::l1());
        c.beta_incfactor = 1e10;
        c.outer_iters = 100;
        assert!(c.validate().is_err());
    }
}
