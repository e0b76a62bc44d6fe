//! Robust inter-patch distance metrics and their closed-form shrinkage rules.
//!
//! A metric `φ` acts on the Euclidean norm `t` of a patch difference. The
//! half-quadratic split replaces `φ` by its Huber-like envelope `φ̂` (quadratic
//! below the dead-zone radius `L(β)`, equal to `φ` above it) whose proximal map
//! is a radial shrinkage `s = t·ν(t)` with
//!
//! ```text
//! ν(t) = (1 - φ'(t) / (β t))₊
//! ```
//!
//! `ν(0)` is defined as 0 for every metric.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    /// `t^p/p` saturating at `T^p/p`.
    LpThresholded,
    /// `t^p/p`.
    Lp,
    /// `t` saturating at `T`.
    L1Thresholded,
    /// `t`.
    L1,
    /// `1 - exp(-t²/2σ²)`.
    H1,
    /// `1 - exp(-t/σ)`.
    Peyre,
    /// `erf(t/σ)`.
    Nltv,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 7] = [
        PenaltyKind::LpThresholded,
        PenaltyKind::Lp,
        PenaltyKind::L1Thresholded,
        PenaltyKind::L1,
        PenaltyKind::H1,
        PenaltyKind::Peyre,
        PenaltyKind::Nltv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::LpThresholded => "lp_thresholded",
            PenaltyKind::Lp => "lp",
            PenaltyKind::L1Thresholded => "l1_thresholded",
            PenaltyKind::L1 => "l1",
            PenaltyKind::H1 => "h1",
            PenaltyKind::Peyre => "peyre",
            PenaltyKind::Nltv => "nltv",
        }
    }

    pub fn is_thresholded(self) -> bool {
        matches!(self, PenaltyKind::LpThresholded | PenaltyKind::L1Thresholded)
    }

    pub fn uses_exponent(self) -> bool {
        matches!(self, PenaltyKind::LpThresholded | PenaltyKind::Lp)
    }

    pub fn uses_sigma(self) -> bool {
        matches!(self, PenaltyKind::H1 | PenaltyKind::Peyre | PenaltyKind::Nltv)
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match norm.as_str() {
            "lp_thresholded" | "lp_t" | "lpt" => PenaltyKind::LpThresholded,
            "lp" => PenaltyKind::Lp,
            "l1_thresholded" | "l1_t" | "l1t" => PenaltyKind::L1Thresholded,
            "l1" => PenaltyKind::L1,
            "h1" => PenaltyKind::H1,
            "peyre" => PenaltyKind::Peyre,
            "nltv" => PenaltyKind::Nltv,
            _ => return Err(Error::BadParams(format!("unknown penalty kind `{s}`"))),
        };
        Ok(kind)
    }
}

/// A fully parameterized distance metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    kind: PenaltyKind,
    p: f64,
    threshold: Option<f64>,
    sigma: Option<f64>,
}

impl PenaltySpec {
    /// Validates that every parameter the kind needs is present and in range.
    /// Parameters a kind does not use are ignored; the L1 kinds fix `p = 1`.
    pub fn new(
        kind: PenaltyKind,
        p: Option<f64>,
        threshold: Option<f64>,
        sigma: Option<f64>,
    ) -> Result<Self> {
        let p = match kind {
            PenaltyKind::LpThresholded | PenaltyKind::Lp => {
                let p = p.ok_or_else(|| Error::BadParams(format!("{kind} requires p")))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::BadParams(format!("p must lie in (0, 1], got {p}")));
                }
                p
            }
            _ => 1.0,
        };
        let threshold = if kind.is_thresholded() {
            let t = threshold.ok_or_else(|| Error::BadParams(format!("{kind} requires T")))?;
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::BadParams(format!("T must be positive, got {t}")));
            }
            Some(t)
        } else {
            None
        };
        let sigma = if kind.uses_sigma() {
            let s = sigma.ok_or_else(|| Error::BadParams(format!("{kind} requires sigma")))?;
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::BadParams(format!("sigma must be positive, got {s}")));
            }
            Some(s)
        } else {
            None
        };
        Ok(PenaltySpec {
            kind,
            p,
            threshold,
            sigma,
        })
    }

    pub fn lp_thresholded(p: f64, threshold: f64) -> Result<Self> {
        Self::new(PenaltyKind::LpThresholded, Some(p), Some(threshold), None)
    }

    pub fn lp(p: f64) -> Result<Self> {
        Self::new(PenaltyKind::Lp, Some(p), None, None)
    }

    pub fn l1_thresholded(threshold: f64) -> Result<Self> {
        Self::new(PenaltyKind::L1Thresholded, None, Some(threshold), None)
    }

    pub fn l1() -> Self {
        Self::new(PenaltyKind::L1, None, None, None).expect("l1 has no parameters")
    }

    pub fn h1(sigma: f64) -> Result<Self> {
        Self::new(PenaltyKind::H1, None, None, Some(sigma))
    }

    pub fn peyre(sigma: f64) -> Result<Self> {
        Self::new(PenaltyKind::Peyre, None, None, Some(sigma))
    }

    pub fn nltv(sigma: f64) -> Result<Self> {
        Self::new(PenaltyKind::Nltv, None, None, Some(sigma))
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    /// Exponent of the `ℓp` family; 1 for the L1 kinds and unused otherwise.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    /// Same metric with a new saturation threshold; no-op for unthresholded kinds.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        if self.threshold.is_some() {
            self.threshold = Some(threshold);
        }
        self
    }

    /// Same metric with a new width; no-op for kinds without `σ`.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        if self.sigma.is_some() {
            self.sigma = Some(sigma);
        }
        self
    }

    fn t_sat(&self) -> f64 {
        self.threshold.unwrap_or(f64::INFINITY)
    }

    fn sig(&self) -> f64 {
        self.sigma.unwrap_or(1.0)
    }

    /// `φ(t)` without domain checks; `t` must be non-negative.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            PenaltyKind::LpThresholded | PenaltyKind::Lp | PenaltyKind::L1Thresholded | PenaltyKind::L1 => {
                let p = self.p;
                let tt = t.min(self.t_sat());
                if p == 1.0 {
                    tt
                } else {
                    tt.powf(p) / p
                }
            }
            PenaltyKind::H1 => {
                let s = self.sig();
                1.0 - (-t * t / (2.0 * s * s)).exp()
            }
            PenaltyKind::Peyre => 1.0 - (-t / self.sig()).exp(),
            PenaltyKind::Nltv => libm::erf(t / self.sig()),
        }
    }

    /// `φ'(t)` for `t > 0`; zero on the saturated branch of thresholded kinds.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            PenaltyKind::LpThresholded | PenaltyKind::Lp | PenaltyKind::L1Thresholded | PenaltyKind::L1 => {
                if t >= self.t_sat() {
                    0.0
                } else if self.p == 1.0 {
                    1.0
                } else {
                    t.powf(self.p - 1.0)
                }
            }
            PenaltyKind::H1 => {
                let s = self.sig();
                t / (s * s) * (-t * t / (2.0 * s * s)).exp()
            }
            PenaltyKind::Peyre => {
                let s = self.sig();
                (-t / s).exp() / s
            }
            PenaltyKind::Nltv => {
                let s = self.sig();
                2.0 / PI.sqrt() * (-t * t / (s * s)).exp() / s
            }
        }
    }

    /// Shrinkage factor `ν(t)` without domain checks.
    #[inline]
    pub fn shrink_factor(&self, t: f64, beta: f64) -> f64 {
        let lp_zone = if matches!(
            self.kind,
            PenaltyKind::LpThresholded | PenaltyKind::Lp | PenaltyKind::L1Thresholded | PenaltyKind::L1
        ) {
            lp_dead_zone(self.p, beta)
        } else {
            0.0
        };
        self.shrink_factor_with(t, beta, lp_zone)
    }

    // `lp_zone` is the untruncated ℓp dead zone for this β (unused otherwise).
    #[inline]
    fn shrink_factor_with(&self, t: f64, beta: f64, lp_zone: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let nu = match self.kind {
            PenaltyKind::LpThresholded | PenaltyKind::Lp | PenaltyKind::L1Thresholded | PenaltyKind::L1 => {
                if t >= self.t_sat() {
                    return 1.0;
                }
                if t < lp_zone {
                    return 0.0;
                }
                if self.p == 1.0 {
                    1.0 - 1.0 / (beta * t)
                } else if self.p == 0.5 {
                    1.0 - 1.0 / (t * t.sqrt() * beta)
                } else {
                    1.0 - t.powf(self.p - 2.0) / beta
                }
            }
            PenaltyKind::H1 => {
                let s = self.sig();
                let e = (-t * t / (2.0 * s * s)).exp();
                let bs2 = beta * s * s;
                if e > bs2 {
                    return 0.0;
                }
                1.0 - e / bs2
            }
            PenaltyKind::Peyre => {
                let s = self.sig();
                let e = (-t / s).exp();
                let rhs = beta * s * t;
                if e > rhs {
                    return 0.0;
                }
                1.0 - e / rhs
            }
            PenaltyKind::Nltv => {
                let s = self.sig();
                let e = 2.0 / PI.sqrt() * (-t * t / (s * s)).exp();
                let rhs = beta * s * t;
                if e > rhs {
                    return 0.0;
                }
                1.0 - e / rhs
            }
        };
        nu.clamp(0.0, 1.0)
    }

    /// `sup{t : ν(t) = 0}` for the given `β`.
    pub fn dead_zone(&self, beta: f64) -> f64 {
        match self.kind {
            PenaltyKind::LpThresholded | PenaltyKind::Lp | PenaltyKind::L1Thresholded | PenaltyKind::L1 => {
                lp_dead_zone(self.p, beta).min(self.t_sat())
            }
            PenaltyKind::H1 => {
                let s = self.sig();
                let bs2 = beta * s * s;
                if bs2 < 1.0 {
                    s * (2.0 * (1.0 / bs2).ln()).sqrt()
                } else {
                    0.0
                }
            }
            PenaltyKind::Peyre => {
                let s = self.sig();
                bisect_switch(|t| (-t / s).exp() - beta * s * t)
            }
            PenaltyKind::Nltv => {
                let s = self.sig();
                bisect_switch(|t| 2.0 / PI.sqrt() * (-t * t / (s * s)).exp() - beta * s * t)
            }
        }
    }

    /// IRW weight `φ'(d)/(2d)`, evaluated at `max(d, floor)`.
    ///
    /// At zero distance the H1 weight takes its finite limit `1/(2σ²)`; the
    /// other metrics diverge there and return `+∞` unless a floor is set.
    pub fn reweight(&self, d: f64, floor: f64) -> f64 {
        if self.kind.is_thresholded() && d >= self.t_sat() {
            return 0.0;
        }
        let dd = d.max(floor);
        if dd <= 0.0 {
            return match self.kind {
                PenaltyKind::H1 => 1.0 / (2.0 * self.sig() * self.sig()),
                _ => f64::INFINITY,
            };
        }
        self.derivative(dd) / (2.0 * dd)
    }
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if self.kind.uses_exponent() {
            write!(f, "(p={}", self.p)?;
        } else {
            write!(f, "(")?;
        }
        if let Some(t) = self.threshold {
            write!(f, "{}T={t}", if self.kind.uses_exponent() { ", " } else { "" })?;
        }
        if let Some(s) = self.sigma {
            write!(f, "sigma={s}")?;
        }
        write!(f, ")")
    }
}

#[inline]
fn lp_dead_zone(p: f64, beta: f64) -> f64 {
    beta.powf(1.0 / (p - 2.0))
}

// Root of a switching function that is positive inside the dead zone and
// negative beyond it, bracketed on [1e-12, 1e6].
fn bisect_switch(g: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (1e-12_f64, 1e6_f64);
    if g(lo) <= 0.0 {
        return 0.0;
    }
    if g(hi) > 0.0 {
        return hi;
    }
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Report the last point still inside the dead zone.
    lo
}

fn check_t(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("distance must be non-negative, got {t}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Metric value `φ(t)`.
pub fn phi(t: f64, spec: &PenaltySpec) -> Result<f64> {
    check_t(t)?;
    Ok(spec.value(t))
}

/// Shrinkage factor `ν(t) ∈ [0, 1]`.
pub fn nu(t: f64, spec: &PenaltySpec, beta: f64) -> Result<f64> {
    check_t(t)?;
    check_beta(beta)?;
    Ok(spec.shrink_factor(t, beta))
}

/// Dead-zone radius `L(β)`.
pub fn dead_zone_radius(spec: &PenaltySpec, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(spec.dead_zone(beta))
}

/// Huber-like envelope `φ̂(t)`.
pub fn phi_hat(t: f64, spec: &PenaltySpec, beta: f64) -> Result<f64> {
    check_t(t)?;
    Ok(Shrinkage::new(*spec, beta)?.phi_hat(t))
}

/// A metric frozen at one `β`, with its dead zone and envelope offset cached.
#[derive(Debug, Clone, Copy)]
pub struct Shrinkage {
    spec: PenaltySpec,
    beta: f64,
    dead_zone: f64,
    // c in φ̂(t) = βt²/2 - c below the dead zone.
    offset: f64,
    lp_zone: f64,
}

impl Shrinkage {
    pub fn new(spec: PenaltySpec, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let dead_zone = spec.dead_zone(beta);
        let offset = 0.5 * beta * dead_zone * dead_zone - spec.value(dead_zone);
        Ok(Shrinkage {
            spec,
            beta,
            dead_zone,
            offset,
            lp_zone: lp_dead_zone(spec.p, beta),
        })
    }

    pub fn spec(&self) -> &PenaltySpec {
        &self.spec
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dead_zone(&self) -> f64 {
        self.dead_zone
    }

    /// The constant `c`; `φ̂(0) = -c`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn nu(&self, t: f64) -> f64 {
        self.spec.shrink_factor_with(t, self.beta, self.lp_zone)
    }

    #[inline]
    pub fn phi(&self, t: f64) -> f64 {
        self.spec.value(t)
    }

    #[inline]
    pub fn phi_hat(&self, t: f64) -> f64 {
        if t < self.dead_zone {
            0.5 * self.beta * t * t - self.offset
        } else {
            self.spec.value(t)
        }
    }
}
