//! k-space sampling masks.
//!
//! Masks live in the unshifted DFT layout used by [`crate::grid::fourier`]:
//! DC is cell `(0, 0)` and negative frequencies wrap to the end of each axis.
//! Every generator samples DC.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, RealImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Random,
    CartesianLines,
    RadialGridded,
    Full,
    /// Loaded from a file rather than generated.
    Custom,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Random => "random",
            MaskKind::CartesianLines => "cartesian_lines",
            MaskKind::RadialGridded => "radial_gridded",
            MaskKind::Full => "full",
            MaskKind::Custom => "custom",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(MaskKind::Random),
            "cartesian" | "cartesian_lines" => Ok(MaskKind::CartesianLines),
            "radial" | "radial_gridded" => Ok(MaskKind::RadialGridded),
            "full" => Ok(MaskKind::Full),
            "custom" => Ok(MaskKind::Custom),
            _ => Err(Error::BadParams(format!("unknown mask kind `{s}`"))),
        }
    }
}

/// Kind-specific generator parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskParams {
    /// Fraction of cells kept (random masks).
    Fraction(f64),
    /// Acceleration `R`: keep `1/R` of the rows (Cartesian) or cells (random).
    Acceleration(f64),
    /// Number of equiangular spokes (radial masks).
    Spokes(usize),
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    keep: Grid<bool>,
    kind: MaskKind,
    seed: u64,
    params: MaskParams,
}

impl SamplingMask {
    pub fn full(width: usize, height: usize) -> Self {
        SamplingMask {
            keep: Grid::filled(width, height, true),
            kind: MaskKind::Full,
            seed: 0,
            params: MaskParams::None,
        }
    }

    pub fn from_keep(keep: Grid<bool>) -> Self {
        SamplingMask {
            keep,
            kind: MaskKind::Custom,
            seed: 0,
            params: MaskParams::None,
        }
    }

    /// Cells with value above one half are sampled.
    pub fn from_real(values: &RealImage) -> Self {
        Self::from_keep(values.map(|v| v > 0.5))
    }

    pub fn width(&self) -> usize {
        self.keep.width()
    }

    pub fn height(&self) -> usize {
        self.keep.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.keep.dims()
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> MaskParams {
        self.params
    }

    pub fn keep(&self) -> &Grid<bool> {
        &self.keep
    }

    pub fn is_sampled(&self, x: usize, y: usize) -> bool {
        self.keep.get(x, y)
    }

    pub fn count(&self) -> usize {
        self.keep.as_slice().iter().filter(|&&k| k).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.keep.len() as f64
    }

    /// Total cells over sampled cells.
    pub fn acceleration(&self) -> f64 {
        self.keep.len() as f64 / self.count().max(1) as f64
    }

    /// Indicator image `a` with ones on sampled cells.
    pub fn indicator(&self) -> RealImage {
        self.keep.map(|k| if k { 1.0 } else { 0.0 })
    }

    /// Rows of the k-space grid that contain at least one sample.
    pub fn sampled_rows(&self) -> usize {
        let w = self.width();
        self.keep
            .as_slice()
            .chunks(w)
            .filter(|row| row.iter().any(|&k| k))
            .count()
    }
}

fn centered_to_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Generates a mask; deterministic in `(kind, dims, params, seed)`.
pub fn gen_mask(
    kind: MaskKind,
    width: usize,
    height: usize,
    params: MaskParams,
    seed: u64,
) -> Result<SamplingMask> {
    if width == 0 || height == 0 {
        return Err(Error::BadParams("mask dimensions must be positive".into()));
    }
    let keep = match kind {
        MaskKind::Full => Grid::filled(width, height, true),
        MaskKind::Random => {
            let fraction = match params {
                MaskParams::Fraction(f) => f,
                MaskParams::Acceleration(r) if r >= 1.0 => 1.0 / r,
                MaskParams::Acceleration(r) => {
                    return Err(Error::BadParams(format!("acceleration must be >= 1, got {r}")))
                }
                _ => return Err(Error::BadParams("random mask needs a fraction".into())),
            };
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::BadParams(format!(
                    "sampling fraction must lie in (0, 1], got {fraction}"
                )));
            }
            random_keep(width, height, fraction, seed)
        }
        MaskKind::CartesianLines => {
            let r = match params {
                MaskParams::Acceleration(r) => r,
                MaskParams::Fraction(f) if f > 0.0 => 1.0 / f,
                _ => return Err(Error::BadParams("cartesian mask needs an acceleration".into())),
            };
            if !(r >= 1.0) {
                return Err(Error::BadParams(format!("acceleration must be >= 1, got {r}")));
            }
            cartesian_keep(width, height, r, seed)
        }
        MaskKind::RadialGridded => {
            let spokes = match params {
                MaskParams::Spokes(s) => s,
                _ => return Err(Error::BadParams("radial mask needs a spoke count".into())),
            };
            if spokes < 1 {
                return Err(Error::BadParams("spoke count must be at least 1".into()));
            }
            radial_keep(width, height, spokes)
        }
        MaskKind::Custom => {
            return Err(Error::BadParams("custom masks are loaded, not generated".into()))
        }
    };
    Ok(SamplingMask {
        keep,
        kind,
        seed,
        params,
    })
}

// Uniform without replacement; DC is forced and counts toward the total.
fn random_keep(width: usize, height: usize, fraction: f64, seed: u64) -> Grid<bool> {
    let n = width * height;
    let target = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut keep = vec![false; n];
    keep[0] = true;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, n - 1, target - 1) {
        keep[i + 1] = true;
    }
    Grid::from_vec(width, height, keep).expect("length matches")
}

fn cartesian_keep(width: usize, height: usize, accel: f64, seed: u64) -> Grid<bool> {
    let rows_kept = ((height as f64 / accel).round() as usize).clamp(1, height);
    let band = (height / 32).max(4).min(rows_kept);
    let mut rows = vec![false; height];
    let lo = -((band / 2) as i64);
    for k in lo..lo + band as i64 {
        rows[centered_to_index(k, height)] = true;
    }
    rows[0] = true;
    let taken = rows.iter().filter(|&&r| r).count();
    let free: Vec<usize> = (0..height).filter(|&y| !rows[y]).collect();
    let extra = rows_kept.saturating_sub(taken).min(free.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in index::sample(&mut rng, free.len(), extra) {
        rows[free[i]] = true;
    }
    Grid::from_fn(width, height, |_, y| rows[y])
}

fn radial_keep(width: usize, height: usize, spokes: usize) -> Grid<bool> {
    let mut keep = Grid::filled(width, height, false);
    let half_diag = 0.5 * ((width * width + height * height) as f64).sqrt();
    let (xmin, xmax) = (-((width / 2) as i64), (width - 1 - width / 2) as i64);
    let (ymin, ymax) = (-((height / 2) as i64), (height - 1 - height / 2) as i64);
    let steps = (4.0 * half_diag).ceil() as i64;
    for k in 0..spokes {
        let theta = std::f64::consts::PI * k as f64 / spokes as f64;
        let (s, c) = theta.sin_cos();
        for i in -steps..=steps {
            let r = half_diag * i as f64 / steps as f64;
            let kx = (r * c).round() as i64;
            let ky = (r * s).round() as i64;
            if (xmin..=xmax).contains(&kx) && (ymin..=ymax).contains(&ky) {
                keep[(centered_to_index(kx, width), centered_to_index(ky, height))] = true;
            }
        }
    }
    keep[(0, 0)] = true;
    keep
}
