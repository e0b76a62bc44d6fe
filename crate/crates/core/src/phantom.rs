//! Synthetic test images with intensities in `[0, 255]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexImage, RealImage};

pub const MAX_INTENSITY: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    /// Modified Shepp–Logan head; the seed is unused.
    SheppLike,
    /// Overlapping constant rectangles on a dark background.
    PiecewiseBlocks,
    /// Blocks with oriented sinusoidal texture inside some of them.
    Textured,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 3] = [PhantomKind::SheppLike, PhantomKind::PiecewiseBlocks, PhantomKind::Textured];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::SheppLike => "shepp_like",
            PhantomKind::PiecewiseBlocks => "piecewise_blocks",
            PhantomKind::Textured => "textured",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "shepp_like" | "shepp_logan" | "shepp" => Ok(PhantomKind::SheppLike),
            "piecewise_blocks" | "blocks" => Ok(PhantomKind::PiecewiseBlocks),
            "textured" | "texture" => Ok(PhantomKind::Textured),
            _ => Err(Error::UnknownPhantom(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub kind: PhantomKind,
    pub seed: u64,
    pub image: ComplexImage,
}

impl Phantom {
    /// Multiplies by `exp(j·2π(cx·x/W + cy·y/H))`, keeping magnitudes.
    pub fn with_phase_ramp(mut self, cycles_x: f64, cycles_y: f64) -> Self {
        let (w, h) = self.image.dims();
        self.image = ComplexImage::from_fn(w, h, |x, y| {
            let phase = 2.0 * PI * (cycles_x * x as f64 / w as f64 + cycles_y * y as f64 / h as f64);
            self.image.get(x, y) * Complex64::from_polar(1.0, phase)
        });
        self
    }
}

pub fn make_phantom(name: &str, width: usize, height: usize, seed: u64) -> Result<Phantom> {
    let kind: PhantomKind = name.parse()?;
    phantom(kind, width, height, seed)
}

pub fn phantom(kind: PhantomKind, width: usize, height: usize, seed: u64) -> Result<Phantom> {
    if width == 0 || height == 0 {
        return Err(Error::BadParams("phantom dimensions must be positive".into()));
    }
    let real = match kind {
        PhantomKind::SheppLike => shepp_like(width, height),
        PhantomKind::PiecewiseBlocks => piecewise_blocks(width, height, seed),
        PhantomKind::Textured => textured(width, height, seed),
    };
    Ok(Phantom {
        kind,
        seed,
        image: ComplexImage::from_real(&real),
    })
}

// (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn shepp_like(w: usize, h: usize) -> RealImage {
    RealImage::from_fn(w, h, |i, j| {
        let x = (2 * i + 1) as f64 / w as f64 - 1.0;
        let y = 1.0 - (2 * j + 1) as f64 / h as f64;
        let v: f64 = SHEPP_LOGAN
            .iter()
            .filter(|&&(_, a, b, x0, y0, deg)| {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        // the sum is an exact multiple of 0.1 up to rounding
        ((v * 10.0).round() / 10.0).clamp(0.0, 1.0) * MAX_INTENSITY
    })
}

const BLOCK_LEVELS: [f64; 6] = [60.0, 100.0, 140.0, 180.0, 220.0, 255.0];

fn rectangles(w: usize, h: usize, rng: &mut ChaCha8Rng, count: usize) -> Vec<(usize, usize, usize, usize, f64)> {
    (0..count)
        .map(|_| {
            let bw = rng.random_range((w / 8).max(1)..=(w / 2).max(1));
            let bh = rng.random_range((h / 8).max(1)..=(h / 2).max(1));
            let x0 = rng.random_range(0..=w - bw);
            let y0 = rng.random_range(0..=h - bh);
            let level = BLOCK_LEVELS[rng.random_range(0..BLOCK_LEVELS.len())];
            (x0, y0, bw, bh, level)
        })
        .collect()
}

fn paint(w: usize, h: usize, rects: &[(usize, usize, usize, usize, f64)]) -> RealImage {
    let mut img = RealImage::filled(w, h, 20.0);
    for &(x0, y0, bw, bh, level) in rects {
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                img[(x, y)] = level;
            }
        }
    }
    img
}

fn piecewise_blocks(w: usize, h: usize, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    paint(w, h, &rectangles(w, h, &mut rng, 6))
}

fn textured(w: usize, h: usize, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rects = rectangles(w, h, &mut rng, 5);
    let mut img = paint(w, h, &rects);
    for &(x0, y0, bw, bh, level) in rects.iter().step_by(2) {
        let period = rng.random_range(3.0..8.0);
        let angle: f64 = rng.random_range(0.0..PI);
        let (s, c) = angle.sin_cos();
        let amp = 0.25 * level.min(MAX_INTENSITY - level).max(20.0);
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                let t = (x as f64 * c + y as f64 * s) * 2.0 * PI / period;
                img[(x, y)] = (level + amp * t.sin()).clamp(0.0, MAX_INTENSITY);
            }
        }
    }
    img
}
