//! 2-D discrete Fourier transform and the Fourier multipliers of the
//! periodic difference operators.
//!
//! Convention, used everywhere in the crate: the forward transform has kernel
//! `exp(-j 2π (ωx·x/W + ωy·y/H))` and no scaling; the inverse carries the
//! `1/(W·H)` factor. Frequencies are stored unshifted, so DC sits at `(0, 0)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{ComplexImage, Grid, Offset, OffsetSet, RealImage};

/// Cached row and column plans for one grid size.
#[derive(Clone)]
pub struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn forward(&self, f: &ComplexImage) -> ComplexImage {
        let mut out = f.clone();
        self.forward_in_place(&mut out);
        out
    }

    pub fn inverse(&self, f: &ComplexImage) -> ComplexImage {
        let mut out = f.clone();
        self.inverse_in_place(&mut out);
        out
    }

    pub fn forward_in_place(&self, f: &mut ComplexImage) {
        self.transform(f, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse_in_place(&self, f: &mut ComplexImage) {
        self.transform(f, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.width * self.height) as f64;
        f.as_mut_slice().iter_mut().for_each(|z| *z *= s);
    }

    fn transform(&self, f: &mut ComplexImage, rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(f.dims(), (self.width, self.height), "FFT plan size mismatch");
        let (w, h) = (self.width, self.height);
        f.as_mut_slice()
            .par_chunks_mut(w)
            .for_each(|row| rows.process(row));
        let mut t = transpose(f.as_slice(), w, h);
        t.par_chunks_mut(h).for_each(|col| cols.process(col));
        let back = transpose(&t, h, w);
        f.as_mut_slice().copy_from_slice(&back);
    }
}

fn transpose(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = data[y * w + x];
        }
    }
    out
}

/// Unnormalized forward DFT.
pub fn dft(f: &ComplexImage) -> ComplexImage {
    Fft2d::new(f.width(), f.height()).forward(f)
}

/// Inverse DFT including the `1/(W·H)` factor.
pub fn idft(f: &ComplexImage) -> ComplexImage {
    Fft2d::new(f.width(), f.height()).inverse(f)
}

/// Fourier multiplier of `shift_diff(·, q)`:
/// `d_q(ω) = 1 - exp(+j 2π (ωx·qx/W + ωy·qy/H))`.
pub fn diff_multiplier(q: Offset, width: usize, height: usize) -> ComplexImage {
    Grid::from_fn(width, height, |wx, wy| {
        let phase = 2.0 * PI * (phase_fraction(wx, q.dx, width) + phase_fraction(wy, q.dy, height));
        Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, phase)
    })
}

/// `|d_q(ω)|² = 4 sin²(π (ωx·qx/W + ωy·qy/H))`.
pub fn diff_multiplier_power(q: Offset, width: usize, height: usize) -> RealImage {
    Grid::from_fn(width, height, |wx, wy| {
        let s = (PI * (phase_fraction(wx, q.dx, width) + phase_fraction(wy, q.dy, height))).sin();
        4.0 * s * s
    })
}

/// `Σ_{q ∈ N} |d_q|²`, the Fourier symbol of `Σ_q D_qᴴ D_q`.
pub fn diff_power_sum(neighborhood: &OffsetSet, width: usize, height: usize) -> RealImage {
    let mut acc = RealImage::zeros(width, height);
    for &q in neighborhood {
        let p = diff_multiplier_power(q, width, height);
        acc.as_mut_slice()
            .iter_mut()
            .zip(p.as_slice())
            .for_each(|(a, b)| *a += b);
    }
    acc
}

// ω·q/n reduced into [0, 1) in exact integer arithmetic before going to float.
fn phase_fraction(omega: usize, q: i64, n: usize) -> f64 {
    let k = (omega as i64 * q).rem_euclid(n as i64);
    k as f64 / n as f64
}
