//! The reconstruction objective and the quadratic forms used by the split.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{shift_diff, ComplexImage, Offset, PatchGeometry, RealImage};
use crate::model::MeasurementModel;
use crate::nls::weights::patch_distance_sq_reflected;
use crate::penalty::{PenaltySpec, Shrinkage};

/// The two parts of the objective, plus the regularizer under `φ̂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    /// `‖Af − b‖²`.
    pub data: f64,
    /// `Σ_x Σ_q φ(‖P_x f − P_{x+q} f‖)`.
    pub reg_raw: f64,
    /// Same sum with `φ̂(·; β)`.
    pub reg_hat: f64,
}

impl CostTerms {
    pub fn raw(&self, lambda: f64) -> f64 {
        self.data + lambda * self.reg_raw
    }

    pub fn hat(&self, lambda: f64) -> f64 {
        self.data + lambda * self.reg_hat
    }
}

/// Squared patch distances `‖P_x f − P_{x+q} f‖²`, one image per shift.
pub fn patch_distances(f: &ComplexImage, geometry: &PatchGeometry) -> Vec<RealImage> {
    let reflected = geometry.patch.reflected();
    geometry
        .neighborhood
        .as_slice()
        .par_iter()
        .map(|&q| patch_distance_sq_reflected(f, q, &reflected))
        .collect()
}

/// Regularizer sums `(Σφ, Σφ̂)` from precomputed squared distances.
pub fn regularizer_sums(dist_sq: &[RealImage], shrink: &Shrinkage) -> (f64, f64) {
    let per_q: Vec<(f64, f64)> = dist_sq
        .par_iter()
        .map(|d2| {
            d2.as_slice().iter().fold((0.0, 0.0), |(r, h), &v| {
                let t = v.sqrt();
                (r + shrink.phi(t), h + shrink.phi_hat(t))
            })
        })
        .collect();
    per_q
        .into_iter()
        .fold((0.0, 0.0), |(r, h), (a, b)| (r + a, h + b))
}

pub fn cost_terms(
    f: &ComplexImage,
    model: &MeasurementModel,
    penalty: &PenaltySpec,
    geometry: &PatchGeometry,
    beta: f64,
) -> Result<CostTerms> {
    let data = model.data_misfit(f)?;
    let shrink = Shrinkage::new(*penalty, beta)?;
    let (reg_raw, reg_hat) = regularizer_sums(&patch_distances(f, geometry), &shrink);
    Ok(CostTerms {
        data,
        reg_raw,
        reg_hat,
    })
}

/// `‖Af − b‖² + λ Σ_x Σ_q φ(‖P_x f − P_{x+q} f‖)`, with `φ̂(·; β)` in place of
/// `φ` when `use_hat` is set.
pub fn eval_cost(
    f: &ComplexImage,
    model: &MeasurementModel,
    penalty: &PenaltySpec,
    lambda: f64,
    geometry: &PatchGeometry,
    use_hat: bool,
    beta: f64,
) -> Result<f64> {
    let terms = cost_terms(f, model, penalty, geometry, beta)?;
    Ok(if use_hat {
        terms.hat(lambda)
    } else {
        terms.raw(lambda)
    })
}

/// Auxiliary patch variables `s_{x,q}`: for each shift, `|B|` values per pixel
/// stored pixel-major (`index = (y·W + x)·|B| + k`, `k` in patch order).
#[derive(Debug, Clone, PartialEq)]
pub struct PatchField {
    width: usize,
    height: usize,
    patch_len: usize,
    data: Vec<Vec<Complex64>>,
}

impl PatchField {
    pub fn new(width: usize, height: usize, patch_len: usize, data: Vec<Vec<Complex64>>) -> Result<Self> {
        let n = width * height * patch_len;
        if let Some(bad) = data.iter().find(|s| s.len() != n) {
            return Err(Error::BadParams(format!(
                "patch field entry has {} values, expected {n}",
                bad.len()
            )));
        }
        Ok(PatchField {
            width,
            height,
            patch_len,
            data,
        })
    }

    pub fn shifts(&self) -> usize {
        self.data.len()
    }

    pub fn patch(&self, qi: usize, x: usize, y: usize) -> &[Complex64] {
        let start = (y * self.width + x) * self.patch_len;
        &self.data[qi][start..start + self.patch_len]
    }

    /// `h_q(x) = Σ_{p∈B} s_{x−p,q}(p)`: every patch entry that lands on pixel `x`.
    pub fn gather(&self, geometry: &PatchGeometry) -> Vec<ComplexImage> {
        let (w, h) = (self.width, self.height);
        (0..self.data.len())
            .map(|qi| {
                let mut out = ComplexImage::zeros(w, h);
                for y in 0..h {
                    for x in 0..w {
                        let s = self.patch(qi, x, y);
                        for (k, p) in geometry.patch.iter().enumerate() {
                            let tx = crate::grid::wrap(x as i64 + p.dx, w);
                            let ty = crate::grid::wrap(y as i64 + p.dy, h);
                            out[(tx, ty)] += s[k];
                        }
                    }
                }
                out
            })
            .collect()
    }
}

/// `Σ_x Σ_q ‖(P_x f − P_{x+q} f) − s_{x,q}‖²` by explicit patch extraction.
pub fn patch_form_objective(f: &ComplexImage, s: &PatchField, geometry: &PatchGeometry) -> f64 {
    let (w, h) = f.dims();
    let mut total = 0.0;
    for (qi, &q) in geometry.neighborhood.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let sp = s.patch(qi, x, y);
                for (k, &p) in geometry.patch.iter().enumerate() {
                    let d = f.get_wrapped(x, y, p) - f.get_wrapped(x, y, Offset::new(p.dx + q.dx, p.dy + q.dy));
                    total += (d - sp[k]).norm_sqr();
                }
            }
        }
    }
    total
}

/// `κ Σ_q ‖D_q f − h_q/κ‖²` with `κ = |B|`.
///
/// Up to a term independent of `f` this equals the patch-form objective whose
/// auxiliary variables gather to `h`.
pub fn pixel_form_objective(f: &ComplexImage, h: &[ComplexImage], geometry: &PatchGeometry) -> f64 {
    let kappa = geometry.patch_len() as f64;
    geometry
        .neighborhood
        .iter()
        .zip(h)
        .map(|(&q, hq)| {
            let d = shift_diff(f, q);
            d.as_slice()
                .iter()
                .zip(hq.as_slice())
                .map(|(a, b)| (a - b / kappa).norm_sqr())
                .sum::<f64>()
                * kappa
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::OffsetSet;
    use crate::model::measure;
    use crate::sampling::{gen_mask, MaskKind, MaskParams, SamplingMask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ComplexImage {
        ComplexImage::from_fn(w, h, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_field(w: usize, h: usize, g: &PatchGeometry, rng: &mut ChaCha8Rng) -> PatchField {
        let n = w * h * g.patch_len();
        let data = (0..g.neighborhood.len())
            .map(|_| {
                (0..n)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        PatchField::new(w, h, g.patch_len(), data).unwrap()
    }

    #[test]
    fn truth_with_full_data_costs_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = random_complex(16, 16, &mut rng);
        let model = measure(&truth, &SamplingMask::full(16, 16), 0.0, 0).unwrap();
        let c = eval_cost(&truth, &model, &PenaltySpec::l1(), 0.0, &PatchGeometry::default(), false, 1.0).unwrap();
        assert!(c.abs() < 1e-20);
    }

    #[test]
    fn constant_image_regularizer() {
        let f = ComplexImage::filled(8, 8, Complex64::new(2.0, 0.0));
        let model = measure(&f, &SamplingMask::full(8, 8), 0.0, 0).unwrap();
        let g = PatchGeometry::square(1, 2).unwrap();
        let s = PenaltySpec::lp_thresholded(0.5, 3.0).unwrap();
        let t = cost_terms(&f, &model, &s, &g, 4.0).unwrap();
        assert_eq!(t.reg_raw, 0.0);
        let shrink = Shrinkage::new(s, 4.0).unwrap();
        let expect = -shrink.offset() * 64.0 * 24.0;
        assert!((t.reg_hat - expect).abs() <= 1e-12 * expect.abs());
    }

    #[test]
    fn matches_direct_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = random_complex(16, 16, &mut rng);
        let f = random_complex(16, 16, &mut rng);
        let mask = gen_mask(MaskKind::Random, 16, 16, MaskParams::Fraction(0.4), 3).unwrap();
        let model = measure(&truth, &mask, 0.0, 0).unwrap();
        let g = PatchGeometry::square(1, 2).unwrap();
        let s = PenaltySpec::h1(0.7).unwrap();
        let lambda = 0.3;
        let got = eval_cost(&f, &model, &s, lambda, &g, false, 1.0).unwrap();

        let data: f64 = {
            let fft = crate::grid::fourier::dft(&f);
            let mut acc = 0.0;
            for y in 0..16 {
                for x in 0..16 {
                    if mask.is_sampled(x, y) {
                        acc += (fft.get(x, y) - model.b0().get(x, y)).norm_sqr();
                    }
                }
            }
            acc / 256.0
        };
        let mut reg = 0.0;
        for &q in g.neighborhood.iter() {
            for y in 0..16 {
                for x in 0..16 {
                    let d2: f64 = g
                        .patch
                        .iter()
                        .map(|&p| {
                            (f.get_wrapped(x, y, p) - f.get_wrapped(x, y, Offset::new(p.dx + q.dx, p.dy + q.dy)))
                                .norm_sqr()
                        })
                        .sum();
                    reg += s.value(d2.sqrt());
                }
            }
        }
        let expect = data + lambda * reg;
        assert!((got - expect).abs() <= 1e-8 * expect.abs());
    }

    #[test]
    fn pixel_form_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_complex(8, 8, &mut rng);
        let g = PatchGeometry::new(OffsetSet::square(0), OffsetSet::square_without_origin(1)).unwrap();
        let h: Vec<ComplexImage> = g.neighborhood.iter().map(|&q| shift_diff(&f, q)).collect();
        assert!(pixel_form_objective(&f, &h, &g) < 1e-24);
        let zero = ComplexImage::zeros(8, 8);
        let h2: Vec<ComplexImage> = h.iter().map(|x| x.scale(2.0)).collect();
        let a = pixel_form_objective(&zero, &h, &g);
        let b = pixel_form_objective(&zero, &h2, &g);
        assert!((b - 4.0 * a).abs() <= 1e-12 * b);
    }

    fn diff_of_diffs(g: &PatchGeometry, seed: u64, weighted: bool) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1 = random_complex(10, 10, &mut rng);
        let f2 = random_complex(10, 10, &mut rng);
        let s = random_field(10, 10, g, &mut rng);
        let h = s.gather(g);
        let pix = |f: &ComplexImage| {
            if weighted {
                pixel_form_objective(f, &h, g)
            } else {
                g.neighborhood
                    .iter()
                    .zip(&h)
                    .map(|(&q, hq)| {
                        shift_diff(f, q)
                            .as_slice()
                            .iter()
                            .zip(hq.as_slice())
                            .map(|(a, b)| (a - b).norm_sqr())
                            .sum::<f64>()
                    })
                    .sum()
            }
        };
        let dp = patch_form_objective(&f1, &s, g) - patch_form_objective(&f2, &s, g);
        let dx = pix(&f1) - pix(&f2);
        (dp - dx).abs() / dp.abs().max(dx.abs())
    }

    #[test]
    fn patch_and_pixel_forms_differ_by_constant() {
        let g = PatchGeometry::square(1, 2).unwrap();
        for seed in 0..3 {
            assert!(diff_of_diffs(&g, seed, true) <= 1e-8);
        }
    }

    #[test]
    fn unweighted_pixel_form_misses_patch_multiplicity() {
        let g = PatchGeometry::square(1, 1).unwrap();
        assert!(diff_of_diffs(&g, 7, false) > 1e-2);
        let single = PatchGeometry::new(OffsetSet::square(0), OffsetSet::square_without_origin(1)).unwrap();
        assert!(diff_of_diffs(&single, 7, false) <= 1e-8);
    }
}
