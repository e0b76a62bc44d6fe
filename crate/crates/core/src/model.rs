//! Measurement operators and the Fourier sampling model.
//!
//! The sampling operator is the masked DFT scaled to be unitary on the sampled
//! set, `A f = a • dft(f) / √(W·H)`, with measurements `b = b0 / √(W·H)` where
//! `b0` is the zero-filled k-space array. With that scaling `AᴴA f =
//! idft(a • dft(f))` and `dft(Aᴴ b) = b0`, and the data term `‖Af − b‖²` is in
//! image-domain intensity units.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::fourier::Fft2d;
use crate::grid::{ComplexImage, Grid, RealImage};
use crate::sampling::SamplingMask;

/// A linear map from images to a measurement vector, with its adjoint.
pub trait LinearOperator: Sync {
    /// Image dimensions the operator acts on.
    fn dims(&self) -> (usize, usize);

    fn apply(&self, f: &ComplexImage) -> Vec<Complex64>;

    fn adjoint(&self, y: &[Complex64]) -> ComplexImage;

    /// `AᴴA f`.
    fn normal(&self, f: &ComplexImage) -> ComplexImage {
        self.adjoint(&self.apply(f))
    }

    /// Fourier-domain diagonal of `AᴴA`, when it is exactly diagonal there.
    fn fourier_diagonal(&self) -> Option<RealImage> {
        None
    }
}

/// `A f = a • dft(f) / √N`; measurements are the full (masked) grid.
#[derive(Debug, Clone)]
pub struct MaskedFourier {
    indicator: RealImage,
    fft: Fft2d,
    scale: f64,
}

impl MaskedFourier {
    pub fn new(mask: &SamplingMask) -> Self {
        let (w, h) = mask.dims();
        MaskedFourier {
            indicator: mask.indicator(),
            fft: Fft2d::new(w, h),
            scale: ((w * h) as f64).sqrt(),
        }
    }
}

impl LinearOperator for MaskedFourier {
    fn dims(&self) -> (usize, usize) {
        self.indicator.dims()
    }

    fn apply(&self, f: &ComplexImage) -> Vec<Complex64> {
        let spec = self.fft.forward(f);
        let s = 1.0 / self.scale;
        spec.as_slice()
            .iter()
            .zip(self.indicator.as_slice())
            .map(|(z, a)| z * (a * s))
            .collect()
    }

    fn adjoint(&self, y: &[Complex64]) -> ComplexImage {
        let (w, h) = self.dims();
        let masked: Vec<Complex64> = y
            .iter()
            .zip(self.indicator.as_slice())
            .map(|(z, a)| z * a)
            .collect();
        let mut img = Grid::from_vec(w, h, masked).expect("measurement length matches grid");
        self.fft.inverse_in_place(&mut img);
        img.as_mut_slice().iter_mut().for_each(|z| *z *= self.scale);
        img
    }

    fn normal(&self, f: &ComplexImage) -> ComplexImage {
        let mut spec = self.fft.forward(f);
        spec.as_mut_slice()
            .iter_mut()
            .zip(self.indicator.as_slice())
            .for_each(|(z, a)| *z *= a);
        self.fft.inverse_in_place(&mut spec);
        spec
    }

    fn fourier_diagonal(&self) -> Option<RealImage> {
        Some(self.indicator.clone())
    }
}

/// `A = I`, the denoising setting.
#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator {
    pub width: usize,
    pub height: usize,
}

impl LinearOperator for IdentityOperator {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn apply(&self, f: &ComplexImage) -> Vec<Complex64> {
        f.as_slice().to_vec()
    }

    fn adjoint(&self, y: &[Complex64]) -> ComplexImage {
        Grid::from_vec(self.width, self.height, y.to_vec()).expect("measurement length matches grid")
    }

    fn normal(&self, f: &ComplexImage) -> ComplexImage {
        f.clone()
    }

    fn fourier_diagonal(&self) -> Option<RealImage> {
        Some(RealImage::filled(self.width, self.height, 1.0))
    }
}

/// Sampling mask plus zero-filled k-space data `b0`.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    mask: SamplingMask,
    b0: ComplexImage,
}

impl MeasurementModel {
    /// Values of `b0` outside the mask are discarded.
    pub fn new(mask: SamplingMask, mut b0: ComplexImage) -> Result<Self> {
        if mask.dims() != b0.dims() {
            return Err(Error::InvalidModel(format!(
                "mask is {:?} but k-space data is {:?}",
                mask.dims(),
                b0.dims()
            )));
        }
        let (w, h) = b0.dims();
        for y in 0..h {
            for x in 0..w {
                if !mask.is_sampled(x, y) {
                    b0[(x, y)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(MeasurementModel { mask, b0 })
    }

    /// Builds `b0` from the sampled values listed in row-major order.
    pub fn from_samples(mask: SamplingMask, samples: &[Complex64]) -> Result<Self> {
        if samples.len() != mask.count() {
            return Err(Error::InvalidModel(format!(
                "{} samples for a mask with {} sampled cells",
                samples.len(),
                mask.count()
            )));
        }
        let (w, h) = mask.dims();
        let mut b0 = ComplexImage::zeros(w, h);
        let mut it = samples.iter();
        for (z, &k) in b0.as_mut_slice().iter_mut().zip(mask.keep().as_slice()) {
            if k {
                *z = *it.next().expect("count checked");
            }
        }
        Ok(MeasurementModel { mask, b0 })
    }

    /// Denoising model: every frequency sampled, `b0 = dft(noisy)`.
    pub fn denoising(noisy: &ComplexImage) -> Self {
        let (w, h) = noisy.dims();
        MeasurementModel {
            mask: SamplingMask::full(w, h),
            b0: Fft2d::new(w, h).forward(noisy),
        }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn b0(&self) -> &ComplexImage {
        &self.b0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.b0.dims()
    }

    /// Sampled values of `b0` in row-major order.
    pub fn samples(&self) -> Vec<Complex64> {
        self.b0
            .as_slice()
            .iter()
            .zip(self.mask.keep().as_slice())
            .filter_map(|(z, &k)| k.then_some(*z))
            .collect()
    }

    pub fn operator(&self) -> MaskedFourier {
        MaskedFourier::new(&self.mask)
    }

    /// `b = b0 / √N`, the measurement vector of [`MaskedFourier`].
    pub fn measurements(&self) -> Vec<Complex64> {
        let s = 1.0 / (self.b0.len() as f64).sqrt();
        self.b0.as_slice().iter().map(|z| z * s).collect()
    }

    /// `idft(b0)`.
    pub fn zero_filled(&self) -> ComplexImage {
        let (w, h) = self.dims();
        Fft2d::new(w, h).inverse(&self.b0)
    }

    /// `‖Af − b‖²` computed with the given plan.
    pub fn data_misfit_with(&self, fft: &Fft2d, f: &ComplexImage) -> f64 {
        let spec = fft.forward(f);
        let sum: f64 = spec
            .as_slice()
            .iter()
            .zip(self.b0.as_slice())
            .zip(self.mask.keep().as_slice())
            .filter(|(_, &k)| k)
            .map(|((z, b), _)| (z - b).norm_sqr())
            .sum();
        sum / f.len() as f64
    }

    pub fn data_misfit(&self, f: &ComplexImage) -> Result<f64> {
        f.check_dims(&self.b0)?;
        let (w, h) = self.dims();
        Ok(self.data_misfit_with(&Fft2d::new(w, h), f))
    }
}

/// Simulates sampled k-space data for `truth`.
///
/// Noise is drawn in the image domain (real and imaginary parts i.i.d.
/// `N(0, σ²)`) and transformed, so in k-space each component has variance
/// `σ²·W·H` and `σ` keeps its meaning in intensity units. `σ = 0` gives exact
/// samples.
pub fn measure(
    truth: &ComplexImage,
    mask: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<MeasurementModel> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::BadParams(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }
    let (w, h) = truth.dims();
    let fft = Fft2d::new(w, h);
    let noisy = if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("sigma validated");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        truth.map(|z| z + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
    } else {
        truth.clone()
    };
    MeasurementModel::new(mask.clone(), fft.forward(&noisy))
}
