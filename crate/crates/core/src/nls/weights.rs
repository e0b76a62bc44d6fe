//! Shrinkage weights of patch pairs, by box filtering and by direct patch loops.
//!
//! For a shift `q`, `u_q(x) = ν(‖P_x f − P_{x+q} f‖)` shrinks the pair of
//! patches at `x` and `x + q`, and `v_q(x) = Σ_{p∈B} u_q(x − p)` gathers every
//! pair whose patches both contain the pixel difference `f(x) − f(x + q)`.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{box_sum_filter, shift_diff, ComplexImage, Offset, OffsetSet, PatchGeometry, RealImage};
use crate::penalty::{PenaltySpec, Shrinkage};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchWeights {
    pub u: RealImage,
    pub v: RealImage,
}

/// `‖P_x f − P_{x+q} f‖²` for every `x`: the box sum of `|D_q f|²` over `B`
/// taken in the direction of the patch offsets.
pub fn patch_distance_sq(f: &ComplexImage, q: Offset, patch: &OffsetSet) -> RealImage {
    let reflected = patch.reflected();
    patch_distance_sq_reflected(f, q, &reflected)
}

pub(crate) fn patch_distance_sq_reflected(
    f: &ComplexImage,
    q: Offset,
    reflected: &OffsetSet,
) -> RealImage {
    let d2 = shift_diff(f, q).map(|z| z.norm_sqr());
    box_sum_filter(&d2, reflected)
}

/// Filtered evaluation of `u_q` and `v_q`.
pub fn patch_weights_fast(
    f: &ComplexImage,
    q: Offset,
    geometry: &PatchGeometry,
    penalty: &PenaltySpec,
    beta: f64,
) -> Result<PatchWeights> {
    let shrink = Shrinkage::new(*penalty, beta)?;
    Ok(weights_with(f, q, &geometry.patch, &geometry.patch.reflected(), &shrink))
}

pub(crate) fn weights_with(
    f: &ComplexImage,
    q: Offset,
    patch: &OffsetSet,
    reflected: &OffsetSet,
    shrink: &Shrinkage,
) -> PatchWeights {
    let dist = patch_distance_sq_reflected(f, q, reflected);
    let u = dist.map(|d2| shrink.nu(d2.sqrt()));
    let v = box_sum_filter(&u, patch);
    PatchWeights { u, v }
}

/// Reference evaluation by explicit patch extraction; `O(N·|B|²)` per shift.
pub fn patch_weights_bruteforce(
    f: &ComplexImage,
    q: Offset,
    geometry: &PatchGeometry,
    penalty: &PenaltySpec,
    beta: f64,
) -> Result<PatchWeights> {
    let shrink = Shrinkage::new(*penalty, beta)?;
    let (w, h) = f.dims();
    let patch = &geometry.patch;
    let u = RealImage::from_fn(w, h, |x, y| {
        let dist2: f64 = patch
            .iter()
            .map(|&p| {
                let a = f.get_wrapped(x, y, p);
                let b = f.get_wrapped(x, y, Offset::new(p.dx + q.dx, p.dy + q.dy));
                (a - b).norm_sqr()
            })
            .sum();
        shrink.nu(dist2.sqrt())
    });
    let v = RealImage::from_fn(w, h, |x, y| patch.iter().map(|&p| u.get_wrapped(x, y, -p)).sum());
    Ok(PatchWeights { u, v })
}

/// `h_q = D_q f • v_q` for every `q`, in neighborhood order.
pub fn h_images(f: &ComplexImage, v: &[RealImage], neighborhood: &OffsetSet) -> Vec<ComplexImage> {
    assert_eq!(v.len(), neighborhood.len(), "one weight image per shift");
    neighborhood
        .iter()
        .zip(v)
        .map(|(&q, vq)| shift_diff(f, q).zip_map(vq, |d, w| d * w))
        .collect()
}

/// The shrunk patch difference `s̄_{x,q} = (P_x f − P_{x+q} f)·ν(‖P_x f − P_{x+q} f‖)`,
/// listed in patch-offset order.
pub fn shrunk_patch_difference(
    f: &ComplexImage,
    x: usize,
    y: usize,
    q: Offset,
    patch: &OffsetSet,
    shrink: &Shrinkage,
) -> Vec<Complex64> {
    let diff: Vec<Complex64> = patch
        .iter()
        .map(|&p| f.get_wrapped(x, y, p) - f.get_wrapped(x, y, Offset::new(p.dx + q.dx, p.dy + q.dy)))
        .collect();
    let norm = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nu = shrink.nu(norm);
    diff.into_iter().map(|z| z * nu).collect()
}
