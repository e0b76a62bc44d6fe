//! Periodic 2-D sample grids and the spatial operators the solver is built from.
//!
//! Every operator here treats the image as a torus: offsets wrap around both
//! axes. That is what makes finite differences diagonal in the Fourier domain
//! (see [`fourier`]).

pub mod fourier;

use std::ops::{Index, IndexMut, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A 2-D integer displacement `(dx, dy)`; `dx` moves along a row, `dy` across rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Offset {
    pub dx: i64,
    pub dy: i64,
}

impl Offset {
    pub const ZERO: Offset = Offset { dx: 0, dy: 0 };

    pub const fn new(dx: i64, dy: i64) -> Self {
        Offset { dx, dy }
    }

    pub fn is_zero(self) -> bool {
        self.dx == 0 && self.dy == 0
    }
}

impl std::ops::Neg for Offset {
    type Output = Offset;
    fn neg(self) -> Offset {
        Offset::new(-self.dx, -self.dy)
    }
}

/// An ordered set of offsets without duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetSet {
    offsets: Vec<Offset>,
}

impl OffsetSet {
    pub fn new(offsets: Vec<Offset>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::BadParams("offset set must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for o in &offsets {
            if !seen.insert(*o) {
                return Err(Error::BadParams(format!(
                    "duplicate offset ({}, {})",
                    o.dx, o.dy
                )));
            }
        }
        Ok(OffsetSet { offsets })
    }

    /// The square `[-r, r]²`, in row-major order.
    pub fn square(radius: usize) -> Self {
        let r = radius as i64;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| Offset::new(dx, dy)))
            .collect();
        OffsetSet { offsets }
    }

    /// The square `[-r, r]²` with the origin removed.
    pub fn square_without_origin(radius: usize) -> Self {
        let mut set = Self::square(radius);
        set.offsets.retain(|o| !o.is_zero());
        set
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Offset> {
        self.offsets.iter()
    }

    pub fn as_slice(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn contains(&self, o: Offset) -> bool {
        self.offsets.contains(&o)
    }

    /// The point reflection `{-p : p in self}`.
    pub fn reflected(&self) -> Self {
        OffsetSet {
            offsets: self.offsets.iter().map(|&o| -o).collect(),
        }
    }

    /// If the set is exactly a full axis-aligned rectangle, its inclusive
    /// bounds `((x0, x1), (y0, y1))`.
    pub fn rectangle_bounds(&self) -> Option<((i64, i64), (i64, i64))> {
        let x0 = self.offsets.iter().map(|o| o.dx).min()?;
        let x1 = self.offsets.iter().map(|o| o.dx).max()?;
        let y0 = self.offsets.iter().map(|o| o.dy).min()?;
        let y1 = self.offsets.iter().map(|o| o.dy).max()?;
        let area = ((x1 - x0 + 1) * (y1 - y0 + 1)) as usize;
        (area == self.offsets.len()).then_some(((x0, x1), (y0, y1)))
    }
}

impl<'a> IntoIterator for &'a OffsetSet {
    type Item = &'a Offset;
    type IntoIter = std::slice::Iter<'a, Offset>;
    fn into_iter(self) -> Self::IntoIter {
        self.offsets.iter()
    }
}

/// Patch shape `B` and search neighborhood `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGeometry {
    pub patch: OffsetSet,
    pub neighborhood: OffsetSet,
}

impl PatchGeometry {
    pub fn new(patch: OffsetSet, neighborhood: OffsetSet) -> Result<Self> {
        if neighborhood.contains(Offset::ZERO) {
            return Err(Error::BadParams(
                "search neighborhood must not contain the zero offset".into(),
            ));
        }
        Ok(PatchGeometry {
            patch,
            neighborhood,
        })
    }

    /// Square patch `[-patch_radius, patch_radius]²` compared against every
    /// patch centred in `[-search_radius, search_radius]² \ {0}`.
    pub fn square(patch_radius: usize, search_radius: usize) -> Result<Self> {
        if search_radius == 0 {
            return Err(Error::BadParams("search radius must be at least 1".into()));
        }
        Self::new(
            OffsetSet::square(patch_radius),
            OffsetSet::square_without_origin(search_radius),
        )
    }

    /// Anisotropic local TV expressed as a degenerate non-local geometry:
    /// single-pixel patches compared with the right and lower neighbours.
    pub fn local_tv() -> Self {
        PatchGeometry {
            patch: OffsetSet {
                offsets: vec![Offset::ZERO],
            },
            neighborhood: OffsetSet {
                offsets: vec![Offset::new(1, 0), Offset::new(0, 1)],
            },
        }
    }

    /// `|B|`, the number of pixels in a patch.
    pub fn patch_len(&self) -> usize {
        self.patch.len()
    }
}

impl Default for PatchGeometry {
    fn default() -> Self {
        PatchGeometry::square(1, 3).expect("default geometry is valid")
    }
}

/// A row-major `width × height` grid of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type ComplexImage = Grid<Complex64>;
pub type RealImage = Grid<f64>;

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadParams("grid dimensions must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::BadParams(format!(
                "expected {} samples for a {width}x{height} grid, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Sample at `(x + dx, y + dy)` with periodic wrap-around.
    pub fn get_wrapped(&self, x: usize, y: usize, o: Offset) -> T {
        let xs = wrap(x as i64 + o.dx, self.width);
        let ys = wrap(y as i64 + o.dy, self.height);
        self.data[ys * self.width + xs]
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Copy, V: Copy>(&self, other: &Grid<U>, mut f: impl FnMut(T, U) -> V) -> Grid<V> {
        assert_eq!(self.dims(), other.dims(), "grid dimensions differ");
        Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `out(x) = self(x + by)`, periodic.
    pub fn circular_shift(&self, by: Offset) -> Self {
        let (w, h) = self.dims();
        let xmap: Vec<usize> = (0..w).map(|x| wrap(x as i64 + by.dx, w)).collect();
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..h {
            let row = wrap(y as i64 + by.dy, h) * w;
            data.extend(xmap.iter().map(|&xs| self.data[row + xs]));
        }
        Grid {
            width: w,
            height: h,
            data,
        }
    }

    pub(crate) fn check_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: (other.width, other.height),
            });
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;
    fn index(&self, (x, y): (usize, usize)) -> &T {
        &self.data[y * self.width + x]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (x, y): (usize, usize)) -> &mut T {
        &mut self.data[y * self.width + x]
    }
}

impl ComplexImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid::filled(width, height, Complex64::new(0.0, 0.0))
    }

    pub fn from_real(real: &RealImage) -> Self {
        real.map(|v| Complex64::new(v, 0.0))
    }

    pub fn re(&self) -> RealImage {
        self.map(|z| z.re)
    }

    pub fn magnitude(&self) -> RealImage {
        self.map(|z| z.norm())
    }

    /// Squared Frobenius norm `Σ|f(x)|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl RealImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid::filled(width, height, 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

#[inline]
pub(crate) fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// Forward finite difference `out(x) = f(x) - f(x + q)` with periodic boundary.
pub fn shift_diff<T>(f: &Grid<T>, q: Offset) -> Grid<T>
where
    T: Copy + Sub<Output = T>,
{
    let (w, h) = f.dims();
    let xmap: Vec<usize> = (0..w).map(|x| wrap(x as i64 + q.dx, w)).collect();
    let mut data = Vec::with_capacity(f.len());
    for y in 0..h {
        let row = &f.data[y * w..(y + 1) * w];
        let src = wrap(y as i64 + q.dy, h) * w;
        data.extend(
            row.iter()
                .zip(&xmap)
                .map(|(&a, &xs)| a - f.data[src + xs]),
        );
    }
    Grid {
        width: w,
        height: h,
        data,
    }
}

/// Adjoint of [`shift_diff`]: `out(x) = g(x) - g(x - q)`.
pub fn shift_diff_adjoint<T>(g: &Grid<T>, q: Offset) -> Grid<T>
where
    T: Copy + Sub<Output = T>,
{
    shift_diff(g, -q)
}

/// Unnormalized periodic box sum `out(x) = Σ_{p ∈ B} g(x - p)`.
///
/// Rectangular `B` is summed separably, one axis at a time; any other shape
/// falls back to [`box_sum_filter_direct`].
pub fn box_sum_filter(g: &RealImage, patch: &OffsetSet) -> RealImage {
    let Some(((x0, x1), (y0, y1))) = patch.rectangle_bounds() else {
        return box_sum_filter_direct(g, patch);
    };
    let (w, h) = g.dims();

    // Along rows: tmp(x, y) = Σ_{px in x0..=x1} g(x - px, y)
    let mut tmp = vec![0.0; g.len()];
    for y in 0..h {
        let row = &g.data[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for px in x0..=x1 {
            let s = wrap(px, w);
            let (head, tail) = out.split_at_mut(s);
            for (o, &v) in tail.iter_mut().zip(&row[..w - s]) {
                *o += v;
            }
            for (o, &v) in head.iter_mut().zip(&row[w - s..]) {
                *o += v;
            }
        }
    }

    // Along columns: out(x, y) = Σ_{py in y0..=y1} tmp(x, y - py)
    let mut data = vec![0.0; g.len()];
    for y in 0..h {
        let out = &mut data[y * w..(y + 1) * w];
        for py in y0..=y1 {
            let src = &tmp[wrap(y as i64 - py, h) * w..][..w];
            for (o, &s) in out.iter_mut().zip(src) {
                *o += s;
            }
        }
    }
    Grid {
        width: w,
        height: h,
        data,
    }
}

/// Reference box sum by direct accumulation over every offset of `B`.
pub fn box_sum_filter_direct(g: &RealImage, patch: &OffsetSet) -> RealImage {
    let (w, h) = g.dims();
    let mut out = RealImage::zeros(w, h);
    for &p in patch {
        let shifted = g.circular_shift(-p);
        for (o, s) in out.data.iter_mut().zip(&shifted.data) {
            *o += s;
        }
    }
    out
}
