//! Preconditioned conjugate gradients for Hermitian positive (semi)definite
//! systems on complex images.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ComplexImage;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: ComplexImage,
    pub iterations: usize,
    /// `‖rhs − A x‖ / ‖rhs‖` at exit.
    pub relative_residual: f64,
}

#[inline]
fn dot(a: &ComplexImage, b: &ComplexImage) -> Complex64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

#[inline]
fn axpy(y: &mut ComplexImage, alpha: Complex64, x: &ComplexImage) {
    y.as_mut_slice()
        .iter_mut()
        .zip(x.as_slice())
        .for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Solves `A x = rhs` from `x0`, stopping after `max_iters` steps or once the
/// relative residual drops to `tol`. `on_iterate` sees every new iterate.
pub fn conjugate_gradient<A, M>(
    apply: A,
    precondition: M,
    rhs: &ComplexImage,
    x0: ComplexImage,
    max_iters: usize,
    tol: f64,
    mut on_iterate: impl FnMut(usize, &ComplexImage),
) -> Result<CgOutcome>
where
    A: Fn(&ComplexImage) -> ComplexImage,
    M: Fn(&ComplexImage) -> ComplexImage,
{
    let rhs_norm = rhs.norm();
    let mut x = x0;
    let ax = apply(&x);
    let mut r = rhs.zip_map(&ax, |b, a| b - a);
    let denom = if rhs_norm > 0.0 { rhs_norm } else { 1.0 };
    let mut rel = r.norm() / denom;
    if rel <= tol || max_iters == 0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: rel,
        });
    }
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    let mut iterations = 0;
    for k in 1..=max_iters {
        let ap = apply(&p);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 || !pap.is_finite() {
            if !pap.is_finite() {
                return Err(Error::NonFiniteIterate { iteration: k });
            }
            break;
        }
        let alpha = rz / pap;
        axpy(&mut x, Complex64::new(alpha, 0.0), &p);
        axpy(&mut r, Complex64::new(-alpha, 0.0), &ap);
        iterations = k;
        if !x.all_finite() {
            return Err(Error::NonFiniteIterate { iteration: k });
        }
        on_iterate(k, &x);
        rel = r.norm() / denom;
        if rel <= tol {
            break;
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.zip_map(&p, |zi, pi| zi + pi * beta);
    }
    Ok(CgOutcome {
        x,
        iterations,
        relative_residual: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_system() {
        let d = ComplexImage::from_fn(4, 3, |x, y| Complex64::new(1.0 + (x + 2 * y) as f64, 0.0));
        let rhs = ComplexImage::from_fn(4, 3, |x, y| Complex64::new(x as f64, -(y as f64)));
        let out = conjugate_gradient(
            |v| v.zip_map(&d, |a, b| a * b),
            |v| v.clone(),
            &rhs,
            ComplexImage::zeros(4, 3),
            100,
            1e-14,
            |_, _| {},
        )
        .unwrap();
        for ((x, r), dd) in out.x.as_slice().iter().zip(rhs.as_slice()).zip(d.as_slice()) {
            assert!((x * dd - r).norm() < 1e-10);
        }
    }

    #[test]
    fn exact_start_returns_immediately() {
        let rhs = ComplexImage::filled(3, 3, Complex64::new(2.0, 1.0));
        let out = conjugate_gradient(
            |v| v.scale(2.0),
            |v| v.clone(),
            &rhs,
            rhs.scale(0.5),
            10,
            1e-12,
            |_, _| panic!("no iterations expected"),
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, rhs.scale(0.5));
    }

    #[test]
    fn nan_operator_reports_error() {
        let rhs = ComplexImage::filled(2, 2, Complex64::new(1.0, 0.0));
        let res = conjugate_gradient(
            |v| v.map(|_| Complex64::new(f64::NAN, 0.0)),
            |v| v.clone(),
            &rhs,
            ComplexImage::zeros(2, 2),
            5,
            1e-12,
            |_, _| {},
        );
        assert!(matches!(res, Err(Error::NonFiniteIterate { .. })));
    }
}
