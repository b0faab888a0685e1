//! Small dense symmetric solvers for the normal equations of the parametric
//! learners. Matrices are row-major `p × p` slices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky
/// factorisation. A pivot below `rel_tol · max diag(A)` is reported as
/// [`Error::SingularDesign`].
pub fn cholesky_solve<F: Scalar>(a: &[F], b: &[F], rel_tol: F) -> Result<Vec<F>> {
    let p = b.len();
    assert_eq!(a.len(), p * p, "matrix must be p × p");
    let scale = (0..p)
        .map(|i| a[i * p + i].abs())
        .fold(F::zero(), |m, v| if v > m { v } else { m });
    if !(scale > F::zero()) || !scale.is_finite() {
        return Err(Error::SingularDesign);
    }
    let tol = rel_tol * scale;
    let mut l = vec![F::zero(); p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > tol) {
            return Err(Error::SingularDesign);
        }
        let d = d.sqrt();
        l[j * p + j] = d;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / d;
        }
    }
    // forward: L y = b
    let mut y = vec![F::zero(); p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    // backward: Lᵀ x = y
    let mut x = vec![F::zero(); p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    Ok(x)
}

/// Accumulates `Σ w zzᵀ` and `Σ w z y` over rows of a design matrix.
pub(crate) struct NormalEquations<F> {
    pub p: usize,
    pub gram: Vec<F>,
    pub rhs: Vec<F>,
}

impl<F: Scalar> NormalEquations<F> {
    pub fn new(p: usize) -> Self {
        NormalEquations {
            p,
            gram: vec![F::zero(); p * p],
            rhs: vec![F::zero(); p],
        }
    }

    #[inline]
    pub fn add(&mut self, z: &[F], w: F, y: F) {
        let p = self.p;
        for i in 0..p {
            let wz = w * z[i];
            self.rhs[i] += wz * y;
            for j in 0..=i {
                self.gram[i * p + j] += wz * z[j];
            }
        }
    }

    /// Mirrors the lower triangle and adds `ridge` to every diagonal entry
    /// except the first (intercept) one.
    pub fn finish(mut self, ridge: F) -> (Vec<F>, Vec<F>) {
        let p = self.p;
        for i in 0..p {
            for j in 0..i {
                self.gram[j * p + i] = self.gram[i * p + j];
            }
            if i > 0 {
                self.gram[i * p + i] += ridge;
            }
        }
        (self.gram, self.rhs)
    }
}
