//! Steering matrices: the quantity every feedback scheme compresses.
//!
//! A steering matrix Q holds the `n_c` dominant right singular vectors of one
//! subcarrier's channel matrix. Throughout the crate Q is kept in a fixed
//! convention: orthonormal columns, and a real, non-negative last row. The
//! convention removes the per-column phase ambiguity of singular vectors, and
//! it is what lets the angle decomposition in `givens` use a fixed angle
//! count.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-6;
const LAST_ROW_IMAG_TOL: f64 = 1e-9;

/// An `n_r x n_c` matrix with orthonormal columns and a real non-negative
/// last row. `n_r` is the number of transmit antennas at the beamformer.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    q: DMatrix<Complex64>,
}

impl SteeringMatrix {
    /// Wrap a matrix, validating both invariants.
    pub fn from_matrix(q: DMatrix<Complex64>) -> Result<Self> {
        let m = SteeringMatrix { q };
        m.validate()?;
        Ok(m)
    }

    /// Internal constructor for matrices that satisfy the invariants by
    /// construction.
    pub(crate) fn new_unchecked(q: DMatrix<Complex64>) -> Self {
        SteeringMatrix { q }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.q
    }

    pub fn n_r(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_c(&self) -> usize {
        self.q.ncols()
    }

    /// Check orthonormality (`||Q^H Q - I||_F < 1e-6`) and the last-row
    /// convention (imaginary parts below 1e-9, real parts non-negative).
    pub fn validate(&self) -> Result<()> {
        let (n_r, n_c) = self.q.shape();
        if n_c == 0 || n_c > n_r {
            return Err(Error::precondition(format!(
                "steering matrix shape {n_r}x{n_c} is invalid"
            )));
        }
        let gram = self.q.adjoint() * &self.q;
        let eye = DMatrix::<Complex64>::identity(n_c, n_c);
        let dev = (gram - eye).norm();
        if !(dev < ORTHO_TOL) {
            return Err(Error::precondition(format!(
                "columns not orthonormal: ||Q^H Q - I|| = {dev:.3e}"
            )));
        }
        for j in 0..n_c {
            let last = self.q[(n_r - 1, j)];
            if last.im.abs() > LAST_ROW_IMAG_TOL {
                return Err(Error::precondition(format!(
                    "last-row entry of column {j} has imaginary part {:.3e}",
                    last.im
                )));
            }
            if last.re < 0.0 {
                return Err(Error::precondition(format!(
                    "last-row entry of column {j} is negative ({:.3e})",
                    last.re
                )));
            }
        }
        Ok(())
    }
}

/// Rotate each column's phase so the last row becomes real non-negative.
///
/// The input must already have orthonormal columns; the rotation never
/// changes column norms or inner-product magnitudes. A last-row entry whose
/// magnitude is below 1e-12 is treated as having phase zero, and the result
/// is exactly idempotent: columns already in convention are left untouched
/// bit for bit.
pub fn normalize_convention(q: &DMatrix<Complex64>) -> SteeringMatrix {
    let mut out = q.clone();
    let n_r = out.nrows();
    for j in 0..out.ncols() {
        let last = out[(n_r - 1, j)];
        if last.norm() < 1e-12 {
            continue;
        }
        let theta = last.arg();
        if theta == 0.0 {
            continue;
        }
        let rot = Complex64::from_polar(1.0, -theta);
        for r in 0..n_r {
            out[(r, j)] *= rot;
        }
        // pin the rotated entry exactly onto the real axis
        out[(n_r - 1, j)] = Complex64::new(last.norm(), 0.0);
    }
    SteeringMatrix::new_unchecked(out)
}

/// Dominant right singular vectors of `h`, in convention form.
///
/// Singular values are sorted descending before the first `n_c` vectors are
/// taken, so the steering matrix always spans the strongest directions.
pub fn compute_steering(h: &DMatrix<Complex64>, n_c: usize) -> Result<SteeringMatrix> {
    let max_c = h.nrows().min(h.ncols());
    if n_c == 0 || n_c > max_c {
        return Err(Error::config(format!(
            "cannot take {} columns from the SVD of a {}x{} matrix",
            n_c,
            h.nrows(),
            h.ncols()
        )));
    }
    let mut svd = h.clone().svd(true, true);
    svd.sort_by_singular_values();
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::config("SVD did not produce right singular vectors"))?;
    let v = v_t.adjoint(); // n_tx x min(n_rx, n_tx): columns are right singular vectors
    let q = v.columns(0, n_c).into_owned();
    let sm = normalize_convention(&q);
    sm.validate()
        .map_err(|e| Error::config(format!("SVD produced a degenerate basis: {e}")))?;
    Ok(sm)
}

/// Rebuild a valid steering matrix from a perturbed one (e.g. a cluster
/// centroid or a network output): normalize each column, orthogonalize
/// against the previous columns (classical Gram-Schmidt), then re-apply the
/// phase convention.
pub fn reorthonormalize(m: &DMatrix<Complex64>) -> Result<SteeringMatrix> {
    let (n_r, n_c) = m.shape();
    if n_c == 0 || n_c > n_r {
        return Err(Error::config(format!("cannot orthonormalize a {n_r}x{n_c} matrix")));
    }
    let mut out = m.clone();
    for j in 0..n_c {
        // per-column normalization first keeps the projections well scaled
        let norm = out.column(j).norm();
        if norm < 1e-12 {
            return Err(Error::precondition(format!(
                "column {j} is numerically zero, cannot orthonormalize"
            )));
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        for r in 0..n_r {
            out[(r, j)] *= inv;
        }
        for i in 0..j {
            let proj: Complex64 = (0..n_r).map(|r| out[(r, i)].conj() * out[(r, j)]).sum();
            for r in 0..n_r {
                let vi = out[(r, i)];
                out[(r, j)] -= proj * vi;
            }
        }
        let norm = out.column(j).norm();
        if norm < 1e-9 {
            return Err(Error::precondition(format!(
                "column {j} is linearly dependent on earlier columns"
            )));
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        for r in 0..n_r {
            out[(r, j)] *= inv;
        }
    }
    Ok(normalize_convention(&out))
}

/// Draw a Haar-like random steering matrix by orthonormalizing a complex
/// Gaussian matrix. Used for synthetic baselines and oracle tests.
pub fn random_orthonormal<R: Rng>(n_r: usize, n_c: usize, rng: &mut R) -> Result<SteeringMatrix> {
    use rand_distr::StandardNormal;
    let g = DMatrix::from_fn(n_r, n_c, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    reorthonormalize(&g)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand_distr::StandardNormal;

    /// i.i.d. CN(0,1) matrix for test channels.
    pub fn random_channel<R: Rng>(n_rx: usize, n_tx: usize, rng: &mut R) -> DMatrix<Complex64> {
        DMatrix::from_fn(n_rx, n_tx, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re / 2f64.sqrt(), im / 2f64.sqrt())
        })
    }
}
