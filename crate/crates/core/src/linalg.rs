//! Small dense helpers shared by the control and estimation code.
//!
//! Every matrix in this crate is at most a few dozen entries wide, so these
//! work on `DMatrix<f64>` and favour clarity over blocking.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Replaces `m` with `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Raises every eigenvalue of the symmetric matrix `m` to at least `floor`.
///
/// Returns the smallest eigenvalue seen before clamping.
pub fn clamp_eigenvalues(m: &mut DMatrix<f64>, floor: f64) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min < floor {
        let clamped = eig.eigenvalues.map(|v| v.max(floor));
        *m = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
        symmetrize(m);
    }
    min
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    // Eigen-decompose whichever Gram matrix is smaller.
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    gram.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0_f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// `‖A‖²_B = trace(Aᵀ B A)`.
pub fn weighted_sq_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (b * a).component_mul(a).sum()
}

/// `ln det(M)` for a symmetric positive-definite `M`.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("log-determinant argument"))?;
    Ok(2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>())
}

/// `M^{-1/2}` for a symmetric positive-definite `M`.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("inverse square root argument"));
    }
    let d = eig.eigenvalues.map(|v| v.sqrt().recip());
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Independent, reproducible random stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
