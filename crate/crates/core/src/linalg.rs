//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CpcError, Result};

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Cholesky factorization that refuses non-symmetric or indefinite input.
pub fn spd_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(CpcError::NotPositiveDefinite(format!("{what} has non-finite entries")));
    }
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    if !is_symmetric(m, 1e-10 * scale) {
        return Err(CpcError::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    Cholesky::new(m.clone())
        .ok_or_else(|| CpcError::NotPositiveDefinite(format!("{what} is not positive-definite")))
}

/// log|M| from a Cholesky factor.
pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// xᵀ M⁻¹ x from a Cholesky factor of M.
pub fn chol_quad_form(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let l = chol.l();
    let y = l
        .solve_lower_triangular(x)
        .expect("cholesky factor has a positive diagonal");
    y.norm_squared()
}

/// Max-abs deviation of MᵀM from the identity.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let gram = m.transpose() * m;
    let n = m.nrows();
    (gram - DMatrix::<f64>::identity(n, n)).amax()
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign convention diag(R) > 0).
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn permutation_matrix(perm: &[usize]) -> Result<DMatrix<f64>> {
    validate_permutation(perm)?;
    let n = perm.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, &p) in perm.iter().enumerate() {
        m[(i, p)] = 1.0;
    }
    Ok(m)
}

pub fn validate_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(CpcError::InvalidInput(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Numerically stable log Σ exp(xᵢ). Returns −∞ for empty or all −∞ input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = rng_for(3, 0);
        for dim in [1, 2, 5, 9] {
            let q = random_orthogonal(dim, &mut rng);
            assert!(orthogonality_defect(&q) < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_cholesky(&indef, "m").is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]);
        assert!(spd_cholesky(&asym, "m").is_err());
        let spd = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = spd_cholesky(&spd, "m").unwrap();
        assert!((chol_logdet(&c) - (2.0f64 - 0.25).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(vec![f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(vec![0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(vec![1000.0, f64::NEG_INFINITY]) - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_validation() {
        assert!(validate_permutation(&[2, 0, 1]).is_ok());
        assert!(validate_permutation(&[0, 0, 1]).is_err());
        assert!(validate_permutation(&[0, 3]).is_err());
    }
}
