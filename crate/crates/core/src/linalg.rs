//! Small dense solvers shared by the learners and the stage estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition threshold of the diagonally scaled Gram matrix below
/// which a design is reported as singular.
const RCOND_SINGULAR: f64 = 1e-12;

/// Condition number of `gram` after scaling to unit diagonal. Infinite when a
/// diagonal entry is zero.
pub fn scaled_condition(gram: &DMatrix<f64>) -> f64 {
    let d = gram.nrows();
    let mut scale = DVector::zeros(d);
    for i in 0..d {
        let g = gram[(i, i)];
        if !(g > 0.0) || !g.is_finite() {
            return f64::INFINITY;
        }
        scale[i] = 1.0 / g.sqrt();
    }
    let mut c = gram.clone();
    for i in 0..d {
        for j in 0..d {
            c[(i, j)] *= scale[i] * scale[j];
        }
    }
    let eig = SymmetricEigen::new(c).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `gram * x = rhs` for a symmetric positive semidefinite `gram`.
///
/// Rejects numerically singular systems; otherwise Cholesky, retried with a
/// diagonal jitter of 1e-10 growing by 10x up to 1e-6 (relative to the mean
/// diagonal) when the factorization fails on round-off.
pub fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = scaled_condition(gram);
    if !(condition.is_finite()) || 1.0 / condition < RCOND_SINGULAR {
        return Err(Error::SingularDesign { condition });
    }
    solve_spd_unchecked(gram, rhs).ok_or(Error::SingularDesign { condition })
}

/// Cholesky with jitter escalation, without the condition screen. Used where
/// the system is regularized by construction.
pub fn solve_spd_unchecked(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = gram.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    let d = gram.nrows();
    let mean_diag = (0..d).map(|i| gram[(i, i)].abs()).sum::<f64>() / d.max(1) as f64;
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut jitter = 1e-10;
    while jitter <= 1e-6 * 1.000001 {
        let mut g = gram.clone();
        for i in 0..d {
            g[(i, i)] += jitter * base;
        }
        if let Some(ch) = g.cholesky() {
            return Some(ch.solve(rhs));
        }
        jitter *= 10.0;
    }
    None
}

/// Inverse of a symmetric positive definite matrix (singularity-checked).
pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let condition = scaled_condition(a);
    if !(condition.is_finite()) || 1.0 / condition < RCOND_SINGULAR {
        return Err(Error::SingularDesign { condition });
    }
    let inv = match a.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => a
            .clone()
            .try_inverse()
            .ok_or(Error::SingularDesign { condition })?,
    };
    debug_assert_eq!(inv.nrows(), d);
    Ok(symmetrize(&inv))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `Xᵀ diag(w) X` and `Xᵀ diag(w) y`, accumulated row by row.
pub fn weighted_normal_equations(
    x: &DMatrix<f64>,
    y: &[f64],
    w: Option<&[f64]>,
) -> (DMatrix<f64>, DVector<f64>) {
    let (n, d) = x.shape();
    let mut gram = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        let wi = w.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            continue;
        }
        for j in 0..d {
            row[j] = x[(i, j)];
        }
        for j in 0..d {
            let rj = wi * row[j];
            if rj == 0.0 {
                continue;
            }
            rhs[j] += rj * y[i];
            for k in j..d {
                gram[(j, k)] += rj * row[k];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[(j, k)] = gram[(k, j)];
        }
    }
    (gram, rhs)
}

/// Weighted least squares: argmin Σ wᵢ (yᵢ − xᵢᵀβ)².
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &[f64],
    w: Option<&[f64]>,
) -> Result<DVector<f64>> {
    let (gram, rhs) = weighted_normal_equations(x, y, w);
    solve_spd(&gram, &rhs)
}

/// Sum of outer products `Σ vᵢ vᵢᵀ` over the rows of `rows`.
pub fn outer_sum(rows: &DMatrix<f64>) -> DMatrix<f64> {
    rows.transpose() * rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_well_conditioned_system() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_spd(&g, &b).unwrap();
        assert_relative_eq!(x[0], 1.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 7.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_rank_deficient_gram() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let err = weighted_least_squares(&x, &[1.0, 2.0, 3.0], None).unwrap_err();
        assert!(matches!(err, Error::SingularDesign { .. }));
    }

    #[test]
    fn zero_column_is_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(weighted_least_squares(&x, &[1.0, 2.0, 3.0], None).is_err());
    }
}
