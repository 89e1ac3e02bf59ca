//! Cholesky factorization and the solves built on it.

use super::{Matrix, NumericsError, Vector};

/// Relative pivot threshold below which a matrix is declared not SPD.
/// Distinguishes genuine singularity from rounding noise.
const PIVOT_REL_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `L * L^T = m`.
///
/// `m` must be square and symmetric; a pivot at or below
/// `1e-12 * max_diagonal` fails with [`NumericsError::NotPositiveDefinite`],
/// signalling the caller to regularize.
pub fn cholesky(m: &Matrix) -> Result<Matrix, NumericsError> {
    assert!(m.is_square(), "cholesky requires a square matrix");
    let n = m.rows();
    let max_diag = (0..n).map(|i| m.get(i, i)).fold(0.0_f64, f64::max);
    let threshold = PIVOT_REL_TOL * max_diag.max(0.0);

    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= threshold {
                    return Err(NumericsError::NotPositiveDefinite { row: i, pivot: sum });
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// `log det(L L^T) = 2 * sum(log L_kk)` for a lower-triangular factor.
pub fn log_det_from_cholesky(l: &Matrix) -> Result<f64, NumericsError> {
    assert!(l.is_square());
    let mut acc = 0.0;
    for i in 0..l.rows() {
        let d = l.get(i, i);
        if d <= 0.0 {
            return Err(NumericsError::NonPositiveDiagonal { row: i });
        }
        acc += d.ln();
    }
    Ok(2.0 * acc)
}

/// Solve `L y = b` (forward substitution).
pub fn solve_lower(l: &Matrix, b: &Vector) -> Vector {
    let n = l.rows();
    assert_eq!(b.dim(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b.get(i);
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    Vector::from_vec(y)
}

/// Solve `L^T x = y` (back substitution against the lower factor).
pub fn solve_lower_transpose(l: &Matrix, y: &Vector) -> Vector {
    let n = l.rows();
    assert_eq!(y.dim(), n);
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y.get(i);
        for k in (i + 1)..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    Vector::from_vec(x)
}

/// Squared Mahalanobis distance `(z - mu)^T Sigma^{-1} (z - mu)` given the
/// Cholesky factor of `Sigma`. Computed via one forward solve: with
/// `L y = (z - mu)`, the quadratic form equals `|y|^2`, which is nonnegative
/// by construction.
pub fn mahalanobis_sq(z: &Vector, mu: &Vector, chol: &Matrix) -> Result<f64, NumericsError> {
    if z.dim() != mu.dim() || z.dim() != chol.rows() {
        return Err(NumericsError::DimensionMismatch {
            context: format!(
                "mahalanobis_sq: z dim {}, mu dim {}, chol {}x{}",
                z.dim(),
                mu.dim(),
                chol.rows(),
                chol.cols()
            ),
        });
    }
    let diff = z.sub(mu);
    let y = solve_lower(chol, &diff);
    Ok(y.dot(&y))
}

/// Inverse of an SPD matrix given its Cholesky factor, by solving against
/// the identity columns. Returned matrix is symmetrized.
pub fn spd_inverse(chol: &Matrix) -> Matrix {
    let n = chol.rows();
    let mut inv = Matrix::zeros(n, n);
    for c in 0..n {
        let mut e = Vector::zeros(n);
        e.data_mut()[c] = 1.0;
        let y = solve_lower(chol, &e);
        let x = solve_lower_transpose(chol, &y);
        for r in 0..n {
            inv.set(r, c, x.get(r));
        }
    }
    // Symmetrize to wash out the column-by-column rounding skew.
    let mut sym = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            sym.set(r, c, 0.5 * (inv.get(r, c) + inv.get(c, r)));
        }
    }
    sym
}

/// Dominant eigenvalue/eigenvector of a symmetric matrix by power iteration.
///
/// Deterministic: starts from a fixed pseudo-random direction. Used for
/// covariance spectral radii; the full 2-component PCA lives in `pca`.
pub fn symmetric_dominant_eigen(m: &Matrix, tol: f64, max_iters: usize) -> (f64, Vector) {
    assert!(m.is_square());
    let n = m.rows();
    let mut v = Vector::from_vec(
        (0..n)
            .map(|i| ((i as f64 + 1.0) * 0.7391).sin() + 0.1)
            .collect(),
    );
    let norm = v.norm();
    v = v.scale(1.0 / norm);
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let w = m.matvec(&v);
        let new_lambda = v.dot(&w);
        let w_norm = w.norm();
        if w_norm == 0.0 {
            return (0.0, v);
        }
        let new_v = w.scale(1.0 / w_norm);
        let delta = (new_lambda - lambda).abs();
        v = new_v;
        lambda = new_lambda;
        if delta <= tol * lambda.abs().max(1.0) {
            break;
        }
    }
    (lambda, v)
}
