//! Two-component PCA by power iteration with deflation.
//!
//! Enough to reproduce scatter-plot analyses over small point clouds; not a
//! general eigensolver.

use super::{Matrix, NumericsError, Vector};

const PCA_TOL: f64 = 1e-10;
const PCA_MAX_ITERS: usize = 10_000;

/// Result of [`pca_2d`].
#[derive(Debug, Clone)]
pub struct Pca2d {
    /// (pc1, pc2) coordinates per input point, in input order.
    pub projections: Vec<(f64, f64)>,
    /// Fractions of total variance along the first and second component;
    /// each in [0, 1] and the first is >= the second.
    pub explained: (f64, f64),
}

/// Project centered points onto the top-2 eigenvectors of their sample
/// covariance.
pub fn pca_2d(points: &[Vector]) -> Result<Pca2d, NumericsError> {
    if points.len() < 2 {
        return Err(NumericsError::EmptyInput);
    }
    let dim = points[0].dim();
    if dim < 2 {
        return Err(NumericsError::DimensionMismatch {
            context: format!("pca_2d needs dim >= 2, got {dim}"),
        });
    }
    if points.iter().any(|p| p.dim() != dim) {
        return Err(NumericsError::DimensionMismatch {
            context: "pca_2d points have mixed dimensions".into(),
        });
    }

    let n = points.len();
    let mut mean = Vector::zeros(dim);
    for p in points {
        mean.axpy(1.0, p);
    }
    let mean = mean.scale(1.0 / n as f64);
    let centered: Vec<Vector> = points.iter().map(|p| p.sub(&mean)).collect();

    // Unbiased sample covariance.
    let mut cov = Matrix::zeros(dim, dim);
    for c in &centered {
        for i in 0..dim {
            let ci = c.get(i);
            if ci == 0.0 {
                continue;
            }
            for j in 0..dim {
                cov.set(i, j, cov.get(i, j) + ci * c.get(j));
            }
        }
    }
    let cov = cov.scale(1.0 / (n as f64 - 1.0));
    let total = cov.trace();
    if total <= 0.0 {
        return Err(NumericsError::DegenerateInput);
    }

    let (lambda1, v1) = power_iterate(&cov, None);
    // Deflate and repeat for the second component, keeping the iterate
    // pinned to the complement of v1.
    let mut deflated = cov.clone();
    for i in 0..dim {
        for j in 0..dim {
            deflated.set(i, j, deflated.get(i, j) - lambda1 * v1.get(i) * v1.get(j));
        }
    }
    let (lambda2, v2) = power_iterate(&deflated, Some(&v1));

    let lambda1 = lambda1.max(0.0);
    let lambda2 = lambda2.max(0.0).min(lambda1);
    let projections = centered.iter().map(|c| (c.dot(&v1), c.dot(&v2))).collect();
    Ok(Pca2d {
        projections,
        explained: (
            (lambda1 / total).clamp(0.0, 1.0),
            (lambda2 / total).clamp(0.0, 1.0),
        ),
    })
}

fn power_iterate(m: &Matrix, orth_against: Option<&Vector>) -> (f64, Vector) {
    let n = m.rows();
    let mut v = deterministic_start(n, 0);
    if let Some(u) = orth_against {
        v.axpy(-v.dot(u), u);
        if v.norm() < 1e-8 {
            // Fixed start happened to align with the first component; take
            // an independent one.
            v = deterministic_start(n, 1);
            v.axpy(-v.dot(u), u);
        }
    }
    let norm = v.norm();
    v = v.scale(1.0 / norm);
    let mut lambda = 0.0;
    for _ in 0..PCA_MAX_ITERS {
        let mut w = m.matvec(&v);
        if let Some(u) = orth_against {
            // Re-project each step so rounding cannot drift the iterate
            // back toward the deflated component.
            w.axpy(-w.dot(u), u);
        }
        let new_lambda = v.dot(&w);
        let w_norm = w.norm();
        if w_norm <= f64::MIN_POSITIVE {
            // Deflated matrix is numerically zero: no variance left.
            return (0.0, v);
        }
        let new_v = w.scale(1.0 / w_norm);
        // Converge on the iterate, not the Rayleigh quotient: the quotient
        // settles twice as fast and would stop while the vector is coarse.
        let converged = new_v.sub(&v).norm() <= PCA_TOL;
        v = new_v;
        lambda = new_lambda;
        if converged {
            break;
        }
    }
    (lambda, v)
}

/// Fixed pseudo-random start keeps the whole pipeline deterministic.
fn deterministic_start(n: usize, variant: u64) -> Vector {
    let phase = 1.2345 + variant as f64 * 0.7109;
    Vector::from_vec(
        (0..n)
            .map(|i| ((i as f64 + 1.0) * phase).sin() + 0.05)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn collinear_points_explain_everything_on_pc1() {
        let dirs = [0.0, 1.0, -1.5, 2.5, 3.0];
        let points: Vec<Vector> = dirs
            .iter()
            .map(|&t| Vector::from_vec(vec![t * 3.0, t * 4.0, 0.0]))
            .collect();
        let pca = pca_2d(&points).unwrap();
        assert!((pca.explained.0 - 1.0).abs() < 1e-9);
        assert!(pca.explained.1 < 1e-9);
    }

    #[test]
    fn isotropic_square_splits_evenly() {
        // Four points symmetric under 90-degree rotation in a plane.
        let points = vec![
            Vector::from_vec(vec![1.0, 0.0]),
            Vector::from_vec(vec![0.0, 1.0]),
            Vector::from_vec(vec![-1.0, 0.0]),
            Vector::from_vec(vec![0.0, -1.0]),
        ];
        let pca = pca_2d(&points).unwrap();
        assert!((pca.explained.0 - 0.5).abs() < 1e-9);
        assert!((pca.explained.1 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let points = vec![p.clone(), p.clone(), p];
        assert!(matches!(
            pca_2d(&points),
            Err(NumericsError::DegenerateInput)
        ));
    }

    /// Jacobi eigenvalue sweep: the dense eigendecomposition oracle.
    fn jacobi_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
        let n = m.rows();
        let mut a = m.clone();
        let mut v = Matrix::identity(n);
        for _ in 0..200 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.get(i, j).abs();
                }
            }
            if off < 1e-14 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (a.get(q, q) - a.get(p, p)) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let evals = (0..n).map(|i| a.get(i, i)).collect();
        (evals, v)
    }

    #[test]
    fn random_cloud_matches_eigendecomposition_oracle() {
        let dim = 10;
        let mut rng = RngStream::new(5, 0);
        // Anisotropic cloud so the top two components are well separated.
        let scales: Vec<f64> = (0..dim).map(|i| 3.0 / (1.0 + i as f64)).collect();
        let points: Vec<Vector> = (0..80)
            .map(|_| Vector::from_vec(scales.iter().map(|s| s * rng.standard_normal()).collect()))
            .collect();
        let pca = pca_2d(&points).unwrap();

        // Oracle: dense Jacobi eigendecomposition of the same covariance.
        let n = points.len();
        let mut mean = Vector::zeros(dim);
        for p in &points {
            mean.axpy(1.0, p);
        }
        let mean = mean.scale(1.0 / n as f64);
        let mut cov = Matrix::zeros(dim, dim);
        for p in &points {
            let c = p.sub(&mean);
            for i in 0..dim {
                for j in 0..dim {
                    cov.set(i, j, cov.get(i, j) + c.get(i) * c.get(j));
                }
            }
        }
        let cov = cov.scale(1.0 / (n as f64 - 1.0));
        let (evals, evecs) = jacobi_eigen(&cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| evals[b].partial_cmp(&evals[a]).unwrap());
        let v1 = Vector::from_vec((0..dim).map(|k| evecs.get(k, order[0])).collect());
        let v2 = Vector::from_vec((0..dim).map(|k| evecs.get(k, order[1])).collect());

        // Projections agree up to a global sign per component; resolve the
        // sign by correlating over all points.
        let mut corr1 = 0.0;
        let mut corr2 = 0.0;
        for (p, got) in points.iter().zip(&pca.projections) {
            let c = p.sub(&mean);
            corr1 += c.dot(&v1) * got.0;
            corr2 += c.dot(&v2) * got.1;
        }
        let sign1 = corr1.signum();
        let sign2 = corr2.signum();
        for (p, got) in points.iter().zip(&pca.projections) {
            let c = p.sub(&mean);
            assert!((sign1 * c.dot(&v1) - got.0).abs() < 1e-6);
            assert!((sign2 * c.dot(&v2) - got.1).abs() < 1e-6);
        }
        let total: f64 = evals.iter().sum();
        assert!((pca.explained.0 - evals[order[0]] / total).abs() < 1e-8);
        assert!((pca.explained.1 - evals[order[1]] / total).abs() < 1e-8);
    }
}
