//! Closed-form routing error bounds and their Monte-Carlo verification.
//!
//! For in-distribution inputs the probability that the true adapter misses
//! the top-k scores is bounded by `(1/k) * sum_j exp(-B_ij)` with `B_ij` the
//! pairwise Bhattacharyya exponent. For out-of-distribution inputs drawn
//! from `q`, the probability that the KL-closest source misses the top-k is
//! bounded by a sum of Chernoff alpha-moments of the likelihood ratio, each
//! finite only when a weighted precision matrix stays positive-definite.

mod monte_carlo;

pub use monte_carlo::{
    monte_carlo_exclusion_rate, multi_k_exclusion_rates, ExclusionTruth, McResult, WilsonInterval,
};

use crate::numerics::{
    cholesky, log_det_from_cholesky, mahalanobis_sq, solve_lower, solve_lower_transpose,
    spd_inverse, Matrix, NumericsError, Vector,
};
use crate::task::GaussianTaskModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("matrix not positive-definite in {context}")]
    NotPositiveDefinite { context: String },
    #[error("index {index} out of range for {len} models")]
    InvalidIndex { index: usize, len: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("alpha {alpha} outside {range}")]
    InvalidAlpha { alpha: f64, range: &'static str },
    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { got: u64, min: u64 },
    #[error("need at least 2 models")]
    TooFewModels,
}

impl From<NumericsError> for TheoryError {
    fn from(e: NumericsError) -> Self {
        match e {
            NumericsError::NotPositiveDefinite { .. } => TheoryError::NotPositiveDefinite {
                context: "cholesky".into(),
            },
            other => TheoryError::DimensionMismatch {
                context: other.to_string(),
            },
        }
    }
}

/// A bound value carrying both the raw number (possibly above 1, possibly
/// infinite) and whether it is vacuous. Reports clamp at 1.0; the raw value
/// stays available for sweeps.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Bound {
    pub raw: f64,
    pub vacuous: bool,
}

impl Bound {
    pub fn reported(&self) -> f64 {
        if self.vacuous {
            1.0
        } else {
            self.raw.min(1.0)
        }
    }
}

fn check_same_dim(models: &[&GaussianTaskModel]) -> Result<usize, TheoryError> {
    let dim = models[0].dim();
    for m in models {
        if m.dim() != dim {
            return Err(TheoryError::DimensionMismatch {
                context: format!("model '{}' has dim {}, expected {dim}", m.lora_id, m.dim()),
            });
        }
    }
    Ok(dim)
}

/// Bhattacharyya exponent between two Gaussians:
/// `(1/8) dmu^T ((Si + Sj)/2)^{-1} dmu + (1/2) log(|(Si+Sj)/2| / sqrt(|Si||Sj|))`.
/// Nonnegative, symmetric, zero iff the Gaussians coincide.
pub fn bhattacharyya_exponent(
    a: &GaussianTaskModel,
    b: &GaussianTaskModel,
) -> Result<f64, TheoryError> {
    check_same_dim(&[a, b])?;
    let mid = a.sigma().add(b.sigma()).scale(0.5);
    let mid_chol = cholesky(&mid).map_err(|_| TheoryError::NotPositiveDefinite {
        context: "mean covariance (Si + Sj)/2".into(),
    })?;
    let maha = mahalanobis_sq(a.mu(), b.mu(), &mid_chol)?;
    let log_det_mid = log_det_from_cholesky(&mid_chol)?;
    let det_term = 0.5 * (log_det_mid - 0.5 * (a.log_det() + b.log_det()));
    Ok(0.125 * maha + det_term)
}

/// Pairwise Bayes error bound `exp(-B_ij)`, in (0, 1].
pub fn pairwise_bayes_bound(
    a: &GaussianTaskModel,
    b: &GaussianTaskModel,
) -> Result<f64, TheoryError> {
    Ok((-bhattacharyya_exponent(a, b)?).exp().min(1.0))
}

/// Prior-weighted variant `sqrt(pi_a pi_b) exp(-B)`. The scoring path does
/// not use priors; this is an auxiliary calculator.
pub fn prior_weighted_bayes_bound(
    a: &GaussianTaskModel,
    b: &GaussianTaskModel,
    prior_a: f64,
    prior_b: f64,
) -> Result<f64, TheoryError> {
    Ok((prior_a * prior_b).sqrt() * (-bhattacharyya_exponent(a, b)?).exp())
}

/// In-distribution top-k bound: probability that `target` misses the top-k
/// scores is at most `(1/k) * sum_{j != target} exp(-B_{target,j})`.
pub fn topk_id_bound(
    target: usize,
    models: &[GaussianTaskModel],
    k: usize,
) -> Result<Bound, TheoryError> {
    if target >= models.len() {
        return Err(TheoryError::InvalidIndex {
            index: target,
            len: models.len(),
        });
    }
    assert!(k >= 1, "k must be >= 1");
    let mut sum = 0.0;
    for (j, m) in models.iter().enumerate() {
        if j == target {
            continue;
        }
        sum += (-bhattacharyya_exponent(&models[target], m)?).exp();
    }
    Ok(Bound {
        raw: sum / k as f64,
        vacuous: false,
    })
}

/// Finite or infinite alpha-moment of the likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMoment {
    Finite(f64),
    /// The weighted precision matrix was not positive-definite, so the
    /// moment diverges.
    Infinite,
}

/// Closed form of `E_{z~q} [(p_j(z) / p_istar(z))^alpha]`:
/// `C_a |M_a|^{-1/2} exp(h_a^T M_a^{-1} h_a / 2 - K_a)` with
/// `M_a = Sq^{-1} + a Sj^{-1} - a Si*^{-1}`. Infinite whenever `M_a` is not
/// positive-definite.
pub fn alpha_moment(
    q: &GaussianTaskModel,
    pj: &GaussianTaskModel,
    pistar: &GaussianTaskModel,
    alpha: f64,
) -> Result<AlphaMoment, TheoryError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(TheoryError::InvalidAlpha {
            alpha,
            range: "(0, 1]",
        });
    }
    check_same_dim(&[q, pj, pistar])?;

    let prec_q = spd_inverse(q.chol());
    let prec_j = spd_inverse(pj.chol());
    let prec_s = spd_inverse(pistar.chol());

    // M_a = Sq^-1 + a Sj^-1 - a Si*^-1
    let m_alpha = prec_q.add(&prec_j.scale(alpha)).sub(&prec_s.scale(alpha));
    let m_chol = match cholesky(&m_alpha) {
        Ok(c) => c,
        Err(NumericsError::NotPositiveDefinite { .. }) => return Ok(AlphaMoment::Infinite),
        Err(e) => return Err(e.into()),
    };

    // h_a = Sq^-1 mu_q + a Sj^-1 mu_j - a Si*^-1 mu_i*
    let mut h = prec_q.matvec(q.mu());
    h.axpy(alpha, &prec_j.matvec(pj.mu()));
    h.axpy(-alpha, &prec_s.matvec(pistar.mu()));

    // K_a = mu_q^T Sq^-1 mu_q / 2 + (a/2)(mu_j^T Sj^-1 mu_j - mu_i*^T Si*^-1 mu_i*)
    let quad = |mu: &Vector, prec: &Matrix| mu.dot(&prec.matvec(mu));
    let k_alpha = 0.5 * quad(q.mu(), &prec_q)
        + 0.5 * alpha * (quad(pj.mu(), &prec_j) - quad(pistar.mu(), &prec_s));

    // log C_a = -(a/2) log|Sj| + (a/2) log|Si*| - (1/2) log|Sq|
    let log_c = -0.5 * alpha * pj.log_det() + 0.5 * alpha * pistar.log_det() - 0.5 * q.log_det();

    // h^T M^{-1} h via triangular solves.
    let y = solve_lower(&m_chol, &h);
    let x = solve_lower_transpose(&m_chol, &y);
    let h_quad = h.dot(&x);

    let log_det_m = log_det_from_cholesky(&m_chol)?;
    let log_moment = log_c - 0.5 * log_det_m + 0.5 * h_quad - k_alpha;
    Ok(AlphaMoment::Finite(log_moment.exp()))
}

/// Gaussian Chernoff alpha-coefficient
/// `rho_a(pa, pb) = |Sb|^{a/2} |Sa|^{(1-a)/2} / |a Sb + (1-a) Sa|^{1/2}
///   * exp(-(a(1-a)/2) dmu^T (a Sb + (1-a) Sa)^{-1} dmu)`.
pub fn chernoff_coefficient(
    pa: &GaussianTaskModel,
    pb: &GaussianTaskModel,
    alpha: f64,
) -> Result<f64, TheoryError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TheoryError::InvalidAlpha {
            alpha,
            range: "(0, 1)",
        });
    }
    check_same_dim(&[pa, pb])?;
    let mix = pb.sigma().scale(alpha).add(&pa.sigma().scale(1.0 - alpha));
    let mix_chol = cholesky(&mix).map_err(|_| TheoryError::NotPositiveDefinite {
        context: "covariance mixture".into(),
    })?;
    let maha = mahalanobis_sq(pb.mu(), pa.mu(), &mix_chol)?;
    let log_det_mix = log_det_from_cholesky(&mix_chol)?;
    let log_rho = 0.5 * alpha * pb.log_det() + 0.5 * (1.0 - alpha) * pa.log_det()
        - 0.5 * log_det_mix
        - 0.5 * alpha * (1.0 - alpha) * maha;
    Ok(log_rho.exp())
}

/// KL divergence between Gaussians,
/// `KL(q || p) = (tr(Sp^-1 Sq) + dmu^T Sp^-1 dmu - d + log|Sp|/|Sq|) / 2`.
pub fn gaussian_kl(q: &GaussianTaskModel, p: &GaussianTaskModel) -> Result<f64, TheoryError> {
    let dim = check_same_dim(&[q, p])? as f64;
    let prec_p = spd_inverse(p.chol());
    let mut trace = 0.0;
    for i in 0..prec_p.rows() {
        for j in 0..prec_p.cols() {
            trace += prec_p.get(i, j) * q.sigma().get(j, i);
        }
    }
    let maha = mahalanobis_sq(q.mu(), p.mu(), p.chol())?;
    Ok(0.5 * (trace + maha - dim + p.log_det() - q.log_det()))
}

/// Index of the source minimizing `KL(q || p_i)`; ties toward the lower
/// index.
pub fn closest_source(
    q: &GaussianTaskModel,
    sources: &[GaussianTaskModel],
) -> Result<usize, TheoryError> {
    if sources.is_empty() {
        return Err(TheoryError::TooFewModels);
    }
    let mut best = 0;
    let mut best_kl = f64::INFINITY;
    for (i, s) in sources.iter().enumerate() {
        let kl = gaussian_kl(q, s)?;
        if kl < best_kl {
            best_kl = kl;
            best = i;
        }
    }
    Ok(best)
}

/// Out-of-distribution scenario: an unknown input distribution `q` scored
/// against the pool's source Gaussians at a fixed Chernoff alpha.
#[derive(Debug, Clone)]
pub struct OodScenario {
    pub q: GaussianTaskModel,
    pub sources: Vec<GaussianTaskModel>,
    pub alpha: f64,
}

impl OodScenario {
    pub fn new(
        q: GaussianTaskModel,
        sources: Vec<GaussianTaskModel>,
        alpha: f64,
    ) -> Result<Self, TheoryError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(TheoryError::InvalidAlpha {
                alpha,
                range: "(0, 1]",
            });
        }
        if sources.len() < 2 {
            return Err(TheoryError::TooFewModels);
        }
        let mut refs: Vec<&GaussianTaskModel> = vec![&q];
        refs.extend(sources.iter());
        check_same_dim(&refs)?;
        Ok(Self { q, sources, alpha })
    }

    pub fn closest_source_index(&self) -> Result<usize, TheoryError> {
        closest_source(&self.q, &self.sources)
    }
}

/// Out-of-distribution top-k bound:
/// `(1/k) * sum_{j != i*} alpha_moment(q, p_j, p_i*, alpha)`, vacuous when
/// any term diverges.
pub fn topk_ood_bound(scenario: &OodScenario, k: usize) -> Result<(usize, Bound), TheoryError> {
    assert!(k >= 1, "k must be >= 1");
    let istar = scenario.closest_source_index()?;
    let pistar = &scenario.sources[istar];
    let mut sum = 0.0;
    for (j, pj) in scenario.sources.iter().enumerate() {
        if j == istar {
            continue;
        }
        match alpha_moment(&scenario.q, pj, pistar, scenario.alpha)? {
            AlphaMoment::Finite(v) => sum += v,
            AlphaMoment::Infinite => {
                return Ok((
                    istar,
                    Bound {
                        raw: f64::INFINITY,
                        vacuous: true,
                    },
                ))
            }
        }
    }
    Ok((
        istar,
        Bound {
            raw: sum / k as f64,
            vacuous: false,
        },
    ))
}

/// Random source Gaussians for bound experiments: SPD covariances around a
/// moderate conditioning, means spread by `mean_spread`.
pub fn random_sources(
    dim: usize,
    count: usize,
    mean_spread: f64,
    rng: &mut crate::numerics::RngStream,
) -> Vec<GaussianTaskModel> {
    (0..count)
        .map(|i| {
            let g = Matrix::from_vec(dim, dim, rng.standard_normal_vec(dim * dim));
            let mut sigma = g.matmul(&g.transpose()).scale(0.5 / dim as f64);
            for d in 0..dim {
                sigma.set(d, d, sigma.get(d, d) + 0.5);
            }
            let mu = Vector::from_vec(
                rng.standard_normal_vec(dim)
                    .iter()
                    .map(|v| v * mean_spread)
                    .collect(),
            );
            GaussianTaskModel::from_moments(format!("source-{i}"), mu, sigma, 0.0)
                .expect("construction is SPD")
        })
        .collect()
}

/// Result of sweeping the OOD bound across an alpha grid.
#[derive(Debug, Clone)]
pub struct OodSweep {
    pub closest_source: usize,
    /// (alpha, bound) per grid point.
    pub rows: Vec<(f64, Bound)>,
    /// (alpha, raw bound) of the tightest finite point, if any.
    pub min_finite: Option<(f64, f64)>,
}

/// Evaluate the OOD bound across an alpha grid, returning each result plus
/// the minimum finite bound if any alpha admits one.
pub fn ood_alpha_sweep(
    q: &GaussianTaskModel,
    sources: &[GaussianTaskModel],
    k: usize,
    alphas: &[f64],
) -> Result<OodSweep, TheoryError> {
    let mut rows = Vec::with_capacity(alphas.len());
    let mut min_finite: Option<(f64, f64)> = None;
    let mut closest_source = 0;
    for &alpha in alphas {
        let scenario = OodScenario::new(q.clone(), sources.to_vec(), alpha)?;
        let (i, bound) = topk_ood_bound(&scenario, k)?;
        closest_source = i;
        if !bound.vacuous {
            min_finite = match min_finite {
                Some((_, b)) if b <= bound.raw => min_finite,
                _ => Some((alpha, bound.raw)),
            };
        }
        rows.push((alpha, bound));
    }
    Ok(OodSweep {
        closest_source,
        rows,
        min_finite,
    })
}
