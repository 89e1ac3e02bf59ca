//! Per-adapter Gaussian task models and the embedding abstraction.
//!
//! Each adapter is represented by a Gaussian fitted to a handful of
//! instructed embeddings of its domain. An input's similarity to adapter `i`
//! is the dimension-normalized log-likelihood
//! `s_i = (1/d) * log N(z | mu_i, sigma_i)`.

use crate::numerics::{
    cholesky, hash_bytes, log_det_from_cholesky, mahalanobis_sq, Matrix, NumericsError, RngStream,
    Vector,
};
use crate::pool::{PoolError, PoolManifest};
use rand::RngCore;
use thiserror::Error;

/// Instruction prepended to inputs before embedding.
pub const DEFAULT_INSTRUCTION: &str = "Represent the sentence for similar task retrieval";

#[derive(Debug, Error)]
pub enum TaskModelError {
    #[error("need at least 2 samples to fit a covariance, got {got}")]
    TooFewSamples { got: usize },
    #[error("covariance irreparably singular (escalated lambda to {final_lambda:.3e})")]
    IrreparablySingular { final_lambda: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("no sample source for '{source_id}'")]
    MissingSampleSource { source_id: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Gaussian model of one adapter's task embeddings, with the Cholesky factor
/// and log-determinant cached for scoring.
#[derive(Debug, Clone)]
pub struct GaussianTaskModel {
    pub lora_id: String,
    mu: Vector,
    sigma: Matrix,
    chol: Matrix,
    log_det: f64,
    reg_lambda: f64,
}

impl GaussianTaskModel {
    /// Build directly from moments. `sigma` must already be SPD; no
    /// regularization is applied beyond recording `reg_lambda`.
    pub fn from_moments(
        lora_id: impl Into<String>,
        mu: Vector,
        sigma: Matrix,
        reg_lambda: f64,
    ) -> Result<Self, NumericsError> {
        if !sigma.is_square() || sigma.rows() != mu.dim() {
            return Err(NumericsError::DimensionMismatch {
                context: format!(
                    "mu dim {} vs sigma {}x{}",
                    mu.dim(),
                    sigma.rows(),
                    sigma.cols()
                ),
            });
        }
        let chol = cholesky(&sigma)?;
        let log_det = log_det_from_cholesky(&chol)?;
        Ok(Self {
            lora_id: lora_id.into(),
            mu,
            sigma,
            chol,
            log_det,
            reg_lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn chol(&self) -> &Matrix {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    /// Dimension-normalized Gaussian log-likelihood of `z`.
    pub fn score(&self, z: &Vector) -> Result<f64, TaskModelError> {
        if z.dim() != self.dim() {
            return Err(TaskModelError::DimensionMismatch {
                context: format!("z dim {} vs model dim {}", z.dim(), self.dim()),
            });
        }
        let d = self.dim() as f64;
        let maha = mahalanobis_sq(z, &self.mu, &self.chol)?;
        let log_p = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.log_det - 0.5 * maha;
        Ok(log_p / d)
    }

    /// Draw `z = mu + L xi` with `xi` standard normal.
    pub fn sample(&self, rng: &mut RngStream) -> Vector {
        let xi = Vector::from_vec(rng.standard_normal_vec(self.dim()));
        self.mu.add(&self.chol.matvec(&xi))
    }
}

fn reg_scale(trace: f64, dim: usize) -> f64 {
    if trace > 0.0 {
        trace / dim as f64
    } else {
        // Degenerate cloud with zero spread; fall back to an absolute scale.
        1e-5
    }
}

/// Fit mean and unbiased covariance (divisor m - 1), regularized as
/// `sigma = cov + lambda I`.
///
/// `reg_lambda = None` uses the default `1e-3 * trace(cov) / d`. If the
/// Cholesky fails at the given lambda, lambda escalates by x10 up to
/// `1e-2 * trace(cov) / d`, after which the fit errors.
pub fn fit_gaussian(
    lora_id: impl Into<String>,
    samples: &[Vector],
    reg_lambda: Option<f64>,
) -> Result<GaussianTaskModel, TaskModelError> {
    let m = samples.len();
    if m < 2 {
        return Err(TaskModelError::TooFewSamples { got: m });
    }
    let dim = samples[0].dim();
    if samples.iter().any(|s| s.dim() != dim) {
        return Err(TaskModelError::DimensionMismatch {
            context: "samples have mixed dimensions".into(),
        });
    }

    let mut mu = Vector::zeros(dim);
    for s in samples {
        mu.axpy(1.0, s);
    }
    let mu = mu.scale(1.0 / m as f64);

    let mut cov = Matrix::zeros(dim, dim);
    for s in samples {
        let c = s.sub(&mu);
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
    let cov = cov.scale(1.0 / (m as f64 - 1.0));

    let scale = reg_scale(cov.trace(), dim);
    let base = 1e-3 * scale;
    let cap = 1e-2 * scale;
    let mut lambda = reg_lambda.unwrap_or(base);
    let id = lora_id.into();
    loop {
        let mut sigma = cov.clone();
        for i in 0..dim {
            sigma.set(i, i, sigma.get(i, i) + lambda);
        }
        match GaussianTaskModel::from_moments(id.clone(), mu.clone(), sigma, lambda) {
            Ok(model) => return Ok(model),
            Err(NumericsError::NotPositiveDefinite { .. }) => {
                if lambda >= cap {
                    return Err(TaskModelError::IrreparablySingular {
                        final_lambda: lambda,
                    });
                }
                lambda = if lambda <= 0.0 {
                    base
                } else {
                    (lambda * 10.0).min(cap)
                };
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Source of instructed embeddings.
///
/// Implementations must be deterministic per `(instruction, input)` pair and
/// emit a fixed dimension.
pub trait EmbeddingProvider {
    fn embed_dim(&self) -> usize;

    /// Embed one instruction-prefixed input.
    fn embed(&self, instruction: &str, input: &str) -> Result<Vector, TaskModelError>;

    /// Produce `count` domain-specific input strings for the given source
    /// (an adapter id / task name), to fit its Gaussian from.
    fn sample_inputs(
        &self,
        source_id: &str,
        count: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<String>, TaskModelError>;
}

/// Desk-scale stand-in for a sentence encoder.
///
/// Each known task is itself a Gaussian over embedding space; an input
/// tagged `task#suffix` embeds as a draw from `N(mu_task,
/// noise_scale^2 * sigma_task)`, seeded by `(seed, instruction, input)` so
/// repeated calls agree bit-exactly. Tasks may be held out of the pool,
/// which gives an exact closest-source oracle for out-of-distribution
/// experiments.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    tasks: Vec<GaussianTaskModel>,
    noise_scale: f64,
    seed: u64,
}

impl SyntheticEmbedder {
    pub fn new(tasks: Vec<GaussianTaskModel>, noise_scale: f64, seed: u64) -> Self {
        assert!(noise_scale >= 0.0);
        Self {
            tasks,
            noise_scale,
            seed,
        }
    }

    pub fn tasks(&self) -> &[GaussianTaskModel] {
        &self.tasks
    }

    pub fn task(&self, name: &str) -> Option<&GaussianTaskModel> {
        self.tasks.iter().find(|t| t.lora_id == name)
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Task tag of an input string: everything before the first `#`.
    pub fn task_tag(input: &str) -> &str {
        input.split('#').next().unwrap_or(input)
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn embed_dim(&self) -> usize {
        self.tasks.first().map(|t| t.dim()).unwrap_or(0)
    }

    fn embed(&self, instruction: &str, input: &str) -> Result<Vector, TaskModelError> {
        let tag = Self::task_tag(input);
        let task = self
            .tasks
            .iter()
            .find(|t| t.lora_id == tag)
            .ok_or_else(|| TaskModelError::MissingSampleSource {
                source_id: tag.to_string(),
            })?;
        let mut key = Vec::with_capacity(instruction.len() + input.len() + 1);
        key.extend_from_slice(instruction.as_bytes());
        key.push(0x1f);
        key.extend_from_slice(input.as_bytes());
        let mut rng = RngStream::new(self.seed, hash_bytes(&key));
        let xi = Vector::from_vec(rng.standard_normal_vec(task.dim()));
        let spread = task.chol().matvec(&xi).scale(self.noise_scale);
        Ok(task.mu().add(&spread))
    }

    fn sample_inputs(
        &self,
        source_id: &str,
        count: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<String>, TaskModelError> {
        if self.task(source_id).is_none() {
            return Err(TaskModelError::MissingSampleSource {
                source_id: source_id.to_string(),
            });
        }
        Ok((0..count)
            .map(|_| format!("{source_id}#{:016x}", rng.next_u64()))
            .collect())
    }
}

/// Fit one Gaussian per adapter in the pool from exactly `m` instructed
/// embeddings each, returning an updated manifest.
///
/// `ridge_fraction = Some(f)` sets each adapter's regularization to
/// `f * trace(raw covariance) / d`, a scale-free ridge. With `m` barely
/// above the embedding dimension the raw covariance is near-singular and
/// out-of-sample likelihoods degenerate, so routing-quality fits want a
/// fraction well above the bare numerical default (`None`).
pub fn fit_pool_gaussians(
    pool: &PoolManifest,
    provider: &dyn EmbeddingProvider,
    m: usize,
    instruction: &str,
    ridge_fraction: Option<f64>,
    rng: &mut RngStream,
) -> Result<PoolManifest, TaskModelError> {
    let mut gaussians = Vec::with_capacity(pool.len());
    for (i, lora) in pool.loras.iter().enumerate() {
        let mut source_rng = rng.derive(i as u64);
        let inputs = provider.sample_inputs(&lora.id, m, &mut source_rng)?;
        let samples: Vec<Vector> = inputs
            .iter()
            .map(|inp| provider.embed(instruction, inp))
            .collect::<Result<_, _>>()?;
        let reg_lambda = ridge_fraction.map(|f| f * mean_sample_variance(&samples));
        gaussians.push(fit_gaussian(lora.id.clone(), &samples, reg_lambda)?);
    }
    let mut out = pool.clone();
    out.gaussians = Some(gaussians);
    Ok(out)
}

/// Mean per-dimension unbiased variance of a sample cloud,
/// `trace(raw covariance) / d`.
fn mean_sample_variance(samples: &[Vector]) -> f64 {
    let m = samples.len();
    if m < 2 {
        return 0.0;
    }
    let dim = samples[0].dim();
    let mut mu = Vector::zeros(dim);
    for s in samples {
        mu.axpy(1.0, s);
    }
    let mu = mu.scale(1.0 / m as f64);
    let mut acc = 0.0;
    for s in samples {
        let c = s.sub(&mu);
        acc += c.dot(&c);
    }
    acc / ((m - 1) as f64 * dim as f64)
}

/// Scores of `z` under every fitted Gaussian, in pool order.
pub fn pool_scores(pool: &PoolManifest, z: &Vector) -> Result<Vec<(String, f64)>, TaskModelError> {
    let gaussians = pool
        .gaussians
        .as_ref()
        .ok_or_else(|| TaskModelError::MissingSampleSource {
            source_id: "<pool has no fitted gaussians>".to_string(),
        })?;
    pool.loras
        .iter()
        .map(|l| {
            let g = gaussians
                .iter()
                .find(|g| g.lora_id == l.id)
                .ok_or_else(|| TaskModelError::MissingSampleSource {
                    source_id: l.id.clone(),
                })?;
            Ok((l.id.clone(), g.score(z)?))
        })
        .collect()
}

impl From<TaskModelError> for PoolError {
    fn from(e: TaskModelError) -> Self {
        PoolError::ParseError {
            context: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_fit_matches_hand_arithmetic() {
        // Samples (0,0) and (2,2): mu = (1,1), raw covariance [[2,2],[2,2]]
        // (divisor m-1 = 1), singular, so lambda escalation engages.
        let samples = vec![
            Vector::from_vec(vec![0.0, 0.0]),
            Vector::from_vec(vec![2.0, 2.0]),
        ];
        let model = fit_gaussian("t", &samples, Some(0.0)).unwrap();
        assert_eq!(model.mu().data(), &[1.0, 1.0]);
        assert!(model.reg_lambda() > 0.0, "escalation must have engaged");
        // sigma - lambda I equals the raw covariance.
        let raw = Matrix::from_vec(2, 2, vec![2.0, 2.0, 2.0, 2.0]);
        let mut recovered = model.sigma().clone();
        for i in 0..2 {
            recovered.set(i, i, recovered.get(i, i) - model.reg_lambda());
        }
        assert!(recovered.max_abs_diff(&raw) < 1e-12);
    }

    #[test]
    fn degenerate_cloud_becomes_lambda_identity() {
        let p = Vector::from_vec(vec![3.0, -1.0, 2.0]);
        let samples = vec![p.clone(), p.clone(), p.clone(), p];
        let model = fit_gaussian("t", &samples, Some(0.0)).unwrap();
        let lambda = model.reg_lambda();
        assert!(lambda > 0.0);
        assert!(
            model
                .sigma()
                .max_abs_diff(&Matrix::diag(&[lambda, lambda, lambda]))
                < 1e-15
        );
    }

    #[test]
    fn too_few_samples_rejected() {
        let samples = vec![Vector::zeros(2)];
        assert!(matches!(
            fit_gaussian("t", &samples, None),
            Err(TaskModelError::TooFewSamples { got: 1 })
        ));
    }

    #[test]
    fn moment_recovery_on_large_sample() {
        let mut rng = RngStream::new(5, 0);
        let m = 10_000;
        let samples: Vec<Vector> = (0..m)
            .map(|_| Vector::from_vec(vec![rng.standard_normal(), 2.0 * rng.standard_normal()]))
            .collect();
        let model = fit_gaussian("t", &samples, Some(0.0)).unwrap();
        // mu within 4 sigma / sqrt(m) of 0 per axis; diagonal within 5%.
        assert!(model.mu().get(0).abs() < 4.0 / (m as f64).sqrt());
        assert!(model.mu().get(1).abs() < 4.0 * 2.0 / (m as f64).sqrt());
        assert!((model.sigma().get(0, 0) - 1.0).abs() < 0.05);
        assert!((model.sigma().get(1, 1) - 4.0).abs() < 0.2);
    }

    #[test]
    fn score_standard_normal_at_mode() {
        let model =
            GaussianTaskModel::from_moments("t", Vector::zeros(1), Matrix::identity(1), 0.0)
                .unwrap();
        let s = model.score(&Vector::zeros(1)).unwrap();
        let expect = (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((s - expect).abs() < 1e-12, "{s} vs {expect}");
    }

    #[test]
    fn score_zero_when_density_is_one() {
        // sigma = (1/2pi) I in 2-D makes the density at the mode exactly 1,
        // so the normalized log-likelihood is 0.
        let two_pi = 2.0 * std::f64::consts::PI;
        let model = GaussianTaskModel::from_moments(
            "t",
            Vector::zeros(2),
            Matrix::diag(&[1.0 / two_pi, 1.0 / two_pi]),
            0.0,
        )
        .unwrap();
        let s = model.score(&Vector::zeros(2)).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn score_decreases_away_from_mean() {
        let mut rng = RngStream::new(6, 0);
        let g = Matrix::from_vec(3, 3, rng.standard_normal_vec(9));
        let mut sigma = g.matmul(&g.transpose());
        for i in 0..3 {
            sigma.set(i, i, sigma.get(i, i) + 3.0);
        }
        let model = GaussianTaskModel::from_moments("t", Vector::zeros(3), sigma, 0.0).unwrap();
        let dir = Vector::from_vec(vec![0.3, -0.5, 0.8]);
        let mut last = f64::INFINITY;
        for step in 0..6 {
            let z = dir.scale(step as f64);
            let s = model.score(&z).unwrap();
            assert!(s < last || step == 0);
            last = s;
        }
    }

    #[test]
    fn score_rotation_invariant() {
        let mut rng = RngStream::new(7, 0);
        let dim = 5;
        let g = Matrix::from_vec(dim, dim, rng.standard_normal_vec(dim * dim));
        let mut sigma = g.matmul(&g.transpose());
        for i in 0..dim {
            sigma.set(i, i, sigma.get(i, i) + (dim as f64));
        }
        let mu = Vector::from_vec(rng.standard_normal_vec(dim));
        let z = Vector::from_vec(rng.standard_normal_vec(dim));

        // Random rotation as a product of Givens rotations.
        let mut q = Matrix::identity(dim);
        for p in 0..dim {
            for r in (p + 1)..dim {
                let theta = rng.standard_normal();
                let (s, c) = theta.sin_cos();
                let mut giv = Matrix::identity(dim);
                giv.set(p, p, c);
                giv.set(r, r, c);
                giv.set(p, r, -s);
                giv.set(r, p, s);
                q = q.matmul(&giv);
            }
        }
        let rot_sigma = q.matmul(&sigma).matmul(&q.transpose());
        let rot_mu = q.matvec(&mu);
        let rot_z = q.matvec(&z);

        let m1 = GaussianTaskModel::from_moments("a", mu, sigma, 0.0).unwrap();
        let m2 = GaussianTaskModel::from_moments("b", rot_mu, rot_sigma, 0.0).unwrap();
        let s1 = m1.score(&z).unwrap();
        let s2 = m2.score(&rot_z).unwrap();
        assert!((s1 - s2).abs() < 1e-9, "{s1} vs {s2}");
    }

    #[test]
    fn density_integrates_to_one_on_grid() {
        // exp(d * score) is the density; check normalization by quadrature
        // on [mu - 6 sigma, mu + 6 sigma] per axis.
        for dim in [1usize, 2, 3] {
            let mut rng = RngStream::new(8 + dim as u64, 0);
            let g = Matrix::from_vec(dim, dim, rng.standard_normal_vec(dim * dim));
            let mut sigma = g.matmul(&g.transpose());
            for i in 0..dim {
                sigma.set(i, i, sigma.get(i, i) + 1.0 + dim as f64);
            }
            let mu = Vector::from_vec(rng.standard_normal_vec(dim));
            let model =
                GaussianTaskModel::from_moments("t", mu.clone(), sigma.clone(), 0.0).unwrap();

            let steps = match dim {
                1 => 4000,
                2 => 400,
                _ => 100,
            };
            let halfwidths: Vec<f64> = (0..dim).map(|i| 6.0 * sigma.get(i, i).sqrt()).collect();
            let hs: Vec<f64> = halfwidths.iter().map(|w| 2.0 * w / steps as f64).collect();
            let mut integral = 0.0;
            let mut idx = vec![0usize; dim];
            loop {
                let z = Vector::from_vec(
                    (0..dim)
                        .map(|i| mu.get(i) - halfwidths[i] + (idx[i] as f64 + 0.5) * hs[i])
                        .collect(),
                );
                let s = model.score(&z).unwrap();
                integral += (dim as f64 * s).exp() * hs.iter().product::<f64>();
                // Advance the multi-index.
                let mut carry = 0;
                loop {
                    idx[carry] += 1;
                    if idx[carry] < steps {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                    if carry == dim {
                        break;
                    }
                }
                if carry == dim {
                    break;
                }
            }
            assert!(
                (integral - 1.0).abs() < 0.01,
                "dim {dim}: integral = {integral}"
            );
        }
    }

    #[test]
    fn more_regularization_flattens_the_model() {
        // Inflating the covariance flattens the density: the peak score
        // drops and the quadratic penalty far out relaxes.
        let mut rng = RngStream::new(9, 0);
        let samples: Vec<Vector> = (0..30)
            .map(|_| Vector::from_vec(rng.standard_normal_vec(4)))
            .collect();
        let lambdas = [1e-4, 1e-3, 1e-2, 1e-1];
        let models: Vec<GaussianTaskModel> = lambdas
            .iter()
            .map(|&l| fit_gaussian("t", &samples, Some(l)).unwrap())
            .collect();
        let (max_eig, dir) =
            crate::numerics::symmetric_dominant_eigen(models[0].sigma(), 1e-12, 10_000);
        let far = models[0].mu().add(&dir.scale(10.0 * max_eig.sqrt()));
        for pair in models.windows(2) {
            let peak_lo = pair[0].score(pair[0].mu()).unwrap();
            let peak_hi = pair[1].score(pair[1].mu()).unwrap();
            assert!(
                peak_hi <= peak_lo,
                "peak must not sharpen with more shrinkage"
            );
            let maha_lo =
                crate::numerics::mahalanobis_sq(&far, pair[0].mu(), pair[0].chol()).unwrap();
            let maha_hi =
                crate::numerics::mahalanobis_sq(&far, pair[1].mu(), pair[1].chol()).unwrap();
            assert!(
                maha_hi <= maha_lo,
                "far-point penalty must relax with more shrinkage"
            );
        }
    }

    #[test]
    fn synthetic_embedder_is_deterministic_and_task_shaped() {
        let task = GaussianTaskModel::from_moments(
            "nli",
            Vector::from_vec(vec![1.0, 2.0]),
            Matrix::diag(&[0.04, 0.04]),
            0.0,
        )
        .unwrap();
        let emb = SyntheticEmbedder::new(vec![task], 1.0, 99);
        let a = emb.embed(DEFAULT_INSTRUCTION, "nli#7").unwrap();
        let b = emb.embed(DEFAULT_INSTRUCTION, "nli#7").unwrap();
        assert_eq!(a.data(), b.data());
        let c = emb.embed(DEFAULT_INSTRUCTION, "nli#8").unwrap();
        assert_ne!(a.data(), c.data());
        let d = emb.embed("another instruction", "nli#7").unwrap();
        assert_ne!(a.data(), d.data());
        assert!(emb.embed(DEFAULT_INSTRUCTION, "unknown#1").is_err());
    }

    #[test]
    fn fit_pool_gaussians_fits_each_from_m_samples() {
        use crate::pool::{synthesize_pool, PoolSpec};
        let spec = PoolSpec {
            num_loras: 2,
            model_dim: 8,
            num_layers: 1,
            ranks: vec![2],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(1, 0)).unwrap();
        let tasks: Vec<GaussianTaskModel> = pool
            .loras
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut mu = Vector::zeros(6);
                mu.data_mut()[i] = 2.0;
                GaussianTaskModel::from_moments(
                    l.id.clone(),
                    mu,
                    Matrix::identity(6).scale(0.01),
                    0.0,
                )
                .unwrap()
            })
            .collect();
        let emb = SyntheticEmbedder::new(tasks, 1.0, 3);
        let fitted = fit_pool_gaussians(
            &pool,
            &emb,
            20,
            DEFAULT_INSTRUCTION,
            None,
            &mut RngStream::new(4, 1),
        )
        .unwrap();
        let gs = fitted.gaussians.as_ref().unwrap();
        assert_eq!(gs.len(), 2);
        for g in gs {
            assert_eq!(g.dim(), 6);
            // Fitted mean lands near the task mean.
            let task_mu = emb.task(&g.lora_id).unwrap().mu();
            assert!(g.mu().sub(task_mu).norm() < 0.2);
        }
        // m = 1 propagates TooFewSamples.
        let err = fit_pool_gaussians(
            &pool,
            &emb,
            1,
            DEFAULT_INSTRUCTION,
            None,
            &mut RngStream::new(4, 1),
        );
        assert!(matches!(err, Err(TaskModelError::TooFewSamples { .. })));
        // Same seed, same serialized result.
        let again = fit_pool_gaussians(
            &pool,
            &emb,
            20,
            DEFAULT_INSTRUCTION,
            None,
            &mut RngStream::new(4, 1),
        )
        .unwrap();
        for (a, b) in gs.iter().zip(again.gaussians.as_ref().unwrap()) {
            assert_eq!(a.mu().data(), b.mu().data());
            assert_eq!(a.sigma().data(), b.sigma().data());
        }
    }
}
