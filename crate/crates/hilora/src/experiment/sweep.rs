//! Gamma ablation: the same experiment at several ROC-budget fractions.

use serde::Serialize;

use super::{cfg_err, run_experiment, ExperimentConfig, ExperimentError, Method};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub mean_mse: f64,
    pub mean_sum_allocated: f64,
}

/// Run the adaptive router once per gamma, sharing every seed, and report
/// mean MSE and mean granted budget per point. Duplicate gammas are dropped
/// with a warning.
pub fn gamma_sweep(
    config: &ExperimentConfig,
    gammas: &[f64],
) -> Result<(Vec<SweepRow>, Vec<String>), ExperimentError> {
    if gammas.is_empty() {
        return Err(cfg_err("sweep.gammas", "must be nonempty"));
    }
    let mut warnings = Vec::new();
    let mut unique: Vec<f64> = Vec::new();
    for &g in gammas {
        if !(g > 0.0 && g <= 1.0) {
            return Err(cfg_err("sweep.gammas", format!("gamma {g} outside (0, 1]")));
        }
        if unique.contains(&g) {
            warnings.push(format!("duplicate gamma {g} dropped"));
        } else {
            unique.push(g);
        }
    }

    let mut rows = Vec::with_capacity(unique.len());
    for gamma in unique {
        let mut cfg = config.clone();
        cfg.method = Method::Hilora;
        cfg.router.gamma = gamma;
        let (_, summary) = run_experiment(&cfg)?;
        rows.push(SweepRow {
            gamma,
            mean_mse: summary.mean_mse,
            mean_sum_allocated: summary.mean_sum_allocated,
        });
    }
    Ok((rows, warnings))
}

/// CSV table of the sweep.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("gamma,mean_mse,mean_sum_allocated\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.gamma, r.mean_mse, r.mean_sum_allocated
        ));
    }
    out
}
