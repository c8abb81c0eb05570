//! Hyperparameter grid search over the logit regularization and logit
//! learning rate, evaluated on the validation split.

use std::fs;
use std::path::Path;

use feri_core::error::{Error, Result};

use crate::config::{Arm, ExperimentConfig};
use crate::experiment::{execute, EvalSplit};
use crate::report::{fmt_float, mean_sd};

/// Default regularization grid: the searched decades.
pub fn default_gamma_grid() -> Vec<f64> {
    vec![1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2]
}

/// Default logit learning-rate grid, including the per-attribute picks.
pub fn default_beta_grid() -> Vec<f64> {
    vec![0.05, 0.08, 0.10, 0.11, 0.15]
}

/// Validation-split metrics of a single grid point, averaged over folds.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub gamma: f64,
    pub beta: f64,
    pub equalized_odds: f64,
    pub auroc: f64,
    pub demographic_parity: f64,
    pub auprc: f64,
    pub failure: Option<String>,
}

/// Run the dynamic-weighting arm at every (gamma, beta) grid point and rank
/// by (equalized odds ascending, AUROC descending), breaking ties toward the
/// smaller gamma then the smaller beta. Per-point failures are recorded and
/// ranked last; the search continues.
pub fn grid_search(
    config: &ExperimentConfig,
    gamma_grid: &[f64],
    beta_grid: &[f64],
) -> Result<Vec<GridOutcome>> {
    if gamma_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::InvalidArgument("grids must be nonempty".into()));
    }
    let mut outcomes = Vec::with_capacity(gamma_grid.len() * beta_grid.len());
    for &gamma in gamma_grid {
        for &beta in beta_grid {
            let mut point = config.clone();
            point.arms = vec![Arm::Feri];
            point.hyper.logit_reg = gamma;
            point.hyper.logit_lr = beta;
            outcomes.push(evaluate_point(&point, gamma, beta));
        }
    }
    outcomes.sort_by(|a, b| {
        let key = |o: &GridOutcome| {
            (
                o.failure.is_some(),
                ordered(o.equalized_odds),
                ordered(-o.auroc),
                ordered(o.gamma),
                ordered(o.beta),
            )
        };
        key(a).partial_cmp(&key(b)).expect("ordered keys")
    });
    Ok(outcomes)
}

/// Total-order wrapper for the ranking keys (failures carry NaN metrics).
fn ordered(x: f64) -> u64 {
    let bits = x.to_bits();
    if x.is_nan() {
        u64::MAX
    } else if bits >> 63 == 0 {
        bits | (1 << 63)
    } else {
        !bits
    }
}

fn evaluate_point(config: &ExperimentConfig, gamma: f64, beta: f64) -> GridOutcome {
    match execute(config, EvalSplit::Validation) {
        Ok(results) => {
            let (dp, eo) = results.fairness_values(Arm::Feri);
            let mut roc = Vec::new();
            let mut prc = Vec::new();
            for o in &results.outcomes {
                if let Some(m) = &o.metrics {
                    roc.push(m.overall_auroc);
                    prc.push(m.overall_auprc);
                }
            }
            if eo.is_empty() {
                let reason = results
                    .outcomes
                    .iter()
                    .find_map(|o| o.failure.clone())
                    .unwrap_or_else(|| "no fold succeeded".into());
                return GridOutcome {
                    gamma,
                    beta,
                    equalized_odds: f64::NAN,
                    auroc: f64::NAN,
                    demographic_parity: f64::NAN,
                    auprc: f64::NAN,
                    failure: Some(reason),
                };
            }
            GridOutcome {
                gamma,
                beta,
                equalized_odds: mean_sd(&eo).0,
                auroc: mean_sd(&roc).0,
                demographic_parity: mean_sd(&dp).0,
                auprc: mean_sd(&prc).0,
                failure: None,
            }
        }
        Err(e) => GridOutcome {
            gamma,
            beta,
            equalized_odds: f64::NAN,
            auroc: f64::NAN,
            demographic_parity: f64::NAN,
            auprc: f64::NAN,
            failure: Some(e.to_string()),
        },
    }
}

/// Write the ranked grid as CSV.
pub fn write_grid_csv(outcomes: &[GridOutcome], path: &Path) -> Result<()> {
    let mut out =
        String::from("rank,gamma,beta,equalized_odds,auroc,demographic_parity,auprc,status\n");
    for (rank, o) in outcomes.iter().enumerate() {
        let status = match &o.failure {
            Some(reason) => format!("failed: {}", reason.replace(',', ";")),
            None => "ok".to_string(),
        };
        let cell = |x: f64| if x.is_nan() { String::new() } else { fmt_float(x) };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            rank + 1,
            o.gamma,
            o.beta,
            cell(o.equalized_odds),
            cell(o.auroc),
            cell(o.demographic_parity),
            cell(o.auprc),
            status
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
