//! Manual benchmark-design probe (ignored by default): candidate generator
//! and hyperparameter settings, evaluated like the directional acceptance
//! criterion (multi-seed means) with per-group rate diagnostics.

use feri_core::data::SynthSpec;
use feri_harness::config::{Arm, DataSource, ExperimentConfig};
use feri_harness::experiment::{execute, EvalSplit};
use feri_harness::report::mean_sd;

struct CellResult {
    eo_cut: f64,
    dp_cut: f64,
    min_roc_delta: f64,
    maj_roc_delta: f64,
    gap_base: f64,
    gap_feri: f64,
}

fn cell(name: &str, spec: &SynthSpec, alpha: f64, beta: f64, seeds: std::ops::RangeInclusive<u64>) -> CellResult {
    let mut beo = Vec::new();
    let mut feo = Vec::new();
    let mut bdp = Vec::new();
    let mut fdp = Vec::new();
    let mut b_roc = [Vec::new(), Vec::new()];
    let mut f_roc = [Vec::new(), Vec::new()];
    let mut b_tpr = [Vec::new(), Vec::new()];
    let mut f_tpr = [Vec::new(), Vec::new()];
    let mut gap = [Vec::new(), Vec::new()];

    for seed in seeds {
        let mut config = ExperimentConfig {
            data: DataSource::Synth(spec.clone()),
            seed,
            ..ExperimentConfig::default()
        };
        config.hyper.model_lr = alpha;
        config.hyper.logit_lr = beta;
        let results = execute(&config, EvalSplit::Test).unwrap();
        for o in &results.outcomes {
            if let Some(f) = &o.failure {
                println!("{name}: FAILURE {f}");
                return CellResult {
                    eo_cut: f64::NAN,
                    dp_cut: f64::NAN,
                    min_roc_delta: f64::NAN,
                    maj_roc_delta: f64::NAN,
                    gap_base: f64::NAN,
                    gap_feri: f64::NAN,
                };
            }
            let m = o.metrics.as_ref().unwrap();
            let (eo, dp, roc, tpr) = (
                m.fairness.equalized_odds,
                m.fairness.demographic_parity,
                &m.per_group_auroc,
                &m.fairness.true_positive_rates,
            );
            let arm = o.arm;
            if arm == Arm::Baseline {
                beo.push(eo);
                bdp.push(dp);
                for g in 0..2 {
                    b_roc[g].push(roc[g]);
                    b_tpr[g].push(tpr[g]);
                }
            } else {
                feo.push(eo);
                fdp.push(dp);
                for g in 0..2 {
                    f_roc[g].push(roc[g]);
                    f_tpr[g].push(tpr[g]);
                }
            }
            let arm_idx = if arm == Arm::Baseline { 0 } else { 1 };
            let max_epoch = o.trace.iter().map(|r| r.epoch).max().unwrap();
            for e in max_epoch.saturating_sub(49)..=max_epoch {
                let l0 = o.trace.iter().find(|r| r.epoch == e && r.task == 0).unwrap().loss;
                let l1 = o.trace.iter().find(|r| r.epoch == e && r.task == 1).unwrap().loss;
                gap[arm_idx].push((l0 - l1).abs());
            }
        }
    }

    let eo_cut = (mean_sd(&beo).0 - mean_sd(&feo).0) / mean_sd(&beo).0 * 100.0;
    let dp_cut = (mean_sd(&bdp).0 - mean_sd(&fdp).0) / mean_sd(&bdp).0 * 100.0;
    let result = CellResult {
        eo_cut,
        dp_cut,
        min_roc_delta: mean_sd(&f_roc[1]).0 - mean_sd(&b_roc[1]).0,
        maj_roc_delta: mean_sd(&f_roc[0]).0 - mean_sd(&b_roc[0]).0,
        gap_base: mean_sd(&gap[0]).0,
        gap_feri: mean_sd(&gap[1]).0,
    };
    println!(
        "{name}: eo {:.4}->{:.4} ({:+.0}%) dp {:.4}->{:.4} ({:+.0}%) | droc maj {:+.3} min {:+.3} | tpr min {:.2}->{:.2} maj {:.2}->{:.2} | gap {:.3}->{:.3}",
        mean_sd(&beo).0, mean_sd(&feo).0, eo_cut,
        mean_sd(&bdp).0, mean_sd(&fdp).0, dp_cut,
        result.maj_roc_delta, result.min_roc_delta,
        mean_sd(&b_tpr[1]).0, mean_sd(&f_tpr[1]).0,
        mean_sd(&b_tpr[0]).0, mean_sd(&f_tpr[0]).0,
        result.gap_base, result.gap_feri,
    );
    result
}

#[test]
#[ignore]
fn design_candidates() {
    let d1 = SynthSpec {
        pos_rates: vec![0.45, 0.22],
        label_signal: vec![1.2, 1.2],
        feature_scale: vec![1.0, 0.5],
        group_shift: vec![0.0, 0.6],
        cat_tilt: vec![0.6, 0.3],
        ..SynthSpec::default()
    };
    cell("D1 rate+slow a=.05", &d1, 0.05, 0.1, 42..=42);
    cell("D2 rate+slow a=.2 ", &d1, 0.2, 0.1, 42..=42);
    let d3 = SynthSpec {
        pos_rates: vec![0.43, 0.25],
        label_signal: vec![1.4, 0.9],
        noise: 1.2,
        group_shift: vec![0.0, 0.8],
        ..SynthSpec::default()
    };
    cell("D3 rate+weak a=.2 ", &d3, 0.2, 0.1, 42..=42);
    cell("D4 default a=.2   ", &SynthSpec::default(), 0.2, 0.15, 43..=44);
    let d5 = SynthSpec {
        pos_rates: vec![0.48, 0.18],
        ..d1.clone()
    };
    cell("D5 strong-rate    ", &d5, 0.05, 0.1, 42..=42);
    cell("D5 strong-rate a.2", &d5, 0.2, 0.1, 42..=42);
}
