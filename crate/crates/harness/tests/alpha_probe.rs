//! Manual step-size probe (ignored by default): at which model learning rate
//! does the baseline destabilize and the loss-responsive weighting start to
//! pay off?

use feri_core::data::SynthSpec;
use feri_harness::config::{Arm, DataSource, ExperimentConfig};
use feri_harness::experiment::{execute, EvalSplit};
use feri_harness::report::mean_sd;

fn cell(name: &str, spec: SynthSpec, alpha: f64, beta: f64, seed: u64) {
    let mut config = ExperimentConfig {
        data: DataSource::Synth(spec),
        seed,
        ..ExperimentConfig::default()
    };
    config.hyper.model_lr = alpha;
    config.hyper.logit_lr = beta;

    let results = execute(&config, EvalSplit::Test).unwrap();
    let failed = results.outcomes.iter().filter(|o| o.failure.is_some()).count();
    if failed > 0 {
        println!("{name}: {failed}/10 failures");
        return;
    }
    let (bdp, beo) = results.fairness_values(Arm::Baseline);
    let (fdp, feo) = results.fairness_values(Arm::Feri);
    let (b_roc, _) = results.accuracy_values(Arm::Baseline);
    let (f_roc, _) = results.accuracy_values(Arm::Feri);

    let mut gap = [Vec::new(), Vec::new()];
    let mut spread = [Vec::new(), Vec::new()];
    for o in &results.outcomes {
        let arm = if o.arm == Arm::Baseline { 0 } else { 1 };
        let max_epoch = o.trace.iter().map(|r| r.epoch).max().unwrap();
        let mut l0_final = Vec::new();
        for e in max_epoch.saturating_sub(49)..=max_epoch {
            let l0 = o.trace.iter().find(|r| r.epoch == e && r.task == 0).unwrap().loss;
            let l1 = o.trace.iter().find(|r| r.epoch == e && r.task == 1).unwrap().loss;
            gap[arm].push((l0 - l1).abs());
            l0_final.push(l0);
        }
        spread[arm].push(mean_sd(&l0_final).1);
    }

    let eo_cut = (mean_sd(&beo).0 - mean_sd(&feo).0) / mean_sd(&beo).0 * 100.0;
    let dp_cut = (mean_sd(&bdp).0 - mean_sd(&fdp).0) / mean_sd(&bdp).0 * 100.0;
    println!(
        "{name}: eo {:.4}->{:.4} ({eo_cut:+.0}%) dp {:.4}->{:.4} ({dp_cut:+.0}%) | roc maj {:.3}->{:.3} min {:.3}->{:.3} | gap50 {:.3}->{:.3} | L0 sd {:.4}->{:.4}",
        mean_sd(&beo).0, mean_sd(&feo).0,
        mean_sd(&bdp).0, mean_sd(&fdp).0,
        mean_sd(&b_roc[0]).0, mean_sd(&f_roc[0]).0,
        mean_sd(&b_roc[1]).0, mean_sd(&f_roc[1]).0,
        mean_sd(&gap[0]).0, mean_sd(&gap[1]).0,
        mean_sd(&spread[0]).0, mean_sd(&spread[1]).0,
    );
}

#[test]
#[ignore]
fn alpha_sweep() {
    for alpha in [0.1, 0.2, 0.35, 0.5] {
        cell(
            &format!("default a={alpha}"),
            SynthSpec::default(),
            alpha,
            0.1,
            42,
        );
    }
}
