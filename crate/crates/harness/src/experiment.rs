//! Cross-validated training runs: each (arm, fold) pair trains its own model
//! on the fold's train split, scores the held-out split, and reports
//! fairness and accuracy metrics. Pairs are independent and run through the
//! data-parallel map, with all rows sorted before writing so artifacts are
//! byte-identical regardless of scheduling.

use std::fs;
use std::path::Path;

use feri_core::data::{kfold_split, load_csv, synth_generate, Dataset, FoldIndices};
use feri_core::error::{Error, Result};
use feri_core::metrics::{auprc, auroc, fairness_report, FairnessReport, ScoredPredictions};
use feri_core::model::{init_params, score, ModelConfig, ModelParams, Sample};
use feri_core::opt::{train_epoch_baseline, train_epoch_feri, FeriState, TrainData};
use feri_core::parallel;

use crate::config::{Arm, DataSource, ExperimentConfig};
use crate::report::{fmt_float, fmt_percent, mean_sd, percent_reduction};

/// Decision threshold used to binarize scores for the fairness metrics.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Task-head hidden width; the final width-1 logit layer is implicit.
const HEAD_HIDDEN: [usize; 1] = [16];

// Tags expanding the master seed into independent stream seeds.
const SEED_DATA: u64 = 1;
const SEED_FOLDS: u64 = 2;
const SEED_INIT: u64 = 3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically expand a master seed with a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &tag in tags {
        state = splitmix64(state ^ tag);
    }
    state
}

/// Which split metrics are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Test,
    Validation,
}

/// One row of the loss/weight trajectory export.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub arm: Arm,
    pub fold: usize,
    pub epoch: usize,
    pub task: usize,
    pub loss: f64,
    pub weight: f64,
}

/// Metrics of one trained (arm, fold) pair on its evaluation split.
#[derive(Debug, Clone)]
pub struct FoldMetrics {
    pub fairness: FairnessReport,
    pub per_group_auroc: Vec<f64>,
    pub per_group_auprc: Vec<f64>,
    pub overall_auroc: f64,
    pub overall_auprc: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub arm: Arm,
    /// 1-based fold number, matching the reports.
    pub fold: usize,
    pub trace: Vec<TraceRow>,
    pub metrics: Option<FoldMetrics>,
    /// Populated when the arm diverged or a metric was undefined; the run
    /// records the failure and continues with the other pairs.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub outcomes: Vec<FoldOutcome>,
}

impl ExperimentResults {
    /// Fairness metric values of succeeded folds for one arm.
    pub fn fairness_values(&self, arm: Arm) -> (Vec<f64>, Vec<f64>) {
        let mut dp = Vec::new();
        let mut eo = Vec::new();
        for o in self.outcomes.iter().filter(|o| o.arm == arm) {
            if let Some(m) = &o.metrics {
                dp.push(m.fairness.demographic_parity);
                eo.push(m.fairness.equalized_odds);
            }
        }
        (dp, eo)
    }

    /// Per-group AUROC and AUPRC fold values for one arm, group-major.
    pub fn accuracy_values(&self, arm: Arm) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let groups = self.group_names.len();
        let mut roc = vec![Vec::new(); groups];
        let mut prc = vec![Vec::new(); groups];
        for o in self.outcomes.iter().filter(|o| o.arm == arm) {
            if let Some(m) = &o.metrics {
                for g in 0..groups {
                    roc[g].push(m.per_group_auroc[g]);
                    prc[g].push(m.per_group_auprc[g]);
                }
            }
        }
        (roc, prc)
    }
}

/// Materialize the dataset a config describes. Synthetic data draws its
/// generator seed from the master seed, so reruns and both arms see
/// identical data.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Synth(spec) => {
            let mut spec = spec.clone();
            spec.seed = derive_seed(config.seed, &[SEED_DATA]);
            synth_generate(&spec)
        }
        DataSource::Csv { path, columns } => load_csv(path, columns, &config.attribute),
    }
}

fn model_config(config: &ExperimentConfig, num_tasks: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: config.model.embed_dim,
        hidden: config.model.hidden.clone(),
        head_hidden: HEAD_HIDDEN.to_vec(),
        num_tasks,
    }
}

struct FoldWork<'a> {
    arm: Arm,
    fold_index: usize,
    indices: &'a FoldIndices,
}

/// Train and evaluate every (arm, fold) pair of the config. Pure with
/// respect to the filesystem; `run_experiment` adds the artifact writing.
pub fn execute(config: &ExperimentConfig, eval_split: EvalSplit) -> Result<ExperimentResults> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let plan = kfold_split(&dataset, config.k, derive_seed(config.seed, &[SEED_FOLDS]))?;

    let mut arms = config.arms.clone();
    arms.sort_unstable();
    arms.dedup();

    let work: Vec<FoldWork> = arms
        .iter()
        .flat_map(|&arm| {
            plan.folds
                .iter()
                .enumerate()
                .map(move |(fold_index, indices)| FoldWork {
                    arm,
                    fold_index,
                    indices,
                })
        })
        .collect();

    let outcomes = parallel::map_collect(&work, |w| {
        run_fold(config, &dataset, w, eval_split)
    });

    Ok(ExperimentResults {
        group_names: dataset.group_names.clone(),
        group_sizes: dataset.group_sizes(),
        outcomes,
    })
}

fn run_fold(
    config: &ExperimentConfig,
    dataset: &Dataset,
    work: &FoldWork,
    eval_split: EvalSplit,
) -> FoldOutcome {
    let fold = work.fold_index + 1;
    match train_and_evaluate(config, dataset, work, eval_split) {
        Ok((trace, metrics)) => FoldOutcome {
            arm: work.arm,
            fold,
            trace,
            metrics: Some(metrics),
            failure: None,
        },
        Err(e) => FoldOutcome {
            arm: work.arm,
            fold,
            trace: Vec::new(),
            metrics: None,
            failure: Some(e.to_string()),
        },
    }
}

fn train_and_evaluate(
    config: &ExperimentConfig,
    dataset: &Dataset,
    work: &FoldWork,
    eval_split: EvalSplit,
) -> Result<(Vec<TraceRow>, FoldMetrics)> {
    let num_tasks = dataset.num_tasks();
    let stats = feri_core::data::StandardStats::fit(dataset, &work.indices.train)?;
    let train_samples = stats.apply(dataset, &work.indices.train);
    let eval_indices = match eval_split {
        EvalSplit::Test => &work.indices.test,
        EvalSplit::Validation => &work.indices.validation,
    };
    let eval_samples = stats.apply(dataset, eval_indices);

    let data = TrainData::new(&train_samples, num_tasks)?;
    let init_seed = derive_seed(config.seed, &[SEED_INIT, work.fold_index as u64]);
    let mut params = init_params(
        &dataset.schema,
        &model_config(config, num_tasks),
        init_seed,
    )?;

    let mut trace = Vec::with_capacity(config.epochs * num_tasks);
    let mut push_rows = |epoch: usize, losses: &[f64], weights: &[f64]| {
        for task in 0..num_tasks {
            trace.push(TraceRow {
                arm: work.arm,
                fold: work.fold_index + 1,
                epoch,
                task,
                loss: losses[task],
                weight: weights[task],
            });
        }
    };

    match work.arm {
        Arm::Feri => {
            let mut state = FeriState::new(num_tasks, config.hyper)?;
            for epoch in 0..config.epochs {
                let result = train_epoch_feri(&mut params, &mut state, &data)?;
                push_rows(epoch, &result.losses_before, &result.weights_used);
            }
        }
        Arm::Baseline => {
            for epoch in 0..config.epochs {
                let result = train_epoch_baseline(
                    &mut params,
                    &data,
                    config.hyper.model_lr,
                    config.hyper.max_grad_norm,
                    epoch,
                )?;
                push_rows(epoch, &result.losses_before, &result.weights_used);
            }
        }
    }

    let metrics = evaluate(&params, &eval_samples, num_tasks)?;
    Ok((trace, metrics))
}

/// Score samples with their own group's head and compute every metric.
pub fn evaluate(
    params: &ModelParams,
    samples: &[Sample],
    num_tasks: usize,
) -> Result<FoldMetrics> {
    let scores = score(params, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let groups: Vec<usize> = samples.iter().map(|s| s.group).collect();
    let predictions = ScoredPredictions::new(
        scores.clone(),
        labels.clone(),
        groups.clone(),
        num_tasks,
        DECISION_THRESHOLD,
    )?;
    let fairness = fairness_report(&predictions)?;

    let mut per_group_auroc = Vec::with_capacity(num_tasks);
    let mut per_group_auprc = Vec::with_capacity(num_tasks);
    for g in 0..num_tasks {
        let member: Vec<usize> = (0..samples.len()).filter(|&i| groups[i] == g).collect();
        let g_scores: Vec<f64> = member.iter().map(|&i| scores[i]).collect();
        let g_labels: Vec<u8> = member.iter().map(|&i| labels[i]).collect();
        per_group_auroc.push(auroc(&g_scores, &g_labels)?);
        per_group_auprc.push(auprc(&g_scores, &g_labels)?);
    }
    Ok(FoldMetrics {
        fairness,
        per_group_auroc,
        per_group_auprc,
        overall_auroc: auroc(&scores, &labels)?,
        overall_auprc: auprc(&scores, &labels)?,
    })
}

/// Run the experiment on the test split and write `trace.csv`,
/// `results.csv` and `summary.txt` into the configured output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    let results = execute(config, EvalSplit::Test)?;
    fs::create_dir_all(&config.out_dir)?;

    let trace: Vec<TraceRow> = results
        .outcomes
        .iter()
        .flat_map(|o| o.trace.iter().cloned())
        .collect();
    export_trace(&trace, &config.out_dir.join("trace.csv"))?;
    write_results_csv(&results, &config.out_dir.join("results.csv"))?;
    fs::write(
        config.out_dir.join("summary.txt"),
        render_summary(config, &results),
    )?;
    Ok(results)
}

/// Write trajectory rows sorted by (arm, fold, epoch, task) with 9
/// significant digits per float.
pub fn export_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::InvalidArgument("trace export needs rows".into()));
    }
    let mut rows: Vec<&TraceRow> = trace.iter().collect();
    rows.sort_by_key(|r| (r.arm, r.fold, r.epoch, r.task));
    let mut out = String::from("arm,fold,epoch,task,loss,weight\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.arm.name(),
            r.fold,
            r.epoch,
            r.task,
            fmt_float(r.loss),
            fmt_float(r.weight)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse a trace file written by `export_trace`.
pub fn parse_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Csv {
                path: path.display().to_string(),
                detail: format!("line {}: expected 6 fields", line_no + 1),
            });
        }
        let bad = |what: &str| Error::Csv {
            path: path.display().to_string(),
            detail: format!("line {}: bad {what}", line_no + 1),
        };
        rows.push(TraceRow {
            arm: fields[0].parse().map_err(|_| bad("arm"))?,
            fold: fields[1].parse().map_err(|_| bad("fold"))?,
            epoch: fields[2].parse().map_err(|_| bad("epoch"))?,
            task: fields[3].parse().map_err(|_| bad("task"))?,
            loss: fields[4].parse().map_err(|_| bad("loss"))?,
            weight: fields[5].parse().map_err(|_| bad("weight"))?,
        });
    }
    Ok(rows)
}

/// results.csv layout: fairness rows (one per arm x fold), their mean/sd
/// rows, per-subgroup accuracy rows with mean/sd, failure rows, and a
/// percent-reduction row when both arms are present.
pub fn write_results_csv(results: &ExperimentResults, path: &Path) -> Result<()> {
    let mut out = String::from(
        "arm,fold,subgroup,demographic_parity,equalized_odds,auroc,auprc,status\n",
    );
    let mut arms: Vec<Arm> = results.outcomes.iter().map(|o| o.arm).collect();
    arms.sort_unstable();
    arms.dedup();

    for &arm in &arms {
        let mut outcomes: Vec<&FoldOutcome> =
            results.outcomes.iter().filter(|o| o.arm == arm).collect();
        outcomes.sort_by_key(|o| o.fold);
        for o in &outcomes {
            match (&o.metrics, &o.failure) {
                (Some(m), _) => {
                    out.push_str(&format!(
                        "{},{},,{},{},,,ok\n",
                        arm.name(),
                        o.fold,
                        fmt_float(m.fairness.demographic_parity),
                        fmt_float(m.fairness.equalized_odds),
                    ));
                }
                (None, Some(reason)) => {
                    out.push_str(&format!(
                        "{},{},,,,,,failed: {}\n",
                        arm.name(),
                        o.fold,
                        reason.replace(',', ";")
                    ));
                }
                (None, None) => {}
            }
        }
        let (dp, eo) = results.fairness_values(arm);
        if !dp.is_empty() {
            let (dp_mean, dp_sd) = mean_sd(&dp);
            let (eo_mean, eo_sd) = mean_sd(&eo);
            out.push_str(&format!(
                "{},mean,,{},{},,,ok\n",
                arm.name(),
                fmt_float(dp_mean),
                fmt_float(eo_mean)
            ));
            out.push_str(&format!(
                "{},sd,,{},{},,,ok\n",
                arm.name(),
                fmt_float(dp_sd),
                fmt_float(eo_sd)
            ));
        }
    }

    for &arm in &arms {
        let mut outcomes: Vec<&FoldOutcome> =
            results.outcomes.iter().filter(|o| o.arm == arm).collect();
        outcomes.sort_by_key(|o| o.fold);
        for o in &outcomes {
            if let Some(m) = &o.metrics {
                for (g, name) in results.group_names.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},,,{},{},ok\n",
                        arm.name(),
                        o.fold,
                        name,
                        fmt_float(m.per_group_auroc[g]),
                        fmt_float(m.per_group_auprc[g]),
                    ));
                }
            }
        }
        let (roc, prc) = results.accuracy_values(arm);
        for (g, name) in results.group_names.iter().enumerate() {
            if roc[g].is_empty() {
                continue;
            }
            let (roc_mean, roc_sd) = mean_sd(&roc[g]);
            let (prc_mean, prc_sd) = mean_sd(&prc[g]);
            out.push_str(&format!(
                "{},mean,{},,,{},{},ok\n",
                arm.name(),
                name,
                fmt_float(roc_mean),
                fmt_float(prc_mean)
            ));
            out.push_str(&format!(
                "{},sd,{},,,{},{},ok\n",
                arm.name(),
                name,
                fmt_float(roc_sd),
                fmt_float(prc_sd)
            ));
        }
    }

    if arms.contains(&Arm::Baseline) && arms.contains(&Arm::Feri) {
        let (base_dp, base_eo) = results.fairness_values(Arm::Baseline);
        let (feri_dp, feri_eo) = results.fairness_values(Arm::Feri);
        if !base_dp.is_empty() && !feri_dp.is_empty() {
            let dp_cut = percent_reduction(mean_sd(&base_dp).0, mean_sd(&feri_dp).0);
            let eo_cut = percent_reduction(mean_sd(&base_eo).0, mean_sd(&feri_eo).0);
            out.push_str(&format!(
                "reduction,,,{:.2},{:.2},,,ok\n",
                dp_cut, eo_cut
            ));
        }
    }

    fs::write(path, out)?;
    Ok(())
}

/// Human-readable run summary.
pub fn render_summary(config: &ExperimentConfig, results: &ExperimentResults) -> String {
    let mut out = String::new();
    out.push_str("experiment summary\n");
    out.push_str("==================\n");
    out.push_str(&format!(
        "attribute: {} (groups: {})\n",
        config.attribute,
        results.group_names.join(", ")
    ));
    let total: usize = results.group_sizes.iter().sum();
    let sizes: Vec<String> = results
        .group_names
        .iter()
        .zip(&results.group_sizes)
        .map(|(n, s)| format!("{n}: {s}"))
        .collect();
    out.push_str(&format!("samples: {total} ({})\n", sizes.join(", ")));
    let arm_names: Vec<&str> = {
        let mut arms: Vec<Arm> = results.outcomes.iter().map(|o| o.arm).collect();
        arms.sort_unstable();
        arms.dedup();
        arms.iter().map(|a| a.name()).collect()
    };
    out.push_str(&format!(
        "arms: {} | folds: {} | epochs: {} | seed: {}\n\n",
        arm_names.join(", "),
        config.k,
        config.epochs,
        config.seed
    ));

    let both = arm_names.len() == 2;
    out.push_str(&format!(
        "fairness on the evaluation split (threshold {DECISION_THRESHOLD})\n"
    ));
    out.push_str(&format!(
        "{:<22}{:<22}{:<22}{}\n",
        "metric", "baseline", "feri", "reduction"
    ));
    let fairness_line = |label: &str, base: &[f64], feri: &[f64], out: &mut String| {
        let cell = |vals: &[f64]| -> String {
            if vals.is_empty() {
                "-".to_string()
            } else {
                let (mean, sd) = mean_sd(vals);
                format!("{mean:.4} \u{b1} {sd:.4}")
            }
        };
        let reduction = if both && !base.is_empty() && !feri.is_empty() {
            fmt_percent(percent_reduction(
                mean_sd(base).0,
                mean_sd(feri).0,
            ))
        } else {
            "-".to_string()
        };
        out.push_str(&format!(
            "{label:<22}{:<22}{:<22}{reduction}\n",
            cell(base),
            cell(feri)
        ));
    };
    let (base_dp, base_eo) = results.fairness_values(Arm::Baseline);
    let (feri_dp, feri_eo) = results.fairness_values(Arm::Feri);
    fairness_line("demographic parity", &base_dp, &feri_dp, &mut out);
    fairness_line("equalized odds", &base_eo, &feri_eo, &mut out);

    out.push_str("\naccuracy per subgroup (mean over folds)\n");
    out.push_str(&format!(
        "{:<14}{:<8}{:<22}{:<22}{}\n",
        "subgroup", "metric", "baseline", "feri", "abs_diff"
    ));
    let (base_roc, base_prc) = results.accuracy_values(Arm::Baseline);
    let (feri_roc, feri_prc) = results.accuracy_values(Arm::Feri);
    for (g, name) in results.group_names.iter().enumerate() {
        for (metric, base, feri) in [
            ("auroc", &base_roc[g], &feri_roc[g]),
            ("auprc", &base_prc[g], &feri_prc[g]),
        ] {
            let cell = |vals: &Vec<f64>| -> String {
                if vals.is_empty() {
                    "-".to_string()
                } else {
                    let (mean, sd) = mean_sd(vals);
                    format!("{mean:.4} \u{b1} {sd:.4}")
                }
            };
            let diff = if !base.is_empty() && !feri.is_empty() {
                format!("{:.4}", (mean_sd(base).0 - mean_sd(feri).0).abs())
            } else {
                "-".to_string()
            };
            out.push_str(&format!(
                "{name:<14}{metric:<8}{:<22}{:<22}{diff}\n",
                cell(base),
                cell(feri)
            ));
        }
    }

    let failures: Vec<String> = results
        .outcomes
        .iter()
        .filter_map(|o| {
            o.failure
                .as_ref()
                .map(|f| format!("{} fold {}: {f}", o.arm.name(), o.fold))
        })
        .collect();
    if !failures.is_empty() {
        out.push_str("\nfailures\n");
        for f in failures {
            out.push_str(&format!("  {f}\n"));
        }
    }
    out
}
