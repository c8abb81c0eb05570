//! Command-line entry point for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use feri_core::data::{save_csv, synth_generate};
use feri_core::metrics::{auprc, auroc, fairness_report, ScoredPredictions};
use feri_harness::config::{DataSource, ExperimentConfig};
use feri_harness::experiment::{derive_seed, run_experiment};
use feri_harness::grid::{default_beta_grid, default_gamma_grid, grid_search, write_grid_csv};

#[derive(Parser)]
#[command(
    name = "feri",
    about = "Fairness-aware multitask training experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all configured arms with cross-validation and write reports.
    Run {
        /// Path to a `key = value` experiment config.
        config: PathBuf,
    },
    /// Grid-search the logit regularization and learning rate on the
    /// validation split.
    Grid {
        config: PathBuf,
        /// Comma-separated gamma values (defaults to the 1e-9..1e-2 decades).
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Vec<f64>,
        /// Comma-separated logit learning rates (defaults to 0.05..0.15).
        #[arg(long, value_delimiter = ',')]
        beta_grid: Vec<f64>,
    },
    /// Generate a synthetic dataset CSV (plus vocabulary sidecar).
    Synth {
        /// Config holding the synth.* keys and the master seed.
        spec_config: PathBuf,
        /// Output CSV path.
        out: PathBuf,
    },
    /// Compute fairness and accuracy metrics for a predictions file with
    /// header `score,label,group`.
    Metrics {
        predictions: PathBuf,
        /// Decision threshold for the fairness metrics.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    if let Ok(value) = std::env::var("FERI_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                feri_core::parallel::set_thread_cap(n);
            }
            _ => {
                eprintln!("error: FERI_THREADS must be a positive integer, got {value:?}");
                return ExitCode::FAILURE;
            }
        }
    }
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let config = ExperimentConfig::from_file(&config)
                .with_context(|| format!("loading config {}", config.display()))?;
            let results = run_experiment(&config)?;
            let failures = results.outcomes.iter().filter(|o| o.failure.is_some()).count();
            println!(
                "wrote trace.csv, results.csv and summary.txt to {}",
                config.out_dir.display()
            );
            if failures > 0 {
                bail!("{failures} of {} fold runs failed; see results.csv", results.outcomes.len());
            }
            Ok(())
        }
        Command::Grid {
            config,
            gamma_grid,
            beta_grid,
        } => {
            let config = ExperimentConfig::from_file(&config)
                .with_context(|| format!("loading config {}", config.display()))?;
            let gammas = if gamma_grid.is_empty() {
                default_gamma_grid()
            } else {
                gamma_grid
            };
            let betas = if beta_grid.is_empty() {
                default_beta_grid()
            } else {
                beta_grid
            };
            let outcomes = grid_search(&config, &gammas, &betas)?;
            std::fs::create_dir_all(&config.out_dir)?;
            let path = config.out_dir.join("grid.csv");
            write_grid_csv(&outcomes, &path)?;
            let best = outcomes.first().expect("nonempty grid");
            println!("wrote {} ({} points)", path.display(), outcomes.len());
            if best.failure.is_none() {
                println!(
                    "best: gamma={} beta={} equalized_odds={:.4} auroc={:.4}",
                    best.gamma, best.beta, best.equalized_odds, best.auroc
                );
            }
            Ok(())
        }
        Command::Synth { spec_config, out } => {
            let config = ExperimentConfig::from_file(&spec_config)
                .with_context(|| format!("loading config {}", spec_config.display()))?;
            let DataSource::Synth(mut spec) = config.data else {
                bail!("synth requires a config with data.source = synth");
            };
            spec.seed = derive_seed(config.seed, &[1]);
            let dataset = synth_generate(&spec)?;
            save_csv(&dataset, &out)?;
            println!(
                "wrote {} samples ({} groups) to {}",
                dataset.samples.len(),
                dataset.num_tasks(),
                out.display()
            );
            Ok(())
        }
        Command::Metrics {
            predictions,
            threshold,
        } => {
            let (scores, labels, groups, names) = read_predictions(&predictions)?;
            let preds = ScoredPredictions::new(scores.clone(), labels.clone(), groups.clone(), names.len(), threshold)?;
            let report = fairness_report(&preds)?;
            println!("samples: {} | groups: {}", scores.len(), names.join(", "));
            println!("demographic_parity: {:.6}", report.demographic_parity);
            println!("equalized_odds: {:.6}", report.equalized_odds);
            println!("auroc: {:.6}", auroc(&scores, &labels)?);
            println!("auprc: {:.6}", auprc(&scores, &labels)?);
            for (g, name) in names.iter().enumerate() {
                let member: Vec<usize> = (0..scores.len()).filter(|&i| groups[i] == g).collect();
                let s: Vec<f64> = member.iter().map(|&i| scores[i]).collect();
                let l: Vec<u8> = member.iter().map(|&i| labels[i]).collect();
                println!(
                    "group {name}: positive_rate={:.6} tpr={:.6} fpr={:.6} auroc={:.6} auprc={:.6}",
                    report.positive_rates[g],
                    report.true_positive_rates[g],
                    report.false_positive_rates[g],
                    auroc(&s, &l)?,
                    auprc(&s, &l)?,
                );
            }
            Ok(())
        }
    }
}

type Predictions = (Vec<f64>, Vec<u8>, Vec<usize>, Vec<String>);

/// Parse `score,label,group` rows; group names map to ids in order of first
/// appearance.
fn read_predictions(path: &std::path::Path) -> anyhow::Result<Predictions> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header != "score,label,group" {
        bail!("expected header `score,label,group`, got {header:?}");
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("line {}: expected 3 fields", idx + 1);
        }
        let score: f64 = fields[0]
            .trim()
            .parse()
            .with_context(|| format!("line {}: bad score", idx + 1))?;
        let label: u8 = match fields[1].trim() {
            "0" => 0,
            "1" => 1,
            other => bail!("line {}: label must be 0 or 1, got {other:?}", idx + 1),
        };
        let name = fields[2].trim();
        let group = match names.iter().position(|n| n == name) {
            Some(g) => g,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        scores.push(score);
        labels.push(label);
        groups.push(group);
    }
    if scores.is_empty() {
        bail!("no prediction rows in {}", path.display());
    }
    Ok((scores, labels, groups, names))
}
