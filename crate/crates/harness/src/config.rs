//! Flat `key = value` configuration files for experiment runs.

use std::path::{Path, PathBuf};

use feri_core::data::{ColumnSpec, SynthSpec};
use feri_core::error::{Error, Result};
use feri_core::opt::FeriHyper;

/// Which optimizer drives a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Baseline,
    Feri,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Feri => "feri",
        }
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "baseline" => Ok(Arm::Baseline),
            "feri" => Ok(Arm::Feri),
            other => Err(Error::Config(format!("unknown arm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, columns: ColumnSpec },
    Synth(SynthSpec),
}

/// Model architecture settings exposed through the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            embed_dim: 8,
            hidden: vec![64, 32],
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub attribute: String,
    pub model: ModelSettings,
    pub hyper: FeriHyper,
    pub epochs: usize,
    pub k: usize,
    pub seed: u64,
    pub arms: Vec<Arm>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Synth(SynthSpec::default()),
            attribute: "group".into(),
            model: ModelSettings::default(),
            hyper: FeriHyper::default(),
            epochs: 300,
            k: 5,
            seed: 42,
            arms: vec![Arm::Baseline, Arm::Feri],
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parse `key = value` lines; `#` starts a comment; unknown keys are
    /// rejected so typos fail loudly.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let mut synth = SynthSpec::default();
        let mut source = String::from("synth");
        let mut csv_path: Option<PathBuf> = None;
        let mut categorical: Vec<String> = Vec::new();
        let mut continuous: Vec<String> = Vec::new();

        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let fail = |what: &str| {
                Error::Config(format!("line {}: bad {what} value {value:?}", line_no + 1))
            };

            match key {
                "data.source" => source = value.to_string(),
                "data.path" => csv_path = Some(PathBuf::from(value)),
                "data.categorical" => categorical = parse_list(value),
                "data.continuous" => continuous = parse_list(value),
                "attribute" => config.attribute = value.to_string(),
                "model.embed_dim" => {
                    config.model.embed_dim = value.parse().map_err(|_| fail("embed_dim"))?
                }
                "model.hidden" => {
                    config.model.hidden = parse_usizes(value).ok_or_else(|| fail("hidden"))?
                }
                "opt.alpha" => {
                    config.hyper.model_lr = value.parse().map_err(|_| fail("opt.alpha"))?
                }
                "opt.beta" => {
                    config.hyper.logit_lr = value.parse().map_err(|_| fail("opt.beta"))?
                }
                "opt.gamma" => {
                    config.hyper.logit_reg = value.parse().map_err(|_| fail("opt.gamma"))?
                }
                "opt.epsilon" => {
                    config.hyper.epsilon = value.parse().map_err(|_| fail("opt.epsilon"))?
                }
                "opt.max_grad_norm" => {
                    config.hyper.max_grad_norm =
                        value.parse().map_err(|_| fail("opt.max_grad_norm"))?
                }
                "train.epochs" => config.epochs = value.parse().map_err(|_| fail("epochs"))?,
                "cv.k" => config.k = value.parse().map_err(|_| fail("cv.k"))?,
                "seed" => config.seed = value.parse().map_err(|_| fail("seed"))?,
                "arms" => {
                    config.arms = parse_list(value)
                        .iter()
                        .map(|a| a.parse())
                        .collect::<Result<Vec<Arm>>>()?;
                }
                "out_dir" => config.out_dir = PathBuf::from(value),
                "synth.groups" => synth.group_names = parse_list(value),
                "synth.counts" => {
                    synth.counts = parse_usizes(value).ok_or_else(|| fail("synth.counts"))?
                }
                "synth.rates" => {
                    synth.pos_rates = parse_floats(value).ok_or_else(|| fail("synth.rates"))?
                }
                "synth.label_signal" => {
                    synth.label_signal =
                        parse_floats(value).ok_or_else(|| fail("synth.label_signal"))?
                }
                "synth.group_shift" => {
                    synth.group_shift =
                        parse_floats(value).ok_or_else(|| fail("synth.group_shift"))?
                }
                "synth.feature_scale" => {
                    synth.feature_scale =
                        parse_floats(value).ok_or_else(|| fail("synth.feature_scale"))?
                }
                "synth.cat_tilt" => {
                    synth.cat_tilt = parse_floats(value).ok_or_else(|| fail("synth.cat_tilt"))?
                }
                "synth.noise" => synth.noise = value.parse().map_err(|_| fail("synth.noise"))?,
                "synth.cat_features" => {
                    synth.num_cat = value.parse().map_err(|_| fail("synth.cat_features"))?
                }
                "synth.cont_features" => {
                    synth.num_cont = value.parse().map_err(|_| fail("synth.cont_features"))?
                }
                "synth.missing_rate" => {
                    synth.missing_rate = value.parse().map_err(|_| fail("synth.missing_rate"))?
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        line_no + 1
                    )))
                }
            }
        }

        config.data = match source.as_str() {
            "synth" => {
                synth.attribute_name = config.attribute.clone();
                DataSource::Synth(synth)
            }
            "csv" => {
                let path = csv_path
                    .ok_or_else(|| Error::Config("data.source = csv requires data.path".into()))?;
                DataSource::Csv {
                    path,
                    columns: ColumnSpec {
                        categorical,
                        continuous,
                    },
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "data.source must be synth or csv, got {other:?}"
                )))
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm must be selected".into()));
        }
        if self.k < 2 {
            return Err(Error::Config("cv.k must be >= 2".into()));
        }
        self.hyper.validate()?;
        if let DataSource::Csv { path, columns } = &self.data {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "data.path {} does not exist",
                    path.display()
                )));
            }
            if columns.categorical.is_empty() && columns.continuous.is_empty() {
                return Err(Error::Config(
                    "csv sources need data.categorical and/or data.continuous".into(),
                ));
            }
        }
        if let DataSource::Synth(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_usizes(value: &str) -> Option<Vec<usize>> {
    parse_list(value).iter().map(|s| s.parse().ok()).collect()
}

fn parse_floats(value: &str) -> Option<Vec<f64>> {
    parse_list(value).iter().map(|s| s.parse().ok()).collect()
}
