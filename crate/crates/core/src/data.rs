//! Dataset ingestion, the calibrated synthetic generator, stratified
//! cross-validation splits and train-split standardization.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{CatFeature, FeatureSchema, Sample};

/// A labeled tabular dataset partitioned into subgroups of one sensitive
/// attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    /// Name of the sensitive attribute column.
    pub attribute_name: String,
    /// One name per subgroup; the task count M is `group_names.len()`.
    pub group_names: Vec<String>,
    /// Per categorical feature: category strings by index (index 0 is the
    /// reserved missing slot).
    pub vocab: Vec<Vec<String>>,
}

impl Dataset {
    pub fn num_tasks(&self) -> usize {
        self.group_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let m = self.num_tasks();
        let mut seen = vec![false; m];
        for s in &self.samples {
            s.conforms(&self.schema, m)?;
            seen[s.group] = true;
        }
        if let Some(g) = seen.iter().position(|&ok| !ok) {
            return Err(Error::EmptyGroup {
                group: self.group_names[g].clone(),
            });
        }
        Ok(())
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_tasks()];
        for s in &self.samples {
            counts[s.group] += 1;
        }
        counts
    }
}

/// Parameters of the synthetic generator. Group-dependent mean offsets and
/// label-dependent signal strengths control how separable and how disparate
/// the subgroups are; label counts are hit exactly per group.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub group_names: Vec<String>,
    pub counts: Vec<usize>,
    /// Positive-label fraction per group, in (0, 1).
    pub pos_rates: Vec<f64>,
    /// Scale of the label-driven mean shift on continuous features, per
    /// group; 0 makes the features uninformative for that group.
    pub label_signal: Vec<f64>,
    /// Scale of the group-driven mean offset on continuous features.
    pub group_shift: Vec<f64>,
    /// Per-group multiplier on continuous signal and noise alike. Shrinking
    /// it keeps a group's classes equally separable while making its
    /// gradients, and therefore its training, proportionally slower.
    pub feature_scale: Vec<f64>,
    /// Strength of the label-driven tilt on category probabilities.
    pub cat_tilt: Vec<f64>,
    pub noise: f64,
    pub num_cat: usize,
    pub num_cont: usize,
    /// Probability that a categorical cell is missing (index 0).
    pub missing_rate: f64,
    pub attribute_name: String,
    pub seed: u64,
}

/// Fixed direction patterns cycled over the continuous features.
const SIGNAL_PATTERN: [f64; 6] = [1.0, -0.8, 0.6, -0.5, 0.4, -0.3];
const SHIFT_PATTERN: [f64; 6] = [0.5, 1.0, -0.5, 0.8, -1.0, 0.3];
/// Cardinalities cycled over the categorical features (missing slot included).
const CARDINALITY_PATTERN: [usize; 4] = [3, 4, 5, 6];

impl Default for SynthSpec {
    /// The two-group benchmark: 2000 samples split 80/20 with positive rates
    /// echoing the adult/pediatric graft-failure proportions, a weaker label
    /// signal and a shifted feature distribution in the minority group.
    fn default() -> Self {
        SynthSpec {
            group_names: vec!["majority".into(), "minority".into()],
            counts: vec![1600, 400],
            pos_rates: vec![0.4283, 0.3399],
            label_signal: vec![1.1, 0.55],
            group_shift: vec![0.0, 1.0],
            feature_scale: vec![1.0, 1.0],
            cat_tilt: vec![0.8, 0.4],
            noise: 1.0,
            num_cat: 6,
            num_cont: 6,
            missing_rate: 0.02,
            attribute_name: "group".into(),
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_groups();
        if m == 0 {
            return Err(Error::Config("at least one group is required".into()));
        }
        for field in [
            self.counts.len(),
            self.pos_rates.len(),
            self.label_signal.len(),
            self.group_shift.len(),
            self.feature_scale.len(),
            self.cat_tilt.len(),
        ] {
            if field != m {
                return Err(Error::Config(
                    "per-group spec vectors must all match the group count".into(),
                ));
            }
        }
        if self.counts.iter().any(|&c| c < 1) {
            return Err(Error::Config("group counts must be >= 1".into()));
        }
        if self.pos_rates.iter().any(|&r| !(0.0 < r && r < 1.0)) {
            return Err(Error::Config("positive rates must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must lie in [0, 1]".into()));
        }
        if self.noise < 0.0 {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if self.num_cont == 0 && self.num_cat == 0 {
            return Err(Error::Config("at least one feature is required".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            categorical: (0..self.num_cat)
                .map(|j| CatFeature {
                    name: format!("cat{j}"),
                    cardinality: CARDINALITY_PATTERN[j % CARDINALITY_PATTERN.len()],
                })
                .collect(),
            continuous: (0..self.num_cont).map(|j| format!("cont{j}")).collect(),
        }
    }
}

/// Deterministically generate a dataset from the spec. Per-group positive
/// counts are exact (rounded), so empirical label rates track the spec.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let schema = spec.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::with_capacity(spec.counts.iter().sum());

    for g in 0..spec.num_groups() {
        let n = spec.counts[g];
        let n_pos = ((n as f64) * spec.pos_rates[g]).round() as usize;
        let mut labels = vec![0u8; n];
        for y in labels.iter_mut().take(n_pos) {
            *y = 1;
        }
        labels.shuffle(&mut rng);

        for &label in &labels {
            let direction = if label == 1 { 0.5 } else { -0.5 };
            let cont: Vec<f64> = (0..spec.num_cont)
                .map(|j| {
                    let signal = spec.label_signal[g] * SIGNAL_PATTERN[j % SIGNAL_PATTERN.len()];
                    let offset = spec.group_shift[g] * SHIFT_PATTERN[j % SHIFT_PATTERN.len()];
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    offset + spec.feature_scale[g] * (signal * direction + spec.noise * noise)
                })
                .collect();
            let cat: Vec<usize> = schema
                .categorical
                .iter()
                .map(|feature| {
                    if spec.missing_rate > 0.0 && rng.gen::<f64>() < spec.missing_rate {
                        return 0;
                    }
                    sample_tilted_category(
                        feature.cardinality,
                        spec.cat_tilt[g] * direction,
                        &mut rng,
                    )
                })
                .collect();
            samples.push(Sample {
                cat,
                cont,
                label,
                group: g,
            });
        }
    }

    let vocab = default_vocab(&schema);
    let dataset = Dataset {
        schema,
        samples,
        attribute_name: spec.attribute_name.clone(),
        group_names: spec.group_names.clone(),
        vocab,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Draw an index in 1..cardinality with probabilities tilted exponentially
/// along the category axis; `tilt` 0 is uniform.
fn sample_tilted_category(cardinality: usize, tilt: f64, rng: &mut ChaCha8Rng) -> usize {
    let k = cardinality - 1;
    let weights: Vec<f64> = (0..k)
        .map(|i| {
            let axis = if k > 1 {
                i as f64 / (k - 1) as f64 - 0.5
            } else {
                0.0
            };
            (tilt * axis * 2.0).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return i + 1;
        }
    }
    k
}

fn default_vocab(schema: &FeatureSchema) -> Vec<Vec<String>> {
    schema
        .categorical
        .iter()
        .map(|f| {
            let mut names = vec![String::new()];
            names.extend((1..f.cardinality).map(|i| format!("c{i}")));
            names
        })
        .collect()
}

/// Stratified cross-validation plan: per fold, disjoint train/validation/
/// test index sets in roughly 60/20/20 proportion, with the k test
/// partitions tiling the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: Vec<FoldIndices>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split into `k` stratified folds. Strata are (group, label) cells; each
/// must hold at least `k` samples. Within a fold the remaining 4/5 of every
/// stratum is split 3:1 into train and validation.
pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be >= 2".into()));
    }
    let mut strata: HashMap<(usize, u8), Vec<usize>> = HashMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        strata.entry((s.group, s.label)).or_default().push(i);
    }
    let mut keys: Vec<(usize, u8)> = strata.keys().copied().collect();
    keys.sort_unstable();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![FoldIndices::default(); k];
    for key in keys {
        let indices = strata.get_mut(&key).expect("key from map");
        if indices.len() < k {
            return Err(Error::StratumTooSmall {
                group: key.0,
                label: key.1,
                count: indices.len(),
                needed: k,
            });
        }
        indices.shuffle(&mut rng);
        // chunk boundaries spread the remainder over the first chunks
        let bounds: Vec<usize> = (0..=k)
            .map(|f| f * indices.len() / k)
            .collect();
        for fold in 0..k {
            let test = &indices[bounds[fold]..bounds[fold + 1]];
            // remaining chunks in cyclic order after the test chunk
            let mut rest = Vec::with_capacity(indices.len() - test.len());
            for offset in 1..k {
                let c = (fold + offset) % k;
                rest.extend_from_slice(&indices[bounds[c]..bounds[c + 1]]);
            }
            let train_len = (rest.len() * 3 + 2) / 4; // round to nearest of 3/4
            folds[fold].train.extend_from_slice(&rest[..train_len]);
            folds[fold].validation.extend_from_slice(&rest[train_len..]);
            folds[fold].test.extend_from_slice(test);
        }
    }
    for fold in &mut folds {
        fold.train.sort_unstable();
        fold.validation.sort_unstable();
        fold.test.sort_unstable();
    }
    Ok(FoldPlan { folds })
}

/// Mean and standard deviation of each continuous feature over one index
/// set, used to standardize every split without leaking information.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Threshold below which a feature is treated as constant and only centered.
const STD_FLOOR: f64 = 1e-12;

impl StandardStats {
    /// Population mean/std computed over `indices` only.
    pub fn fit(dataset: &Dataset, indices: &[usize]) -> Result<StandardStats> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument(
                "standardization needs a nonempty index set".into(),
            ));
        }
        let d = dataset.schema.num_continuous();
        let n = indices.len() as f64;
        let mut means = vec![0.0; d];
        for &i in indices {
            for (m, &x) in means.iter_mut().zip(&dataset.samples[i].cont) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for &i in indices {
            for j in 0..d {
                let dx = dataset.samples[i].cont[j] - means[j];
                vars[j] += dx * dx;
            }
        }
        let stds = vars.iter().map(|v| (v / n).sqrt()).collect();
        Ok(StandardStats { means, stds })
    }

    pub fn apply_to_sample(&self, sample: &Sample) -> Sample {
        let cont = sample
            .cont
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| if s < STD_FLOOR { x - m } else { (x - m) / s })
            .collect();
        Sample {
            cont,
            ..sample.clone()
        }
    }

    /// Standardized copies of the samples at `indices`, in order.
    pub fn apply(&self, dataset: &Dataset, indices: &[usize]) -> Vec<Sample> {
        indices
            .iter()
            .map(|&i| self.apply_to_sample(&dataset.samples[i]))
            .collect()
    }
}

/// Standardize every sample of a dataset with stats fitted on the given
/// train indices.
pub fn standardize(dataset: &Dataset, train_indices: &[usize]) -> Result<(Dataset, StandardStats)> {
    let stats = StandardStats::fit(dataset, train_indices)?;
    let all: Vec<usize> = (0..dataset.samples.len()).collect();
    let samples = stats.apply(dataset, &all);
    Ok((
        Dataset {
            samples,
            ..dataset.clone()
        },
        stats,
    ))
}

// ---------------------------------------------------------------------------
// CSV ingestion and export
// ---------------------------------------------------------------------------

/// Column names of a CSV file, before cardinalities are known.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub categorical: Vec<String>,
    pub continuous: Vec<String>,
}

const LABEL_COLUMN: &str = "label";

fn vocab_path(csv_path: &Path) -> std::path::PathBuf {
    let mut os = csv_path.as_os_str().to_os_string();
    os.push(".vocab");
    std::path::PathBuf::from(os)
}

fn csv_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Load a dataset from a UTF-8, comma-separated, header-first CSV file. The
/// header must contain every schema column plus `label` and the attribute
/// column. Categorical strings map to indices through the sidecar vocabulary
/// `<path>.vocab`; when the sidecar exists unknown categories are errors
/// (strict mode), otherwise the vocabulary is built in order of first
/// appearance and persisted. Blank categorical cells map to index 0.
pub fn load_csv(path: &Path, columns: &ColumnSpec, attribute_name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| csv_err(path, e.to_string()))?
        .clone();
    let column_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(path, format!("missing column {name:?}")))
    };
    let cat_cols: Vec<usize> = columns
        .categorical
        .iter()
        .map(|n| column_index(n))
        .collect::<Result<_>>()?;
    let cont_cols: Vec<usize> = columns
        .continuous
        .iter()
        .map(|n| column_index(n))
        .collect::<Result<_>>()?;
    let label_col = column_index(LABEL_COLUMN)?;
    let attr_col = column_index(attribute_name)?;

    let sidecar = vocab_path(path);
    let persisted = if sidecar.exists() {
        Some(read_vocab(&sidecar, &columns.categorical, attribute_name)?)
    } else {
        None
    };
    let strict = persisted.is_some();
    let (mut vocab, mut group_names) = persisted.unwrap_or_else(|| {
        (
            vec![vec![String::new()]; columns.categorical.len()],
            Vec::new(),
        )
    });

    let mut samples = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row_number = row_idx + 2; // header is line 1
        let record = record.map_err(|e| csv_err(path, format!("row {row_number}: {e}")))?;
        let mut cat = Vec::with_capacity(cat_cols.len());
        for (feature, &col) in cat_cols.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                cat.push(0);
                continue;
            }
            let found = vocab[feature].iter().position(|v| v == cell);
            match found {
                Some(idx) => cat.push(idx),
                None if strict => {
                    return Err(csv_err(
                        path,
                        format!(
                            "row {row_number}: unknown category {cell:?} for feature {:?}",
                            columns.categorical[feature]
                        ),
                    ));
                }
                None => {
                    vocab[feature].push(cell.to_string());
                    cat.push(vocab[feature].len() - 1);
                }
            }
        }
        let mut cont = Vec::with_capacity(cont_cols.len());
        for (feature, &col) in cont_cols.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| {
                csv_err(
                    path,
                    format!(
                        "row {row_number}: cannot parse {cell:?} as a number for column {:?}",
                        columns.continuous[feature]
                    ),
                )
            })?;
            cont.push(value);
        }
        let label_cell = record.get(label_col).unwrap_or("");
        let label: u8 = match label_cell {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(csv_err(
                    path,
                    format!("row {row_number}: label must be 0 or 1, got {other:?}"),
                ))
            }
        };
        let group_cell = record.get(attr_col).unwrap_or("");
        if group_cell.is_empty() {
            return Err(csv_err(path, format!("row {row_number}: empty attribute value")));
        }
        let group = match group_names.iter().position(|g| g == group_cell) {
            Some(g) => g,
            None if strict => {
                return Err(csv_err(
                    path,
                    format!("row {row_number}: unknown group {group_cell:?}"),
                ));
            }
            None => {
                group_names.push(group_cell.to_string());
                group_names.len() - 1
            }
        };
        samples.push(Sample {
            cat,
            cont,
            label,
            group,
        });
    }

    let schema = FeatureSchema {
        categorical: columns
            .categorical
            .iter()
            .zip(&vocab)
            .map(|(name, v)| CatFeature {
                name: name.clone(),
                cardinality: v.len().max(2),
            })
            .collect(),
        continuous: columns.continuous.clone(),
    };
    // pad vocab entries so cardinality >= 2 holds even for all-missing columns
    for v in &mut vocab {
        while v.len() < 2 {
            v.push(format!("c{}", v.len()));
        }
    }

    let dataset = Dataset {
        schema,
        samples,
        attribute_name: attribute_name.to_string(),
        group_names,
        vocab,
    };
    dataset.validate()?;
    if !strict {
        write_vocab(&sidecar, &dataset)?;
    }
    Ok(dataset)
}

/// Write a dataset as CSV plus its `<path>.vocab` sidecar. Continuous values
/// use the shortest round-trip float representation.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e.to_string()))?;

    let mut header: Vec<String> = dataset
        .schema
        .categorical
        .iter()
        .map(|f| f.name.clone())
        .collect();
    header.extend(dataset.schema.continuous.iter().cloned());
    header.push(LABEL_COLUMN.to_string());
    header.push(dataset.attribute_name.clone());
    writer
        .write_record(&header)
        .map_err(|e| csv_err(path, e.to_string()))?;

    for s in &dataset.samples {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for (feature, &idx) in s.cat.iter().enumerate() {
            record.push(if idx == 0 {
                String::new()
            } else {
                dataset.vocab[feature][idx].clone()
            });
        }
        for &x in &s.cont {
            record.push(format!("{x}"));
        }
        record.push(s.label.to_string());
        record.push(dataset.group_names[s.group].clone());
        writer
            .write_record(&record)
            .map_err(|e| csv_err(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| csv_err(path, e.to_string()))?;
    write_vocab(&vocab_path(path), dataset)
}

/// Sidecar format: `feature,category,index` lines; the sensitive attribute's
/// group names are stored under the attribute column name.
fn write_vocab(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::from("feature,category,index\n");
    for (feature, entries) in dataset.vocab.iter().enumerate() {
        let name = &dataset.schema.categorical[feature].name;
        for (idx, category) in entries.iter().enumerate().skip(1) {
            let _ = writeln!(out, "{name},{category},{idx}");
        }
    }
    for (idx, group) in dataset.group_names.iter().enumerate() {
        let _ = writeln!(out, "{},{group},{idx}", dataset.attribute_name);
    }
    std::fs::write(path, out)?;
    Ok(())
}

type VocabAndGroups = (Vec<Vec<String>>, Vec<String>);

fn read_vocab(path: &Path, categorical: &[String], attribute_name: &str) -> Result<VocabAndGroups> {
    let text = std::fs::read_to_string(path)?;
    let mut vocab: Vec<Vec<String>> = vec![vec![String::new()]; categorical.len()];
    let mut groups: Vec<(usize, String)> = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (feature, category, index) = match (parts.next(), parts.next(), parts.next()) {
            (Some(f), Some(c), Some(i)) => (f, c, i),
            _ => {
                return Err(csv_err(path, format!("line {}: malformed vocab row", line_no + 1)));
            }
        };
        let index: usize = index
            .trim()
            .parse()
            .map_err(|_| csv_err(path, format!("line {}: bad index", line_no + 1)))?;
        if feature == attribute_name {
            groups.push((index, category.to_string()));
        } else if let Some(f) = categorical.iter().position(|n| n == feature) {
            if vocab[f].len() != index {
                return Err(csv_err(
                    path,
                    format!("line {}: vocab indices must be dense and ordered", line_no + 1),
                ));
            }
            vocab[f].push(category.to_string());
        } else {
            return Err(csv_err(
                path,
                format!("line {}: unknown feature {feature:?}", line_no + 1),
            ));
        }
    }
    groups.sort_by_key(|(idx, _)| *idx);
    let group_names = groups.into_iter().map(|(_, name)| name).collect();
    Ok((vocab, group_names))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_is_deterministic_and_calibrated() {
        let spec = SynthSpec {
            counts: vec![1420, 164],
            pos_rates: vec![0.4283, 0.3399],
            ..SynthSpec::default()
        };
        let a = synth_generate(&spec).unwrap();
        let b = synth_generate(&spec).unwrap();
        assert_eq!(a, b);

        let sizes = a.group_sizes();
        assert_eq!(sizes, vec![1420, 164]);
        for g in 0..2 {
            let members: Vec<_> = a.samples.iter().filter(|s| s.group == g).collect();
            let rate = members.iter().filter(|s| s.label == 1).count() as f64
                / members.len() as f64;
            assert!(
                (rate - spec.pos_rates[g]).abs() <= 0.02,
                "group {g} empirical rate {rate}"
            );
        }
        // headline calibration: ~0.43 adult, ~0.34 pediatric
        let rate0 = a
            .samples
            .iter()
            .filter(|s| s.group == 0 && s.label == 1)
            .count() as f64
            / 1420.0;
        assert!((rate0 - 0.43).abs() < 0.005);
    }

    #[test]
    fn synth_missing_cells_use_reserved_index() {
        let spec = SynthSpec {
            missing_rate: 0.5,
            counts: vec![200, 50],
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        let missing = data
            .samples
            .iter()
            .flat_map(|s| s.cat.iter())
            .filter(|&&c| c == 0)
            .count();
        assert!(missing > 0);
    }

    #[test]
    fn kfold_exact_ratio_case() {
        let spec = SynthSpec {
            counts: vec![60, 40],
            pos_rates: vec![0.5, 0.5],
            missing_rate: 0.0,
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        let plan = kfold_split(&data, 5, 7).unwrap();
        assert_eq!(plan.folds.len(), 5);
        for fold in &plan.folds {
            assert_eq!(fold.train.len(), 60);
            assert_eq!(fold.validation.len(), 20);
            assert_eq!(fold.test.len(), 20);
            // disjoint within a fold, union covers everything
            let mut all: Vec<usize> = fold
                .train
                .iter()
                .chain(&fold.validation)
                .chain(&fold.test)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
        // the 5 test partitions tile the dataset
        let mut tests: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        tests.sort_unstable();
        assert_eq!(tests, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_is_stratified_and_deterministic() {
        let data = synth_generate(&SynthSpec::default()).unwrap();
        let plan = kfold_split(&data, 5, 9).unwrap();
        assert_eq!(plan, kfold_split(&data, 5, 9).unwrap());

        let global: Vec<f64> = {
            let sizes = data.group_sizes();
            sizes
                .iter()
                .map(|&s| s as f64 / data.samples.len() as f64)
                .collect()
        };
        for fold in &plan.folds {
            for part in [&fold.train, &fold.validation, &fold.test] {
                let mut counts = vec![0usize; data.num_tasks()];
                for &i in part {
                    counts[data.samples[i].group] += 1;
                }
                for (g, &c) in counts.iter().enumerate() {
                    let proportion = c as f64 / part.len() as f64;
                    assert!(
                        (proportion - global[g]).abs() <= 0.02,
                        "fold proportion {proportion} vs global {}",
                        global[g]
                    );
                }
            }
        }
    }

    #[test]
    fn kfold_rejects_small_strata() {
        let spec = SynthSpec {
            counts: vec![100, 6],
            pos_rates: vec![0.5, 0.4],
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        // minority has ~2-3 positives, fewer than k=5
        assert!(matches!(
            kfold_split(&data, 5, 1),
            Err(Error::StratumTooSmall { group: 1, .. })
        ));
    }

    #[test]
    fn standardize_train_split_is_zero_mean_unit_std() {
        let data = synth_generate(&SynthSpec::default()).unwrap();
        let plan = kfold_split(&data, 5, 3).unwrap();
        let fold = &plan.folds[0];
        let (standardized, stats) = standardize(&data, &fold.train).unwrap();
        let d = data.schema.num_continuous();
        let n = fold.train.len() as f64;
        for j in 0..d {
            let values: Vec<f64> = fold
                .train
                .iter()
                .map(|&i| standardized.samples[i].cont[j])
                .collect();
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
        assert_eq!(stats.means.len(), d);
    }

    #[test]
    fn standardize_constant_feature_centers_only() {
        let mut data = synth_generate(&SynthSpec {
            counts: vec![20, 20],
            ..SynthSpec::default()
        })
        .unwrap();
        for s in &mut data.samples {
            s.cont[0] = 3.5;
        }
        let indices: Vec<usize> = (0..data.samples.len()).collect();
        let (standardized, _) = standardize(&data, &indices).unwrap();
        for s in &standardized.samples {
            assert_eq!(s.cont[0], 0.0);
        }
    }

    #[test]
    fn standardization_ignores_test_rows() {
        let data = synth_generate(&SynthSpec::default()).unwrap();
        let plan = kfold_split(&data, 5, 3).unwrap();
        let fold = &plan.folds[0];
        let stats = StandardStats::fit(&data, &fold.train).unwrap();

        let mut mutated = data.clone();
        for &i in &fold.test {
            for x in &mut mutated.samples[i].cont {
                *x += 1000.0;
            }
        }
        let stats_after = StandardStats::fit(&mutated, &fold.train).unwrap();
        assert_eq!(stats, stats_after);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let spec = SynthSpec {
            counts: vec![40, 25],
            missing_rate: 0.1,
            ..SynthSpec::default()
        };
        let data = synth_generate(&spec).unwrap();
        save_csv(&data, &path).unwrap();

        let columns = ColumnSpec {
            categorical: data
                .schema
                .categorical
                .iter()
                .map(|f| f.name.clone())
                .collect(),
            continuous: data.schema.continuous.clone(),
        };
        let reloaded = load_csv(&path, &columns, &data.attribute_name).unwrap();
        assert_eq!(data, reloaded);
    }

    #[test]
    fn csv_blank_cell_is_missing_and_strict_mode_rejects_unknowns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        std::fs::write(
            &path,
            "color,age,label,site\nred,1.5,1,north\n,2.0,0,south\n",
        )
        .unwrap();
        let columns = ColumnSpec {
            categorical: vec!["color".into()],
            continuous: vec!["age".into()],
        };
        let data = load_csv(&path, &columns, "site").unwrap();
        assert_eq!(data.samples[0].cat, vec![1]);
        assert_eq!(data.samples[1].cat, vec![0]);
        assert_eq!(data.group_names, vec!["north".to_string(), "south".to_string()]);

        // sidecar now exists: an unknown category must fail with a row number
        std::fs::write(
            &path,
            "color,age,label,site\nviolet,1.5,1,north\nred,2.0,0,south\n",
        )
        .unwrap();
        match load_csv(&path, &columns, "site") {
            Err(Error::Csv { detail, .. }) => {
                assert!(detail.contains("row 2"), "detail: {detail}");
                assert!(detail.contains("violet"));
            }
            other => panic!("expected strict-mode csv error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_bad_numbers_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let columns = ColumnSpec {
            categorical: vec!["color".into()],
            continuous: vec!["age".into()],
        };
        std::fs::write(&path, "color,age,label,site\nred,notanumber,1,north\n").unwrap();
        assert!(matches!(
            load_csv(&path, &columns, "site"),
            Err(Error::Csv { .. })
        ));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "color,age,label,site\nred,1.0,1\n").unwrap();
        assert!(matches!(
            load_csv(&ragged, &columns, "site"),
            Err(Error::Csv { .. })
        ));
    }

    #[test]
    fn fixture_file_is_loaded_field_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.csv");
        std::fs::write(
            &path,
            "c1,c2,x1,x2,label,grp\n\
             a,u,0.25,-1.5,1,g0\n\
             b,v,0.5,2.25,0,g1\n\
             a,,0.75,0.125,1,g0\n\
             b,u,-0.25,3.5,0,g1\n\
             c,v,1.25,-0.625,1,g0\n\
             a,u,2.5,0.0625,0,g0\n\
             b,w,-3.75,1.0,1,g1\n\
             c,u,0.1875,-2.25,0,g1\n\
             a,v,4.5,5.0,1,g0\n\
             c,w,-0.375,0.75,0,g1\n",
        )
        .unwrap();
        let columns = ColumnSpec {
            categorical: vec!["c1".into(), "c2".into()],
            continuous: vec!["x1".into(), "x2".into()],
        };
        let data = load_csv(&path, &columns, "grp").unwrap();
        assert_eq!(data.samples.len(), 10);
        // vocab by first appearance: a=1, b=2, c=3 / u=1, v=2, w=3
        assert_eq!(data.samples[0].cat, vec![1, 1]);
        assert_eq!(data.samples[1].cat, vec![2, 2]);
        assert_eq!(data.samples[2].cat, vec![1, 0]);
        assert_eq!(data.samples[6].cat, vec![2, 3]);
        assert_eq!(data.samples[0].cont, vec![0.25, -1.5]);
        assert_eq!(data.samples[7].cont, vec![0.1875, -2.25]);
        assert_eq!(data.samples[0].label, 1);
        assert_eq!(data.samples[0].group, 0);
        assert_eq!(data.samples[1].group, 1);
        assert_eq!(data.group_names, vec!["g0".to_string(), "g1".to_string()]);
        assert_eq!(data.schema.categorical[0].cardinality, 4);
    }
}
