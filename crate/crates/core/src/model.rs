//! Multitask tabular model: per-column categorical embeddings, a shared
//! layer-normalized MLP trunk, and one small MLP head per subgroup (hard
//! parameter sharing — only the heads are task-specific).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::Array2D;
use crate::autodiff::{GradientSet, NodeId, Tape};
use crate::error::{Error, Result};

/// Declared layout of a tabular dataset. Every categorical feature reserves
/// index 0 for missing values, so cardinalities include that slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub categorical: Vec<CatFeature>,
    pub continuous: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatFeature {
    pub name: String,
    /// Number of distinct indices, including the reserved missing slot 0.
    pub cardinality: usize,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        for f in &self.categorical {
            if f.cardinality < 2 {
                return Err(Error::Config(format!(
                    "categorical feature {:?} needs cardinality >= 2 (real category plus missing slot)",
                    f.name
                )));
            }
        }
        let mut names: Vec<&str> = self
            .categorical
            .iter()
            .map(|f| f.name.as_str())
            .chain(self.continuous.iter().map(String::as_str))
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("feature names must be unique".into()));
        }
        Ok(())
    }

    pub fn num_categorical(&self) -> usize {
        self.categorical.len()
    }

    pub fn num_continuous(&self) -> usize {
        self.continuous.len()
    }
}

/// One labeled observation with its subgroup (task) id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// One index per categorical feature; 0 means missing.
    pub cat: Vec<usize>,
    /// One value per continuous feature.
    pub cont: Vec<f64>,
    /// Binary outcome.
    pub label: u8,
    /// Task index in 0..M.
    pub group: usize,
}

impl Sample {
    pub fn conforms(&self, schema: &FeatureSchema, num_tasks: usize) -> Result<()> {
        if self.cat.len() != schema.num_categorical() || self.cont.len() != schema.num_continuous()
        {
            return Err(Error::Config(format!(
                "sample has {} categorical / {} continuous values, schema expects {} / {}",
                self.cat.len(),
                self.cont.len(),
                schema.num_categorical(),
                schema.num_continuous()
            )));
        }
        for (idx, feature) in self.cat.iter().zip(&schema.categorical) {
            if *idx >= feature.cardinality {
                return Err(Error::Config(format!(
                    "category index {idx} out of range for feature {:?}",
                    feature.name
                )));
            }
        }
        if self.label > 1 {
            return Err(Error::Config(format!("label must be 0 or 1, got {}", self.label)));
        }
        if self.group >= num_tasks {
            return Err(Error::Config(format!(
                "group {} out of range for {} tasks",
                self.group, num_tasks
            )));
        }
        Ok(())
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Hidden widths of the shared trunk.
    pub hidden: Vec<usize>,
    /// Hidden widths of each task head; a final width-1 logit layer is
    /// always appended.
    pub head_hidden: Vec<usize>,
    pub num_tasks: usize,
}

impl ModelConfig {
    pub fn new(num_tasks: usize) -> Self {
        ModelConfig {
            embed_dim: 8,
            hidden: vec![64, 32],
            head_hidden: vec![16],
            num_tasks,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.embed_dim < 1 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        if self.num_tasks < 1 {
            return Err(Error::Config("num_tasks must be >= 1".into()));
        }
        if self.hidden.iter().chain(&self.head_hidden).any(|&h| h < 1) {
            return Err(Error::Config("hidden sizes must be >= 1".into()));
        }
        Ok(())
    }
}

/// A dense layer: `x @ weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2D,
    pub bias: Array2D,
}

/// All trainable arrays. `visit`/`visit_mut` expose them in a fixed canonical
/// order that matches the gradient slots produced by `register_on_tape`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// One (cardinality x embed_dim) table per categorical feature.
    pub embeddings: Vec<Array2D>,
    /// Affine terms of the layer norm applied to the concatenated input.
    pub norm_gain: Array2D,
    pub norm_bias: Array2D,
    pub trunk: Vec<Dense>,
    pub heads: Vec<Vec<Dense>>,
    pub embed_dim: usize,
    pub num_continuous: usize,
}

impl ModelParams {
    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    /// Width of the concatenated embedding + continuous input row.
    pub fn concat_dim(&self) -> usize {
        self.embeddings.len() * self.embed_dim + self.num_continuous
    }

    pub fn visit(&self, f: &mut impl FnMut(&Array2D)) {
        for e in &self.embeddings {
            f(e);
        }
        f(&self.norm_gain);
        f(&self.norm_bias);
        for layer in &self.trunk {
            f(&layer.weight);
            f(&layer.bias);
        }
        for head in &self.heads {
            for layer in head {
                f(&layer.weight);
                f(&layer.bias);
            }
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut Array2D)) {
        for e in &mut self.embeddings {
            f(e);
        }
        f(&mut self.norm_gain);
        f(&mut self.norm_bias);
        for layer in &mut self.trunk {
            f(&mut layer.weight);
            f(&mut layer.bias);
        }
        for head in &mut self.heads {
            for layer in head {
                f(&mut layer.weight);
                f(&mut layer.bias);
            }
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        self.visit(&mut |a| shapes.push(a.shape()));
        shapes
    }

    /// Gradient-descent update `p -= rate * g` over every parameter array.
    pub fn apply_step(&mut self, direction: &GradientSet, rate: f64) -> Result<()> {
        if direction.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                op: "apply_step",
                detail: format!(
                    "{} gradient slots for {} parameter arrays",
                    direction.len(),
                    self.param_count()
                ),
            });
        }
        let mut slot = 0;
        let mut status = Ok(());
        self.visit_mut(&mut |p| {
            if status.is_ok() {
                status = p.axpy_in_place(-rate, direction.get(slot));
            }
            slot += 1;
        });
        status
    }

    /// Register every parameter on a tape, in canonical order.
    pub fn register_on_tape(&self, tape: &mut Tape) -> ParamNodes {
        let mut ids = Vec::with_capacity(self.param_count());
        self.visit(&mut |a| ids.push(tape.param(a.clone())));
        let p = self.embeddings.len();
        let trunk_base = p + 2;
        let head_base = trunk_base + 2 * self.trunk.len();
        ParamNodes {
            ids,
            num_embeddings: p,
            trunk_base,
            trunk_layers: self.trunk.len(),
            head_base,
            head_layers: self.heads.first().map_or(0, Vec::len),
        }
    }
}

/// Tape node ids of registered parameters, resolvable by role.
#[derive(Debug, Clone)]
pub struct ParamNodes {
    ids: Vec<NodeId>,
    num_embeddings: usize,
    trunk_base: usize,
    trunk_layers: usize,
    head_base: usize,
    head_layers: usize,
}

impl ParamNodes {
    pub fn embedding(&self, feature: usize) -> NodeId {
        self.ids[feature]
    }
    pub fn norm_gain(&self) -> NodeId {
        self.ids[self.num_embeddings]
    }
    pub fn norm_bias(&self) -> NodeId {
        self.ids[self.num_embeddings + 1]
    }
    pub fn trunk_weight(&self, layer: usize) -> NodeId {
        self.ids[self.trunk_base + 2 * layer]
    }
    pub fn trunk_bias(&self, layer: usize) -> NodeId {
        self.ids[self.trunk_base + 2 * layer + 1]
    }
    pub fn head_weight(&self, task: usize, layer: usize) -> NodeId {
        self.ids[self.head_base + task * 2 * self.head_layers_total() + 2 * layer]
    }
    pub fn head_bias(&self, task: usize, layer: usize) -> NodeId {
        self.ids[self.head_base + task * 2 * self.head_layers_total() + 2 * layer + 1]
    }
    fn head_layers_total(&self) -> usize {
        // hidden layers plus the final logit layer
        self.head_layers
    }
    pub fn trunk_layers(&self) -> usize {
        self.trunk_layers
    }
}

/// Uniform(-s, s) with s = 1/sqrt(fan_in); biases zero; layer-norm affine at
/// identity. Deterministic for a fixed seed.
pub fn init_params(schema: &FeatureSchema, config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    schema.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Array2D::from_vec(rows, cols, data).expect("consistent dimensions")
    };

    let embeddings: Vec<Array2D> = schema
        .categorical
        .iter()
        .map(|f| uniform(f.cardinality, config.embed_dim, f.cardinality))
        .collect();

    let concat_dim = schema.num_categorical() * config.embed_dim + schema.num_continuous();
    let mut dense_stack = |mut input: usize, widths: &[usize]| -> Vec<Dense> {
        widths
            .iter()
            .map(|&w| {
                let layer = Dense {
                    weight: uniform(input, w, input),
                    bias: Array2D::zeros(1, w),
                };
                input = w;
                layer
            })
            .collect()
    };

    let trunk = dense_stack(concat_dim, &config.hidden);
    let trunk_out = config.hidden.last().copied().unwrap_or(concat_dim);
    let head_widths: Vec<usize> = config.head_hidden.iter().copied().chain([1]).collect();
    let heads = (0..config.num_tasks)
        .map(|_| dense_stack(trunk_out, &head_widths))
        .collect();

    Ok(ModelParams {
        embeddings,
        norm_gain: Array2D::filled(1, concat_dim, 1.0),
        norm_bias: Array2D::zeros(1, concat_dim),
        trunk,
        heads,
        embed_dim: config.embed_dim,
        num_continuous: schema.num_continuous(),
    })
}

/// A batch of same-group samples in column-major form ready for the tape.
#[derive(Debug, Clone)]
pub struct TaskBatch {
    /// Per categorical feature: the index of each sample.
    pub cat_columns: Vec<Vec<usize>>,
    /// n x num_continuous matrix.
    pub cont: Array2D,
    /// n x 1 labels as reals.
    pub labels: Array2D,
    pub group: usize,
    pub len: usize,
}

impl TaskBatch {
    /// Collect the samples of one group. Errors if any sample belongs to a
    /// different group or if the batch would be empty.
    pub fn from_samples<'a>(
        samples: impl IntoIterator<Item = &'a Sample>,
        group: usize,
    ) -> Result<TaskBatch> {
        let samples: Vec<&Sample> = samples.into_iter().collect();
        if samples.is_empty() {
            return Err(Error::EmptyTask { task: group });
        }
        if let Some(stray) = samples.iter().find(|s| s.group != group) {
            return Err(Error::MixedGroupBatch {
                expected: group,
                found: stray.group,
            });
        }
        let n = samples.len();
        let num_cat = samples[0].cat.len();
        let num_cont = samples[0].cont.len();
        let mut cat_columns = vec![Vec::with_capacity(n); num_cat];
        let mut cont = Array2D::zeros(n, num_cont);
        let mut labels = Array2D::zeros(n, 1);
        for (r, s) in samples.iter().enumerate() {
            for (j, &idx) in s.cat.iter().enumerate() {
                cat_columns[j].push(idx);
            }
            cont.row_mut(r).copy_from_slice(&s.cont);
            labels.set(r, 0, f64::from(s.label));
        }
        Ok(TaskBatch {
            cat_columns,
            cont,
            labels,
            group,
            len: n,
        })
    }
}

/// Nodes of interest produced by one task's loss subgraph.
#[derive(Debug, Clone, Copy)]
pub struct TaskGraph {
    pub probabilities: NodeId,
    pub loss: NodeId,
}

/// Record the full forward computation of task `m` on `tape`:
/// embeddings and continuous features are concatenated, layer-normalized,
/// passed through the shared trunk and the task head, squashed by a sigmoid,
/// and reduced to a mean binary cross-entropy.
pub fn build_task_loss(
    tape: &mut Tape,
    params: &ModelParams,
    nodes: &ParamNodes,
    batch: &TaskBatch,
    m: usize,
) -> Result<TaskGraph> {
    if m >= params.num_tasks() {
        return Err(Error::Config(format!(
            "task {m} out of range for {} heads",
            params.num_tasks()
        )));
    }
    if batch.group != m {
        return Err(Error::MixedGroupBatch {
            expected: m,
            found: batch.group,
        });
    }
    if batch.cat_columns.len() != params.embeddings.len()
        || batch.cont.cols() != params.num_continuous
    {
        return Err(Error::ShapeMismatch {
            op: "build_task_loss",
            detail: format!(
                "batch has {} categorical / {} continuous features, model expects {} / {}",
                batch.cat_columns.len(),
                batch.cont.cols(),
                params.embeddings.len(),
                params.num_continuous
            ),
        });
    }

    let mut parts = Vec::with_capacity(batch.cat_columns.len() + 1);
    for (j, column) in batch.cat_columns.iter().enumerate() {
        parts.push(tape.lookup(nodes.embedding(j), column)?);
    }
    if batch.cont.cols() > 0 {
        parts.push(tape.input(batch.cont.clone()));
    }
    let concat = tape.concat_cols(&parts)?;
    let mut x = tape.layer_norm_rows(concat, nodes.norm_gain(), nodes.norm_bias())?;

    for layer in 0..nodes.trunk_layers() {
        let z = tape.matmul(x, nodes.trunk_weight(layer))?;
        let z = tape.add_row(z, nodes.trunk_bias(layer))?;
        x = tape.relu(z)?;
    }

    let head_layers = params.heads[m].len();
    for layer in 0..head_layers {
        let z = tape.matmul(x, nodes.head_weight(m, layer))?;
        x = tape.add_row(z, nodes.head_bias(m, layer))?;
        if layer + 1 < head_layers {
            x = tape.relu(x)?;
        }
    }

    let probabilities = tape.sigmoid(x)?;
    let labels = tape.input(batch.labels.clone());
    let bce = tape.bce(probabilities, labels)?;
    let loss = tape.mean_all(bce)?;
    Ok(TaskGraph {
        probabilities,
        loss,
    })
}

/// Probabilities of head `m` for a batch of group-`m` samples.
pub fn forward(params: &ModelParams, samples: &[Sample], m: usize) -> Result<Vec<f64>> {
    let batch = TaskBatch::from_samples(samples, m)?;
    let mut tape = Tape::new();
    let nodes = params.register_on_tape(&mut tape);
    let graph = build_task_loss(&mut tape, params, &nodes, &batch, m)?;
    Ok(tape.value(graph.probabilities).as_slice().to_vec())
}

/// Mean binary cross-entropy of head `m` over exactly the group-`m` samples
/// of `data`. An absent subgroup is an explicit error, never a silent zero.
pub fn task_loss(params: &ModelParams, data: &[Sample], m: usize) -> Result<f64> {
    let members: Vec<&Sample> = data.iter().filter(|s| s.group == m).collect();
    if members.is_empty() {
        return Err(Error::EmptyTask { task: m });
    }
    let batch = TaskBatch::from_samples(members, m)?;
    let mut tape = Tape::new();
    let nodes = params.register_on_tape(&mut tape);
    let graph = build_task_loss(&mut tape, params, &nodes, &batch, m)?;
    tape.value(graph.loss).scalar_value()
}

/// Score every sample with its own group's head, preserving input order.
pub fn score(params: &ModelParams, samples: &[Sample]) -> Result<Vec<f64>> {
    let mut scores = vec![f64::NAN; samples.len()];
    for m in 0..params.num_tasks() {
        let positions: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].group == m)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let members: Vec<&Sample> = positions.iter().map(|&i| &samples[i]).collect();
        let batch = TaskBatch::from_samples(members, m)?;
        let mut tape = Tape::new();
        let nodes = params.register_on_tape(&mut tape);
        let graph = build_task_loss(&mut tape, params, &nodes, &batch, m)?;
        for (slot, &i) in positions.iter().enumerate() {
            scores[i] = tape.value(graph.probabilities).at(slot, 0);
        }
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> FeatureSchema {
        FeatureSchema {
            categorical: vec![
                CatFeature {
                    name: "color".into(),
                    cardinality: 5,
                },
                CatFeature {
                    name: "kind".into(),
                    cardinality: 5,
                },
                CatFeature {
                    name: "site".into(),
                    cardinality: 5,
                },
            ],
            continuous: vec!["age".into(), "score".into()],
        }
    }

    fn toy_sample(group: usize, label: u8) -> Sample {
        Sample {
            cat: vec![1, 2, 3],
            cont: vec![0.5, -1.25],
            label,
            group,
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let a = init_params(&schema, &config, 7).unwrap();
        let b = init_params(&schema, &config, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(&schema, &config, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn concat_dim_arithmetic() {
        let schema = toy_schema();
        let mut config = ModelConfig::new(2);
        config.embed_dim = 4;
        let params = init_params(&schema, &config, 1).unwrap();
        assert_eq!(params.concat_dim(), 3 * 4 + 2);
        assert_eq!(params.trunk[0].weight.rows(), 14);
    }

    #[test]
    fn invalid_config_rejected() {
        let schema = toy_schema();
        let mut config = ModelConfig::new(2);
        config.embed_dim = 0;
        assert!(matches!(
            init_params(&schema, &config, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zeroed_final_layer_outputs_half() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let mut params = init_params(&schema, &config, 3).unwrap();
        for head in &mut params.heads {
            let last = head.last_mut().unwrap();
            last.weight = Array2D::zeros(last.weight.rows(), last.weight.cols());
            last.bias = Array2D::zeros(1, 1);
        }
        let probs = forward(&params, &[toy_sample(0, 1)], 0).unwrap();
        assert_eq!(probs, vec![0.5]);
    }

    #[test]
    fn forward_is_a_pure_function_of_the_row() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let params = init_params(&schema, &config, 3).unwrap();
        let batch = vec![toy_sample(1, 0), toy_sample(1, 0), toy_sample(1, 0)];
        let probs = forward(&params, &batch, 1).unwrap();
        assert_eq!(probs[0], probs[1]);
        assert_eq!(probs[1], probs[2]);
    }

    #[test]
    fn mixed_group_batch_is_a_contract_violation() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let params = init_params(&schema, &config, 3).unwrap();
        let batch = vec![toy_sample(0, 1), toy_sample(1, 0)];
        assert!(matches!(
            forward(&params, &batch, 0),
            Err(Error::MixedGroupBatch {
                expected: 0,
                found: 1
            })
        ));
    }

    #[test]
    fn empty_task_is_an_explicit_error() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let params = init_params(&schema, &config, 3).unwrap();
        let data = vec![toy_sample(0, 1)];
        assert!(matches!(
            task_loss(&params, &data, 1),
            Err(Error::EmptyTask { task: 1 })
        ));
    }

    #[test]
    fn task_loss_analytic_values() {
        let schema = toy_schema();
        let config = ModelConfig::new(1);
        let mut params = init_params(&schema, &config, 3).unwrap();
        // all-zero head => p = 0.5 everywhere => loss = ln 2
        let last = params.heads[0].last_mut().unwrap();
        last.weight = Array2D::zeros(last.weight.rows(), last.weight.cols());
        last.bias = Array2D::zeros(1, 1);
        let data = vec![toy_sample(0, 1), toy_sample(0, 0)];
        let loss = task_loss(&params, &data, 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn task_loss_order_invariant() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let params = init_params(&schema, &config, 9).unwrap();
        let mut a = toy_sample(0, 1);
        a.cont = vec![1.0, 2.0];
        let mut b = toy_sample(0, 0);
        b.cat = vec![4, 0, 2];
        let c = toy_sample(1, 1);
        let forwardwise = task_loss(&params, &[a.clone(), b.clone(), c.clone()], 0).unwrap();
        let shuffled = task_loss(&params, &[b, c, a], 0).unwrap();
        assert!((forwardwise - shuffled).abs() < 1e-12);
    }

    #[test]
    fn single_task_gradient_leaves_other_heads_untouched() {
        let schema = toy_schema();
        let config = ModelConfig::new(3);
        let mut params = init_params(&schema, &config, 5).unwrap();
        let before_other: Vec<Array2D> = params.heads[2]
            .iter()
            .flat_map(|d| [d.weight.clone(), d.bias.clone()])
            .collect();
        let before_own = params.heads[0][0].weight.clone();
        let before_trunk = params.trunk[0].weight.clone();

        let data = vec![toy_sample(0, 1), toy_sample(0, 0)];
        let batch = TaskBatch::from_samples(data.iter(), 0).unwrap();
        let mut tape = Tape::new();
        let nodes = params.register_on_tape(&mut tape);
        let graph = build_task_loss(&mut tape, &params, &nodes, &batch, 0).unwrap();
        let grads = tape.backward(graph.loss).unwrap();
        params.apply_step(&grads, 0.1).unwrap();

        let after_other: Vec<Array2D> = params.heads[2]
            .iter()
            .flat_map(|d| [d.weight.clone(), d.bias.clone()])
            .collect();
        assert_eq!(before_other, after_other);
        assert_ne!(before_own, params.heads[0][0].weight);
        assert_ne!(before_trunk, params.trunk[0].weight);
    }

    #[test]
    fn score_uses_each_samples_head_in_input_order() {
        let schema = toy_schema();
        let config = ModelConfig::new(2);
        let params = init_params(&schema, &config, 11).unwrap();
        let samples = vec![toy_sample(1, 0), toy_sample(0, 1), toy_sample(1, 1)];
        let scores = score(&params, &samples).unwrap();
        let head1 = forward(&params, &[samples[0].clone()], 1).unwrap();
        let head0 = forward(&params, &[samples[1].clone()], 0).unwrap();
        assert_eq!(scores[0], head1[0]);
        assert_eq!(scores[1], head0[0]);
        assert_eq!(scores[0], scores[2]);
    }
}
