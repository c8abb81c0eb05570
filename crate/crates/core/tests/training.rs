//! Training-level checks on the synthetic benchmark: baseline descent is
//! monotone at a small step size, uninformative features yield chance-level
//! ranking, and the batched tape forward matches an independent replay.

use feri_core::data::{kfold_split, standardize, synth_generate, SynthSpec};
use feri_core::model::{forward, init_params, ModelConfig, ModelParams, Sample};
use feri_core::metrics::auroc;
use feri_core::opt::{train_epoch_baseline, TrainData};

fn fold_samples(
    dataset: &feri_core::data::Dataset,
    seed: u64,
) -> (Vec<Sample>, Vec<Sample>) {
    let plan = kfold_split(dataset, 5, seed).unwrap();
    let fold = &plan.folds[0];
    let (standardized, _) = standardize(dataset, &fold.train).unwrap();
    let train = fold
        .train
        .iter()
        .map(|&i| standardized.samples[i].clone())
        .collect();
    let test = fold
        .test
        .iter()
        .map(|&i| standardized.samples[i].clone())
        .collect();
    (train, test)
}

#[test]
fn baseline_loss_is_monotone_at_small_alpha() {
    let dataset = synth_generate(&SynthSpec::default()).unwrap();
    let (train, _) = fold_samples(&dataset, 42);
    let data = TrainData::new(&train, dataset.num_tasks()).unwrap();
    let config = ModelConfig::new(dataset.num_tasks());
    let mut params = init_params(&dataset.schema, &config, 42).unwrap();

    let mut previous = f64::INFINITY;
    for epoch in 0..300 {
        let result = train_epoch_baseline(&mut params, &data, 0.01, 1.0, epoch).unwrap();
        assert!(
            result.combined_loss <= previous + 1e-12,
            "loss rose at epoch {epoch}: {} -> {}",
            previous,
            result.combined_loss
        );
        previous = result.combined_loss;
    }
}

#[test]
fn uninformative_features_score_at_chance() {
    // single group, balanced labels, zero label signal: nothing to learn
    let spec = SynthSpec {
        group_names: vec!["only".into()],
        counts: vec![1000],
        pos_rates: vec![0.5],
        label_signal: vec![0.0],
        group_shift: vec![0.0],
        feature_scale: vec![1.0],
        cat_tilt: vec![0.0],
        ..SynthSpec::default()
    };
    let dataset = synth_generate(&spec).unwrap();
    let (train, test) = fold_samples(&dataset, 7);
    let data = TrainData::new(&train, 1).unwrap();
    let config = ModelConfig::new(1);
    let mut params = init_params(&dataset.schema, &config, 7).unwrap();
    for epoch in 0..100 {
        train_epoch_baseline(&mut params, &data, 0.05, 1.0, epoch).unwrap();
    }
    let scores = feri_core::model::score(&params, &test).unwrap();
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let value = auroc(&scores, &labels).unwrap();
    assert!(
        (value - 0.5).abs() < 0.1,
        "uninformative features should give chance-level auroc, got {value}"
    );
}

/// Independent forward replay: plain nested loops over the parameter arrays,
/// no tape involved.
fn replay_probability(params: &ModelParams, sample: &Sample, task: usize) -> f64 {
    // embedding lookup + continuous concat
    let mut x: Vec<f64> = Vec::new();
    for (j, &idx) in sample.cat.iter().enumerate() {
        let table = &params.embeddings[j];
        for c in 0..table.cols() {
            x.push(table.at(idx, c));
        }
    }
    x.extend(&sample.cont);

    // layer norm with affine terms
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-5).sqrt();
    let mut h: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(j, v)| params.norm_gain.at(0, j) * (v - mean) * inv + params.norm_bias.at(0, j))
        .collect();

    let dense = |input: &[f64], layer: &feri_core::model::Dense, relu: bool| -> Vec<f64> {
        let mut out = vec![0.0; layer.weight.cols()];
        for (o, out_v) in out.iter_mut().enumerate() {
            let mut acc = layer.bias.at(0, o);
            for (i, &v) in input.iter().enumerate() {
                acc += v * layer.weight.at(i, o);
            }
            *out_v = if relu { acc.max(0.0) } else { acc };
        }
        out
    };

    for layer in &params.trunk {
        h = dense(&h, layer, true);
    }
    let head = &params.heads[task];
    for (i, layer) in head.iter().enumerate() {
        h = dense(&h, layer, i + 1 < head.len());
    }
    1.0 / (1.0 + (-h[0]).exp())
}

#[test]
fn tape_forward_matches_hand_stepped_replay() {
    let spec = SynthSpec::default();
    let dataset = synth_generate(&spec).unwrap();
    let config = ModelConfig::new(dataset.num_tasks());
    let params = init_params(&dataset.schema, &config, 31).unwrap();

    for sample in dataset.samples.iter().take(24) {
        let tape_prob = forward(&params, &[sample.clone()], sample.group).unwrap()[0];
        let replay = replay_probability(&params, sample, sample.group);
        assert!(
            (tape_prob - replay).abs() < 1e-12,
            "tape {tape_prob} vs replay {replay}"
        );
    }
}
