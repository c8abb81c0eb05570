//! Rough throughput probe (ignored by default): prints per-epoch cost on the
//! benchmark-sized dataset.

use std::time::Instant;

use feri_core::data::{kfold_split, standardize, synth_generate, SynthSpec};
use feri_core::model::{init_params, ModelConfig};
use feri_core::opt::{
    train_epoch_baseline, train_epoch_feri, FeriHyper, FeriState, TrainData,
};

#[test]
#[ignore]
fn epoch_cost() {
    let dataset = synth_generate(&SynthSpec::default()).unwrap();
    let plan = kfold_split(&dataset, 5, 1).unwrap();
    let fold = &plan.folds[0];
    let (standardized, _) = standardize(&dataset, &fold.train).unwrap();
    let samples: Vec<_> = fold
        .train
        .iter()
        .map(|&i| standardized.samples[i].clone())
        .collect();
    let data = TrainData::new(&samples, dataset.num_tasks()).unwrap();
    let config = ModelConfig::new(dataset.num_tasks());
    let mut params = init_params(&dataset.schema, &config, 1).unwrap();
    let mut state = FeriState::new(2, FeriHyper::default()).unwrap();

    let t0 = Instant::now();
    let epochs = 50;
    for _ in 0..epochs {
        train_epoch_feri(&mut params, &mut state, &data).unwrap();
    }
    let feri_per_epoch = t0.elapsed().as_secs_f64() / epochs as f64;

    let mut params2 = init_params(&dataset.schema, &config, 1).unwrap();
    let t1 = Instant::now();
    for e in 0..epochs {
        train_epoch_baseline(&mut params2, &data, 0.05, 1.0, e).unwrap();
    }
    let base_per_epoch = t1.elapsed().as_secs_f64() / epochs as f64;

    println!("feri epoch: {:.2} ms, baseline epoch: {:.2} ms", feri_per_epoch * 1e3, base_per_epoch * 1e3);
    println!(
        "projected 50 runs x 300 epochs: {:.0} s",
        (feri_per_epoch + base_per_epoch) * 0.5 * 300.0 * 50.0
    );
}
