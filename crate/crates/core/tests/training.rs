use msdeeponet::dataset::OperatorSample;
use msdeeponet::deeponet::{LayerSpec, ModelSpec, ScaleSchedule, Variant};
use msdeeponet::neural::Activation;
use msdeeponet::training::{evaluate, fit_normalization, train, TrainConfig};
use msdeeponet::TimeSeries;
use ndarray::Array2;

fn sample(id: &str, phase: f64) -> OperatorSample {
    let n = 101;
    let dt = 0.02;
    let u: Vec<f64> = (0..n).map(|i| (3.0 * i as f64 * dt + phase).sin()).collect();
    let y = Array2::from_shape_fn((n, 1), |(i, _)| (2.0 * i as f64 * dt + phase).cos() * (1.0 + i as f64 * dt));
    OperatorSample::new(id, TimeSeries::new(dt, u).unwrap(), 10, y).unwrap()
}

fn spec() -> ModelSpec {
    ModelSpec {
        variant: Variant::BfcnTms,
        latent: 8,
        branch: LayerSpec { layers: 3, width: 16, activation: Activation::Relu },
        trunk: LayerSpec { layers: 3, width: 8, activation: Activation::Sin },
        branch_scales: None,
        trunk_scales: Some(ScaleSchedule::Harmonic { count: 4 }),
        tiers: Vec::new(),
        epsilon: 0.1,
    }
}

#[test]
fn single_sample_is_memorized() {
    let data = [sample("one", 0.4)];
    let model = fit_normalization(spec().build(10, 1, 3).unwrap(), &data).unwrap();
    let cfg = TrainConfig { epochs: 500, batches_per_epoch: 4, batch_size: 1, ..TrainConfig::default() };
    let (model, history) = train(model, &data, &[], &cfg).unwrap();
    assert_eq!(history.epochs(), 500);
    let err = evaluate(&model, &data).unwrap();
    assert!(err < 0.05, "{err}");
}

#[test]
fn same_seed_gives_identical_history() {
    let data: Vec<_> = (0..6).map(|i| sample(&format!("s{i}"), i as f64 * 0.5)).collect();
    let (train_set, test_set) = data.split_at(4);
    let cfg = TrainConfig {
        epochs: 5,
        batches_per_epoch: 3,
        batch_size: 2,
        on_the_fly: Some(msdeeponet::training::OnTheFly { subset_size: 2, signed: false }),
        ..TrainConfig::default()
    };
    let run = || {
        let model = fit_normalization(spec().build(10, 1, 8).unwrap(), train_set).unwrap();
        train(model, train_set, test_set, &cfg).unwrap()
    };
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1.to_csv(), h2.to_csv());
    assert_eq!(m1, m2);
    assert_eq!(h1.test_rel_l2.len(), 5);
}

#[test]
fn zero_epochs_returns_initial_model() {
    let data = [sample("a", 0.0)];
    let model = fit_normalization(spec().build(10, 1, 1).unwrap(), &data).unwrap();
    let (out, history) = train(model.clone(), &data, &[], &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(out, model);
    assert_eq!(history.epochs(), 0);
}
