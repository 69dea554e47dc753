use msdeeponet::deeponet::{harmonic_scales, Architecture, LayerSpec, ModelSpec, ScaleSchedule, Variant};
use msdeeponet::neural::{Activation, Parameters};
use msdeeponet::training::{batch_loss, loss_and_gradient, Batch};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn batch(sensors: usize, floors: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3;
    let t = 9;
    let targets: Array3<f64> = Array3::from_shape_fn((n, t, floors), |_| rng.random_range(-1.0..1.0));
    let max_abs = Array2::from_shape_fn((n, floors), |(i, f)| {
        (0..t).fold(0.0f64, |m, j| m.max(targets[[i, j, f]].abs()))
    });
    Batch {
        inputs: Array2::from_shape_fn((n, sensors), |_| rng.random_range(-1.0..1.0)),
        times: Array2::from_shape_fn((t, 1), |(j, _)| j as f64 / (t - 1) as f64),
        targets,
        max_abs,
        dt: 0.05,
    }
}

/// Largest elementwise relative deviation between analytic and central-difference gradients.
pub fn max_gradient_error(arch: &Architecture, batch: &Batch) -> f64 {
    let (_, grads, _) = loss_and_gradient(arch, batch).unwrap();
    let analytic = grads.to_flat();
    let base = arch.to_flat();
    let h = 1e-5;
    let mut probe = arch.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat(&p).unwrap();
        let up = batch_loss(&probe, batch).unwrap();
        p[i] = base[i] - h;
        probe.set_flat(&p).unwrap();
        let down = batch_loss(&probe, batch).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Moves every parameter off the initial point so no relu pre-activation sits exactly on its kink.
pub fn jitter(arch: &mut Architecture, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = arch.to_flat().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
    arch.set_flat(&p).unwrap();
}

pub fn small_spec(variant: Variant) -> ModelSpec {
    let scales = ScaleSchedule::Explicit { values: harmonic_scales(2) };
    ModelSpec {
        variant,
        latent: 4,
        branch: LayerSpec { layers: 3, width: 5, activation: Activation::Sin },
        trunk: LayerSpec { layers: 3, width: 4, activation: Activation::Sin },
        branch_scales: variant.branch_multiscale().then(|| scales.clone()),
        trunk_scales: variant.trunk_multiscale().then(|| scales.clone()),
        tiers: Vec::new(),
        epsilon: 0.1,
    }
}

/// Three tiers with relu branches, the shape checked by the gradient tests.
pub fn separated_spec() -> ModelSpec {
    ModelSpec {
        tiers: (1..=3).map(|k| ScaleSchedule::Capped { count: 2, cap: 1.0 + 2.0 * k as f64 }).collect(),
        trunk_scales: None,
        branch: LayerSpec { layers: 3, width: 5, activation: Activation::Relu },
        ..small_spec(Variant::BfcnTms)
    }
}
