//! Amplitude-weighted loss, relative L2 metrics and the Adam training loop.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{draw_combination, OperatorSample, Superpose};
use crate::deeponet::{Architecture, OperatorModel};
use crate::error::{Error, Result};
use crate::neural::{AdamState, Parameters};

/// `(1/𝒩) Σᵢ (1/maxⱼ|yᵢⱼ|) Δt Σⱼ (fᵢⱼ − yᵢⱼ)²` over the rows of `targets`.
pub fn weighted_loss(predictions: ArrayView2<f64>, targets: ArrayView2<f64>, dt: f64) -> Result<f64> {
    check_shapes(predictions.dim(), targets.dim())?;
    let mut total = 0.0;
    for (p, y) in predictions.rows().into_iter().zip(targets.rows()) {
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(peak > 0.0) {
            return Err(Error::invalid("loss row has zero target amplitude"));
        }
        let sq: f64 = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        total += dt * sq / peak;
    }
    Ok(total / targets.nrows() as f64)
}

/// Mean over rows of `‖f − y‖ / ‖y‖` under the Δt-weighted norm.
pub fn relative_l2(predictions: ArrayView2<f64>, targets: ArrayView2<f64>, dt: f64) -> Result<f64> {
    check_shapes(predictions.dim(), targets.dim())?;
    let mut total = 0.0;
    for (p, y) in predictions.rows().into_iter().zip(targets.rows()) {
        let den: f64 = y.iter().map(|v| v * v).sum::<f64>() * dt;
        if !(den > 0.0) {
            return Err(Error::invalid("relative error of a zero-norm target"));
        }
        let num: f64 = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * dt;
        total += (num / den).sqrt();
    }
    Ok(total / targets.nrows() as f64)
}

fn check_shapes(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("prediction shape {a:?} differs from target shape {b:?}")));
    }
    if a.0 == 0 || a.1 == 0 {
        return Err(Error::invalid("empty prediction array"));
    }
    Ok(())
}

/// Per-sample relative L2 over all floors and times, each floor weighted by `scales[f]`.
fn sample_relative_l2(pred: ArrayView2<f64>, target: ArrayView2<f64>, scales: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, s) in scales.iter().enumerate() {
        let s2 = s * s;
        for (p, y) in pred.column(f).iter().zip(target.column(f)) {
            num += s2 * (p - y).powi(2);
            den += s2 * y * y;
        }
    }
    if !(den > 0.0) {
        return Err(Error::invalid("relative error of a zero-norm target"));
    }
    Ok((num / den).sqrt())
}

/// Normalized training batch sharing one query grid.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub times: Array2<f64>,
    /// `(N, T, l)` normalized targets.
    pub targets: Array3<f64>,
    /// `(N, l)` normalized peak amplitudes.
    pub max_abs: Array2<f64>,
    pub dt: f64,
}

impl Batch {
    pub fn from_samples(model: &OperatorModel, samples: &[&OperatorSample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let (t_len, l) = first.targets.dim();
        if l != model.floors() {
            return Err(Error::LengthMismatch {
                what: "sample floors",
                expected: model.floors(),
                actual: l,
            });
        }
        let m = model.sensors();
        let n = samples.len();
        let mut inputs = Array2::zeros((n, m));
        let mut targets = Array3::zeros((n, t_len, l));
        let mut max_abs = Array2::zeros((n, l));
        for (i, s) in samples.iter().enumerate() {
            if s.branch_input.len() != m {
                return Err(Error::LengthMismatch {
                    what: "sensor count",
                    expected: m,
                    actual: s.branch_input.len(),
                });
            }
            if s.targets.dim() != (t_len, l) || s.query_times != first.query_times {
                return Err(Error::invalid("samples in a batch must share their query grid"));
            }
            for (k, v) in s.branch_input.iter().enumerate() {
                inputs[[i, k]] = v / model.input_scale;
            }
            for (f, scale) in model.output_scale.iter().enumerate() {
                targets
                    .slice_mut(s![i, .., f])
                    .assign(&s.targets.column(f).mapv(|v| v / scale));
                max_abs[[i, f]] = s.max_abs_target[f] / scale;
            }
        }
        Ok(Self {
            inputs,
            times: model.normalized_times(&first.query_times),
            targets,
            max_abs,
            dt: first.dt,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weighted loss of `preds` against a batch and its gradient w.r.t. `preds`.
fn loss_with_gradient(preds: ArrayView3<f64>, batch: &Batch) -> (f64, Array3<f64>) {
    let (n, _, l) = preds.dim();
    let rows = (n * l) as f64;
    let mut grad = Array3::zeros(preds.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        for f in 0..l {
            let w = batch.dt / (batch.max_abs[[i, f]] * rows);
            let p = preds.slice(s![i, .., f]);
            let y = batch.targets.slice(s![i, .., f]);
            let mut g = grad.slice_mut(s![i, .., f]);
            for ((gv, pv), yv) in g.iter_mut().zip(p).zip(y) {
                let d = pv - yv;
                loss += w * d * d;
                *gv = 2.0 * w * d;
            }
        }
    }
    (loss, grad)
}

/// Loss, parameter gradient and predictions of `arch` on a batch.
pub fn loss_and_gradient(arch: &Architecture, batch: &Batch) -> Result<(f64, Architecture, Array3<f64>)> {
    let (preds, cache) = arch.forward_batch(batch.inputs.view(), batch.times.view())?;
    let (loss, grad) = loss_with_gradient(preds.view(), batch);
    Ok((loss, arch.backward(&cache, &grad), preds))
}

/// Loss only, for finite-difference checks.
pub fn batch_loss(arch: &Architecture, batch: &Batch) -> Result<f64> {
    let preds = arch.predict(batch.inputs.view(), batch.times.view())?;
    Ok(loss_with_gradient(preds.view(), batch).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnTheFly {
    pub subset_size: usize,
    #[serde(default)]
    pub signed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Synthesize every batch by superposition of training samples.
    pub on_the_fly: Option<OnTheFly>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            batches_per_epoch: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            on_the_fly: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::invalid("batches per epoch and batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(otf) = &self.on_the_fly {
            if otf.subset_size == 0 {
                return Err(Error::invalid("on-the-fly subset size must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricHistory {
    /// Mean over the epoch's batches of the relative L2 at each batch's parameters.
    pub train_rel_l2: Vec<f64>,
    /// Relative L2 on the test set at the end of each epoch; empty without a test set.
    pub test_rel_l2: Vec<f64>,
    /// Mean squared error in normalized units, averaged over the epoch's batches.
    pub train_mse: Vec<f64>,
    pub batch_loss: Vec<f64>,
}

impl MetricHistory {
    pub fn epochs(&self) -> usize {
        self.train_rel_l2.len()
    }

    /// First epoch (1-based) whose train MSE is at or below `threshold`.
    pub fn epochs_to_mse(&self, threshold: f64) -> Option<usize> {
        self.train_mse.iter().position(|v| *v <= threshold).map(|i| i + 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_rel_l2,test_rel_l2,train_mse\n");
        for e in 0..self.epochs() {
            let test = self.test_rel_l2.get(e).map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{},{:e}", e + 1, self.train_rel_l2[e], test, self.train_mse[e]);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Wraps `arch` with normalization fitted on the training samples.
pub fn fit_normalization(arch: Architecture, train: &[OperatorSample]) -> Result<OperatorModel> {
    let first = train.first().ok_or_else(|| Error::invalid("normalization needs training samples"))?;
    let input_scale = train
        .iter()
        .flat_map(|s| s.branch_input.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let output_scale = (0..arch.floors())
        .map(|f| train.iter().fold(0.0f64, |m, s| m.max(s.max_abs_target.get(f).copied().unwrap_or(0.0))))
        .collect();
    let horizon = first.query_times.last().copied().unwrap_or(1.0);
    OperatorModel::new(
        arch,
        if input_scale > 0.0 { input_scale } else { 1.0 },
        output_scale,
        if horizon > 0.0 { horizon } else { 1.0 },
    )
}

/// Mean relative L2 over `samples` in physical units.
pub fn evaluate(model: &OperatorModel, samples: &[OperatorSample]) -> Result<f64> {
    Ok(per_sample_errors(model, samples)?.iter().sum::<f64>() / samples.len() as f64)
}

pub fn per_sample_errors(model: &OperatorModel, samples: &[OperatorSample]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let mut errors = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let refs: Vec<&OperatorSample> = chunk.iter().collect();
        let batch = Batch::from_samples(model, &refs)?;
        let preds = model.arch.predict(batch.inputs.view(), batch.times.view())?;
        for i in 0..chunk.len() {
            errors.push(sample_relative_l2(
                preds.slice(s![i, .., ..]),
                batch.targets.slice(s![i, .., ..]),
                &model.output_scale,
            )?);
        }
    }
    Ok(errors)
}

/// Adam on the weighted loss with seeded shuffling; returns the final model and its history.
pub fn train(
    mut model: OperatorModel,
    train_set: &[OperatorSample],
    test_set: &[OperatorSample],
    config: &TrainConfig,
) -> Result<(OperatorModel, MetricHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut history = MetricHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.num_params(), config.learning_rate);
    let n = train_set.len();
    let per_batch = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut rel_sum = 0.0;
        let mut mse_sum = 0.0;
        for b in 0..config.batches_per_epoch {
            let synthesized: Vec<OperatorSample>;
            let refs: Vec<&OperatorSample> = match &config.on_the_fly {
                Some(otf) => {
                    let k = otf.subset_size.min(n);
                    synthesized = (0..config.batch_size)
                        .map(|_| {
                            let (idx, w) = draw_combination(&mut rng, n, k, otf.signed);
                            let items: Vec<&OperatorSample> = idx.iter().map(|&i| &train_set[i]).collect();
                            OperatorSample::superpose(&items, &w)
                        })
                        .collect::<Result<_>>()?;
                    synthesized.iter().collect()
                }
                None => (0..per_batch).map(|i| &train_set[order[(b * per_batch + i) % n]]).collect(),
            };
            let batch = Batch::from_samples(&model, &refs)?;
            let (loss, grads, preds) = loss_and_gradient(&model.arch, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {} batch {}", epoch + 1, b + 1)));
            }
            history.batch_loss.push(loss);
            let mut rel = 0.0;
            for i in 0..batch.len() {
                rel += sample_relative_l2(
                    preds.slice(s![i, .., ..]),
                    batch.targets.slice(s![i, .., ..]),
                    &model.output_scale,
                )?;
            }
            rel_sum += rel / batch.len() as f64;
            mse_sum += (&preds - &batch.targets).mapv(|d| d * d).mean().unwrap_or(0.0);
            adam.update(&mut model.arch, &grads)?;
        }
        let batches = config.batches_per_epoch as f64;
        history.train_rel_l2.push(rel_sum / batches);
        history.train_mse.push(mse_sum / batches);
        if !test_set.is_empty() {
            history.test_rel_l2.push(evaluate(&model, test_set)?);
        }
        log::debug!(
            "epoch {} train {:.4e} mse {:.4e}",
            epoch + 1,
            history.train_rel_l2[epoch],
            history.train_mse[epoch]
        );
    }
    Ok((model, history))
}
