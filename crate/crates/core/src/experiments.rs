//! Desk-scale versions of the comparison studies.
//!
//! Single-case studies train on one record whose roof response is normalized
//! to unit peak, low-passed at `κ_up` and indexed by normalized time, so a
//! trunk scale `s` corresponds to `s / 2π` cycles per record.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_dataset, DatasetConfig, OperatorSample};
use crate::deeponet::{count_parameters, LayerSpec, ModelSpec, OperatorModel, ScaleSchedule, Variant};
use crate::dsp::{antialias_downsample, butterworth_design, dft, FilterKind};
use crate::error::{Error, Result};
use crate::excitation::{generate_ensemble, generate_record, GenerationConfig, SeismicRecord};
use crate::neural::Activation;
use crate::series::TimeSeries;
use crate::structural::ShearBuildingModel;
use crate::training::{evaluate, fit_normalization, per_sample_errors, train, MetricHistory, TrainConfig};

/// Mean relative L2 reported for the amplitude-separated model at full scale.
pub const REFERENCE_TEST_REL_L2: f64 = 0.13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Cycles per record.
    pub cycles: f64,
    pub target: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub spec: ModelSpec,
    pub parameters: usize,
    #[serde(skip)]
    pub history: MetricHistory,
    /// MSE of the final model on its training data, normalized units.
    pub final_mse: f64,
    pub final_train_rel_l2: f64,
    pub final_test_rel_l2: Option<f64>,
    pub epochs_to_threshold: Option<usize>,
    pub spectral_error: Option<f64>,
    pub per_floor_test_rel_l2: Vec<f64>,
    #[serde(skip)]
    pub spectrum: Vec<Vec<SpectrumPoint>>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    pub seed: u64,
    pub epochs: usize,
    pub arms: Vec<ArmResult>,
    pub notes: Vec<String>,
    pub reference_test_rel_l2: Option<f64>,
}

impl ExperimentReport {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// `summary.json`, `<arm>_curves.csv` and `<arm>_spectrum.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let summary = dir.join("summary.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
        for arm in &self.arms {
            arm.history.write_csv(&dir.join(format!("{}_curves.csv", arm.name)))?;
            if !arm.spectrum.is_empty() {
                let path = dir.join(format!("{}_spectrum.csv", arm.name));
                std::fs::write(&path, spectrum_csv(&arm.spectrum)).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

fn spectrum_csv(per_floor: &[Vec<SpectrumPoint>]) -> String {
    let mut out = String::from("floor,cycles,target,prediction\n");
    for (f, points) in per_floor.iter().enumerate() {
        for p in points {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", f + 1, p.cycles, p.target, p.prediction);
        }
    }
    out
}

/// One normalized (record, response) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleCase {
    pub generator: GenerationConfig,
    pub decimation: usize,
    pub filter_order: usize,
    pub sensors: usize,
    /// Target floor, zero-based.
    pub floor: usize,
}

impl Default for SingleCase {
    fn default() -> Self {
        Self {
            generator: GenerationConfig {
                duration: 15.0,
                ..GenerationConfig::default()
            },
            decimation: 4,
            filter_order: 8,
            sensors: 50,
            floor: 7,
        }
    }
}

/// Zero-phase low-pass keeping content below `kappa_up` radians per record.
pub fn lowpass_cycles(values: &[f64], kappa_up: f64, order: usize) -> Result<Vec<f64>> {
    let n = values.len();
    let cycles = kappa_up / (2.0 * PI);
    let omega = 2.0 * PI * cycles / (n - 1) as f64;
    if !(omega > 0.0 && omega < PI) {
        return Err(Error::invalid(format!(
            "kappa_up {kappa_up} is not representable on a {n}-sample record"
        )));
    }
    butterworth_design(order, omega, FilterKind::Digital)?.apply(values, true)
}

pub fn single_case_sample(case: &SingleCase, building: &ShearBuildingModel, kappa_up: f64) -> Result<OperatorSample> {
    let record = generate_record(&case.generator)?;
    let ground = antialias_downsample(&record.series.values, case.decimation, case.filter_order)?;
    let coarse = SeismicRecord {
        series: TimeSeries::new(record.series.dt * case.decimation as f64, ground)?,
        ..record
    };
    let solved = crate::dataset::solve_sample(&coarse, building, &[case.floor], 2)?;
    let n = solved.query_times.len();
    let target = lowpass_cycles(&solved.targets.column(0).to_vec(), kappa_up, case.filter_order)?;
    let peak = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let input_peak = coarse.series.max_abs();
    if !(peak > 0.0 && input_peak > 0.0) {
        return Err(Error::invalid("single-case record produced a zero response"));
    }
    let excitation = TimeSeries::new(1.0 / (n - 1) as f64, coarse.series.scaled(1.0 / input_peak).values)?;
    let targets = Array2::from_shape_fn((n, 1), |(j, _)| target[j] / peak);
    OperatorSample::new(coarse.id, excitation, case.sensors, targets)
}

/// Relative L2 between amplitude spectra for bins up to `cycles` per record, plus the spectra.
pub fn spectral_capture(prediction: &[f64], target: &[f64], cycles: f64) -> Result<(f64, Vec<SpectrumPoint>)> {
    let p = dft(prediction, 1.0)?;
    let t = dft(target, 1.0)?;
    let top = (cycles.floor() as usize).min(target.len() / 2);
    let points: Vec<SpectrumPoint> = (0..=top)
        .map(|k| SpectrumPoint {
            cycles: k as f64,
            target: t.bins[k].norm(),
            prediction: p.bins[k].norm(),
        })
        .collect();
    let num: f64 = points.iter().map(|q| (q.prediction - q.target).powi(2)).sum();
    let den: f64 = points.iter().map(|q| q.target.powi(2)).sum();
    if !(den > 0.0) {
        return Err(Error::invalid("target spectrum is empty below the cutoff"));
    }
    Ok(((num / den).sqrt(), points))
}

fn run_arm(
    name: &str,
    spec: &ModelSpec,
    model: OperatorModel,
    train_set: &[OperatorSample],
    test_set: &[OperatorSample],
    config: &TrainConfig,
) -> Result<(ArmResult, OperatorModel)> {
    let start = std::time::Instant::now();
    let parameters = count_parameters(&model);
    let (model, history) = train(model, train_set, test_set, config)?;
    let mut sq = 0.0;
    let mut count = 0usize;
    for s in train_set {
        let pred = model.predict_one(&s.branch_input, &s.query_times)?;
        for (f, scale) in model.output_scale.iter().enumerate() {
            for (p, y) in pred.column(f).iter().zip(s.targets.column(f)) {
                sq += ((p - y) / scale).powi(2);
                count += 1;
            }
        }
    }
    let final_test_rel_l2 = if test_set.is_empty() { None } else { Some(evaluate(&model, test_set)?) };
    let result = ArmResult {
        name: name.to_string(),
        spec: spec.clone(),
        parameters,
        final_mse: sq / count as f64,
        final_train_rel_l2: evaluate(&model, train_set)?,
        final_test_rel_l2,
        epochs_to_threshold: None,
        spectral_error: None,
        per_floor_test_rel_l2: Vec::new(),
        spectrum: Vec::new(),
        history,
        seconds: start.elapsed().as_secs_f64(),
    };
    log::info!(
        "{name}: params {parameters} mse {:.3e} train {:.4} test {:?} ({:.1}s)",
        result.final_mse,
        result.final_train_rel_l2,
        result.final_test_rel_l2,
        result.seconds
    );
    Ok((result, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpacingConfig {
    pub case: SingleCase,
    pub kappa_up: f64,
    pub subnets: usize,
    pub latent_per_subnet: usize,
    pub subnet: LayerSpec,
    pub branch: LayerSpec,
    pub mse_threshold: f64,
    pub train: TrainConfig,
}

impl ScaleSpacingConfig {
    pub fn desk() -> Self {
        Self {
            case: SingleCase::default(),
            kappa_up: 20.0 * 2.0 * PI,
            subnets: 10,
            latent_per_subnet: 4,
            subnet: LayerSpec { layers: 4, width: 8, activation: Activation::Sin },
            branch: LayerSpec { layers: 4, width: 32, activation: Activation::Sin },
            mse_threshold: 1e-6,
            train: TrainConfig { epochs: 300, batch_size: 1, ..TrainConfig::default() },
        }
    }

    pub fn paper() -> Self {
        Self {
            case: SingleCase { generator: GenerationConfig::default(), ..SingleCase::default() },
            kappa_up: 60.0 * 2.0 * PI,
            subnets: 30,
            latent_per_subnet: 10,
            subnet: LayerSpec { layers: 4, width: 10, activation: Activation::Sin },
            branch: LayerSpec { layers: 4, width: 500, activation: Activation::Sin },
            train: TrainConfig { batch_size: 1, ..TrainConfig::default() },
            ..Self::desk()
        }
    }
}

/// bFCN-tMS trained twice on one pair, with linear and exponential trunk scales.
pub fn scale_spacing_study(config: &ScaleSpacingConfig, building: &ShearBuildingModel) -> Result<ExperimentReport> {
    if !(config.kappa_up > 0.0) || config.subnets < 2 {
        return Err(Error::invalid("scale spacing needs kappa_up > 0 and at least two subnets"));
    }
    let sample = single_case_sample(&config.case, building, config.kappa_up)?;
    let samples = [sample];
    let mut arms = Vec::new();
    let schedules = [
        ("linear", ScaleSchedule::Linear { count: config.subnets, kappa_up: config.kappa_up }),
        ("exponential", ScaleSchedule::Exponential { count: config.subnets, kappa_up: config.kappa_up }),
    ];
    for (name, schedule) in schedules {
        let spec = ModelSpec {
            variant: Variant::BfcnTms,
            latent: config.subnets * config.latent_per_subnet,
            branch: config.branch,
            trunk: config.subnet,
            branch_scales: None,
            trunk_scales: Some(schedule),
            tiers: Vec::new(),
            epsilon: 0.1,
        };
        let model = OperatorModel::identity_scaling(spec.build(config.case.sensors, 1, config.train.seed)?);
        let (mut arm, _) = run_arm(name, &spec, model, &samples, &[], &config.train)?;
        arm.epochs_to_threshold = arm.history.epochs_to_mse(config.mse_threshold);
        arms.push(arm);
    }
    Ok(ExperimentReport {
        id: "scale-spacing".into(),
        seed: config.train.seed,
        epochs: config.train.epochs,
        arms,
        notes: vec![format!(
            "kappa_up = {:.4} rad per unit normalized time; threshold {:e}",
            config.kappa_up, config.mse_threshold
        )],
        reference_test_rel_l2: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureConfig {
    pub case: SingleCase,
    pub kappa_up: f64,
    pub subnets: usize,
    pub latent_per_subnet: usize,
    /// Per-subnet layers of the multiscale sides.
    pub trunk_subnet: LayerSpec,
    pub branch_subnet: LayerSpec,
    /// Layers of the fully connected sides; widths default to the multiscale totals.
    pub trunk_dense: LayerSpec,
    pub branch_dense: LayerSpec,
    pub train: TrainConfig,
}

impl StructureConfig {
    pub fn desk() -> Self {
        let subnets = 10;
        Self {
            case: SingleCase::default(),
            kappa_up: 20.0 * 2.0 * PI,
            subnets,
            latent_per_subnet: 4,
            trunk_subnet: LayerSpec { layers: 4, width: 8, activation: Activation::Sin },
            branch_subnet: LayerSpec { layers: 4, width: 4, activation: Activation::Sin },
            trunk_dense: LayerSpec { layers: 4, width: subnets * 8, activation: Activation::Sin },
            branch_dense: LayerSpec { layers: 4, width: subnets * 4, activation: Activation::Sin },
            train: TrainConfig { epochs: 200, batch_size: 1, ..TrainConfig::default() },
        }
    }

    pub fn paper() -> Self {
        Self {
            case: SingleCase { generator: GenerationConfig::default(), ..SingleCase::default() },
            kappa_up: 60.0 * 2.0 * PI,
            subnets: 100,
            latent_per_subnet: 10,
            trunk_subnet: LayerSpec { layers: 4, width: 10, activation: Activation::Sin },
            branch_subnet: LayerSpec { layers: 4, width: 5, activation: Activation::Sin },
            trunk_dense: LayerSpec { layers: 4, width: 1000, activation: Activation::Sin },
            branch_dense: LayerSpec { layers: 4, width: 500, activation: Activation::Sin },
            train: TrainConfig { batch_size: 1, ..TrainConfig::default() },
        }
    }

    fn spec(&self, variant: Variant) -> ModelSpec {
        let scales = ScaleSchedule::Harmonic { count: self.subnets };
        ModelSpec {
            variant,
            latent: self.subnets * self.latent_per_subnet,
            branch: if variant.branch_multiscale() { self.branch_subnet } else { self.branch_dense },
            trunk: if variant.trunk_multiscale() { self.trunk_subnet } else { self.trunk_dense },
            branch_scales: variant.branch_multiscale().then(|| scales.clone()),
            trunk_scales: variant.trunk_multiscale().then_some(scales),
            tiers: Vec::new(),
            epsilon: 0.1,
        }
    }
}

/// All four variants on one pair; spectral capture is measured below `κ_up`.
pub fn structure_study(config: &StructureConfig, building: &ShearBuildingModel) -> Result<ExperimentReport> {
    let sample = single_case_sample(&config.case, building, config.kappa_up)?;
    let samples = [sample];
    let cycles = config.kappa_up / (2.0 * PI);
    let mut arms = Vec::new();
    for variant in Variant::ALL {
        let spec = config.spec(variant);
        let model = OperatorModel::identity_scaling(spec.build(config.case.sensors, 1, config.train.seed)?);
        let (mut arm, model) = run_arm(variant.name(), &spec, model, &samples, &[], &config.train)?;
        let s = &samples[0];
        let pred = model.predict_one(&s.branch_input, &s.query_times)?;
        let (err, points) = spectral_capture(&pred.column(0).to_vec(), &s.targets.column(0).to_vec(), cycles)?;
        arm.spectral_error = Some(err);
        arm.spectrum = vec![points];
        arms.push(arm);
    }
    Ok(ExperimentReport {
        id: "structures".into(),
        seed: config.train.seed,
        epochs: config.train.epochs,
        arms,
        notes: vec![format!("spectral error measured up to {cycles:.1} cycles per record")],
        reference_test_rel_l2: None,
    })
}

/// Synthetic operator with a large slow tier and a small fast tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoTierData {
    pub train: usize,
    pub test: usize,
    pub points: usize,
    pub sensors: usize,
    /// Cycles per record of the slow component.
    pub base_cycles: f64,
    pub frequency_ratio: f64,
    pub amplitude_ratio: f64,
    pub seed: u64,
}

impl Default for TwoTierData {
    fn default() -> Self {
        Self {
            train: 64,
            test: 16,
            points: 201,
            sensors: 64,
            base_cycles: 2.0,
            frequency_ratio: 8.0,
            amplitude_ratio: 10.0,
            seed: 0,
        }
    }
}

/// Inputs `aᵢcos + bᵢsin` at two frequencies; targets are quarter-period shifts with the
/// fast part divided by the amplitude ratio.
pub fn two_tier_dataset(cfg: &TwoTierData) -> Result<(Vec<OperatorSample>, Vec<OperatorSample>)> {
    if cfg.points < 2 || cfg.sensors < 2 || cfg.train == 0 {
        return Err(Error::invalid("two-tier data needs points, sensors and training samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / (cfg.points - 1) as f64;
    let w1 = 2.0 * PI * cfg.base_cycles;
    let w2 = w1 * cfg.frequency_ratio;
    let mut make = |i: usize| {
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let input: Vec<f64> = (0..cfg.points)
            .map(|j| {
                let t = j as f64 * dt;
                c[0] * (w1 * t).cos() + c[1] * (w1 * t).sin() + c[2] * (w2 * t).cos() + c[3] * (w2 * t).sin()
            })
            .collect();
        let targets = Array2::from_shape_fn((cfg.points, 1), |(j, _)| {
            let t = j as f64 * dt;
            c[0] * (w1 * t).sin() - c[1] * (w1 * t).cos()
                + (c[2] * (w2 * t).sin() - c[3] * (w2 * t).cos()) / cfg.amplitude_ratio
        });
        OperatorSample::new(format!("tier-{i:04}"), TimeSeries::new(dt, input)?, cfg.sensors, targets)
    };
    let all = (0..cfg.train + cfg.test).map(&mut make).collect::<Result<Vec<_>>>()?;
    let mut train_set = all;
    let test_set = train_set.split_off(cfg.train);
    Ok((train_set, test_set))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeConfig {
    pub data: TwoTierData,
    pub separated: ModelSpec,
    /// Trunk scales of the comparator; widths are searched to match the separated budget.
    pub monolithic_scales: ScaleSchedule,
    pub monolithic_subnets_latent: usize,
    pub budget_tolerance: f64,
    pub train: TrainConfig,
}

impl AmplitudeConfig {
    pub fn desk() -> Self {
        let subnets = 8;
        let caps = [1.0 + 2.0 * PI * 4.0, 1.0 + 2.0 * PI * 20.0];
        Self {
            data: TwoTierData::default(),
            separated: ModelSpec {
                variant: Variant::BfcnTms,
                latent: subnets * 2,
                branch: LayerSpec { layers: 4, width: 32, activation: Activation::Relu },
                trunk: LayerSpec { layers: 4, width: 8, activation: Activation::Sin },
                branch_scales: None,
                trunk_scales: None,
                tiers: caps.iter().map(|&cap| ScaleSchedule::Capped { count: subnets, cap }).collect(),
                epsilon: 0.1,
            },
            monolithic_scales: ScaleSchedule::Capped { count: subnets, cap: caps[1] },
            monolithic_subnets_latent: 2,
            budget_tolerance: 0.05,
            train: TrainConfig { epochs: 300, batch_size: 16, ..TrainConfig::default() },
        }
    }

    pub fn paper() -> Self {
        Self {
            separated: ModelSpec::paper_separated(),
            monolithic_scales: ScaleSchedule::Harmonic { count: 100 },
            monolithic_subnets_latent: 1,
            train: TrainConfig::default(),
            ..Self::desk()
        }
    }
}

/// Single-DeepONet comparator whose parameter count is closest to `target`.
pub fn match_budget(
    reference: &ModelSpec,
    scales: &ScaleSchedule,
    latent_per_subnet: usize,
    sensors: usize,
    floors: usize,
    target: usize,
) -> Result<(ModelSpec, usize)> {
    let latent = scales.count() * latent_per_subnet;
    let mut best: Option<(ModelSpec, usize)> = None;
    for trunk_width in 1..=64 {
        for branch_width in (4..=1024).step_by(4) {
            let spec = ModelSpec {
                variant: Variant::BfcnTms,
                latent,
                branch: LayerSpec { width: branch_width, ..reference.branch },
                trunk: LayerSpec { width: trunk_width, ..reference.trunk },
                branch_scales: None,
                trunk_scales: Some(scales.clone()),
                tiers: Vec::new(),
                epsilon: reference.epsilon,
            };
            let count = count_for(&spec, sensors, floors);
            let better = best
                .as_ref()
                .is_none_or(|(_, c)| count.abs_diff(target) < c.abs_diff(target));
            if better {
                best = Some((spec, count));
            }
        }
    }
    best.ok_or_else(|| Error::invalid("no comparator found"))
}

fn dense_count(input: usize, spec: &LayerSpec, output: usize) -> usize {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(spec.width, spec.layers.saturating_sub(1)));
    sizes.push(output);
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Parameter count of a single-tier bFCN-tMS spec without building it.
fn count_for(spec: &ModelSpec, sensors: usize, floors: usize) -> usize {
    let subnets = spec.trunk_scales.as_ref().map_or(1, ScaleSchedule::count);
    dense_count(sensors, &spec.branch, spec.latent)
        + subnets * dense_count(1, &spec.trunk, spec.latent / subnets * floors)
        + floors
}

/// Amplitude-separated arm against a budget-matched single DeepONet on the same data.
pub fn amplitude_separation_study(config: &AmplitudeConfig) -> Result<ExperimentReport> {
    let (train_set, test_set) = two_tier_dataset(&config.data)?;
    let sensors = config.data.sensors;
    let separated_model = fit_normalization(config.separated.build(sensors, 1, config.train.seed)?, &train_set)?;
    let budget = count_parameters(&separated_model);
    let (mono_spec, mono_count) = match_budget(
        &config.separated,
        &config.monolithic_scales,
        config.monolithic_subnets_latent,
        sensors,
        1,
        budget,
    )?;
    let deviation = mono_count.abs_diff(budget) as f64 / budget as f64;
    if deviation > config.budget_tolerance {
        return Err(Error::invalid(format!(
            "comparator budget {mono_count} deviates {:.1}% from {budget}",
            deviation * 100.0
        )));
    }
    let mono_model = fit_normalization(mono_spec.build(sensors, 1, config.train.seed)?, &train_set)?;
    let (sep, _) = run_arm("separated", &config.separated, separated_model, &train_set, &test_set, &config.train)?;
    let (mono, _) = run_arm("monolithic", &mono_spec, mono_model, &train_set, &test_set, &config.train)?;
    Ok(ExperimentReport {
        id: "amplitude-separation".into(),
        seed: config.train.seed,
        epochs: config.train.epochs,
        notes: vec![format!(
            "parameter budgets {} vs {} ({:.2}% apart)",
            sep.parameters,
            mono.parameters,
            deviation * 100.0
        )],
        arms: vec![sep, mono],
        reference_test_rel_l2: Some(REFERENCE_TEST_REL_L2),
    })
}

/// Records, preprocessing and dataset settings shared by the multi-record pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub generator: GenerationConfig,
    pub records: usize,
    pub decimation: usize,
    pub filter_order: usize,
    pub dataset: DatasetConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn desk() -> Self {
        Self {
            generator: GenerationConfig::default(),
            records: 20,
            decimation: 4,
            filter_order: 8,
            dataset: DatasetConfig { sensors: 100, floors: vec![7], train_fraction: 0.8, augmentation: None },
            model: ModelSpec::desk_separated(10, 4),
            train: TrainConfig {
                epochs: 300,
                on_the_fly: Some(crate::training::OnTheFly { subset_size: 4, signed: false }),
                ..TrainConfig::default()
            },
        }
    }

    pub fn paper() -> Self {
        Self {
            records: 50,
            model: ModelSpec::paper_separated(),
            train: TrainConfig {
                on_the_fly: Some(crate::training::OnTheFly { subset_size: 4, signed: false }),
                ..TrainConfig::default()
            },
            ..Self::desk()
        }
    }

    pub fn multifloor() -> Self {
        let mut cfg = Self::desk();
        cfg.dataset.floors = (1..8).collect();
        cfg
    }
}

/// Generated and anti-alias downsampled records.
pub fn prepare_records(config: &PipelineConfig) -> Result<Vec<SeismicRecord>> {
    generate_ensemble(&config.generator, config.records)?
        .into_iter()
        .map(|r| {
            let values = antialias_downsample(&r.series.values, config.decimation, config.filter_order)?;
            Ok(SeismicRecord {
                series: TimeSeries::new(r.series.dt * config.decimation as f64, values)?,
                ..r
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: ExperimentReport,
    pub model: OperatorModel,
    /// Mean wall-clock seconds to predict one held-out record.
    pub inference_seconds: f64,
}

/// Records → preprocessing → dataset → amplitude-separated training → held-out evaluation.
pub fn run_pipeline(config: &PipelineConfig, building: &ShearBuildingModel, id: &str) -> Result<PipelineOutcome> {
    let records = prepare_records(config)?;
    let dataset = build_dataset(&records, building, &config.dataset)?;
    if dataset.test.is_empty() {
        return Err(Error::invalid("pipeline needs held-out records"));
    }
    let floors = config.dataset.floors.len();
    let model = fit_normalization(config.model.build(config.dataset.sensors, floors, config.train.seed)?, &dataset.train)?;
    let (mut arm, model) = run_arm("separated", &config.model, model, &dataset.train, &dataset.test, &config.train)?;

    let start = std::time::Instant::now();
    let mut predictions = Vec::with_capacity(dataset.test.len());
    for s in &dataset.test {
        predictions.push(model.predict_one(&s.branch_input, &s.query_times)?);
    }
    let inference_seconds = start.elapsed().as_secs_f64() / dataset.test.len() as f64;

    arm.per_floor_test_rel_l2 = (0..floors)
        .map(|f| {
            let mut total = 0.0;
            for (s, p) in dataset.test.iter().zip(&predictions) {
                let num: f64 = p.column(f).iter().zip(s.targets.column(f)).map(|(a, b)| (a - b).powi(2)).sum();
                let den: f64 = s.targets.column(f).iter().map(|v| v * v).sum();
                total += (num / den).sqrt();
            }
            total / dataset.test.len() as f64
        })
        .collect();
    let first = &dataset.test[0];
    let cycles = (first.query_times.len() / 2) as f64;
    arm.spectrum = (0..floors)
        .map(|f| {
            spectral_capture(&predictions[0].column(f).to_vec(), &first.targets.column(f).to_vec(), cycles)
                .map(|(_, pts)| pts)
        })
        .collect::<Result<_>>()?;

    let mut notes = vec![format!("inference {:.3e} s per record", inference_seconds)];
    let errors = per_sample_errors(&model, &dataset.test)?;
    notes.push(format!("held-out errors {errors:?}"));
    if floors > 1 {
        notes.push(floor_ranking(&dataset.train[..records.len().min(dataset.train.len())], &config.dataset.floors));
    }
    Ok(PipelineOutcome {
        report: ExperimentReport {
            id: id.into(),
            seed: config.train.seed,
            epochs: config.train.epochs,
            arms: vec![arm],
            notes,
            reference_test_rel_l2: Some(REFERENCE_TEST_REL_L2),
        },
        model,
        inference_seconds,
    })
}

/// Floors ordered by mean peak amplitude, with each floor's mean spectral centroid.
fn floor_ranking(samples: &[OperatorSample], floors: &[usize]) -> String {
    let mut stats: Vec<(usize, f64, f64)> = floors
        .iter()
        .enumerate()
        .map(|(f, &floor)| {
            let amp = samples.iter().map(|s| s.max_abs_target[f]).sum::<f64>() / samples.len() as f64;
            let centroid = samples
                .iter()
                .map(|s| {
                    let col = s.targets.column(f).to_vec();
                    let spec = dft(&col, 1.0 / s.dt).map(|sp| sp.one_sided_amplitude()).unwrap_or_default();
                    let power: f64 = spec.iter().map(|(_, a)| a * a).sum();
                    spec.iter().map(|(hz, a)| hz * a * a).sum::<f64>() / power.max(f64::MIN_POSITIVE)
                })
                .sum::<f64>()
                / samples.len() as f64;
            (floor + 1, amp, centroid)
        })
        .collect();
    stats.sort_by(|a, b| b.1.total_cmp(&a.1));
    let parts: Vec<String> = stats
        .iter()
        .map(|(floor, amp, c)| format!("floor {floor}: peak {amp:.3e} m, centroid {c:.2} Hz"))
        .collect();
    format!("amplitude ranking: {}", parts.join("; "))
}

/// Mean response spectrum per floor, exposed for plotting.
pub fn mean_floor_spectra(samples: &[OperatorSample]) -> Result<Array2<f64>> {
    let first = samples.first().ok_or_else(|| Error::invalid("no samples"))?;
    let bins = first.query_times.len() / 2 + 1;
    let mut out = Array2::zeros((bins, first.floors()));
    for s in samples {
        for (f, col) in s.targets.axis_iter(Axis(1)).enumerate() {
            let spec = dft(&col.to_vec(), 1.0 / s.dt)?;
            for k in 0..bins {
                out[[k, f]] += spec.bins[k].norm() / samples.len() as f64;
            }
        }
    }
    Ok(out)
}
