//! Operator-learning samples and superposition augmentation.
//!
//! A sample pairs the sensor values of a ground-acceleration record with the
//! displacement response of selected floors on the solver grid. Because the
//! structure is linear, any weighted sum of samples with weights summing to
//! one is again an exact sample.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excitation::SeismicRecord;
use crate::series::TimeSeries;
use crate::structural::{ground_motion_load, newmark_solve, NewmarkParams, ResponseHistory, ShearBuildingModel};

/// Contribution of a base record to a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSample {
    pub id: String,
    pub provenance: Vec<Provenance>,
    pub dt: f64,
    /// Ground acceleration on the target grid.
    pub excitation: Vec<f64>,
    /// Excitation at the `m` sensor times.
    pub branch_input: Vec<f64>,
    pub query_times: Vec<f64>,
    /// `T_q × l` floor displacements.
    pub targets: Array2<f64>,
    pub max_abs_target: Vec<f64>,
}

impl OperatorSample {
    pub fn new(id: impl Into<String>, excitation: TimeSeries, sensors: usize, targets: Array2<f64>) -> Result<Self> {
        if targets.nrows() != excitation.len() {
            return Err(Error::LengthMismatch {
                what: "target rows",
                expected: excitation.len(),
                actual: targets.nrows(),
            });
        }
        let id = id.into();
        let sample = Self {
            provenance: vec![Provenance { source: id.clone(), weight: 1.0 }],
            id,
            dt: excitation.dt,
            branch_input: sample_sensors(&excitation, sensors)?,
            query_times: excitation.times(),
            max_abs_target: column_max_abs(&targets),
            targets,
            excitation: excitation.values,
        };
        sample.check_amplitude()?;
        Ok(sample)
    }

    pub fn floors(&self) -> usize {
        self.targets.ncols()
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.provenance.iter().map(|p| p.source.as_str())
    }

    fn check_amplitude(&self) -> Result<()> {
        if let Some(f) = self.max_abs_target.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::invalid(format!(
                "sample {} has zero response amplitude on output {f}",
                self.id
            )));
        }
        Ok(())
    }
}

fn column_max_abs(targets: &Array2<f64>) -> Vec<f64> {
    targets
        .axis_iter(Axis(1))
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect()
}

/// Values at `m` equispaced times covering both endpoints, linearly interpolated.
pub fn sample_sensors(series: &TimeSeries, m: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if m < 2 {
        return Err(Error::invalid(format!("need at least two sensors, got {m}")));
    }
    if m > n {
        return Err(Error::invalid(format!("{m} sensors exceed the record length {n}")));
    }
    Ok((0..m)
        .map(|i| {
            // Integer arithmetic keeps sensor positions exact when m divides the grid.
            let num = i * (n - 1);
            let idx = num / (m - 1);
            let rem = num % (m - 1);
            if rem == 0 {
                series.values[idx]
            } else {
                let frac = rem as f64 / (m - 1) as f64;
                series.values[idx] + frac * (series.values[idx + 1] - series.values[idx])
            }
        })
        .collect())
}

/// Items that can be combined linearly into a new valid item.
pub trait Superpose: Sized {
    fn superpose(items: &[&Self], weights: &[f64]) -> Result<Self>;
}

/// A load history with its response.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadResponsePair {
    pub excitation: TimeSeries,
    pub response: ResponseHistory,
}

impl Superpose for LoadResponsePair {
    fn superpose(items: &[&Self], weights: &[f64]) -> Result<Self> {
        let loads: Vec<&TimeSeries> = items.iter().map(|p| &p.excitation).collect();
        let responses: Vec<&ResponseHistory> = items.iter().map(|p| &p.response).collect();
        Ok(Self {
            excitation: TimeSeries::linear_combination(&loads, weights)?,
            response: ResponseHistory::linear_combination(&responses, weights)?,
        })
    }
}

impl Superpose for OperatorSample {
    fn superpose(items: &[&Self], weights: &[f64]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid("superposition of zero samples"))?;
        if items.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "superposition weights",
                expected: items.len(),
                actual: weights.len(),
            });
        }
        for s in items {
            if s.targets.dim() != first.targets.dim()
                || s.branch_input.len() != first.branch_input.len()
                || (s.dt - first.dt).abs() > 1e-12 * first.dt
            {
                return Err(Error::invalid("superposed samples must share grid, sensors and floors"));
            }
        }
        let mut excitation = vec![0.0; first.excitation.len()];
        let mut targets = Array2::zeros(first.targets.dim());
        let mut sources: BTreeMap<&str, f64> = BTreeMap::new();
        for (s, &w) in items.iter().zip(weights) {
            for (acc, v) in excitation.iter_mut().zip(&s.excitation) {
                *acc += w * v;
            }
            targets.scaled_add(w, &s.targets);
            for p in &s.provenance {
                *sources.entry(p.source.as_str()).or_insert(0.0) += w * p.weight;
            }
        }
        let branch_input = sample_sensors(&TimeSeries::new(first.dt, excitation.clone())?, first.branch_input.len())?;
        let sample = Self {
            id: format!("{}+{}", first.id, items.len() - 1),
            provenance: sources
                .into_iter()
                .map(|(source, weight)| Provenance { source: source.to_string(), weight })
                .collect(),
            dt: first.dt,
            excitation,
            branch_input,
            query_times: first.query_times.clone(),
            max_abs_target: column_max_abs(&targets),
            targets,
        };
        sample.check_amplitude()?;
        Ok(sample)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    pub subset_size: usize,
    pub count: usize,
    /// Draw weights from `[−1, 1)` before normalizing instead of `[0, 1)`.
    #[serde(default)]
    pub signed: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Random weights normalized so they sum to one.
pub fn draw_weights<R: Rng + ?Sized>(rng: &mut R, k: usize, signed: bool) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..k)
            .map(|_| if signed { rng.random_range(-1.0..1.0) } else { rng.random::<f64>() })
            .collect();
        let total: f64 = g.iter().sum();
        // Small totals would blow the amplitudes up.
        if total.abs() > 1e-3 {
            return g.into_iter().map(|v| v / total).collect();
        }
    }
}

/// A fresh index subset of size `k` out of `n` and matching weights.
pub fn draw_combination<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, signed: bool) -> (Vec<usize>, Vec<f64>) {
    let indices = index::sample(rng, n, k).into_vec();
    let weights = draw_weights(rng, k, signed);
    (indices, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented<T> {
    pub item: T,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

pub fn augment_superposition<T: Superpose>(base: &[T], config: &AugmentationConfig) -> Result<Vec<Augmented<T>>> {
    if base.is_empty() {
        return Err(Error::invalid("augmentation needs a non-empty base set"));
    }
    if config.subset_size == 0 || config.subset_size > base.len() {
        return Err(Error::invalid(format!(
            "subset size {} must lie in 1..={}",
            config.subset_size,
            base.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.count)
        .map(|_| {
            let (indices, weights) = draw_combination(&mut rng, base.len(), config.subset_size, config.signed);
            let items: Vec<&T> = indices.iter().map(|&i| &base[i]).collect();
            Ok(Augmented {
                item: T::superpose(&items, &weights)?,
                indices,
                weights,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub sensors: usize,
    /// Zero-based floor indices used as outputs.
    pub floors: Vec<usize>,
    pub train_fraction: f64,
    #[serde(default)]
    pub augmentation: Option<AugmentationConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sensors: usize,
    pub floors: Vec<usize>,
    pub dt: f64,
    pub train: Vec<OperatorSample>,
    pub test: Vec<OperatorSample>,
}

impl Dataset {
    /// Ids of base records reachable from any training sample.
    pub fn train_sources(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.train.iter().flat_map(|s| s.sources().map(str::to_string)).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Response of the requested floors to one ground-acceleration record.
pub fn solve_sample(
    record: &SeismicRecord,
    model: &ShearBuildingModel,
    floors: &[usize],
    sensors: usize,
) -> Result<OperatorSample> {
    if let Some(&bad) = floors.iter().find(|&&f| f >= model.n_floors) {
        return Err(Error::invalid(format!(
            "floor index {bad} outside a {}-floor model",
            model.n_floors
        )));
    }
    let load = ground_motion_load(model, &record.series)?;
    let response = newmark_solve(model, &load, NewmarkParams::average_acceleration(record.series.dt))?;
    let targets = Array2::from_shape_fn((response.n_steps(), floors.len()), |(j, f)| {
        response.displacements[floors[f]][j]
    });
    OperatorSample::new(record.id.clone(), record.series.clone(), sensors, targets)
}

/// Solves every record, splits in order (train first) and optionally augments the train part.
pub fn build_dataset(records: &[SeismicRecord], model: &ShearBuildingModel, config: &DatasetConfig) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::invalid("dataset needs at least one record"));
    }
    if config.floors.is_empty() {
        return Err(Error::invalid("dataset needs at least one output floor"));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1], got {}",
            config.train_fraction
        )));
    }
    let n_train = (records.len() as f64 * config.train_fraction).round() as usize;
    if n_train == 0 {
        return Err(Error::invalid(format!(
            "split {} of {} records leaves no training data",
            config.train_fraction,
            records.len()
        )));
    }
    let dt = records[0].series.dt;
    let len = records[0].series.len();
    if records.iter().any(|r| r.series.len() != len || (r.series.dt - dt).abs() > 1e-12 * dt) {
        return Err(Error::invalid("records must share length and time step"));
    }
    let samples = records
        .par_iter()
        .map(|r| solve_sample(r, model, &config.floors, config.sensors))
        .collect::<Result<Vec<_>>>()?;
    let mut train = samples;
    let test = train.split_off(n_train);
    if let Some(aug) = &config.augmentation {
        let extra = augment_superposition(&train, aug)?;
        for (i, a) in extra.into_iter().enumerate() {
            let mut item = a.item;
            item.id = format!("aug-{i:05}");
            train.push(item);
        }
    }
    Ok(Dataset {
        sensors: config.sensors,
        floors: config.floors.clone(),
        dt,
        train,
        test,
    })
}

pub const MANIFEST_FORMAT: &str = "msdeeponet-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
    pub file: String,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub sensors: usize,
    pub floors: Vec<usize>,
    pub dt: f64,
    pub samples: Vec<SampleEntry>,
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let manifest: DatasetManifest =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("dataset manifest: {e}")))?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != 1 {
        return Err(Error::Parse(format!(
            "unsupported dataset manifest {} v{}",
            manifest.format, manifest.version
        )));
    }
    if manifest.sensors < 2 || manifest.floors.is_empty() || !(manifest.dt > 0.0 && manifest.dt.is_finite()) {
        return Err(Error::Parse("dataset manifest has invalid sensors, floors or dt".into()));
    }
    for entry in &manifest.samples {
        let file = Path::new(&entry.file);
        if file.is_absolute() || file.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(Error::Parse(format!("sample path '{}' leaves the dataset directory", entry.file)));
        }
    }
    Ok(manifest)
}

/// Sample CSV: header `t,P,y1..yl` then one row per query time.
pub fn sample_to_csv(sample: &OperatorSample) -> String {
    let mut out = String::from("t,P");
    for f in 1..=sample.floors() {
        let _ = write!(out, ",y{f}");
    }
    out.push('\n');
    for (j, t) in sample.query_times.iter().enumerate() {
        let _ = write!(out, "{t:e},{:e}", sample.excitation[j]);
        for v in sample.targets.row(j) {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}

/// Parsed columns of a sample CSV: times, excitation and `T × l` targets.
pub fn parse_sample_csv(text: &str, floors: usize) -> Result<(Vec<f64>, Vec<f64>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse(format!("sample header: {e}")))?;
    if headers.len() != floors + 2 {
        return Err(Error::Parse(format!(
            "sample has {} columns, expected {}",
            headers.len(),
            floors + 2
        )));
    }
    let mut times = Vec::new();
    let mut excitation = Vec::new();
    let mut flat = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("sample row {}: {e}", line + 2)))?;
        let mut values = row.iter().map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse(format!("sample row {}: bad number '{v}'", line + 2)))
        });
        times.push(values.next().expect("column count checked")?);
        excitation.push(values.next().expect("column count checked")?);
        for v in values {
            flat.push(v?);
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse("sample needs at least two rows".into()));
    }
    let targets =
        Array2::from_shape_vec((times.len(), floors), flat).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((times, excitation, targets))
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let sample_dir = dir.join("samples");
    std::fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
    let mut entries = Vec::new();
    for (split, samples) in [(Split::Train, &dataset.train), (Split::Test, &dataset.test)] {
        for s in samples {
            let file = format!("samples/{}.csv", s.id);
            let path = dir.join(&file);
            std::fs::write(&path, sample_to_csv(s)).map_err(|e| Error::io(&path, e))?;
            entries.push(SampleEntry {
                id: s.id.clone(),
                split,
                file,
                provenance: s.provenance.clone(),
            });
        }
    }
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        sensors: dataset.sensors,
        floors: dataset.floors.clone(),
        dt: dataset.dt,
        samples: entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.json");
    let manifest = parse_manifest(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
    let floors = manifest.floors.len();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in manifest.samples {
        let path = dir.join(&entry.file);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (times, excitation, targets) = parse_sample_csv(&text, floors)?;
        let series = TimeSeries::new(manifest.dt, excitation)?;
        let mut sample = OperatorSample::new(entry.id, series, manifest.sensors, targets)?;
        sample.query_times = times;
        sample.provenance = entry.provenance;
        match entry.split {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    Ok(Dataset {
        sensors: manifest.sensors,
        floors: manifest.floors,
        dt: manifest.dt,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitation::{generate_ensemble, GenerationConfig};

    fn records(count: usize) -> Vec<SeismicRecord> {
        let cfg = GenerationConfig { duration: 4.0, dt: 0.01, ..Default::default() };
        generate_ensemble(&cfg, count).unwrap()
    }

    fn building() -> ShearBuildingModel {
        ShearBuildingModel::uniform(3, 1e5, 1e8, 0.05).unwrap()
    }

    #[test]
    fn sensors_on_equispaced_grid() {
        let values: Vec<f64> = (0..101).map(|i| i as f64 * 0.01).collect();
        let s = TimeSeries::new(0.01, values.clone()).unwrap();
        let u = sample_sensors(&s, 3).unwrap();
        assert_eq!(u, vec![0.0, 0.5, 1.0]);
        assert_eq!(sample_sensors(&s, 101).unwrap(), values);
        let c = TimeSeries::new(0.1, vec![2.5; 10]).unwrap();
        assert!(sample_sensors(&c, 4).unwrap().iter().all(|v| *v == 2.5));
        assert!(sample_sensors(&c, 11).is_err());
        assert!(sample_sensors(&c, 1).is_err());
    }

    #[test]
    fn split_and_augmentation_counts() {
        let config = DatasetConfig {
            sensors: 20,
            floors: vec![2],
            train_fraction: 0.8,
            augmentation: Some(AugmentationConfig { subset_size: 4, count: 100, signed: false, seed: 3 }),
        };
        let ds = build_dataset(&records(10), &building(), &config).unwrap();
        assert_eq!(ds.train.len(), 108);
        assert_eq!(ds.test.len(), 2);
        let test_ids: Vec<&str> = ds.test.iter().map(|s| s.id.as_str()).collect();
        assert!(ds.train_sources().iter().all(|id| !test_ids.contains(&id.as_str())));
        for s in &ds.train[8..] {
            let total: f64 = s.provenance.iter().map(|p| p.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_splits() {
        let cfg = |f: f64| DatasetConfig { sensors: 10, floors: vec![0], train_fraction: f, augmentation: None };
        assert!(build_dataset(&records(2), &building(), &cfg(0.1)).is_err());
        assert!(build_dataset(&records(2), &building(), &cfg(0.0)).is_err());
        assert!(build_dataset(&[], &building(), &cfg(0.5)).is_err());
        let mut bad = cfg(1.0);
        bad.floors = vec![5];
        assert!(build_dataset(&records(1), &building(), &bad).is_err());
    }

    #[test]
    fn singleton_subset_reproduces_base() {
        let ds = build_dataset(
            &records(3),
            &building(),
            &DatasetConfig { sensors: 10, floors: vec![0, 2], train_fraction: 1.0, augmentation: None },
        )
        .unwrap();
        let aug = augment_superposition(
            &ds.train,
            &AugmentationConfig { subset_size: 1, count: 5, signed: false, seed: 0 },
        )
        .unwrap();
        for a in aug {
            assert_eq!(a.weights, vec![1.0]);
            assert_eq!(a.item.targets, ds.train[a.indices[0]].targets);
        }
        let too_big = AugmentationConfig { subset_size: 4, count: 1, signed: false, seed: 0 };
        assert!(augment_superposition(&ds.train, &too_big).is_err());
        assert!(augment_superposition::<OperatorSample>(&[], &too_big).is_err());
    }

    #[test]
    fn zero_record_is_rejected() {
        let mut rec = records(1).remove(0);
        rec.series.values.iter_mut().for_each(|v| *v = 0.0);
        assert!(solve_sample(&rec, &building(), &[0], 10).is_err());
    }

    #[test]
    fn signed_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let w = draw_weights(&mut rng, 5, true);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset(
            &records(3),
            &building(),
            &DatasetConfig {
                sensors: 12,
                floors: vec![1, 2],
                train_fraction: 0.67,
                augmentation: Some(AugmentationConfig { subset_size: 2, count: 2, signed: false, seed: 1 }),
            },
        )
        .unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn manifest_and_csv_errors() {
        assert!(parse_manifest("not json").is_err());
        assert!(parse_manifest(
            r#"{"format":"msdeeponet-dataset","version":1,"sensors":4,"floors":[0],"dt":0.1,
                "samples":[{"id":"a","split":"train","file":"../x.csv","provenance":[]}]}"#
        )
        .is_err());
        assert!(parse_sample_csv("t,P,y1\n0,1,2\n", 1).is_err());
        assert!(parse_sample_csv("t,P\n0,1\n1,2\n", 1).is_err());
        assert!(parse_sample_csv("t,P,y1\n0,1,x\n1,2,3\n", 1).is_err());
        let (t, p, y) = parse_sample_csv("t,P,y1\n0,1,2\n0.5,3,4\n", 1).unwrap();
        assert_eq!((t.len(), p, y[[1, 0]]), (2, vec![1.0, 3.0], 4.0));
    }
}
