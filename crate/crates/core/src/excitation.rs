//! Synthetic nonstationary ground motion and record I/O.
//!
//! Records are Gaussian white noise shaped by a Kanai–Tajimi soil filter,
//! normalized to unit RMS, scaled by the intensity and modulated by a
//! rise/plateau/decay envelope. A baseline correction proportional to the
//! envelope then removes the mean without disturbing the quiet ends.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{dft, idft};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Envelope {
    /// Quadratic rise over `rise` s, flat for `plateau` s, then `exp(−decay·τ)`.
    Piecewise { rise: f64, plateau: f64, decay: f64 },
    /// Stationary amplitude.
    Constant { level: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Piecewise { rise, plateau, decay } => {
                if t < rise {
                    (t / rise).powi(2)
                } else if t <= rise + plateau {
                    1.0
                } else {
                    (-decay * (t - rise - plateau)).exp()
                }
            }
            Envelope::Constant { level } => level,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Envelope::Piecewise { rise, plateau, decay } => {
                if !(rise > 0.0 && plateau >= 0.0 && decay >= 0.0)
                    || !(rise.is_finite() && plateau.is_finite() && decay.is_finite())
                {
                    return Err(Error::invalid(format!(
                        "envelope needs rise > 0, plateau ≥ 0, decay ≥ 0 (got {rise}, {plateau}, {decay})"
                    )));
                }
            }
            Envelope::Constant { level } => {
                if !level.is_finite() {
                    return Err(Error::invalid("envelope level must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Kanai–Tajimi spectral shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KanaiTajimi {
    /// Dominant ground frequency ω_g (rad/s).
    pub omega_g: f64,
    /// Ground damping ζ_g in (0, 1].
    pub zeta_g: f64,
    /// RMS of the stationary part (m/s²).
    pub intensity: f64,
}

impl KanaiTajimi {
    /// Complex transfer function from bedrock white noise to ground acceleration.
    pub fn transfer(&self, omega: f64) -> Complex64 {
        let wg2 = self.omega_g * self.omega_g;
        let damp = Complex64::new(0.0, 2.0 * self.zeta_g * self.omega_g * omega);
        (wg2 + damp) / (wg2 - omega * omega + damp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub duration: f64,
    pub dt: f64,
    pub envelope: Envelope,
    pub spectrum: KanaiTajimi,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            duration: 40.0,
            dt: 0.005,
            envelope: Envelope::Piecewise {
                rise: 2.0,
                plateau: 8.0,
                decay: 0.3,
            },
            spectrum: KanaiTajimi {
                omega_g: 2.0 * PI * 2.5,
                zeta_g: 0.6,
                intensity: 1.0,
            },
            seed: 1,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_samples() < 2 {
            return Err(Error::invalid("duration must cover at least two samples"));
        }
        let s = &self.spectrum;
        if !(s.zeta_g > 0.0 && s.zeta_g <= 1.0) {
            return Err(Error::invalid(format!("zeta_g must lie in (0, 1], got {}", s.zeta_g)));
        }
        if !(s.omega_g.is_finite() && s.omega_g > 0.0) {
            return Err(Error::invalid(format!("omega_g must be positive, got {}", s.omega_g)));
        }
        if !(s.intensity.is_finite() && s.intensity > 0.0) {
            return Err(Error::invalid(format!("intensity must be positive, got {}", s.intensity)));
        }
        self.envelope.validate()
    }

    pub fn n_samples(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// A ground-acceleration record (m/s²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeismicRecord {
    pub id: String,
    pub seed: u64,
    pub series: TimeSeries,
    /// Generator settings; `None` for imported records.
    pub meta: Option<GenerationConfig>,
}

pub fn record_id(seed: u64) -> String {
    format!("rec-{seed:06}")
}

pub fn generate_record(config: &GenerationConfig) -> Result<SeismicRecord> {
    config.validate()?;
    let n = config.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let sample_rate = 1.0 / config.dt;
    let mut spectrum = dft(&noise, sample_rate)?;
    for k in 0..n {
        // Signed bin frequency keeps the product Hermitian.
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let omega = 2.0 * PI * signed * sample_rate / n as f64;
        spectrum.bins[k] *= config.spectrum.transfer(omega);
    }
    let filtered: Vec<f64> = idft(&spectrum)?.into_iter().map(|c| c.re).collect();
    let rms = (filtered.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let unit = if rms > 0.0 { 1.0 / rms } else { 0.0 };

    let envelope: Vec<f64> = (0..n).map(|i| config.envelope.value(i as f64 * config.dt)).collect();
    let mut values: Vec<f64> = filtered
        .iter()
        .zip(&envelope)
        .map(|(f, e)| config.spectrum.intensity * e * f * unit)
        .collect();
    let env_sum: f64 = envelope.iter().sum();
    if env_sum != 0.0 {
        let offset = values.iter().sum::<f64>() / env_sum;
        for (v, e) in values.iter_mut().zip(&envelope) {
            *v -= offset * e;
        }
    }
    Ok(SeismicRecord {
        id: record_id(config.seed),
        seed: config.seed,
        series: TimeSeries::new(config.dt, values)?,
        meta: Some(*config),
    })
}

/// `count` records with seeds `seed, seed + 1, …`.
pub fn generate_ensemble(config: &GenerationConfig, count: usize) -> Result<Vec<SeismicRecord>> {
    if count == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    (0..count as u64)
        .map(|offset| {
            generate_record(&GenerationConfig {
                seed: config.seed + offset,
                ..*config
            })
        })
        .collect()
}

/// Parses a two-column `time, acceleration` CSV.
///
/// A non-numeric first row is treated as a header. The time column must be
/// strictly increasing with steps equal to within `1e-6` relative jitter.
pub fn parse_record_csv(text: &str, id: &str) -> Result<SeismicRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() != 2 {
            return Err(Error::Parse(format!(
                "row {}: expected 2 columns, found {}",
                line + 1,
                row.len()
            )));
        }
        let parsed = (row[0].parse::<f64>(), row[1].parse::<f64>());
        match parsed {
            (Ok(t), Ok(a)) => {
                if !(t.is_finite() && a.is_finite()) {
                    return Err(Error::Parse(format!("row {}: non-finite value", line + 1)));
                }
                times.push(t);
                values.push(a);
            }
            _ if line == 0 => continue,
            _ => {
                return Err(Error::Parse(format!(
                    "row {}: cannot parse '{}', '{}' as numbers",
                    line + 1,
                    &row[0],
                    &row[1]
                )))
            }
        }
    }
    if times.is_empty() {
        return Err(Error::Parse("record file contains no samples".into()));
    }
    if times.len() < 2 {
        return Err(Error::Parse("need at least two samples to infer the time step".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parse("time column must be strictly increasing".into()));
    }
    for (i, pair) in times.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if step <= 0.0 {
            return Err(Error::Parse(format!("time column not increasing at row {}", i + 2)));
        }
        if ((step - dt) / dt).abs() > 1e-6 {
            return Err(Error::Parse(format!(
                "non-uniform time grid at row {}: step {step} vs mean {dt}",
                i + 2
            )));
        }
    }
    Ok(SeismicRecord {
        id: id.to_string(),
        seed: 0,
        series: TimeSeries::new(dt, values)?,
        meta: None,
    })
}

pub fn import_record_csv(path: &Path) -> Result<SeismicRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "record".into());
    parse_record_csv(&text, &id)
}

pub fn record_to_csv(record: &SeismicRecord) -> String {
    let mut out = String::from("time,acceleration\n");
    for (i, v) in record.series.values.iter().enumerate() {
        let _ = writeln!(out, "{:e},{:e}", record.series.time(i), v);
    }
    out
}

pub fn export_record_csv(record: &SeismicRecord, path: &Path) -> Result<()> {
    std::fs::write(path, record_to_csv(record)).map_err(|e| Error::io(path, e))
}

pub const RECORD_SET_FORMAT: &str = "msdeeponet-records";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub id: String,
    pub seed: u64,
    pub file: String,
    pub dt: f64,
    pub samples: usize,
}

/// `records.json` describing a directory of record CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordSet {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub generator: Option<GenerationConfig>,
    #[serde(default)]
    pub decimation: Option<usize>,
    pub records: Vec<RecordEntry>,
}

pub fn parse_record_set(text: &str) -> Result<RecordSet> {
    let set: RecordSet = serde_json::from_str(text).map_err(|e| Error::Parse(format!("record set: {e}")))?;
    if set.format != RECORD_SET_FORMAT || set.version != 1 {
        return Err(Error::Parse(format!("unsupported record set {} v{}", set.format, set.version)));
    }
    for entry in &set.records {
        let file = Path::new(&entry.file);
        if file.components().count() != 1 || !matches!(file.components().next(), Some(std::path::Component::Normal(_))) {
            return Err(Error::Parse(format!("record path '{}' must be a plain file name", entry.file)));
        }
    }
    Ok(set)
}

pub fn write_record_set(
    records: &[SeismicRecord],
    dir: &Path,
    generator: Option<GenerationConfig>,
    decimation: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let file = format!("{}.csv", r.id);
        export_record_csv(r, &dir.join(&file))?;
        entries.push(RecordEntry { id: r.id.clone(), seed: r.seed, file, dt: r.series.dt, samples: r.series.len() });
    }
    let set = RecordSet { format: RECORD_SET_FORMAT.into(), version: 1, generator, decimation, records: entries };
    let path = dir.join("records.json");
    let text = serde_json::to_string_pretty(&set).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_record_set(dir: &Path) -> Result<(RecordSet, Vec<SeismicRecord>)> {
    let path = dir.join("records.json");
    let set = parse_record_set(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
    let records = set
        .records
        .iter()
        .map(|entry| {
            let mut record = import_record_csv(&dir.join(&entry.file))?;
            if record.series.len() != entry.samples {
                return Err(Error::Parse(format!(
                    "{}: {} samples on disk, manifest says {}",
                    entry.file,
                    record.series.len(),
                    entry.samples
                )));
            }
            record.id.clone_from(&entry.id);
            record.seed = entry.seed;
            record.meta = set.generator;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((set, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> GenerationConfig {
        GenerationConfig {
            duration: 10.0,
            dt: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_record(&short()).unwrap();
        let b = generate_record(&short()).unwrap();
        assert_eq!(a, b);
        let bits_a: Vec<u64> = a.series.values.iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.series.values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
        assert_eq!(a.series.len(), 1000);
    }

    #[test]
    fn intensity_scales_pointwise() {
        let base = generate_record(&short()).unwrap();
        let mut cfg = short();
        cfg.spectrum.intensity = 3.0;
        let scaled = generate_record(&cfg).unwrap();
        for (a, b) in base.series.values.iter().zip(&scaled.series.values) {
            assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn zero_envelope_gives_zero_record() {
        let cfg = GenerationConfig {
            envelope: Envelope::Constant { level: 0.0 },
            ..short()
        };
        let r = generate_record(&cfg).unwrap();
        assert!(r.series.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn record_is_mean_free_with_quiet_ends() {
        let r = generate_record(&GenerationConfig::default()).unwrap();
        let v = &r.series.values;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 1e-12);
        let peak = r.series.max_abs();
        assert!(v[0].abs() < 1e-3 * peak);
        assert!(v[v.len() - 1].abs() < 1e-3 * peak);
    }

    #[test]
    fn ensemble_seeds_are_consecutive() {
        let cfg = GenerationConfig { seed: 7, ..short() };
        let e = generate_ensemble(&cfg, 3).unwrap();
        assert_eq!(e.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
        assert_eq!(generate_ensemble(&cfg, 1).unwrap()[0], generate_record(&cfg).unwrap());
        assert!(generate_ensemble(&cfg, 0).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = short();
        c.spectrum.zeta_g = 0.0;
        assert!(generate_record(&c).is_err());
        let mut c = short();
        c.spectrum.intensity = 0.0;
        assert!(generate_record(&c).is_err());
        let mut c = short();
        c.dt = -1.0;
        assert!(generate_record(&c).is_err());
        let mut c = short();
        c.envelope = Envelope::Piecewise { rise: 0.0, plateau: 1.0, decay: 1.0 };
        assert!(generate_record(&c).is_err());
    }

    #[test]
    fn csv_direct_parse() {
        let r = parse_record_csv("0,0\n0.01,0.1\n0.02,-0.1\n", "x").unwrap();
        assert!((r.series.dt - 0.01).abs() < 1e-15);
        assert_eq!(r.series.values, vec![0.0, 0.1, -0.1]);
    }

    #[test]
    fn csv_header_and_errors() {
        let r = parse_record_csv("time,acc\n0,1\n0.5,2\n", "x").unwrap();
        assert_eq!(r.series.len(), 2);
        assert!(parse_record_csv("0,0\n0.01,0.1\n0.03,0.2\n", "x").is_err());
        assert!(parse_record_csv("", "x").is_err());
        assert!(parse_record_csv("time,acc\n", "x").is_err());
        assert!(parse_record_csv("0,1\nfoo,bar\n", "x").is_err());
        assert!(parse_record_csv("0,1,2\n1,1,2\n", "x").is_err());
        assert!(parse_record_csv("0,1\n0,2\n", "x").is_err());
    }

    #[test]
    fn csv_export_reimports() {
        let rec = generate_record(&short()).unwrap();
        let back = parse_record_csv(&record_to_csv(&rec), &rec.id).unwrap();
        assert_eq!(back.series.values, rec.series.values);
        assert!((back.series.dt - rec.series.dt).abs() < 1e-12);
    }

    #[test]
    fn record_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = short();
        let recs = generate_ensemble(&cfg, 3).unwrap();
        write_record_set(&recs, dir.path(), Some(cfg), None).unwrap();
        let (set, back) = read_record_set(dir.path()).unwrap();
        assert_eq!(set.records.len(), 3);
        assert_eq!(back.iter().map(|r| &r.id).collect::<Vec<_>>(), recs.iter().map(|r| &r.id).collect::<Vec<_>>());
        assert_eq!(back[1].series.values, recs[1].series.values);
        assert_eq!(back[2].seed, recs[2].seed);
    }

    #[test]
    fn record_set_rejects_escaping_paths() {
        for file in ["../x.csv", "/etc/x.csv", "a/b.csv"] {
            let text = format!(
                r#"{{"format":"msdeeponet-records","version":1,"records":[{{"id":"a","seed":0,"file":"{file}","dt":0.1,"samples":3}}]}}"#
            );
            assert!(parse_record_set(&text).is_err(), "{file}");
        }
    }
}
