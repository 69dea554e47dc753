//! Run configuration loaded from TOML.
//!
//! Every section and key is optional; missing values take the desk-scale
//! defaults used by the acceptance suite. Unknown keys are rejected.
//!
//! ```toml
//! [building]
//! floors = 8
//! mass = 2.0e5
//! stiffness = 2.5e8
//! damping_ratio = 0.02
//!
//! [generator]
//! count = 20
//! duration = 40.0
//! dt = 0.005
//! seed = 1
//! envelope = { shape = "piecewise", rise = 2.0, plateau = 8.0, decay = 0.3 }
//!
//! [preprocess]
//! factor = 4
//! filter_order = 8
//!
//! [dataset]
//! sensors = 100
//! floors = [7]          # zero-based
//! train_fraction = 0.8
//!
//! [model]
//! preset = "desk-separated"
//!
//! [training]
//! epochs = 300
//!
//! [runtime]
//! threads = 1
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AugmentationConfig, DatasetConfig};
use crate::deeponet::ModelSpec;
use crate::error::{Error, Result};
use crate::excitation::{Envelope, GenerationConfig, KanaiTajimi};
use crate::experiments::PipelineConfig;
use crate::structural::ShearBuildingModel;
use crate::training::{OnTheFly, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildingSection {
    pub floors: usize,
    /// Floor mass (kg), identical on every floor.
    pub mass: f64,
    /// Story stiffness (N/m).
    pub stiffness: f64,
    /// Rayleigh damping ratio on the first two modes.
    pub damping_ratio: f64,
}

impl Default for BuildingSection {
    fn default() -> Self {
        Self { floors: 8, mass: 2.0e5, stiffness: 2.5e8, damping_ratio: 0.02 }
    }
}

impl BuildingSection {
    pub fn build(&self) -> Result<ShearBuildingModel> {
        ShearBuildingModel::uniform(self.floors, self.mass, self.stiffness, self.damping_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub count: usize,
    pub duration: f64,
    pub dt: f64,
    /// Seed of the first record; later records use consecutive seeds.
    pub seed: u64,
    /// Ground frequency ω_g (rad/s).
    pub omega_g: f64,
    pub zeta_g: f64,
    pub intensity: f64,
    pub envelope: Envelope,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GenerationConfig::default();
        Self {
            count: 20,
            duration: g.duration,
            dt: g.dt,
            seed: g.seed,
            omega_g: g.spectrum.omega_g,
            zeta_g: g.spectrum.zeta_g,
            intensity: g.spectrum.intensity,
            envelope: g.envelope,
        }
    }
}

impl GeneratorSection {
    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            duration: self.duration,
            dt: self.dt,
            envelope: self.envelope,
            spectrum: KanaiTajimi { omega_g: self.omega_g, zeta_g: self.zeta_g, intensity: self.intensity },
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    /// Decimation factor `L`.
    pub factor: usize,
    pub filter_order: usize,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self { factor: 4, filter_order: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub sensors: usize,
    pub floors: Vec<usize>,
    pub train_fraction: f64,
    pub augmentation: Option<AugmentationConfig>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { sensors: 100, floors: vec![7], train_fraction: 0.8, augmentation: None }
    }
}

impl DatasetSection {
    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            sensors: self.sensors,
            floors: self.floors.clone(),
            train_fraction: self.train_fraction,
            augmentation: self.augmentation.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPreset {
    DeskSeparated,
    PaperSeparated,
    PaperMonolithic,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: ModelPreset,
    /// Subnets per tier for the desk preset.
    pub subnets: usize,
    pub latent_per_subnet: usize,
    /// Full specification, required when `preset = "custom"`.
    pub spec: Option<ModelSpec>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { preset: ModelPreset::DeskSeparated, subnets: 10, latent_per_subnet: 4, spec: None }
    }
}

impl ModelSection {
    pub fn spec(&self, paper_scale: bool) -> Result<ModelSpec> {
        match (self.preset, paper_scale) {
            (ModelPreset::Custom, _) => self
                .spec
                .clone()
                .ok_or_else(|| Error::Config("model.preset = \"custom\" requires [model.spec]".into())),
            (ModelPreset::DeskSeparated, false) => Ok(ModelSpec::desk_separated(self.subnets, self.latent_per_subnet)),
            (ModelPreset::DeskSeparated | ModelPreset::PaperSeparated, _) => Ok(ModelSpec::paper_separated()),
            (ModelPreset::PaperMonolithic, _) => Ok(ModelSpec::paper_monolithic()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Superpose this many training samples per synthesized batch item; 0 disables.
    pub on_the_fly_subset: usize,
    pub signed_weights: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: 300,
            batches_per_epoch: t.batches_per_epoch,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: t.seed,
            on_the_fly_subset: 4,
            signed_weights: false,
        }
    }
}

impl TrainingSection {
    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batches_per_epoch: self.batches_per_epoch,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            on_the_fly: (self.on_the_fly_subset > 0)
                .then_some(OnTheFly { subset_size: self.on_the_fly_subset, signed: self.signed_weights }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// `κ_up` of the single-record studies, in cycles per record.
    pub kappa_up_cycles: f64,
    /// Record length of the single-record studies (s).
    pub single_case_duration: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { kappa_up_cycles: 20.0, single_case_duration: 15.0 }
    }
}

impl ExperimentSection {
    pub fn kappa_up(&self) -> f64 {
        self.kappa_up_cycles * 2.0 * PI
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeSection {
    /// Worker threads; 1 gives bit-reproducible runs, 0 lets the pool decide.
    pub threads: usize,
    pub paper_scale: bool,
}

impl Default for RuntimeSection {
    fn default() -> Self {
        Self { threads: 1, paper_scale: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub building: BuildingSection,
    pub generator: GeneratorSection,
    pub preprocess: PreprocessSection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub experiment: ExperimentSection,
    pub runtime: RuntimeSection,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.generator.count == 0 {
            return bad("generator.count must be positive".into());
        }
        if self.preprocess.factor == 0 || self.preprocess.filter_order == 0 {
            return bad("preprocess.factor and preprocess.filter_order must be positive".into());
        }
        if let Some(f) = self.dataset.floors.iter().find(|&&f| f >= self.building.floors) {
            return bad(format!("dataset.floors contains {f} but the building has {} floors", self.building.floors));
        }
        if !(self.experiment.kappa_up_cycles > 0.0 && self.experiment.single_case_duration > 0.0) {
            return bad("experiment.kappa_up_cycles and experiment.single_case_duration must be positive".into());
        }
        self.generator.generation().validate().map_err(|e| Error::Config(format!("generator: {e}")))?;
        self.training.train().validate().map_err(|e| Error::Config(format!("training: {e}")))?;
        Ok(())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            generator: self.generator.generation(),
            records: self.generator.count,
            decimation: self.preprocess.factor,
            filter_order: self.preprocess.filter_order,
            dataset: self.dataset.dataset(),
            model: self.model.spec(self.runtime.paper_scale)?,
            train: self.training.train(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let p = cfg.pipeline().unwrap();
        let desk = PipelineConfig::desk();
        assert_eq!(p.records, desk.records);
        assert_eq!(p.dataset, desk.dataset);
        assert_eq!(p.model, desk.model);
        assert_eq!(p.train, desk.train);
        assert_eq!(p.generator, desk.generator);
    }

    #[test]
    fn unknown_keys_name_the_key() {
        let err = parse_config("[training]\nepoch = 3\n").unwrap_err().to_string();
        assert!(err.contains("epoch"), "{err}");
        assert!(parse_config("[nonsense]\n").is_err());
    }

    #[test]
    fn overrides_and_envelope() {
        let cfg = parse_config(
            "[generator]\ncount = 3\nenvelope = { shape = \"constant\", level = 0.5 }\n[training]\nepochs = 0\non_the_fly_subset = 0\n",
        )
        .unwrap();
        assert_eq!(cfg.generator.count, 3);
        assert_eq!(cfg.generator.envelope, Envelope::Constant { level: 0.5 });
        assert_eq!(cfg.training.train().on_the_fly, None);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["[dataset]\nfloors = [8]\n", "[generator]\ncount = 0\n", "[training]\nlearning_rate = -1.0\n"] {
            assert!(matches!(parse_config(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn custom_preset_needs_spec() {
        let cfg = parse_config("[model]\npreset = \"custom\"\n").unwrap();
        assert!(cfg.pipeline().is_err());
    }
}
