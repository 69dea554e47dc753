//! Branch/trunk operator networks.
//!
//! The trunk emits `p·l` features for `l` output floors, laid out so that
//! feature `k·l + f` belongs to latent `k` of floor `f`. The branch emits `p`
//! features shared by every floor. Per floor the output is the dot product of
//! the two plus a trainable bias.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    Activation, DenseCache, DenseNet, MultiscaleCache, MultiscaleNet, Parameters, Validate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "bMS-tFCN")]
    BmsTfcn,
    #[serde(rename = "bFCN-tMS")]
    BfcnTms,
    #[serde(rename = "bMS-tMS")]
    BmsTms,
    #[serde(rename = "bFCN-tFCN")]
    BfcnTfcn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::BmsTfcn, Variant::BfcnTms, Variant::BmsTms, Variant::BfcnTfcn];

    pub fn branch_multiscale(self) -> bool {
        matches!(self, Variant::BmsTfcn | Variant::BmsTms)
    }

    pub fn trunk_multiscale(self) -> bool {
        matches!(self, Variant::BfcnTms | Variant::BmsTms)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::BmsTfcn => "bMS-tFCN",
            Variant::BfcnTms => "bFCN-tMS",
            Variant::BmsTms => "bMS-tMS",
            Variant::BfcnTfcn => "bFCN-tFCN",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown variant '{s}'")))
    }
}

/// Scale sets for multiscale subnets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleSchedule {
    /// `1 + 2kπ` for `k = 0..count`.
    Harmonic { count: usize },
    /// `count` values evenly spaced from 1 to `cap`.
    Capped { count: usize, cap: f64 },
    /// `l, 2l, …, κ_up` with `l = κ_up / count`.
    Linear { count: usize, kappa_up: f64 },
    /// `s⁰, s¹, …, s^(count−1)` with `s = κ_up^(1/count)`.
    Exponential { count: usize, kappa_up: f64 },
    Explicit { values: Vec<f64> },
}

impl ScaleSchedule {
    pub fn scales(&self) -> Result<Vec<f64>> {
        let check_count = |count: usize| {
            if count == 0 {
                Err(Error::invalid("scale schedule needs at least one subnet"))
            } else {
                Ok(())
            }
        };
        let check_kappa = |kappa: f64| {
            if kappa.is_finite() && kappa > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("kappa_up must be positive, got {kappa}")))
            }
        };
        let values = match *self {
            ScaleSchedule::Harmonic { count } => {
                check_count(count)?;
                harmonic_scales(count)
            }
            ScaleSchedule::Capped { count, cap } => {
                check_count(count)?;
                if !(cap.is_finite() && cap >= 1.0) {
                    return Err(Error::invalid(format!("scale cap must be at least 1, got {cap}")));
                }
                if count == 1 {
                    vec![1.0]
                } else {
                    let step = (cap - 1.0) / (count - 1) as f64;
                    (0..count).map(|k| 1.0 + step * k as f64).collect()
                }
            }
            ScaleSchedule::Linear { count, kappa_up } => {
                check_count(count)?;
                check_kappa(kappa_up)?;
                linear_scales(count, kappa_up)
            }
            ScaleSchedule::Exponential { count, kappa_up } => {
                check_count(count)?;
                check_kappa(kappa_up)?;
                exponential_scales(count, kappa_up)
            }
            ScaleSchedule::Explicit { ref values } => values.clone(),
        };
        if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("scales must be positive, got {values:?}")));
        }
        Ok(values)
    }

    pub fn count(&self) -> usize {
        match self {
            ScaleSchedule::Harmonic { count }
            | ScaleSchedule::Capped { count, .. }
            | ScaleSchedule::Linear { count, .. }
            | ScaleSchedule::Exponential { count, .. } => *count,
            ScaleSchedule::Explicit { values } => values.len(),
        }
    }
}

pub fn harmonic_scales(count: usize) -> Vec<f64> {
    (0..count).map(|k| 1.0 + 2.0 * PI * k as f64).collect()
}

pub fn linear_scales(count: usize, kappa_up: f64) -> Vec<f64> {
    let l = kappa_up / count as f64;
    (1..=count).map(|k| l * k as f64).collect()
}

pub fn exponential_scales(count: usize, kappa_up: f64) -> Vec<f64> {
    let s = kappa_up.powf(1.0 / count as f64);
    (0..count).map(|k| s.powi(k as i32)).collect()
}

/// Depth counts affine layers, so `layers = 4` means three hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub layers: usize,
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn sizes(&self, input: usize, output: usize) -> Result<Vec<usize>> {
        if self.layers == 0 || (self.layers > 1 && self.width == 0) {
            return Err(Error::invalid(format!(
                "layer spec needs layers ≥ 1 and width ≥ 1, got {} × {}",
                self.layers, self.width
            )));
        }
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(self.width, self.layers - 1));
        sizes.push(output);
        Ok(sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Network {
    Dense(DenseNet),
    Multiscale(MultiscaleNet),
}

#[derive(Debug, Clone)]
pub enum NetworkCache {
    Dense(DenseCache),
    Multiscale(MultiscaleCache),
}

impl Network {
    pub fn is_multiscale(&self) -> bool {
        matches!(self, Network::Multiscale(_))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Dense(n) => n.input_dim(),
            Network::Multiscale(n) => n.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Network::Dense(n) => n.output_dim(),
            Network::Multiscale(n) => n.output_dim(),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Network::Dense(n) => n.predict(x),
            Network::Multiscale(n) => n.predict(x),
        }
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, NetworkCache)> {
        Ok(match self {
            Network::Dense(n) => {
                let (y, c) = n.forward_batch(x)?;
                (y, NetworkCache::Dense(c))
            }
            Network::Multiscale(n) => {
                let (y, c) = n.forward_batch(x)?;
                (y, NetworkCache::Multiscale(c))
            }
        })
    }

    pub fn backward(&self, cache: &NetworkCache, grad_out: Array2<f64>) -> Network {
        match (self, cache) {
            (Network::Dense(n), NetworkCache::Dense(c)) => Network::Dense(n.backward(c, grad_out, false).0),
            (Network::Multiscale(n), NetworkCache::Multiscale(c)) => {
                Network::Multiscale(n.backward(c, grad_out, false).0)
            }
            _ => panic!("cache does not belong to this network"),
        }
    }
}

impl Parameters for Network {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Network::Dense(n) => n.visit(f),
            Network::Multiscale(n) => n.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Network::Dense(n) => n.visit_mut(f),
            Network::Multiscale(n) => n.visit_mut(f),
        }
    }
}

impl Validate for Network {
    fn validate(&self) -> Result<()> {
        match self {
            Network::Dense(n) => n.validate(),
            Network::Multiscale(n) => n.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepONet {
    pub variant: Variant,
    pub branch: Network,
    pub trunk: Network,
    /// One bias per output floor.
    pub bias: Array1<f64>,
}

pub struct DeepONetCache {
    branch: NetworkCache,
    trunk: NetworkCache,
    branch_out: Array2<f64>,
    trunk_out: Array2<f64>,
}

fn build_side(
    multiscale: bool,
    input: usize,
    output_per_unit: usize,
    latent: usize,
    spec: &LayerSpec,
    scales: Option<&[f64]>,
    side: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Network> {
    if multiscale {
        let scales = scales.ok_or_else(|| Error::invalid(format!("{side} is multiscale but has no scales")))?;
        let subnets = scales.len();
        if subnets == 0 || !latent.is_multiple_of(subnets) {
            return Err(Error::invalid(format!(
                "latent size {latent} must be a multiple of the {side} subnet count {subnets}"
            )));
        }
        let sizes = spec.sizes(input, latent / subnets * output_per_unit)?;
        Ok(Network::Multiscale(MultiscaleNet::init(scales, &sizes, spec.activation, rng)?))
    } else {
        if scales.is_some() {
            return Err(Error::invalid(format!("{side} is fully connected but scales were given")));
        }
        let sizes = spec.sizes(input, latent * output_per_unit)?;
        Ok(Network::Dense(DenseNet::init(&sizes, spec.activation, rng)?))
    }
}

/// Builds one DeepONet; scales must be supplied exactly for multiscale sides.
#[allow(clippy::too_many_arguments)]
pub fn build_variant(
    variant: Variant,
    sensors: usize,
    latent: usize,
    floors: usize,
    branch: &LayerSpec,
    trunk: &LayerSpec,
    branch_scales: Option<&[f64]>,
    trunk_scales: Option<&[f64]>,
    seed: u64,
) -> Result<DeepONet> {
    if sensors == 0 || latent == 0 || floors == 0 {
        return Err(Error::invalid("sensors, latent size and floors must all be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let branch_net = build_side(
        variant.branch_multiscale(),
        sensors,
        1,
        latent,
        branch,
        branch_scales,
        "branch",
        &mut rng,
    )?;
    let trunk_net = build_side(
        variant.trunk_multiscale(),
        1,
        floors,
        latent,
        trunk,
        trunk_scales,
        "trunk",
        &mut rng,
    )?;
    Ok(DeepONet {
        variant,
        branch: branch_net,
        trunk: trunk_net,
        bias: Array1::zeros(floors),
    })
}

impl DeepONet {
    pub fn sensors(&self) -> usize {
        self.branch.input_dim()
    }

    pub fn latent(&self) -> usize {
        self.branch.output_dim()
    }

    pub fn floors(&self) -> usize {
        self.bias.len()
    }

    /// Output for one branch input `u` at trunk coordinate `tau`.
    pub fn eval(&self, u: &[f64], tau: f64) -> Result<Vec<f64>> {
        let u = ArrayView2::from_shape((1, u.len()), u).map_err(|e| Error::invalid(e.to_string()))?;
        let tau = Array2::from_elem((1, 1), tau);
        let out = self.predict(u, tau.view())?;
        Ok(out.slice(s![0, 0, ..]).to_vec())
    }

    fn contract(&self, b: &Array2<f64>, tr: &Array2<f64>) -> Array3<f64> {
        let l = self.floors();
        let mut out = Array3::zeros((b.nrows(), tr.nrows(), l));
        for f in 0..l {
            let t_f = tr.slice(s![.., f..;l]);
            let mut pred = b.dot(&t_f.t());
            pred += self.bias[f];
            out.slice_mut(s![.., .., f]).assign(&pred);
        }
        out
    }

    fn check_inputs(&self, u: &ArrayView2<f64>, tau: &ArrayView2<f64>) -> Result<()> {
        if u.ncols() != self.sensors() {
            return Err(Error::LengthMismatch {
                what: "branch input",
                expected: self.sensors(),
                actual: u.ncols(),
            });
        }
        if tau.ncols() != 1 {
            return Err(Error::LengthMismatch {
                what: "trunk input",
                expected: 1,
                actual: tau.ncols(),
            });
        }
        Ok(())
    }

    /// `(N, T, l)` predictions for `N` branch inputs on `T` trunk coordinates.
    pub fn predict(&self, u: ArrayView2<f64>, tau: ArrayView2<f64>) -> Result<Array3<f64>> {
        self.check_inputs(&u, &tau)?;
        let b = self.branch.predict(u)?;
        let tr = self.trunk.predict(tau)?;
        Ok(self.contract(&b, &tr))
    }

    pub fn forward_batch(&self, u: ArrayView2<f64>, tau: ArrayView2<f64>) -> Result<(Array3<f64>, DeepONetCache)> {
        self.check_inputs(&u, &tau)?;
        let (b, branch) = self.branch.forward_batch(u)?;
        let (tr, trunk) = self.trunk.forward_batch(tau)?;
        let out = self.contract(&b, &tr);
        Ok((
            out,
            DeepONetCache {
                branch,
                trunk,
                branch_out: b,
                trunk_out: tr,
            },
        ))
    }

    /// Parameter gradients for an upstream gradient `grad_out · weight`.
    pub fn backward(&self, cache: &DeepONetCache, grad_out: &Array3<f64>, weight: f64) -> DeepONet {
        let l = self.floors();
        let b = &cache.branch_out;
        let tr = &cache.trunk_out;
        let mut d_b = Array2::<f64>::zeros(b.raw_dim());
        let mut d_tr = Array2::<f64>::zeros(tr.raw_dim());
        let mut d_bias = Array1::<f64>::zeros(l);
        for f in 0..l {
            let g_f = grad_out.slice(s![.., .., f]);
            let t_f = tr.slice(s![.., f..;l]);
            d_b.scaled_add(weight, &g_f.dot(&t_f));
            let mut block = d_tr.slice_mut(s![.., f..;l]);
            block.assign(&g_f.t().dot(b));
            block *= weight;
            d_bias[f] = weight * g_f.sum();
        }
        DeepONet {
            variant: self.variant,
            branch: self.branch.backward(&cache.branch, d_b),
            trunk: self.trunk.backward(&cache.trunk, d_tr),
            bias: d_bias,
        }
    }
}

impl Parameters for DeepONet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.branch.visit(f);
        self.trunk.visit(f);
        f(self.bias.as_slice_memory_order().expect("contiguous bias"));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.branch.visit_mut(f);
        self.trunk.visit_mut(f);
        f(self.bias.as_slice_memory_order_mut().expect("contiguous bias"));
    }
}

impl Validate for DeepONet {
    fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.branch.is_multiscale() != self.variant.branch_multiscale()
            || self.trunk.is_multiscale() != self.variant.trunk_multiscale()
        {
            return Err(Error::invalid(format!("networks do not match variant {}", self.variant)));
        }
        if self.trunk.input_dim() != 1 {
            return Err(Error::invalid("trunk must take a scalar time"));
        }
        if self.bias.is_empty() || self.trunk.output_dim() != self.latent() * self.floors() {
            return Err(Error::invalid(format!(
                "trunk width {} does not equal latent {} × floors {}",
                self.trunk.output_dim(),
                self.latent(),
                self.floors()
            )));
        }
        if let Network::Multiscale(ms) = &self.trunk {
            if ms.subnet_output_dim() % self.floors() != 0 {
                return Err(Error::invalid("trunk subnet width must be a multiple of the floor count"));
            }
        }
        if !self.bias.iter().all(|b| b.is_finite()) {
            return Err(Error::NonFinite("output bias".into()));
        }
        Ok(())
    }
}

/// `Σᵢ εⁱ·tierᵢ` with exponents starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSeparatedModel {
    pub epsilon: f64,
    pub tiers: Vec<DeepONet>,
}

impl AmplitudeSeparatedModel {
    pub fn new(epsilon: f64, tiers: Vec<DeepONet>) -> Result<Self> {
        let model = Self { epsilon, tiers };
        model.validate()?;
        Ok(model)
    }

    pub fn weight(&self, tier: usize) -> f64 {
        self.epsilon.powi(tier as i32)
    }

    pub fn eval(&self, u: &[f64], tau: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.tiers[0].floors()];
        for (i, tier) in self.tiers.iter().enumerate() {
            let w = self.weight(i);
            for (o, v) in out.iter_mut().zip(tier.eval(u, tau)?) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, u: ArrayView2<f64>, tau: ArrayView2<f64>) -> Result<Array3<f64>> {
        let mut total = self.tiers[0].predict(u, tau)?;
        for (i, tier) in self.tiers.iter().enumerate().skip(1) {
            total.scaled_add(self.weight(i), &tier.predict(u, tau)?);
        }
        Ok(total)
    }
}

impl Parameters for AmplitudeSeparatedModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for t in &self.tiers {
            t.visit(f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for t in &mut self.tiers {
            t.visit_mut(f);
        }
    }
}

impl Validate for AmplitudeSeparatedModel {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && (0.0..1.0).contains(&self.epsilon)) {
            return Err(Error::invalid(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        let first = self
            .tiers
            .first()
            .ok_or_else(|| Error::invalid("amplitude separation needs at least one tier"))?;
        for t in &self.tiers {
            t.validate()?;
            if t.floors() != first.floors() || t.sensors() != first.sensors() {
                return Err(Error::invalid("tiers must share sensors and output floors"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Single(DeepONet),
    Separated(AmplitudeSeparatedModel),
}

pub struct ArchitectureCache(Vec<DeepONetCache>);

impl Architecture {
    pub fn tiers(&self) -> &[DeepONet] {
        match self {
            Architecture::Single(d) => std::slice::from_ref(d),
            Architecture::Separated(a) => &a.tiers,
        }
    }

    fn tier_weight(&self, i: usize) -> f64 {
        match self {
            Architecture::Single(_) => 1.0,
            Architecture::Separated(a) => a.weight(i),
        }
    }

    pub fn sensors(&self) -> usize {
        self.tiers()[0].sensors()
    }

    pub fn floors(&self) -> usize {
        self.tiers()[0].floors()
    }

    pub fn predict(&self, u: ArrayView2<f64>, tau: ArrayView2<f64>) -> Result<Array3<f64>> {
        match self {
            Architecture::Single(d) => d.predict(u, tau),
            Architecture::Separated(a) => a.predict(u, tau),
        }
    }

    pub fn forward_batch(&self, u: ArrayView2<f64>, tau: ArrayView2<f64>) -> Result<(Array3<f64>, ArchitectureCache)> {
        let mut total: Option<Array3<f64>> = None;
        let mut caches = Vec::new();
        for (i, tier) in self.tiers().iter().enumerate() {
            let (out, cache) = tier.forward_batch(u, tau)?;
            caches.push(cache);
            match total.as_mut() {
                Some(acc) => acc.scaled_add(self.tier_weight(i), &out),
                None => total = Some(out),
            }
        }
        Ok((total.expect("at least one tier"), ArchitectureCache(caches)))
    }

    pub fn backward(&self, cache: &ArchitectureCache, grad_out: &Array3<f64>) -> Architecture {
        let grads: Vec<DeepONet> = self
            .tiers()
            .iter()
            .zip(&cache.0)
            .enumerate()
            .map(|(i, (tier, c))| tier.backward(c, grad_out, self.tier_weight(i)))
            .collect();
        match self {
            Architecture::Single(_) => Architecture::Single(grads.into_iter().next().expect("one tier")),
            Architecture::Separated(a) => Architecture::Separated(AmplitudeSeparatedModel {
                epsilon: a.epsilon,
                tiers: grads,
            }),
        }
    }
}

impl Parameters for Architecture {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Architecture::Single(d) => d.visit(f),
            Architecture::Separated(a) => a.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Architecture::Single(d) => d.visit_mut(f),
            Architecture::Separated(a) => a.visit_mut(f),
        }
    }
}

impl Validate for Architecture {
    fn validate(&self) -> Result<()> {
        match self {
            Architecture::Single(d) => d.validate(),
            Architecture::Separated(a) => a.validate(),
        }
    }
}

/// Declarative description of a single or amplitude-separated DeepONet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Latent size `p` shared by branch and trunk.
    pub latent: usize,
    pub branch: LayerSpec,
    pub trunk: LayerSpec,
    #[serde(default)]
    pub branch_scales: Option<ScaleSchedule>,
    #[serde(default)]
    pub trunk_scales: Option<ScaleSchedule>,
    /// Trunk scale schedule per tier, exponent 0 first; empty for a single DeepONet.
    #[serde(default)]
    pub tiers: Vec<ScaleSchedule>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

impl ModelSpec {
    /// Three tiers of small multiscale trunks with caps `1+20π`, `1+100π`, `1+200π`.
    pub fn desk_separated(subnets: usize, latent_per_subnet: usize) -> Self {
        Self {
            variant: Variant::BfcnTms,
            latent: subnets * latent_per_subnet,
            branch: LayerSpec { layers: 4, width: 128, activation: Activation::Relu },
            trunk: LayerSpec { layers: 4, width: 8, activation: Activation::Sin },
            branch_scales: None,
            trunk_scales: None,
            tiers: [20.0, 100.0, 200.0]
                .into_iter()
                .map(|c| ScaleSchedule::Capped { count: subnets, cap: 1.0 + c * PI })
                .collect(),
            epsilon: default_epsilon(),
        }
    }

    /// Reference sizes: 100-subnet tiers of 4 × 8, branch 4 × 128.
    pub fn paper_separated() -> Self {
        Self {
            tiers: [(10, 20.0), (50, 100.0), (100, 200.0)]
                .into_iter()
                .map(|(count, c)| ScaleSchedule::Capped { count, cap: 1.0 + c * PI })
                .collect(),
            latent: 100,
            ..Self::desk_separated(100, 1)
        }
    }

    /// Large monolithic comparator: trunk 100 × (4 × 24), branch 4 × 384.
    pub fn paper_monolithic() -> Self {
        Self {
            variant: Variant::BfcnTms,
            latent: 100,
            branch: LayerSpec { layers: 4, width: 384, activation: Activation::Relu },
            trunk: LayerSpec { layers: 4, width: 24, activation: Activation::Sin },
            branch_scales: None,
            trunk_scales: Some(ScaleSchedule::Harmonic { count: 100 }),
            tiers: Vec::new(),
            epsilon: default_epsilon(),
        }
    }

    pub fn build(&self, sensors: usize, floors: usize, seed: u64) -> Result<Architecture> {
        let resolve = |s: &Option<ScaleSchedule>| s.as_ref().map(ScaleSchedule::scales).transpose();
        let branch_scales = resolve(&self.branch_scales)?;
        if self.tiers.is_empty() {
            let trunk_scales = resolve(&self.trunk_scales)?;
            return Ok(Architecture::Single(build_variant(
                self.variant,
                sensors,
                self.latent,
                floors,
                &self.branch,
                &self.trunk,
                branch_scales.as_deref(),
                trunk_scales.as_deref(),
                seed,
            )?));
        }
        if !self.variant.trunk_multiscale() {
            return Err(Error::invalid("tier scale schedules require a multiscale trunk"));
        }
        let tiers = self
            .tiers
            .iter()
            .enumerate()
            .map(|(i, schedule)| {
                build_variant(
                    self.variant,
                    sensors,
                    self.latent,
                    floors,
                    &self.branch,
                    &self.trunk,
                    branch_scales.as_deref(),
                    Some(&schedule.scales()?),
                    seed.wrapping_add(i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Architecture::Separated(AmplitudeSeparatedModel::new(self.epsilon, tiers)?))
    }
}

/// Trainable network plus the fixed normalization that maps physical units in and out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    pub arch: Architecture,
    /// Branch inputs are divided by this before entering the network.
    pub input_scale: f64,
    /// Per-floor factor applied to network outputs.
    pub output_scale: Vec<f64>,
    /// Query times are divided by this to land in `[0, 1]`.
    pub horizon: f64,
}

impl OperatorModel {
    pub fn new(arch: Architecture, input_scale: f64, output_scale: Vec<f64>, horizon: f64) -> Result<Self> {
        let model = Self {
            arch,
            input_scale,
            output_scale,
            horizon,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn identity_scaling(arch: Architecture) -> Self {
        let floors = arch.floors();
        Self {
            arch,
            input_scale: 1.0,
            output_scale: vec![1.0; floors],
            horizon: 1.0,
        }
    }

    pub fn sensors(&self) -> usize {
        self.arch.sensors()
    }

    pub fn floors(&self) -> usize {
        self.arch.floors()
    }

    pub fn normalized_inputs(&self, u: ArrayView2<f64>) -> Array2<f64> {
        u.mapv(|v| v / self.input_scale)
    }

    pub fn normalized_times(&self, times: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((times.len(), 1), |(i, _)| times[i] / self.horizon)
    }

    /// Physical-unit predictions `(N, T, l)` for raw sensor rows and times in seconds.
    pub fn predict(&self, u: ArrayView2<f64>, times: &[f64]) -> Result<Array3<f64>> {
        let mut out = self
            .arch
            .predict(self.normalized_inputs(u).view(), self.normalized_times(times).view())?;
        for (f, scale) in self.output_scale.iter().enumerate() {
            out.slice_mut(s![.., .., f]).mapv_inplace(|v| v * scale);
        }
        Ok(out)
    }

    /// Predictions for one sensor vector, shape `(T, l)`.
    pub fn predict_one(&self, u: &[f64], times: &[f64]) -> Result<Array2<f64>> {
        let view = ArrayView2::from_shape((1, u.len()), u).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.predict(view, times)?.index_axis_move(Axis(0), 0))
    }
}

impl Validate for OperatorModel {
    fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.input_scale) || !positive(self.horizon) {
            return Err(Error::invalid("input scale and horizon must be positive"));
        }
        if self.output_scale.len() != self.arch.floors() || !self.output_scale.iter().all(|v| positive(*v)) {
            return Err(Error::invalid("one positive output scale per floor is required"));
        }
        Ok(())
    }
}

impl Parameters for OperatorModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.arch.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.arch.visit_mut(f);
    }
}

/// Exact number of trainable parameters.
pub fn count_parameters<P: Parameters>(model: &P) -> usize {
    model.num_params()
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::neural::Dense;

    fn spec(layers: usize, width: usize) -> LayerSpec {
        LayerSpec { layers, width, activation: Activation::Sin }
    }

    fn constant(value: f64, input: usize) -> Network {
        Network::Dense(DenseNet {
            layers: vec![Dense { weights: Array2::zeros((input, 1)), bias: array![value] }],
            activation: Activation::Identity,
        })
    }

    #[test]
    fn dot_product_arithmetic() {
        let model = DeepONet {
            variant: Variant::BfcnTfcn,
            branch: constant(2.0, 3),
            trunk: constant(3.0, 1),
            bias: array![0.5],
        };
        assert_eq!(model.eval(&[0.1, 0.2, 0.3], 0.4).unwrap(), vec![6.5]);
        let zero = DeepONet { branch: constant(0.0, 3), ..model.clone() };
        assert_eq!(zero.eval(&[1.0, 1.0, 1.0], 0.9).unwrap(), vec![0.5]);
        assert!(model.eval(&[1.0], 0.0).is_err());
    }

    #[test]
    fn variant_wiring() {
        let b = spec(2, 6);
        let t = spec(3, 5);
        let plain = build_variant(Variant::BfcnTfcn, 10, 12, 1, &b, &t, None, None, 1).unwrap();
        assert!(!plain.branch.is_multiscale() && !plain.trunk.is_multiscale());
        let scales = harmonic_scales(4);
        let tms = build_variant(Variant::BfcnTms, 10, 12, 1, &b, &t, None, Some(&scales), 1).unwrap();
        let bms = build_variant(Variant::BmsTfcn, 10, 12, 1, &b, &t, Some(&scales), None, 1).unwrap();
        assert!(tms.trunk.is_multiscale() && !tms.branch.is_multiscale());
        assert!(bms.branch.is_multiscale() && !bms.trunk.is_multiscale());
        assert!(build_variant(Variant::BfcnTms, 10, 12, 1, &b, &t, None, None, 1).is_err());
        assert!(build_variant(Variant::BfcnTfcn, 10, 12, 1, &b, &t, None, Some(&scales), 1).is_err());
        assert!(build_variant(Variant::BfcnTms, 10, 10, 1, &b, &t, None, Some(&scales), 1).is_err());
    }

    #[test]
    fn reference_trunk_width() {
        let b = LayerSpec { layers: 4, width: 500, activation: Activation::Relu };
        let t = LayerSpec { layers: 4, width: 10, activation: Activation::Sin };
        let scales = harmonic_scales(100);
        let model = build_variant(Variant::BfcnTms, 20, 1000, 1, &b, &t, None, Some(&scales), 0).unwrap();
        assert_eq!(model.trunk.output_dim(), 1000);
        assert_eq!(scales.len(), 100);
    }

    #[test]
    fn seven_floor_outputs() {
        let scales = harmonic_scales(2);
        let model =
            build_variant(Variant::BmsTms, 6, 4, 7, &spec(2, 4), &spec(2, 4), Some(&scales), Some(&scales), 3).unwrap();
        assert_eq!(model.eval(&[0.0; 6], 0.5).unwrap().len(), 7);
        assert_eq!(model.trunk.output_dim(), 28);
        model.validate().unwrap();
    }

    #[test]
    fn latent_permutation_invariance() {
        let model = build_variant(Variant::BfcnTfcn, 3, 4, 2, &spec(2, 5), &spec(2, 5), None, None, 8).unwrap();
        let (Network::Dense(mut branch), Network::Dense(mut trunk)) = (model.branch.clone(), model.trunk.clone()) else {
            unreachable!()
        };
        let perm = [2usize, 0, 3, 1];
        let bl = branch.layers.last_mut().unwrap();
        let tl = trunk.layers.last_mut().unwrap();
        let (bw, bb, tw, tb) = (bl.weights.clone(), bl.bias.clone(), tl.weights.clone(), tl.bias.clone());
        for (new, &old) in perm.iter().enumerate() {
            bl.weights.column_mut(new).assign(&bw.column(old));
            bl.bias[new] = bb[old];
            for f in 0..2 {
                tl.weights.column_mut(new * 2 + f).assign(&tw.column(old * 2 + f));
                tl.bias[new * 2 + f] = tb[old * 2 + f];
            }
        }
        let permuted = DeepONet { branch: Network::Dense(branch), trunk: Network::Dense(trunk), ..model.clone() };
        let u = [0.3, -0.1, 0.8];
        let a = model.eval(&u, 0.25).unwrap();
        let b = permuted.eval(&u, 0.25).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn amplitude_separated_sum() {
        let tier = |v: f64| DeepONet {
            variant: Variant::BfcnTfcn,
            branch: constant(1.0, 2),
            trunk: constant(v, 1),
            bias: array![0.0],
        };
        let model = AmplitudeSeparatedModel::new(0.1, vec![tier(3.0), tier(5.0), tier(7.0)]).unwrap();
        let y = model.eval(&[0.0, 0.0], 0.0).unwrap()[0];
        assert!((y - (3.0 + 0.5 + 0.07)).abs() < 1e-14);
        let collapsed = AmplitudeSeparatedModel::new(0.0, vec![tier(3.0), tier(5.0)]).unwrap();
        assert_eq!(collapsed.eval(&[0.0, 0.0], 0.0).unwrap(), vec![3.0]);
        let single = AmplitudeSeparatedModel::new(0.1, vec![tier(4.0)]).unwrap();
        assert_eq!(single.eval(&[1.0, 2.0], 0.3).unwrap(), tier(4.0).eval(&[1.0, 2.0], 0.3).unwrap());
        assert!(AmplitudeSeparatedModel::new(1.5, vec![tier(1.0)]).is_err());
        assert!(AmplitudeSeparatedModel::new(0.1, vec![]).is_err());
    }

    #[test]
    fn schedules() {
        let lin = ScaleSchedule::Linear { count: 30, kappa_up: 120.0 * PI }.scales().unwrap();
        assert_eq!(lin.len(), 30);
        assert!((lin[0] - 4.0 * PI).abs() < 1e-12 && (lin[29] - 120.0 * PI).abs() < 1e-9);
        let exp = exponential_scales(4, 16.0);
        for (a, b) in exp.iter().zip([1.0, 2.0, 4.0, 8.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = harmonic_scales(100);
        assert!((h[99] - (1.0 + 198.0 * PI)).abs() < 1e-9);
        let capped = ScaleSchedule::Capped { count: 11, cap: 1.0 + 20.0 * PI }.scales().unwrap();
        assert!((capped[1] - (1.0 + 2.0 * PI)).abs() < 1e-12);
        assert!(ScaleSchedule::Linear { count: 0, kappa_up: 1.0 }.scales().is_err());
        assert!(ScaleSchedule::Explicit { values: vec![1.0, -1.0] }.scales().is_err());
    }

    #[test]
    fn parameter_counts() {
        let layer = DenseNet {
            layers: vec![Dense { weights: Array2::zeros((3, 2)), bias: Array1::zeros(2) }],
            activation: Activation::Identity,
        };
        assert_eq!(count_parameters(&layer), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ms = MultiscaleNet::init(&[1.0, 2.0, 3.0], &[1, 4, 2], Activation::Sin, &mut rng).unwrap();
        assert_eq!(count_parameters(&ms), 3 * count_parameters(&ms.subnets[0]));
    }

    #[test]
    fn spec_build_and_checkpoint() {
        let arch = ModelSpec::desk_separated(3, 2).build(16, 2, 5).unwrap();
        assert_eq!(arch.tiers().len(), 3);
        let model = OperatorModel::new(arch, 2.0, vec![0.5, 0.25], 10.0).unwrap();
        let text = crate::neural::to_json(&model).unwrap();
        let back: OperatorModel = crate::neural::from_json(&text).unwrap();
        assert_eq!(back, model);
        let p = model.predict_one(&[0.1; 16], &[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(p.dim(), (3, 2));
    }
}
