//! JSON experiment configuration.
//!
//! A config names a data source, a split, the sample sizes, the ε grid and
//! the attacks. Unknown fields are rejected. `"inf"` is accepted wherever an
//! ε is expected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::attacks::{AttackKind, ShadowConfig};
use crate::dataio::{self, Dataset, GaussianComponent, LabelRule, Schema};
use crate::dp::{DEFAULT_CLIP_NORM, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::experiments::{CampaignSpec, GameKind};
use crate::nn::TrainConfig;
use crate::rng::derive_seed;
use crate::splits::{self, MixturePools, SplitSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// ε value that may be infinite; serialized as a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon(pub f64);

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Epsilon(v)),
            Raw::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(Epsilon(f64::INFINITY)),
                other => other
                    .parse::<f64>()
                    .map(Epsilon)
                    .map_err(|_| serde::de::Error::custom(format!("invalid epsilon `{t}`"))),
            },
        }
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    BatchMm,
    Strong,
    Iid,
    Alt,
    Mm,
}

impl ExperimentKind {
    pub fn game(self) -> Option<GameKind> {
        match self {
            ExperimentKind::BatchMm => None,
            ExperimentKind::Strong => Some(GameKind::Strong),
            ExperimentKind::Iid => Some(GameKind::Iid),
            ExperimentKind::Alt => Some(GameKind::Alt),
            ExperimentKind::Mm => Some(GameKind::Mm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Two hidden layers of 256, 100 epochs.
    #[default]
    Paper,
    /// Two hidden layers of 32, 30 epochs.
    Desk,
}

impl Profile {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            Profile::Paper => vec![256, 256],
            Profile::Desk => vec![32, 32],
        }
    }

    pub fn epochs(self) -> usize {
        match self {
            Profile::Paper => 100,
            Profile::Desk => 30,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(Profile::Paper),
            "desk" => Some(Profile::Desk),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Two unit-variance Gaussians in 2-D, one per class.
    TwoGaussians,
    /// Four modes in 2-D whose class rule flips between the lower and upper pair.
    FourModes,
    /// Two point masses with different labels.
    PointMasses,
}

impl Preset {
    pub fn components(self) -> Vec<GaussianComponent> {
        let c = |mean: [f64; 2], std: f64, label: usize| GaussianComponent {
            mean: mean.to_vec(),
            std: vec![std; 2],
            label: LabelRule::Constant(label),
        };
        match self {
            Preset::TwoGaussians => vec![c([-1.0, -1.0], 1.0, 0), c([1.0, 1.0], 1.0, 1)],
            Preset::FourModes => vec![
                c([-2.0, 0.0], 0.5, 0),
                c([2.0, 0.0], 0.5, 1),
                c([-2.0, 3.0], 0.5, 1),
                c([2.0, 3.0], 0.5, 0),
            ],
            Preset::PointMasses => vec![c([0.0, 0.0], 0.0, 0), c([3.0, 3.0], 0.0, 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    Path(PathBuf),
    Inline(Schema),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Csv {
        path: PathBuf,
        schema: SchemaSource,
    },
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<Preset>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        components: Option<Vec<GaussianComponent>>,
        n_per_component: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2_coefficient: Option<f64>,
}

fn default_grid() -> Vec<Epsilon> {
    [0.01, 0.1, 1.0, 10.0, 100.0, f64::INFINITY].map(Epsilon).to_vec()
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

fn default_one() -> usize {
    1
}

fn default_attacks() -> Vec<AttackKind> {
    vec![AttackKind::AverageThreshold, AttackKind::OptimalThreshold, AttackKind::Shadow]
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_NORM
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub experiment: ExperimentKind,
    pub data: DataSpec,
    pub split: SplitSpec,
    pub n: usize,
    /// Non-member count; defaults to `n`.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_grid")]
    pub epsilon_grid: Vec<Epsilon>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_one")]
    pub repetitions: usize,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackKind>,
    #[serde(default)]
    pub profile: Profile,
    /// Hidden widths; overrides the profile.
    #[serde(default)]
    pub hidden: Option<Vec<usize>>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default)]
    pub shadow: ShadowConfig,
    #[serde(default)]
    pub shadow_cap: Option<usize>,
    #[serde(default)]
    pub k_member: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub export_traces: bool,
}

fn field_err(field: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

/// Pools plus the model shape they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub pools: MixturePools,
    pub width: usize,
    pub classes: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                Error::Config(e.into_inner().to_string())
            } else {
                field_err(&path, e.into_inner())
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field_err(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.n == 0 {
            return Err(field_err("n", "must be >= 1"));
        }
        if self.m == Some(0) {
            return Err(field_err("m", "must be >= 1"));
        }
        if self.epsilon_grid.is_empty() {
            return Err(field_err("epsilon_grid", "must not be empty"));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(e.0 > 0.0)) {
            return Err(field_err("epsilon_grid", format!("{e} is not positive")));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(field_err("delta", "must lie in [0, 1)"));
        }
        if self.repetitions == 0 {
            return Err(field_err("repetitions", "must be >= 1"));
        }
        if self.attacks.is_empty() {
            return Err(field_err("attacks", "must name at least one attack"));
        }
        if self.experiment != ExperimentKind::BatchMm && self.attacks.contains(&AttackKind::Shadow) {
            return Err(field_err(
                "attacks",
                "shadow is only supported by the batch_mm experiment",
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(field_err("clip_norm", "must be positive"));
        }
        if let Some(h) = &self.hidden {
            if h.iter().any(|&w| w == 0) {
                return Err(field_err("hidden", "layer widths must be >= 1"));
            }
        }
        let t = &self.train;
        if t.epochs == Some(0) {
            return Err(field_err("train.epochs", "must be >= 1"));
        }
        if t.batch_size == Some(0) {
            return Err(field_err("train.batch_size", "must be >= 1"));
        }
        if t.learning_rate.is_some_and(|v| !(v > 0.0)) {
            return Err(field_err("train.learning_rate", "must be positive"));
        }
        if t.l2_coefficient.is_some_and(|v| !(v >= 0.0)) {
            return Err(field_err("train.l2_coefficient", "must be >= 0"));
        }
        if self.shadow.count == 0 {
            return Err(field_err("shadow.count", "must be >= 1"));
        }
        match &self.data {
            DataSpec::Synthetic {
                preset,
                components,
                n_per_component,
            } => {
                if preset.is_some() == components.is_some() {
                    return Err(field_err(
                        "data",
                        "synthetic data needs exactly one of `preset` or `components`",
                    ));
                }
                if *n_per_component == 0 {
                    return Err(field_err("data.n_per_component", "must be >= 1"));
                }
            }
            DataSpec::Csv { .. } => {
                if matches!(self.split, SplitSpec::Components {}) {
                    return Err(field_err("split", "`components` requires synthetic data"));
                }
            }
        }
        match &self.split {
            SplitSpec::AttributeBias { p, .. } if !(0.0..=1.0).contains(p) => {
                Err(field_err("split.p", "must lie in [0, 1]"))
            }
            SplitSpec::Random { pools } if *pools < 2 => Err(field_err("split.pools", "must be >= 2")),
            _ => Ok(()),
        }
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    pub fn members(&self) -> usize {
        self.n
    }

    pub fn nonmembers(&self) -> usize {
        self.m.unwrap_or(self.n)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilon_grid.iter().map(|e| e.0).collect()
    }

    pub fn hidden_layers(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| self.profile.hidden())
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs.unwrap_or_else(|| self.profile.epochs()),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            l2_coefficient: t.l2_coefficient.unwrap_or(d.l2_coefficient),
            seed: self.seed,
            ..d
        }
    }

    pub fn architecture(&self, width: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![width];
        dims.extend(self.hidden_layers());
        dims.push(classes);
        dims
    }

    pub fn campaign_spec(&self, width: usize, classes: usize) -> CampaignSpec {
        CampaignSpec {
            n: self.members(),
            m: self.nonmembers(),
            epsilon_grid: self.epsilons(),
            delta: self.delta,
            repetitions: self.repetitions,
            attacks: self.attacks.clone(),
            arch: self.architecture(width, classes),
            train: self.train_config(),
            clip_norm: self.clip_norm,
            shadow: self.shadow,
            shadow_cap: self.shadow_cap,
            seed: derive_seed(self.seed, &[2]),
            export_traces: self.export_traces,
        }
    }

    /// Sorted-key JSON of the fully defaulted config; stable under key
    /// reordering of the input.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Loads the dataset, relative paths resolved against `base_dir`.
    pub fn load_dataset(&self, base_dir: &Path) -> Result<Dataset> {
        let data_seed = derive_seed(self.seed, &[0]);
        match &self.data {
            DataSpec::Csv { path, schema } => {
                let schema = match schema {
                    SchemaSource::Inline(s) => s.clone(),
                    SchemaSource::Path(p) => Schema::load(base_dir.join(p))?,
                };
                let raw = dataio::load_csv(base_dir.join(path), &schema)?;
                dataio::preprocess(&raw, &schema, data_seed)
            }
            DataSpec::Synthetic { n_per_component, .. } => {
                dataio::synthetic_dataset(&self.components()?, *n_per_component, data_seed)
            }
        }
    }

    fn components(&self) -> Result<Vec<GaussianComponent>> {
        match &self.data {
            DataSpec::Synthetic {
                preset: Some(p), ..
            } => Ok(p.components()),
            DataSpec::Synthetic {
                components: Some(c),
                ..
            } => Ok(c.clone()),
            _ => Err(field_err("data", "not a synthetic source")),
        }
    }

    /// Builds the mixture pools described by `data` and `split`.
    pub fn prepare(&self, base_dir: &Path) -> Result<Prepared> {
        let split_seed = derive_seed(self.seed, &[1]);
        let data = self.load_dataset(base_dir)?;
        let (width, classes) = (data.width(), data.label_classes());
        if let Some(want) = self.split_attribute() {
            let have = data.schema.split_attribute().map(|c| c.name.clone());
            if have.as_deref() != Some(want) {
                return Err(field_err(
                    "split.attribute",
                    format!("`{want}` is not the schema's split attribute"),
                ));
            }
        }
        let pools = match &self.split {
            SplitSpec::Components {} => {
                let DataSpec::Synthetic { n_per_component, .. } = &self.data else {
                    unreachable!("validated");
                };
                dataio::synthetic_mixture(&self.components()?, *n_per_component, derive_seed(self.seed, &[0]))?
            }
            SplitSpec::Cluster {} => splits::cluster_split(&data, split_seed)?,
            SplitSpec::AttributeBias { value, p, .. } => {
                splits::attribute_bias_pools(&data, value, *p, self.members(), split_seed)?
            }
            SplitSpec::Source { member_value, .. } => splits::source_split(&data, member_value)?,
            SplitSpec::Random { pools } => splits::random_pools(&data, *pools, split_seed)?,
        };
        let pools = pools
            .with_member(self.k_member)
            .map_err(|e| field_err("k_member", e))?;
        Ok(Prepared {
            pools,
            width,
            classes,
        })
    }

    fn split_attribute(&self) -> Option<&str> {
        match &self.split {
            SplitSpec::AttributeBias { attribute, .. } | SplitSpec::Source { attribute, .. } => {
                attribute.as_deref()
            }
            _ => None,
        }
    }
}
