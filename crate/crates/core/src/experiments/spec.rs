use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::designgen::SplitFractions;
use crate::error::{Error, Result};
use crate::fea::ElementKind;
use crate::gsm::{TrainConfig, ARCHITECTURE_A9, DEFAULT_ARCHITECTURE, DEFAULT_HEADS};

/// Spanning-truss design models shared by the generalization and Trial D
/// experiments.
pub const SPANNING_MODELS: [&str; 5] = ["dm5", "dm6", "dm7", "dm8", "dm9"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrialId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl TrialId {
    pub const ALL: [TrialId; 7] = [TrialId::A, TrialId::B, TrialId::C, TrialId::D, TrialId::E, TrialId::F, TrialId::G];

    pub fn is_transfer(self) -> bool {
        matches!(self, TrialId::D | TrialId::E | TrialId::F | TrialId::G)
    }
}

impl fmt::Display for TrialId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for TrialId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrialId::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown trial {s:?} (expected A-G)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Reduced network and data sizes that fit a laptop CPU.
    #[default]
    Desk,
    /// Network and sweep sizes of the original study.
    Full,
}

/// Everything needed to run one trial reproducibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial: TrialId,
    /// Design models evaluated as targets.
    pub targets: Vec<String>,
    /// Training pool (A–C) or pre-training sources (D–G). For Trials C and D
    /// the current target is always removed from this list.
    pub sources: Vec<String>,
    /// Designs generated per source model before filtering.
    pub source_size: usize,
    /// Target training-set sizes swept in transfer trials.
    pub target_sizes: Vec<usize>,
    /// Designs generated for the transfer-trial reference test set.
    pub test_size: usize,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub filter_worst: f64,
    /// Percentile of the reference test set's maximum displacements above
    /// which target training designs are discarded.
    pub reference_percentile: f64,
    pub split: [f64; 3],
    pub architecture: String,
    pub heads: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub element_kind: ElementKind,
    /// Also fit the random-forest surrogate where the topology is fixed.
    pub pointwise: bool,
}

impl TrialSpec {
    pub fn preset(trial: TrialId, profile: Profile) -> Self {
        let (architecture, heads, source_size, sizes, test_size) = match profile {
            Profile::Desk => (ARCHITECTURE_A9, 4, 500, vec![20, 50, 100, 200], 500),
            Profile::Full => (DEFAULT_ARCHITECTURE, DEFAULT_HEADS, 1000, vec![20, 50, 100, 200, 500, 1000], 1000),
        };
        let defaults = TrainConfig::default();
        let mut spec = TrialSpec {
            trial,
            targets: SPANNING_MODELS.iter().map(|s| s.to_string()).collect(),
            sources: SPANNING_MODELS.iter().map(|s| s.to_string()).collect(),
            source_size,
            target_sizes: sizes,
            test_size,
            seeds: vec![0, 1, 2],
            data_seed: 0,
            filter_worst: 0.1,
            reference_percentile: 90.0,
            split: [0.68, 0.12, 0.20],
            architecture: architecture.to_string(),
            heads,
            epochs: defaults.epochs,
            pretrain_epochs: defaults.epochs,
            batch_size: defaults.batch_size,
            learning_rate: defaults.learning_rate,
            weight_decay: defaults.weight_decay,
            element_kind: ElementKind::FrameBeam,
            pointwise: true,
        };
        match trial {
            TrialId::A | TrialId::B | TrialId::C | TrialId::D => {}
            TrialId::E => spec.set_single_target("dm7_endloads"),
            TrialId::F => spec.set_single_target("tower"),
            TrialId::G => {
                spec.set_single_target(match profile {
                    Profile::Desk => "bridge_small",
                    Profile::Full => "bridge",
                });
                let bridge = defaults.bridge_overrides();
                spec.batch_size = bridge.batch_size;
                spec.learning_rate = bridge.learning_rate;
                if profile == Profile::Desk {
                    spec.target_sizes = vec![20, 50];
                    spec.test_size = 100;
                }
            }
        }
        spec
    }

    fn set_single_target(&mut self, target: &str) {
        self.targets = vec![target.to_string()];
        self.sources = vec!["dm7".to_string()];
    }

    pub fn split_fractions(&self) -> Result<SplitFractions> {
        SplitFractions::new(self.split[0], self.split[1], self.split[2])
    }

    /// Training settings for cells of this trial (fine-tuning and scratch).
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed,
        }
    }

    /// Pre-training runs with the default batch size and learning rate; only
    /// the fine-tuning stage of Trial G uses the bridge settings.
    pub fn pretrain_config(&self, seed: u64) -> TrainConfig {
        let base = if self.trial == TrialId::G {
            TrainConfig {
                batch_size: TrainConfig::default().batch_size,
                learning_rate: TrainConfig::default().learning_rate,
                ..self.train_config(seed)
            }
        } else {
            self.train_config(seed)
        };
        TrainConfig {
            epochs: self.pretrain_epochs,
            ..base
        }
    }

    /// Sources used for `target`: the target itself is removed for Trials C
    /// and D.
    pub fn sources_for(&self, target: &str) -> Vec<String> {
        match self.trial {
            TrialId::C | TrialId::D => self.sources.iter().filter(|s| *s != target).cloned().collect(),
            _ => self.sources.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid("trial spec has no targets"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("trial spec has no seeds"));
        }
        if self.source_size == 0 {
            return Err(Error::invalid("source_size must be positive"));
        }
        self.split_fractions()?;
        self.train_config(0).validate()?;
        crate::gsm::parse_architecture(&self.architecture)?;
        if self.heads == 0 {
            return Err(Error::invalid("heads must be positive"));
        }
        if !(0.0..1.0).contains(&self.filter_worst) {
            return Err(Error::invalid("filter_worst must lie in [0, 1)"));
        }
        for t in &self.targets {
            crate::designgen::DesignModel::by_name(t)?;
        }
        for s in &self.sources {
            crate::designgen::DesignModel::by_name(s)?;
        }
        if self.trial.is_transfer() {
            if self.target_sizes.is_empty() || self.target_sizes.contains(&0) {
                return Err(Error::invalid("transfer trials need positive target sizes"));
            }
            if self.test_size == 0 {
                return Err(Error::invalid("test_size must be positive"));
            }
            if !(0.0..=100.0).contains(&self.reference_percentile) {
                return Err(Error::invalid("reference_percentile must lie in [0, 100]"));
            }
            for t in &self.targets {
                if self.sources_for(t).is_empty() {
                    return Err(Error::invalid(format!("no pre-training sources left for target {t}")));
                }
            }
        }
        if self.trial == TrialId::C {
            for t in &self.targets {
                if self.sources_for(t).is_empty() {
                    return Err(Error::invalid(format!("no training sources left for target {t}")));
                }
            }
        }
        Ok(())
    }
}

/// Trial spec file: `trial` is required, `profile` picks the preset and every
/// other key overrides the preset value.
///
/// ```toml
/// trial = "D"
/// profile = "desk"
/// targets = ["dm7"]
/// target_sizes = [50, 100]
/// seeds = [0, 1, 2]
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    trial: Option<TrialId>,
    #[serde(default)]
    profile: Profile,
    targets: Option<Vec<String>>,
    sources: Option<Vec<String>>,
    source_size: Option<usize>,
    target_sizes: Option<Vec<usize>>,
    test_size: Option<usize>,
    seeds: Option<Vec<u64>>,
    data_seed: Option<u64>,
    filter_worst: Option<f64>,
    reference_percentile: Option<f64>,
    split: Option<[f64; 3]>,
    architecture: Option<String>,
    heads: Option<usize>,
    epochs: Option<usize>,
    pretrain_epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    element_kind: Option<ElementKind>,
    pointwise: Option<bool>,
}

macro_rules! override_fields {
    ($spec:ident, $file:ident, $($field:ident),*) => {
        $(if let Some(v) = $file.$field { $spec.$field = v; })*
    };
}

pub fn parse_trial_spec(text: &str) -> Result<TrialSpec> {
    let file: SpecFile = toml::from_str(text)?;
    let trial = file
        .trial
        .ok_or_else(|| Error::Format("trial spec is missing `trial`".into()))?;
    let mut spec = TrialSpec::preset(trial, file.profile);
    override_fields!(
        spec,
        file,
        targets,
        sources,
        source_size,
        target_sizes,
        test_size,
        seeds,
        data_seed,
        filter_worst,
        reference_percentile,
        split,
        architecture,
        heads,
        epochs,
        pretrain_epochs,
        batch_size,
        learning_rate,
        weight_decay,
        element_kind,
        pointwise
    );
    spec.validate()?;
    Ok(spec)
}

pub fn load_trial_spec(path: impl AsRef<Path>) -> Result<TrialSpec> {
    parse_trial_spec(&std::fs::read_to_string(path)?)
}
