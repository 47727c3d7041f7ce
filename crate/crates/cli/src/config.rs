//! Run configuration: one TOML file per run, overridden field by field by
//! command-line flags.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use valuegate::dataset::{Format, Split};
use valuegate::ensembling::EnsembleMode;
use valuegate::gating::Variant;
use valuegate::label_space::BinarizeRule;
use valuegate::metrics::ZeroDivision;
use valuegate::synthetic::SyntheticConfig;
use valuegate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub out_dir: Option<PathBuf>,
    pub zero_division: Option<ZeroDivision>,
    pub mapping: Option<PathBuf>,
    pub gold: GoldSection,
    pub calibration: CalibrationSection,
    pub hierarchy: HierarchySection,
    pub bootstrap: BootstrapSection,
    pub ensemble: EnsembleSection,
    pub llm: LlmSection,
    /// Overrides on top of the G1 synthetic configuration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<toml::Table>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GoldSection {
    pub binarize: Option<BinarizeRule>,
    pub remap: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub precision_floor: Option<f64>,
    pub grid_step: Option<f64>,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchySection {
    pub variant: Option<Variant>,
    /// `quadrant`, `slice`, `parents`, `any-parent` or `all-parents`.
    pub gate: Option<String>,
    /// Category for the `slice` gate.
    pub category: Option<String>,
    /// Value name to gating category, for the `parents` gate.
    pub parents: Option<IndexMap<String, String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub resamples: Option<usize>,
    pub confidence: Option<f64>,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub mode: Option<EnsembleMode>,
    pub min_relative_gain: Option<f64>,
    pub gain_on_lower_bound: Option<bool>,
    pub repeat_passes: Option<bool>,
    pub members: Vec<MemberEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemberKind {
    Scores,
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberEntry {
    pub name: String,
    pub validation: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_kind")]
    pub kind: MemberKind,
    #[serde(default)]
    pub thresholds: Option<PathBuf>,
}

fn default_kind() -> MemberKind {
    MemberKind::Scores
}

impl MemberEntry {
    /// Parses `name=validation[,test]`.
    pub fn parse(arg: &str, kind: MemberKind) -> Result<Self> {
        let (name, paths) = arg
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("member `{arg}` is not name=validation[,test]")))?;
        let mut parts = paths.splitn(2, ',');
        let validation = parts
            .next()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::InvalidConfig(format!("member `{name}` has no validation file")))?;
        Ok(Self {
            name: name.to_string(),
            validation: PathBuf::from(validation),
            test: parts.next().filter(|p| !p.is_empty()).map(PathBuf::from),
            kind,
            thresholds: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub lenient: Option<bool>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// The G1 configuration with `[synthetic]` keys laid over it.
    pub fn synthetic(&self) -> Result<SyntheticConfig> {
        let base = SyntheticConfig::g1();
        let Some(over) = &self.synthetic else {
            return Ok(base);
        };
        let mut table =
            toml::Table::try_from(&base).map_err(|e| Error::InvalidConfig(format!("synthetic config: {e}")))?;
        merge(&mut table, over);
        table
            .try_into()
            .map_err(|e| Error::InvalidConfig(format!("synthetic config: {e}")))
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}
