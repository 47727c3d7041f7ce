//! The three label spaces (19 basic values, 8 higher-order categories,
//! Presence) and the deterministic maps between them.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_same_labels, AnnotationMatrix, Keyed, LabelMatrix};

/// Canonical basic-value order. Every file and matrix uses it.
pub const VALUE_NAMES: [&str; 19] = [
    "Self-direction: thought",
    "Self-direction: action",
    "Stimulation",
    "Hedonism",
    "Achievement",
    "Power: dominance",
    "Power: resources",
    "Face",
    "Security: personal",
    "Security: societal",
    "Tradition",
    "Conformity: rules",
    "Conformity: interpersonal",
    "Humility",
    "Benevolence: caring",
    "Benevolence: dependability",
    "Universalism: concern",
    "Universalism: nature",
    "Universalism: tolerance",
];

/// Canonical higher-order category order.
pub const HO_NAMES: [&str; 8] = [
    "Growth",
    "Self-Protection",
    "Social Focus",
    "Personal Focus",
    "Openness to Change",
    "Conservation",
    "Self-Transcendence",
    "Self-Enhancement",
];

pub const PRESENCE: &str = "Presence";

/// Version tag of the built-in value-to-category mapping.
pub const MAPPING_VERSION: &str = "schwartz-refined-2012/v1";

const BUILTIN_GROUPS: [(&str, &[&str]); 8] = [
    (
        "Growth",
        &[
            "Humility",
            "Benevolence: caring",
            "Benevolence: dependability",
            "Universalism: concern",
            "Universalism: nature",
            "Universalism: tolerance",
            "Self-direction: thought",
            "Self-direction: action",
            "Stimulation",
            "Hedonism",
            "Achievement",
        ],
    ),
    (
        "Self-Protection",
        &[
            "Achievement",
            "Power: dominance",
            "Power: resources",
            "Face",
            "Security: personal",
            "Security: societal",
            "Tradition",
            "Conformity: rules",
            "Conformity: interpersonal",
            "Humility",
        ],
    ),
    (
        "Social Focus",
        &[
            "Security: societal",
            "Tradition",
            "Conformity: rules",
            "Conformity: interpersonal",
            "Humility",
            "Benevolence: caring",
            "Benevolence: dependability",
            "Universalism: concern",
            "Universalism: nature",
            "Universalism: tolerance",
        ],
    ),
    (
        "Personal Focus",
        &[
            "Self-direction: thought",
            "Self-direction: action",
            "Stimulation",
            "Hedonism",
            "Achievement",
            "Power: dominance",
            "Power: resources",
            "Face",
            "Security: personal",
        ],
    ),
    (
        "Openness to Change",
        &[
            "Self-direction: thought",
            "Self-direction: action",
            "Stimulation",
            "Hedonism",
        ],
    ),
    (
        "Conservation",
        &[
            "Face",
            "Security: personal",
            "Security: societal",
            "Tradition",
            "Conformity: rules",
            "Conformity: interpersonal",
            "Humility",
        ],
    ),
    (
        "Self-Transcendence",
        &[
            "Humility",
            "Benevolence: caring",
            "Benevolence: dependability",
            "Universalism: concern",
            "Universalism: nature",
            "Universalism: tolerance",
        ],
    ),
    (
        "Self-Enhancement",
        &[
            "Hedonism",
            "Achievement",
            "Power: dominance",
            "Power: resources",
            "Face",
        ],
    ),
];

pub fn value_labels() -> Vec<String> {
    VALUE_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn ho_labels() -> Vec<String> {
    HO_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn presence_labels() -> Vec<String> {
    vec![PRESENCE.to_string()]
}

/// Index of a basic value, matched case-sensitively after trimming.
pub fn value_index(name: &str) -> Option<usize> {
    let name = name.trim();
    VALUE_NAMES.iter().position(|v| *v == name)
}

pub fn ho_index(name: &str) -> Option<usize> {
    let name = name.trim();
    HO_NAMES.iter().position(|v| *v == name)
}

/// Which of the three label spaces a matrix lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSpace {
    Values,
    Ho,
    Presence,
}

impl LabelSpace {
    pub fn labels(self) -> Vec<String> {
        match self {
            LabelSpace::Values => value_labels(),
            LabelSpace::Ho => ho_labels(),
            LabelSpace::Presence => presence_labels(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelSpace::Values => "values",
            LabelSpace::Ho => "ho",
            LabelSpace::Presence => "presence",
        }
    }
}

impl std::str::FromStr for LabelSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "values" => Ok(LabelSpace::Values),
            "ho" => Ok(LabelSpace::Ho),
            "presence" => Ok(LabelSpace::Presence),
            other => Err(Error::InvalidConfig(format!("unknown label space `{other}`"))),
        }
    }
}

/// Membership of the 19 basic values in the 8 higher-order categories.
///
/// Categories are stored in canonical order regardless of how an override
/// file lists them. Overlaps are allowed; every value must belong to at
/// least one category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HoMapping {
    version: String,
    members: Vec<Vec<usize>>,
}

impl HoMapping {
    pub fn builtin() -> Self {
        let members = BUILTIN_GROUPS
            .iter()
            .map(|(_, vs)| {
                let mut idx: Vec<usize> = vs
                    .iter()
                    .map(|v| value_index(v).expect("built-in value name"))
                    .collect();
                idx.sort_unstable();
                idx
            })
            .collect();
        Self {
            version: MAPPING_VERSION.to_string(),
            members,
        }
    }

    /// Builds a mapping from `(category, value)` memberships.
    pub fn from_memberships<'a, I>(version: impl Into<String>, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut members = vec![Vec::new(); HO_NAMES.len()];
        for (cat, val) in pairs {
            let c = ho_index(cat).ok_or_else(|| Error::InvalidMapping(format!("unknown category `{cat}`")))?;
            let v = value_index(val).ok_or_else(|| Error::InvalidMapping(format!("unknown value `{val}`")))?;
            if !members[c].contains(&v) {
                members[c].push(v);
            }
        }
        for (c, m) in members.iter_mut().enumerate() {
            if m.is_empty() {
                return Err(Error::InvalidMapping(format!(
                    "category `{}` has no members",
                    HO_NAMES[c]
                )));
            }
            m.sort_unstable();
        }
        let mapping = Self {
            version: version.into(),
            members,
        };
        if let Some(v) = (0..VALUE_NAMES.len()).find(|&v| mapping.parents(v).is_empty()) {
            return Err(Error::InvalidMapping(format!(
                "value `{}` belongs to no category",
                VALUE_NAMES[v]
            )));
        }
        Ok(mapping)
    }

    /// Reads a TSV override with `category` and `value` columns.
    pub fn from_tsv_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Malformed {
            path: source.into(),
            row: 0,
            message: e.to_string(),
        })?;
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn {
                    path: source.into(),
                    column: name.into(),
                })
        };
        let (ci, vi) = (col("category")?, col("value")?);
        let mut pairs = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Malformed {
                path: source.into(),
                row: row + 1,
                message: e.to_string(),
            })?;
            let get = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            pairs.push((get(ci), get(vi)));
        }
        Self::from_memberships(
            format!("file:{source}"),
            pairs.iter().map(|(c, v)| (c.as_str(), v.as_str())),
        )
    }

    pub fn from_tsv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv_reader(file, &path.display().to_string())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Value indices grouped under category `c`.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn contains(&self, c: usize, v: usize) -> bool {
        self.members[c].binary_search(&v).is_ok()
    }

    /// Categories that value `v` belongs to, in canonical order.
    pub fn parents(&self, v: usize) -> Vec<usize> {
        (0..self.members.len()).filter(|&c| self.contains(c, v)).collect()
    }

    pub fn n_categories(&self) -> usize {
        self.members.len()
    }
}

impl Default for HoMapping {
    fn default() -> Self {
        Self::builtin()
    }
}

/// How a 0 / 0.5 / 1 annotation becomes a binary label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinarizeRule {
    /// Any non-zero attained or constrained signal counts as expressed.
    #[default]
    AnyNonZero,
    /// Only a full (1.0) signal counts; unclear (0.5) is treated as absent.
    FullOnly,
}

impl std::str::FromStr for BinarizeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any-non-zero" => Ok(BinarizeRule::AnyNonZero),
            "full-only" => Ok(BinarizeRule::FullOnly),
            other => Err(Error::InvalidConfig(format!("unknown binarize rule `{other}`"))),
        }
    }
}

impl BinarizeRule {
    fn expressed(self, v: f64) -> bool {
        match self {
            BinarizeRule::AnyNonZero => v > 0.0,
            BinarizeRule::FullOnly => v >= 1.0,
        }
    }
}

fn check_value_vocabulary(labels: &[String]) -> Result<()> {
    check_same_labels(labels, &value_labels())
}

/// Collapses attained/constrained annotations into one 19-value label matrix.
pub fn binarize_annotations(ann: &AnnotationMatrix, rule: BinarizeRule) -> Result<LabelMatrix> {
    check_value_vocabulary(ann.labels())?;
    let k = VALUE_NAMES.len();
    let mut data = Vec::with_capacity(ann.n_rows() * k);
    for r in 0..ann.n_rows() {
        data.extend((0..k).map(|v| rule.expressed(ann.attained(r, v)) || rule.expressed(ann.constrained(r, v))));
    }
    LabelMatrix::new(ann.ids().to_vec(), value_labels(), data)
}

/// Higher-order labels as the OR of each category's member values.
pub fn derive_ho(values: &LabelMatrix, mapping: &HoMapping) -> Result<LabelMatrix> {
    check_value_vocabulary(values.labels())?;
    let n_cat = mapping.n_categories();
    let mut data = Vec::with_capacity(values.n_rows() * n_cat);
    for r in 0..values.n_rows() {
        let row = values.row(r);
        data.extend((0..n_cat).map(|c| mapping.members(c).iter().any(|&v| row[v])));
    }
    LabelMatrix::new(values.ids().to_vec(), ho_labels(), data)
}

/// Presence: 1 iff any of the 19 values is expressed.
pub fn derive_presence(values: &LabelMatrix) -> Result<LabelMatrix> {
    check_value_vocabulary(values.labels())?;
    let data = (0..values.n_rows()).map(|r| values.row(r).iter().any(|&v| v)).collect();
    LabelMatrix::new(values.ids().to_vec(), presence_labels(), data)
}

/// The four canonical bipolar category pairs.
pub fn bipolar_pairs() -> [(&'static str, &'static str); 4] {
    [
        ("Openness to Change", "Conservation"),
        ("Self-Enhancement", "Self-Transcendence"),
        ("Personal Focus", "Social Focus"),
        ("Growth", "Self-Protection"),
    ]
}
