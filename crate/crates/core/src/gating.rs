//! Hard hierarchical gating: the Presence gate, the category-to-values mask
//! and the composed Presence -> Category -> Values cascade.
//!
//! Gates only ever zero predictions. A value prediction survives the
//! category mask iff its gating parent's score reaches the parent's
//! threshold; a row survives the Presence gate iff its Presence score
//! reaches the Presence threshold.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::calibration::{apply_thresholds, ThresholdVector};
use crate::dataset::{write_labels, Format};
use crate::error::{Error, Result};
use crate::label_space::{ho_index, value_index, HoMapping, HO_NAMES, VALUE_NAMES};
use crate::matrix::{check_aligned, check_same_labels, check_same_rows, Keyed, LabelMatrix, ScoreMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Direct,
    CategoryValues,
    PresenceCategoryValues,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Variant::Direct),
            "category-values" => Ok(Variant::CategoryValues),
            "presence-category-values" => Ok(Variant::PresenceCategoryValues),
            other => Err(Error::InvalidConfig(format!("unknown hierarchy variant `{other}`"))),
        }
    }
}

/// Which higher-order category gates each value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateAssignment {
    /// One category gates its own members; all other values pass through.
    Slice { category: usize },
    /// Exactly one gating parent per value (category index per value).
    Parents { parent: Vec<usize> },
    /// Value open iff any of its parents is open.
    AnyParent,
    /// Value open iff all of its parents are open.
    AllParents,
}

/// Circumplex quadrants, in the order used to pick a default parent.
const QUADRANTS: [&str; 4] = [
    "Openness to Change",
    "Self-Enhancement",
    "Conservation",
    "Self-Transcendence",
];

impl GateAssignment {
    pub fn slice(category: &str) -> Result<Self> {
        let category =
            ho_index(category).ok_or_else(|| Error::InvalidHierarchy(format!("unknown category `{category}`")))?;
        Ok(GateAssignment::Slice { category })
    }

    /// Explicit one-parent-per-value assignment. Every value must be named
    /// and its parent must contain it under `mapping`.
    pub fn from_parent_names(names: &IndexMap<String, String>, mapping: &HoMapping) -> Result<Self> {
        let mut parent = vec![usize::MAX; VALUE_NAMES.len()];
        for (value, cat) in names {
            let v = value_index(value).ok_or_else(|| Error::InvalidHierarchy(format!("unknown value `{value}`")))?;
            let c = ho_index(cat).ok_or_else(|| Error::InvalidHierarchy(format!("unknown category `{cat}`")))?;
            if !mapping.contains(c, v) {
                return Err(Error::InvalidHierarchy(format!("`{cat}` is not a parent of `{value}`")));
            }
            parent[v] = c;
        }
        if let Some(v) = parent.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidHierarchy(format!(
                "value `{}` has no gating parent",
                VALUE_NAMES[v]
            )));
        }
        Ok(GateAssignment::Parents { parent })
    }

    /// Each value gated by the first circumplex quadrant that contains it
    /// (Openness to Change, Self-Enhancement, Conservation,
    /// Self-Transcendence), or by its first parent if none does.
    pub fn quadrant_default(mapping: &HoMapping) -> Self {
        let parent = (0..VALUE_NAMES.len())
            .map(|v| {
                QUADRANTS
                    .iter()
                    .filter_map(|q| ho_index(q))
                    .find(|&c| mapping.contains(c, v))
                    .unwrap_or_else(|| mapping.parents(v)[0])
            })
            .collect();
        GateAssignment::Parents { parent }
    }

    /// Whether value `v` is gated at all under this assignment.
    pub fn gates(&self, mapping: &HoMapping, v: usize) -> bool {
        match self {
            GateAssignment::Slice { category } => mapping.contains(*category, v),
            _ => true,
        }
    }

    fn open(&self, mapping: &HoMapping, v: usize, ho_row: &[bool]) -> bool {
        match self {
            GateAssignment::Slice { category } => !mapping.contains(*category, v) || ho_row[*category],
            GateAssignment::Parents { parent } => ho_row[parent[v]],
            GateAssignment::AnyParent => mapping.parents(v).iter().any(|&c| ho_row[c]),
            GateAssignment::AllParents => mapping.parents(v).iter().all(|&c| ho_row[c]),
        }
    }

    /// Categories that must be open for value `v` to pass.
    pub fn upstream(&self, mapping: &HoMapping, v: usize) -> Vec<usize> {
        match self {
            GateAssignment::Slice { category } => {
                if mapping.contains(*category, v) {
                    vec![*category]
                } else {
                    Vec::new()
                }
            }
            GateAssignment::Parents { parent } => vec![parent[v]],
            GateAssignment::AnyParent | GateAssignment::AllParents => mapping.parents(v),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            GateAssignment::Slice { category } => format!("slice:{}", HO_NAMES[*category]),
            GateAssignment::Parents { .. } => "parents".into(),
            GateAssignment::AnyParent => "any-parent".into(),
            GateAssignment::AllParents => "all-parents".into(),
        }
    }
}

/// Row-major `n x 19` mask: true where the value's gate is open given HO
/// decisions.
pub(crate) fn gate_value_mask(
    ho_decisions: &LabelMatrix,
    mapping: &HoMapping,
    gate: &GateAssignment,
) -> Result<Vec<bool>> {
    check_same_labels(ho_decisions.labels(), &crate::label_space::ho_labels())?;
    let k = VALUE_NAMES.len();
    let mut mask = Vec::with_capacity(ho_decisions.n_rows() * k);
    for r in 0..ho_decisions.n_rows() {
        let row = ho_decisions.row(r);
        mask.extend((0..k).map(|v| gate.open(mapping, v, row)));
    }
    Ok(mask)
}

/// Zeroes value predictions whose gating parent is closed.
pub fn mask_with_decisions(
    value_pred: &LabelMatrix,
    ho_decisions: &LabelMatrix,
    mapping: &HoMapping,
    gate: &GateAssignment,
) -> Result<LabelMatrix> {
    check_same_labels(value_pred.labels(), &crate::label_space::value_labels())?;
    check_same_rows(value_pred.ids(), ho_decisions.ids())?;
    let mask = gate_value_mask(ho_decisions, mapping, gate)?;
    let data = value_pred.data().iter().zip(mask).map(|(&p, open)| p && open).collect();
    LabelMatrix::new(value_pred.ids().to_vec(), value_pred.labels().to_vec(), data)
}

/// Category -> values hard mask: a value stays positive only if its gating
/// parent's score reaches that parent's threshold.
pub fn apply_category_mask(
    value_pred: &LabelMatrix,
    ho_scores: &ScoreMatrix,
    ho_thresholds: &ThresholdVector,
    mapping: &HoMapping,
    gate: &GateAssignment,
) -> Result<LabelMatrix> {
    let decisions = apply_thresholds(ho_scores, ho_thresholds)?;
    mask_with_decisions(value_pred, &decisions, mapping, gate)
}

/// Presence decisions (`score >= tau`) as a one-column matrix.
pub fn presence_decisions(presence_scores: &ScoreMatrix, tau: &ThresholdVector) -> Result<LabelMatrix> {
    if presence_scores.n_labels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "presence scores have {} columns, expected 1",
            presence_scores.n_labels()
        )));
    }
    apply_thresholds(presence_scores, tau)
}

fn zero_closed_rows(pred: &LabelMatrix, gate: &LabelMatrix) -> Result<LabelMatrix> {
    check_same_rows(pred.ids(), gate.ids())?;
    let mut out = pred.clone();
    for r in 0..out.n_rows() {
        if !gate.get(r, 0) {
            out.row_mut(r).fill(false);
        }
    }
    Ok(out)
}

/// Zeroes every label of rows whose Presence score is below `tau`.
pub fn apply_presence_gate(
    downstream_pred: &LabelMatrix,
    presence_scores: &ScoreMatrix,
    tau: &ThresholdVector,
) -> Result<LabelMatrix> {
    let gate = presence_decisions(presence_scores, tau)?;
    zero_closed_rows(downstream_pred, &gate)
}

/// Score matrices for every stage, row-aligned.
#[derive(Debug, Clone)]
pub struct ScoreBundle {
    pub values: ScoreMatrix,
    pub ho: Option<ScoreMatrix>,
    pub presence: Option<ScoreMatrix>,
}

impl ScoreBundle {
    pub fn check_rows(&self) -> Result<()> {
        check_same_labels(self.values.labels(), &crate::label_space::value_labels())?;
        if let Some(ho) = &self.ho {
            check_same_rows(self.values.ids(), ho.ids())?;
            check_same_labels(ho.labels(), &crate::label_space::ho_labels())?;
        }
        if let Some(p) = &self.presence {
            check_same_rows(self.values.ids(), p.ids())?;
            check_same_labels(p.labels(), &crate::label_space::presence_labels())?;
        }
        Ok(())
    }
}

/// A fully configured hierarchy: variant, mapping, gate and frozen
/// thresholds for each stage it uses.
#[derive(Debug, Clone)]
pub struct HierarchySpec {
    pub variant: Variant,
    pub mapping: HoMapping,
    pub gate: Option<GateAssignment>,
    pub values: ThresholdVector,
    pub ho: Option<ThresholdVector>,
    pub presence: Option<ThresholdVector>,
}

impl HierarchySpec {
    pub fn direct(values: ThresholdVector) -> Self {
        Self {
            variant: Variant::Direct,
            mapping: HoMapping::builtin(),
            gate: None,
            values,
            ho: None,
            presence: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant != Variant::Direct {
            if self.gate.is_none() {
                return Err(Error::InvalidHierarchy("gated variant needs a gate assignment".into()));
            }
            if self.ho.is_none() {
                return Err(Error::InvalidHierarchy("gated variant needs HO thresholds".into()));
            }
        }
        if self.variant == Variant::PresenceCategoryValues && self.presence.is_none() {
            return Err(Error::InvalidHierarchy(
                "presence cascade needs a Presence threshold".into(),
            ));
        }
        Ok(())
    }
}

/// Binary decisions of each stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTrace {
    pub presence: Option<LabelMatrix>,
    /// HO decisions after the Presence gate (if any).
    pub ho: Option<LabelMatrix>,
    /// Thresholded value scores before any masking.
    pub values_raw: LabelMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub values: LabelMatrix,
    pub trace: CascadeTrace,
}

impl CascadeOutput {
    /// Writes one file per stage (`presence`, `ho`, `values_raw`, `values`).
    pub fn write_trace(&self, dir: &Path, format: Format) -> Result<Vec<std::path::PathBuf>> {
        let ext = format.extension();
        let mut written = Vec::new();
        let mut put = |name: &str, m: &LabelMatrix| -> Result<()> {
            let p = dir.join(format!("trace_{name}.{ext}"));
            write_labels(&p, m, format)?;
            written.push(p);
            Ok(())
        };
        if let Some(p) = &self.trace.presence {
            put("presence", p)?;
        }
        if let Some(h) = &self.trace.ho {
            put("ho", h)?;
        }
        put("values_raw", &self.trace.values_raw)?;
        put("values", &self.values)?;
        Ok(written)
    }
}

pub fn run_cascade(spec: &HierarchySpec, scores: &ScoreBundle) -> Result<CascadeOutput> {
    spec.validate()?;
    scores.check_rows()?;
    let values_raw = apply_thresholds(&scores.values, &spec.values)?;
    if spec.variant == Variant::Direct {
        return Ok(CascadeOutput {
            values: values_raw.clone(),
            trace: CascadeTrace {
                presence: None,
                ho: None,
                values_raw,
            },
        });
    }

    let ho_scores = scores
        .ho
        .as_ref()
        .ok_or_else(|| Error::MissingStage("ho scores".into()))?;
    let ho_tv = spec.ho.as_ref().expect("validated");
    let mut ho_dec = apply_thresholds(ho_scores, ho_tv)?;

    let presence = if spec.variant == Variant::PresenceCategoryValues {
        let p_scores = scores
            .presence
            .as_ref()
            .ok_or_else(|| Error::MissingStage("presence scores".into()))?;
        let p_dec = presence_decisions(p_scores, spec.presence.as_ref().expect("validated"))?;
        ho_dec = zero_closed_rows(&ho_dec, &p_dec)?;
        Some(p_dec)
    } else {
        None
    };

    let gate = spec.gate.as_ref().expect("validated");
    let mut values = mask_with_decisions(&values_raw, &ho_dec, &spec.mapping, gate)?;
    if let Some(p) = &presence {
        values = zero_closed_rows(&values, p)?;
    }
    Ok(CascadeOutput {
        values,
        trace: CascadeTrace {
            presence,
            ho: Some(ho_dec),
            values_raw,
        },
    })
}

/// Checks that every final positive has all of its configured upstream
/// gates open in the trace. Returns the first offending `(row, value)`.
pub fn trace_violation(spec: &HierarchySpec, out: &CascadeOutput) -> Option<(usize, usize)> {
    let gate = spec.gate.as_ref()?;
    for r in 0..out.values.n_rows() {
        for v in 0..out.values.n_labels() {
            if !out.values.get(r, v) {
                continue;
            }
            if let Some(p) = &out.trace.presence {
                if !p.get(r, 0) {
                    return Some((r, v));
                }
            }
            let ho = out.trace.ho.as_ref()?;
            let ups = gate.upstream(&spec.mapping, v);
            let ok = match gate {
                GateAssignment::AnyParent => ups.iter().any(|&c| ho.get(r, c)),
                _ => ups.iter().all(|&c| ho.get(r, c)),
            };
            if !ok {
                return Some((r, v));
            }
        }
    }
    None
}

/// Positives of `gated` that are not positives of `direct`.
pub fn subset_violations(gated: &LabelMatrix, direct: &LabelMatrix) -> Result<usize> {
    check_aligned(gated, direct)?;
    Ok(gated
        .data()
        .iter()
        .zip(direct.data())
        .filter(|(&g, &d)| g && !d)
        .count())
}
