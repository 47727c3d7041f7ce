//! Label-wise decision thresholds: constrained grid search on validation,
//! stage-aware tuning for gated hierarchies, and threshold application.
//!
//! For each label the search walks the grid `{0.00, 0.01, ..., 1.00}` and,
//! among thresholds whose validation precision reaches the floor, keeps the
//! one with the highest recall. Ties on recall go to the higher precision,
//! then to the smaller threshold. When no threshold reaches the floor the
//! label falls back to the grid point with the best F1, or to `1.0` if no
//! threshold yields a positive F1.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::gating::{gate_value_mask, GateAssignment, ScoreBundle, Variant};
use crate::label_space::{derive_ho, derive_presence, HoMapping};
use crate::matrix::{check_aligned, check_same_labels, Keyed, LabelMatrix, ScoreMatrix};
use crate::metrics::{Confusion, ZeroDivision};

pub const DEFAULT_PRECISION_FLOOR: f64 = 0.40;
pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const TIE_BREAK_RULE: &str = "max recall, then max precision, then smallest tau";
pub const FALLBACK_RULE: &str = "max validation F1 (smallest tau on ties); tau = 1.0 if F1 is 0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// One global threshold, not tuned.
    Fixed,
    /// Recall maximized subject to a precision floor.
    ConstrainedGrid,
}

/// Record of how a threshold vector was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub kind: PolicyKind,
    pub precision_floor: f64,
    pub grid_step: f64,
    pub fallback: String,
    pub tie_break: String,
    /// Split the thresholds were tuned on.
    pub tuning_split: Option<Split>,
    /// Hierarchy stage (`presence`, `ho`, `values`), when tuned stage-wise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

impl ThresholdPolicy {
    pub fn constrained(tuning_split: Split) -> Self {
        Self {
            kind: PolicyKind::ConstrainedGrid,
            precision_floor: DEFAULT_PRECISION_FLOOR,
            grid_step: DEFAULT_GRID_STEP,
            fallback: FALLBACK_RULE.into(),
            tie_break: TIE_BREAK_RULE.into(),
            tuning_split: Some(tuning_split),
            stage: None,
        }
    }

    pub fn fixed() -> Self {
        Self {
            kind: PolicyKind::Fixed,
            precision_floor: 0.0,
            grid_step: DEFAULT_GRID_STEP,
            fallback: "none".into(),
            tie_break: "none".into(),
            tuning_split: None,
            stage: None,
        }
    }

    pub fn with_precision_floor(mut self, floor: f64) -> Self {
        self.precision_floor = floor;
        self
    }

    fn with_stage(&self, stage: &str) -> Self {
        let mut p = self.clone();
        p.stage = Some(stage.into());
        p
    }

    /// Number of grid intervals; the grid has `steps + 1` points.
    pub fn grid_steps(&self) -> Result<usize> {
        let steps = (1.0 / self.grid_step).round();
        if !(self.grid_step > 0.0) || steps < 1.0 || (steps * self.grid_step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "grid step {} does not divide [0, 1]",
                self.grid_step
            )));
        }
        Ok(steps as usize)
    }

    fn validate_for_tuning(&self) -> Result<usize> {
        if self.tuning_split == Some(Split::Test) {
            return Err(Error::TuneOnTest);
        }
        if !(0.0..=1.0).contains(&self.precision_floor) {
            return Err(Error::InvalidConfig(format!(
                "precision floor {} outside [0, 1]",
                self.precision_floor
            )));
        }
        self.grid_steps()
    }
}

#[inline]
pub fn grid_tau(i: usize, steps: usize) -> f64 {
    i as f64 / steps as f64
}

/// Why a label did not get a regular constrained selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelFlag {
    /// No gold positives on the tuning split.
    NoPositives,
    /// Precision floor unreachable; best-F1 threshold used.
    FallbackBestF1,
    /// Precision floor unreachable and every threshold has F1 0; tau = 1.0.
    FallbackNeverPositive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTuning {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<LabelFlag>,
}

/// Per-label thresholds plus the policy that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub thresholds: IndexMap<String, f64>,
    pub policy: ThresholdPolicy,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub diagnostics: IndexMap<String, LabelTuning>,
}

impl ThresholdVector {
    /// Same threshold for every label.
    pub fn fixed(labels: &[String], tau: f64) -> Self {
        Self {
            thresholds: labels.iter().map(|l| (l.clone(), tau)).collect(),
            policy: ThresholdPolicy::fixed(),
            diagnostics: IndexMap::new(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.thresholds.keys().cloned().collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.thresholds.values().copied().collect()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.thresholds.get(label).copied()
    }

    pub fn flagged(&self) -> Vec<(&str, LabelFlag)> {
        self.diagnostics
            .iter()
            .filter_map(|(l, d)| d.flag.map(|f| (l.as_str(), f)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("threshold vector serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tv: Self = serde_json::from_str(text)?;
        if let Some((l, t)) = tv.thresholds.iter().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidConfig(format!("threshold {t} for `{l}` outside [0, 1]")));
        }
        Ok(tv)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// `pred[s][k] = 1` iff `score[s][k] >= tau_k`.
pub fn apply_thresholds(scores: &ScoreMatrix, tv: &ThresholdVector) -> Result<LabelMatrix> {
    check_same_labels(scores.labels(), &tv.labels())?;
    let taus = tv.taus();
    let k = taus.len();
    let data = scores
        .data()
        .iter()
        .enumerate()
        .map(|(i, &s)| s >= taus[i % k])
        .collect();
    LabelMatrix::new(scores.ids().to_vec(), scores.labels().to_vec(), data)
}

/// Largest grid index whose threshold the score reaches.
fn grid_bucket(score: f64, steps: usize) -> usize {
    let mut i = ((score * steps as f64).floor().max(0.0) as usize).min(steps);
    while i < steps && score >= grid_tau(i + 1, steps) {
        i += 1;
    }
    while i > 0 && score < grid_tau(i, steps) {
        i -= 1;
    }
    i
}

/// Predicted-positive counts at every grid point for one label.
struct GridCounts {
    tp: Vec<u64>,
    fp: Vec<u64>,
    positives: u64,
}

fn grid_counts(scores: &[f64], gold: &[bool], open: Option<&[bool]>, steps: usize) -> GridCounts {
    let mut pos = vec![0u64; steps + 1];
    let mut neg = vec![0u64; steps + 1];
    let mut positives = 0;
    for (r, (&s, &g)) in scores.iter().zip(gold).enumerate() {
        positives += u64::from(g);
        if open.is_some_and(|o| !o[r]) {
            continue;
        }
        let b = grid_bucket(s, steps);
        if g {
            pos[b] += 1;
        } else {
            neg[b] += 1;
        }
    }
    for i in (0..steps).rev() {
        pos[i] += pos[i + 1];
        neg[i] += neg[i + 1];
    }
    GridCounts {
        tp: pos,
        fp: neg,
        positives,
    }
}

/// Tunes one label. `open[r] = false` forces row `r` negative regardless of
/// its score (a closed upstream gate).
pub(crate) fn tune_column(
    scores: &[f64],
    gold: &[bool],
    open: Option<&[bool]>,
    floor: f64,
    steps: usize,
) -> (f64, LabelTuning) {
    let counts = grid_counts(scores, gold, open, steps);
    let conf = |i: usize| {
        let tp = counts.tp[i];
        Confusion {
            tp,
            fp: counts.fp[i],
            fneg: counts.positives - tp,
            tn: 0,
        }
    };
    let tuning = |i: usize, flag| {
        let c = conf(i);
        LabelTuning {
            precision: c.precision(ZeroDivision::Zero),
            recall: c.recall(ZeroDivision::Zero),
            f1: c.f1(ZeroDivision::Zero),
            flag,
        }
    };

    if counts.positives > 0 {
        let mut best: Option<usize> = None;
        for i in 0..=steps {
            let (tp, fp) = (counts.tp[i], counts.fp[i]);
            let predicted = tp + fp;
            if predicted == 0 || (tp as f64 / predicted as f64) < floor {
                continue;
            }
            let better = match best {
                None => true,
                Some(j) => {
                    let (btp, bpred) = (counts.tp[j], counts.tp[j] + counts.fp[j]);
                    // Precision comparison by cross-multiplication.
                    tp > btp || (tp == btp && (tp as u128) * (bpred as u128) > (btp as u128) * (predicted as u128))
                }
            };
            if better {
                best = Some(i);
            }
        }
        if let Some(i) = best {
            return (grid_tau(i, steps), tuning(i, None));
        }
    }

    let mut best = 0usize;
    let mut best_f1 = conf(0).f1(ZeroDivision::Zero);
    for i in 1..=steps {
        let f = conf(i).f1(ZeroDivision::Zero);
        if f > best_f1 {
            best = i;
            best_f1 = f;
        }
    }
    if counts.positives == 0 {
        (1.0, tuning(steps, Some(LabelFlag::NoPositives)))
    } else if best_f1 > 0.0 {
        (grid_tau(best, steps), tuning(best, Some(LabelFlag::FallbackBestF1)))
    } else {
        (1.0, tuning(steps, Some(LabelFlag::FallbackNeverPositive)))
    }
}

/// Per-label open/closed mask over an `n x K` matrix, row-major.
pub(crate) type OpenMask = Vec<bool>;

pub(crate) fn tune_masked(
    scores: &ScoreMatrix,
    gold: &LabelMatrix,
    open: Option<&OpenMask>,
    policy: &ThresholdPolicy,
) -> Result<ThresholdVector> {
    let steps = policy.validate_for_tuning()?;
    check_aligned(scores, gold)?;
    let k = scores.n_labels();
    let n = scores.n_rows();
    let results: Vec<(f64, LabelTuning)> = (0..k)
        .into_par_iter()
        .map(|c| {
            let s = scores.column(c);
            let g = gold.column(c);
            let o: Option<Vec<bool>> = open.map(|m| (0..n).map(|r| m[r * k + c]).collect());
            tune_column(&s, &g, o.as_deref(), policy.precision_floor, steps)
        })
        .collect();
    let mut thresholds = IndexMap::with_capacity(k);
    let mut diagnostics = IndexMap::with_capacity(k);
    for (label, (tau, diag)) in scores.labels().iter().zip(results) {
        thresholds.insert(label.clone(), tau);
        diagnostics.insert(label.clone(), diag);
    }
    Ok(ThresholdVector {
        thresholds,
        policy: ThresholdPolicy {
            kind: PolicyKind::ConstrainedGrid,
            ..policy.clone()
        },
        diagnostics,
    })
}

/// Independent constrained search for every label.
pub fn tune_label_thresholds(
    scores_val: &ScoreMatrix,
    gold_val: &LabelMatrix,
    policy: &ThresholdPolicy,
) -> Result<ThresholdVector> {
    tune_masked(scores_val, gold_val, None, policy)
}

/// Thresholds for each stage of a hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageThresholds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presence: Option<ThresholdVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ho: Option<ThresholdVector>,
    pub values: ThresholdVector,
}

/// Stage-aware tuning: Presence first, then HO under the frozen Presence
/// gate, then values under the frozen Presence and HO gates. Each stage is
/// tuned on its post-gate predictions.
pub fn tune_stagewise(
    variant: Variant,
    gate: Option<&GateAssignment>,
    mapping: &HoMapping,
    scores: &ScoreBundle,
    gold_values: &LabelMatrix,
    policy: &ThresholdPolicy,
) -> Result<StageThresholds> {
    policy.validate_for_tuning()?;
    scores.check_rows()?;
    crate::matrix::check_same_rows(scores.values.ids(), gold_values.ids())?;
    let n = gold_values.n_rows();

    if variant == Variant::Direct {
        return Ok(StageThresholds {
            presence: None,
            ho: None,
            values: tune_masked(&scores.values, gold_values, None, &policy.with_stage("values"))?,
        });
    }

    let gate = gate.ok_or_else(|| Error::InvalidHierarchy("gated variant needs a gate assignment".into()))?;
    let ho_scores = scores
        .ho
        .as_ref()
        .ok_or_else(|| Error::MissingStage("ho scores".into()))?;
    let gold_ho = derive_ho(gold_values, mapping)?;

    let (presence_tv, presence_dec) = if variant == Variant::PresenceCategoryValues {
        let p_scores = scores
            .presence
            .as_ref()
            .ok_or_else(|| Error::MissingStage("presence scores".into()))?;
        let gold_p = derive_presence(gold_values)?;
        let tv = tune_masked(p_scores, &gold_p, None, &policy.with_stage("presence"))?;
        let dec = apply_thresholds(p_scores, &tv)?;
        (Some(tv), Some(dec))
    } else {
        (None, None)
    };

    let n_ho = ho_scores.n_labels();
    let ho_open: Option<OpenMask> = presence_dec
        .as_ref()
        .map(|p| (0..n * n_ho).map(|i| p.get(i / n_ho, 0)).collect());
    let ho_tv = tune_masked(ho_scores, &gold_ho, ho_open.as_ref(), &policy.with_stage("ho"))?;
    let mut ho_dec = apply_thresholds(ho_scores, &ho_tv)?;
    if let Some(p) = &presence_dec {
        for r in 0..n {
            if !p.get(r, 0) {
                ho_dec.row_mut(r).fill(false);
            }
        }
    }

    let mut value_open = gate_value_mask(&ho_dec, mapping, gate)?;
    if let Some(p) = &presence_dec {
        let k = gold_values.n_labels();
        for (i, o) in value_open.iter_mut().enumerate() {
            *o &= p.get(i / k, 0);
        }
    }
    let values_tv = tune_masked(
        &scores.values,
        gold_values,
        Some(&value_open),
        &policy.with_stage("values"),
    )?;
    Ok(StageThresholds {
        presence: presence_tv,
        ho: Some(ho_tv),
        values: values_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SentenceId;

    fn one_label(scores: &[f64], gold: &[u8]) -> (ScoreMatrix, LabelMatrix) {
        let ids: Vec<SentenceId> = (0..scores.len()).map(|i| SentenceId::new("t", i.to_string())).collect();
        (
            ScoreMatrix::new(ids.clone(), vec!["a".into()], scores.to_vec()).unwrap(),
            LabelMatrix::new(ids, vec!["a".into()], gold.iter().map(|&g| g == 1).collect()).unwrap(),
        )
    }

    fn val() -> ThresholdPolicy {
        ThresholdPolicy::constrained(Split::Validation)
    }

    #[test]
    fn inclusive_threshold() {
        let (s, _) = one_label(&[0.5, 0.999, 0.0], &[0, 0, 0]);
        let p = apply_thresholds(&s, &ThresholdVector::fixed(&["a".into()], 0.5)).unwrap();
        assert_eq!(p.column(0), vec![true, true, false]);
        let p = apply_thresholds(&s, &ThresholdVector::fixed(&["a".into()], 0.0)).unwrap();
        assert_eq!(p.column(0), vec![true, true, true]);
        let p = apply_thresholds(&s, &ThresholdVector::fixed(&["a".into()], 1.0)).unwrap();
        assert_eq!(p.column(0), vec![false, false, false]);
    }

    #[test]
    fn separable_scores_pick_lowest_clean_threshold() {
        let (s, g) = one_label(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        let tv = tune_label_thresholds(&s, &g, &val()).unwrap();
        assert_eq!(tv.get("a"), Some(0.21));
        let d = &tv.diagnostics["a"];
        assert_eq!((d.precision, d.recall), (1.0, 1.0));
        assert_eq!(d.flag, None);
    }

    #[test]
    fn binary_scores_pick_first_positive_grid_point() {
        let (s, g) = one_label(&[1.0, 0.0, 1.0, 0.0, 0.0], &[1, 0, 1, 0, 0]);
        let tv = tune_label_thresholds(&s, &g, &val()).unwrap();
        assert_eq!(tv.get("a"), Some(0.01));
    }

    #[test]
    fn no_positives_falls_back_to_never() {
        let (s, g) = one_label(&[0.9, 0.4, 0.1], &[0, 0, 0]);
        let tv = tune_label_thresholds(&s, &g, &val()).unwrap();
        assert_eq!(tv.get("a"), Some(1.0));
        assert_eq!(tv.diagnostics["a"].flag, Some(LabelFlag::NoPositives));
    }

    #[test]
    fn infeasible_floor_uses_best_f1() {
        // One positive buried among high-scoring negatives: precision never reaches 0.4.
        let (s, g) = one_label(&[0.9, 0.9, 0.9, 0.6, 0.1], &[0, 0, 0, 1, 0]);
        let tv = tune_label_thresholds(&s, &g, &val()).unwrap();
        assert_eq!(tv.diagnostics["a"].flag, Some(LabelFlag::FallbackBestF1));
        // tau in [0.11, 0.60] admits four rows: P = 1/4, R = 1, F1 = 0.4.
        assert_eq!(tv.get("a"), Some(0.11));
    }

    #[test]
    fn refuses_to_tune_on_test() {
        let (s, g) = one_label(&[0.9], &[1]);
        let err = tune_label_thresholds(&s, &g, &ThresholdPolicy::constrained(Split::Test)).unwrap_err();
        assert!(matches!(err, Error::TuneOnTest));
    }

    #[test]
    fn grid_bucket_matches_direct_comparison() {
        for &s in &[0.0, 0.01, 0.29, 0.3, 0.57, 0.999, 1.0, 0.07, 0.1 + 0.2] {
            let b = grid_bucket(s, 100);
            assert!(s >= grid_tau(b, 100));
            assert!(b == 100 || s < grid_tau(b + 1, 100));
        }
    }

    #[test]
    fn threshold_json_round_trip() {
        let (s, g) = one_label(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        let tv = tune_label_thresholds(&s, &g, &val()).unwrap();
        let back = ThresholdVector::from_json(&tv.to_json()).unwrap();
        assert_eq!(back, tv);
        assert!(tv.to_json().contains("\"policy\""));
    }

    #[test]
    fn rejects_bad_grid_step() {
        let (s, g) = one_label(&[0.9], &[1]);
        let mut p = val();
        p.grid_step = 0.03;
        assert!(tune_label_thresholds(&s, &g, &p).is_err());
    }
}
