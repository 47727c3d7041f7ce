//! Hard, soft and weighted voting over a model pool, and bootstrap-gated
//! forward selection of ensemble members.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::{apply_thresholds, tune_label_thresholds, ThresholdPolicy, ThresholdVector};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::matrix::{check_aligned, check_same_labels, check_same_rows, Keyed, LabelMatrix, ScoreMatrix};
use crate::metrics::{per_label_f1, ZeroDivision};
use crate::stats::{paired_bootstrap, BootstrapConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    Hard,
    Soft,
    Weighted,
}

impl std::str::FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(EnsembleMode::Hard),
            "soft" => Ok(EnsembleMode::Soft),
            "weighted" => Ok(EnsembleMode::Weighted),
            other => Err(Error::InvalidConfig(format!("unknown ensemble mode `{other}`"))),
        }
    }
}

/// Outputs of one member on one split.
#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub scores: Option<ScoreMatrix>,
    pub decisions: LabelMatrix,
}

#[derive(Debug, Clone)]
pub struct Member {
    pub name: String,
    pub validation: SplitOutput,
    pub test: Option<SplitOutput>,
    pub thresholds: Option<ThresholdVector>,
    pub val_macro_f1: f64,
}

impl Member {
    /// A probability-outputting member; decisions come from `thresholds`.
    pub fn from_scores(
        name: impl Into<String>,
        validation: ScoreMatrix,
        test: Option<ScoreMatrix>,
        thresholds: ThresholdVector,
        gold_val: &LabelMatrix,
        zd: ZeroDivision,
    ) -> Result<Self> {
        let val_dec = apply_thresholds(&validation, &thresholds)?;
        let val_macro_f1 = per_label_f1(gold_val, &val_dec, zd)?.macro_f1;
        let test = test
            .map(|s| -> Result<SplitOutput> {
                let decisions = apply_thresholds(&s, &thresholds)?;
                Ok(SplitOutput {
                    scores: Some(s),
                    decisions,
                })
            })
            .transpose()?;
        Ok(Self {
            name: name.into(),
            validation: SplitOutput {
                scores: Some(validation),
                decisions: val_dec,
            },
            test,
            thresholds: Some(thresholds),
            val_macro_f1,
        })
    }

    /// A discrete-output member (e.g. a prompted LLM).
    pub fn from_labels(
        name: impl Into<String>,
        validation: LabelMatrix,
        test: Option<LabelMatrix>,
        gold_val: &LabelMatrix,
        zd: ZeroDivision,
    ) -> Result<Self> {
        let val_macro_f1 = per_label_f1(gold_val, &validation, zd)?.macro_f1;
        Ok(Self {
            name: name.into(),
            validation: SplitOutput {
                scores: None,
                decisions: validation,
            },
            test: test.map(|decisions| SplitOutput {
                scores: None,
                decisions,
            }),
            thresholds: None,
            val_macro_f1,
        })
    }

    pub fn is_probabilistic(&self) -> bool {
        self.validation.scores.is_some()
    }

    fn output(&self, split: Split) -> Result<&SplitOutput> {
        match split {
            Split::Validation => Ok(&self.validation),
            Split::Test => self
                .test
                .as_ref()
                .ok_or_else(|| Error::MissingStage(format!("test outputs for member `{}`", self.name))),
            Split::Train => Err(Error::InvalidEnsemble(
                "pools carry validation and test outputs only".into(),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelPool {
    members: Vec<Member>,
}

impl ModelPool {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for m in &members {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::InvalidEnsemble(format!("duplicate member name `{}`", m.name)));
            }
        }
        if let Some(first) = members.first() {
            for m in &members[1..] {
                check_aligned(&first.validation.decisions, &m.validation.decisions)?;
                if let (Some(a), Some(b)) = (&first.test, &m.test) {
                    check_aligned(&a.decisions, &b.decisions)?;
                }
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn get(&self, name: &str) -> Result<&Member> {
        self.members
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::InvalidEnsemble(format!("no member named `{name}`")))
    }

    /// Member indices in descending validation Macro-F1; ties keep pool order.
    pub fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|&i, &j| self.members[j].val_macro_f1.total_cmp(&self.members[i].val_macro_f1));
        order
    }
}

fn check_members<M: Keyed>(ms: &[&M]) -> Result<()> {
    let first = ms
        .first()
        .ok_or_else(|| Error::InvalidEnsemble("ensemble needs at least one member".into()))?;
    for m in &ms[1..] {
        check_same_rows(first.ids(), m.ids())?;
        check_same_labels(first.labels(), m.labels())?;
    }
    Ok(())
}

/// Majority of binary decisions; a cell is positive iff strictly more than
/// half of the members vote for it.
pub fn hard_vote(members: &[&LabelMatrix]) -> Result<LabelMatrix> {
    check_members(members)?;
    let m = members.len();
    let cells = members[0].data().len();
    let data = (0..cells)
        .map(|i| 2 * members.iter().filter(|x| x.data()[i]).count() > m)
        .collect();
    LabelMatrix::new(members[0].ids().to_vec(), members[0].labels().to_vec(), data)
}

/// Weighted per-cell mean. Terms are summed in sorted order so the result
/// does not depend on member order.
pub fn weighted_mean_scores(members: &[&ScoreMatrix], weights: &[f64]) -> Result<ScoreMatrix> {
    check_members(members)?;
    if weights.len() != members.len() {
        return Err(Error::InvalidEnsemble(format!(
            "{} weights for {} members",
            weights.len(),
            members.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidEnsemble("weights must be finite and non-negative".into()));
    }
    let mut canon: Vec<usize> = (0..members.len()).collect();
    canon.sort_by(|&i, &j| weights[i].total_cmp(&weights[j]));
    let total: f64 = canon.iter().map(|&i| weights[i]).sum();
    if total <= 0.0 {
        return Err(Error::InvalidEnsemble("all ensemble weights are zero".into()));
    }
    let cells = members[0].data().len();
    let mut terms = Vec::with_capacity(members.len());
    let data = (0..cells)
        .map(|c| {
            terms.clear();
            terms.extend(members.iter().zip(weights).map(|(m, &w)| (w, m.data()[c])));
            terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let s: f64 = terms.iter().map(|(w, p)| w * p).sum();
            (s / total).clamp(0.0, 1.0)
        })
        .collect();
    ScoreMatrix::new(members[0].ids().to_vec(), members[0].labels().to_vec(), data)
}

pub fn mean_scores(members: &[&ScoreMatrix]) -> Result<ScoreMatrix> {
    weighted_mean_scores(members, &vec![1.0; members.len()])
}

pub fn soft_vote(members: &[&ScoreMatrix], tau: &ThresholdVector) -> Result<LabelMatrix> {
    apply_thresholds(&mean_scores(members)?, tau)
}

pub fn weighted_vote(members: &[&ScoreMatrix], weights: &[f64], tau: &ThresholdVector) -> Result<LabelMatrix> {
    apply_thresholds(&weighted_mean_scores(members, weights)?, tau)
}

/// A frozen ensemble: members, combination rule and, for score-based
/// modes, thresholds tuned on validation for the combined scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub members: Vec<String>,
    pub mode: EnsembleMode,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdVector>,
    pub seed: u64,
}

impl EnsembleSpec {
    /// Builds the spec for `names`, tuning combined-score thresholds on
    /// validation when the mode needs them.
    pub fn fit(
        pool: &ModelPool,
        names: &[String],
        mode: EnsembleMode,
        gold_val: &LabelMatrix,
        policy: &ThresholdPolicy,
        seed: u64,
    ) -> Result<Self> {
        let members: Vec<&Member> = names.iter().map(|n| pool.get(n)).collect::<Result<_>>()?;
        if members.is_empty() {
            return Err(Error::InvalidEnsemble("ensemble needs at least one member".into()));
        }
        if mode != EnsembleMode::Hard {
            if let Some(m) = members.iter().find(|m| !m.is_probabilistic()) {
                return Err(Error::InvalidEnsemble(format!(
                    "member `{}` has discrete outputs; use hard voting",
                    m.name
                )));
            }
        }
        let weights = match mode {
            EnsembleMode::Weighted => members.iter().map(|m| m.val_macro_f1).collect(),
            _ => Vec::new(),
        };
        let mut spec = Self {
            members: names.to_vec(),
            mode,
            weights,
            thresholds: None,
            seed,
        };
        if mode != EnsembleMode::Hard && members.len() > 1 {
            let combined = spec.combined_scores(pool, Split::Validation)?;
            spec.thresholds = Some(tune_label_thresholds(&combined, gold_val, policy)?);
        }
        Ok(spec)
    }

    fn combined_scores(&self, pool: &ModelPool, split: Split) -> Result<ScoreMatrix> {
        let outs: Vec<&SplitOutput> = self
            .members
            .iter()
            .map(|n| pool.get(n)?.output(split))
            .collect::<Result<_>>()?;
        let scores: Vec<&ScoreMatrix> = outs
            .iter()
            .map(|o| {
                o.scores
                    .as_ref()
                    .ok_or_else(|| Error::InvalidEnsemble("score-based vote over a discrete member".into()))
            })
            .collect::<Result<_>>()?;
        match self.mode {
            EnsembleMode::Weighted => weighted_mean_scores(&scores, &self.weights),
            _ => mean_scores(&scores),
        }
    }

    /// Ensemble decisions on `split`.
    pub fn predict(&self, pool: &ModelPool, split: Split) -> Result<LabelMatrix> {
        if self.members.len() == 1 {
            return Ok(pool.get(&self.members[0])?.output(split)?.decisions.clone());
        }
        match self.mode {
            EnsembleMode::Hard => {
                let outs: Vec<&LabelMatrix> = self
                    .members
                    .iter()
                    .map(|n| Ok(&pool.get(n)?.output(split)?.decisions))
                    .collect::<Result<_>>()?;
                hard_vote(&outs)
            }
            _ => {
                let tv = self
                    .thresholds
                    .as_ref()
                    .ok_or_else(|| Error::InvalidEnsemble("score-based ensemble has no thresholds".into()))?;
                apply_thresholds(&self.combined_scores(pool, split)?, tv)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub mode: EnsembleMode,
    pub bootstrap: BootstrapConfig,
    /// Minimum relative improvement over the current ensemble.
    pub min_relative_gain: f64,
    /// Apply the relative-gain floor to the bootstrap lower bound instead of
    /// the point estimate.
    pub gain_on_lower_bound: bool,
    /// Keep sweeping the remaining candidates until a pass accepts nothing.
    pub repeat_passes: bool,
    pub policy: ThresholdPolicy,
}

impl SelectionConfig {
    pub fn new(mode: EnsembleMode, bootstrap: BootstrapConfig) -> Self {
        Self {
            mode,
            bootstrap,
            min_relative_gain: 0.01,
            gain_on_lower_bound: false,
            repeat_passes: false,
            policy: ThresholdPolicy::constrained(Split::Validation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub pass: usize,
    pub candidate: String,
    pub trial_members: Vec<String>,
    pub current_f1: f64,
    pub trial_f1: f64,
    pub delta: f64,
    pub lower_bound: f64,
    pub p_value: f64,
    pub relative_gain: f64,
    pub accepted: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionHeader {
    pub metric: String,
    pub mode: EnsembleMode,
    pub seed: u64,
    pub resamples: usize,
    pub confidence: f64,
    pub min_relative_gain: f64,
    pub gain_applies_to: String,
    pub order: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub spec: EnsembleSpec,
    pub val_macro_f1: f64,
    pub header: SelectionHeader,
    pub trials: Vec<TrialRecord>,
}

impl Selection {
    /// Header line followed by one JSON object per trial.
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.header).expect("header serializes"))?;
        for t in &self.trials {
            writeln!(w, "{}", serde_json::to_string(t).expect("trial serializes"))?;
        }
        Ok(())
    }

    pub fn log_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_log(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 log")
    }
}

fn relative(gain: f64, base: f64) -> f64 {
    if base > 0.0 {
        gain / base
    } else if gain > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Greedy forward selection starting from the best single member.
pub fn forward_select(pool: &ModelPool, gold_val: &LabelMatrix, cfg: &SelectionConfig) -> Result<Selection> {
    let order = pool.ranked();
    let Some(&best) = order.first() else {
        return Err(Error::InvalidEnsemble("model pool is empty".into()));
    };
    let zd = cfg.bootstrap.zero_division;
    let names: Vec<String> = order.iter().map(|&i| pool.members()[i].name.clone()).collect();
    if cfg.mode != EnsembleMode::Hard {
        if let Some(m) = pool.members().iter().find(|m| !m.is_probabilistic()) {
            return Err(Error::InvalidEnsemble(format!(
                "pool member `{}` has discrete outputs; mixed pools use hard voting",
                m.name
            )));
        }
    }

    let seed = cfg.bootstrap.seed;
    let mut current = EnsembleSpec::fit(pool, &names[..1], cfg.mode, gold_val, &cfg.policy, seed)?;
    let mut current_dec = current.predict(pool, Split::Validation)?;
    let mut current_f1 = pool.members()[best].val_macro_f1;
    let mut remaining: Vec<String> = names[1..].to_vec();
    let mut trials = Vec::new();
    let mut pass = 0;

    loop {
        pass += 1;
        let mut accepted_any = false;
        let mut rejected = Vec::new();
        for cand in remaining.drain(..) {
            let mut trial_names = current.members.clone();
            trial_names.push(cand.clone());
            let trial = EnsembleSpec::fit(pool, &trial_names, cfg.mode, gold_val, &cfg.policy, seed)?;
            let trial_dec = trial.predict(pool, Split::Validation)?;
            let trial_f1 = per_label_f1(gold_val, &trial_dec, zd)?.macro_f1;
            let boot = paired_bootstrap(gold_val, &current_dec, &trial_dec, &cfg.bootstrap)?;
            let delta = trial_f1 - current_f1;
            let rel_point = relative(delta, current_f1);
            let gain_basis = if cfg.gain_on_lower_bound {
                relative(boot.lower_bound, current_f1)
            } else {
                rel_point
            };
            let reason = if trial_f1 <= current_f1 {
                "no validation improvement"
            } else if boot.lower_bound <= 0.0 {
                "bootstrap lower bound not above zero"
            } else if gain_basis < cfg.min_relative_gain {
                "relative gain below floor"
            } else {
                "accepted"
            };
            let accepted = reason == "accepted";
            trials.push(TrialRecord {
                pass,
                candidate: cand.clone(),
                trial_members: trial_names,
                current_f1,
                trial_f1,
                delta,
                lower_bound: boot.lower_bound,
                p_value: boot.p_value,
                relative_gain: rel_point,
                accepted,
                reason: reason.into(),
            });
            if accepted {
                current = trial;
                current_dec = trial_dec;
                current_f1 = trial_f1;
                accepted_any = true;
            } else {
                rejected.push(cand);
            }
        }
        remaining = rejected;
        if !cfg.repeat_passes || !accepted_any || remaining.is_empty() {
            break;
        }
    }

    let header = SelectionHeader {
        metric: "macro-f1".into(),
        mode: cfg.mode,
        seed,
        resamples: cfg.bootstrap.resamples,
        confidence: cfg.bootstrap.confidence,
        min_relative_gain: cfg.min_relative_gain,
        gain_applies_to: if cfg.gain_on_lower_bound {
            "lower-bound"
        } else {
            "point-estimate"
        }
        .into(),
        order: names,
    };
    Ok(Selection {
        spec: current,
        val_macro_f1: current_f1,
        header,
        trials,
    })
}
