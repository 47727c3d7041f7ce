//! Seeded synthetic datasets and the error-compounding experiment.
//!
//! Gold values are drawn independently per label. Scores for a label with
//! gold `y` are `mu_y + spread * (2u - 1)` for `u ~ U[0, 1)`, clamped to
//! `[0, 1]`. Gate scores (HO and Presence) are drawn the same way and then
//! replaced by `1 - s` with probability `fnr` on gold positives and `fpr`
//! on gold negatives.
//!
//! Each component draws from its own ChaCha8 stream of the configured seed:
//! 0 for gold, 1 for value scores, 2 for HO scores, 3 for Presence scores.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::ThresholdVector;
use crate::dataset::{write_gold, write_scores, Format};
use crate::error::{Error, Result};
use crate::gating::{run_cascade, GateAssignment, HierarchySpec, ScoreBundle, Variant};
use crate::label_space::{
    derive_ho, derive_presence, ho_labels, presence_labels, value_labels, HoMapping, VALUE_NAMES,
};
use crate::matrix::{AnnotationMatrix, LabelMatrix, ScoreMatrix, SentenceId};
use crate::metrics::{end_task_eval, in_gate_eval, ZeroDivision};

/// Train-split value prevalence (percent), in canonical value order.
pub const TRAIN_PREVALENCE_PCT: [f64; 19] = [
    1.29, 3.61, 2.62, 0.86, 6.42, 4.63, 5.00, 1.81, 2.03, 8.95, 1.20, 6.10, 1.35, 0.24, 2.29, 1.94, 4.97, 2.05, 1.07,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mu_pos: f64,
    pub mu_neg: f64,
    /// Half-width of the uniform window around the mean.
    pub spread: f64,
}

impl ScoreModel {
    pub const fn new(mu_pos: f64, mu_neg: f64, spread: f64) -> Self {
        Self { mu_pos, mu_neg, spread }
    }

    pub const fn oracle() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    fn validate(&self, what: &str) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.mu_pos) || !unit(self.mu_neg) || self.mu_neg > self.mu_pos || !(self.spread >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{what} score model needs 0 <= mu_neg <= mu_pos <= 1 and spread >= 0"
            )));
        }
        Ok(())
    }

    /// Score for one cell given gold and a uniform draw `u` in `[0, 1)`.
    pub fn score(&self, gold: bool, u: f64) -> f64 {
        let mu = if gold { self.mu_pos } else { self.mu_neg };
        (mu + self.spread * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateCorruption {
    pub fnr: f64,
    pub fpr: f64,
}

fn default_prevalence() -> Vec<f64> {
    TRAIN_PREVALENCE_PCT.iter().map(|p| p / 100.0).collect()
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Per-value positive rate in `[0, 1]`, canonical value order.
    #[serde(default = "default_prevalence")]
    pub prevalence: Vec<f64>,
    pub values: ScoreModel,
    pub ho: ScoreModel,
    pub presence: ScoreModel,
    pub corruption: GateCorruption,
    pub seed: u64,
    /// Fixed threshold applied to value scores in experiments.
    #[serde(default = "default_half")]
    pub value_threshold: f64,
    /// Fixed threshold applied to HO and Presence gate scores in experiments.
    #[serde(default = "default_half")]
    pub gate_threshold: f64,
}

impl SyntheticConfig {
    /// Train-split prevalence, moderately separable value scores and gates
    /// that miss 30% of true positives and open on 10% of negatives.
    pub fn g1() -> Self {
        Self {
            n: 20_000,
            prevalence: default_prevalence(),
            values: ScoreModel::new(0.7, 0.3, 0.15),
            ho: ScoreModel::new(0.7, 0.3, 0.15),
            presence: ScoreModel::new(0.7, 0.3, 0.15),
            corruption: GateCorruption { fnr: 0.3, fpr: 0.1 },
            seed: 42,
            value_threshold: 0.5,
            gate_threshold: 0.5,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("synthetic config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("synthetic config needs n > 0".into()));
        }
        if self.prevalence.len() != VALUE_NAMES.len() {
            return Err(Error::InvalidConfig(format!(
                "prevalence has {} entries, expected {}",
                self.prevalence.len(),
                VALUE_NAMES.len()
            )));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !self.prevalence.iter().all(|&p| unit(p)) {
            return Err(Error::InvalidConfig("prevalence rates must lie in [0, 1]".into()));
        }
        if !unit(self.corruption.fnr) || !unit(self.corruption.fpr) {
            return Err(Error::InvalidConfig("fnr and fpr must lie in [0, 1]".into()));
        }
        if !unit(self.value_threshold) || !unit(self.gate_threshold) {
            return Err(Error::InvalidConfig("thresholds must lie in [0, 1]".into()));
        }
        self.values.validate("value")?;
        self.ho.validate("HO")?;
        self.presence.validate("Presence")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub gold: AnnotationMatrix,
    pub values: LabelMatrix,
    pub ho: LabelMatrix,
    pub presence: LabelMatrix,
    pub scores: ScoreBundle,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_scores(gold: &LabelMatrix, model: &ScoreModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    gold.data()
        .iter()
        .map(|&g| model.score(g, rng.random::<f64>()))
        .collect()
}

fn draw_gate(gold: &LabelMatrix, model: &ScoreModel, c: &GateCorruption, rng: &mut ChaCha8Rng) -> Vec<f64> {
    gold.data()
        .iter()
        .map(|&g| {
            let s = model.score(g, rng.random::<f64>());
            let flip = rng.random::<f64>() < if g { c.fnr } else { c.fpr };
            if flip {
                1.0 - s
            } else {
                s
            }
        })
        .collect()
}

pub fn synthetic_ids(n: usize) -> Vec<SentenceId> {
    (0..n)
        .map(|r| SentenceId::new(format!("synth{:05}", r / 10 + 1), (r % 10 + 1).to_string()))
        .collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mapping = HoMapping::builtin();
    let ids = synthetic_ids(cfg.n);
    let k = VALUE_NAMES.len();

    let mut rng = stream(cfg.seed, 0);
    let bits: Vec<bool> = (0..cfg.n * k)
        .map(|i| rng.random::<f64>() < cfg.prevalence[i % k])
        .collect();
    let values = LabelMatrix::new(ids.clone(), value_labels(), bits)?;
    let ho = derive_ho(&values, &mapping)?;
    let presence = derive_presence(&values)?;

    let attained = values.data().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let gold = AnnotationMatrix::new(ids.clone(), value_labels(), attained, vec![0.0; cfg.n * k])?;

    let value_scores = draw_scores(&values, &cfg.values, &mut stream(cfg.seed, 1));
    let ho_scores = draw_gate(&ho, &cfg.ho, &cfg.corruption, &mut stream(cfg.seed, 2));
    let p_scores = draw_gate(&presence, &cfg.presence, &cfg.corruption, &mut stream(cfg.seed, 3));
    let scores = ScoreBundle {
        values: ScoreMatrix::new(ids.clone(), value_labels(), value_scores)?,
        ho: Some(ScoreMatrix::new(ids.clone(), ho_labels(), ho_scores)?),
        presence: Some(ScoreMatrix::new(ids, presence_labels(), p_scores)?),
    };
    Ok(SyntheticData {
        gold,
        values,
        ho,
        presence,
        scores,
    })
}

impl SyntheticData {
    /// Writes `gold`, `scores_values`, `scores_ho` and `scores_presence`.
    pub fn write_to_dir(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
        let ext = format.extension();
        let path = |name: &str| dir.join(format!("{name}.{ext}"));
        let mut out = Vec::new();
        write_gold(&path("gold"), &self.gold, format)?;
        out.push(path("gold"));
        write_scores(&path("scores_values"), &self.scores.values, format)?;
        out.push(path("scores_values"));
        if let Some(ho) = &self.scores.ho {
            write_scores(&path("scores_ho"), ho, format)?;
            out.push(path("scores_ho"));
        }
        if let Some(p) = &self.scores.presence {
            write_scores(&path("scores_presence"), p, format)?;
            out.push(path("scores_presence"));
        }
        Ok(out)
    }
}

/// Fixed-threshold hierarchy used by the experiments: Presence, then each
/// value gated by its default circumplex parent.
pub fn experiment_hierarchy(cfg: &SyntheticConfig, variant: Variant) -> HierarchySpec {
    let mapping = HoMapping::builtin();
    let gated = variant != Variant::Direct;
    HierarchySpec {
        variant,
        gate: gated.then(|| GateAssignment::quadrant_default(&mapping)),
        mapping,
        values: ThresholdVector::fixed(&value_labels(), cfg.value_threshold),
        ho: gated.then(|| ThresholdVector::fixed(&ho_labels(), cfg.gate_threshold)),
        presence: (variant == Variant::PresenceCategoryValues)
            .then(|| ThresholdVector::fixed(&presence_labels(), cfg.gate_threshold)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundingRow {
    pub fnr: f64,
    pub direct_f1: f64,
    pub gated_f1: f64,
    /// Gated Macro-F1 on the rows the Presence gate passed.
    pub in_gate_f1: f64,
    pub direct_recall: f64,
    pub gated_recall: f64,
    pub direct_label_recall: Vec<f64>,
    pub gated_label_recall: Vec<f64>,
    pub direct_label_f1: Vec<f64>,
    pub gated_label_f1: Vec<f64>,
}

/// Direct vs. Presence -> Category -> Values on one synthetic dataset.
pub fn run_experiment(cfg: &SyntheticConfig) -> Result<CompoundingRow> {
    let data = generate(cfg)?;
    let zd = ZeroDivision::Zero;
    let direct = run_cascade(&experiment_hierarchy(cfg, Variant::Direct), &data.scores)?;
    let gated = run_cascade(
        &experiment_hierarchy(cfg, Variant::PresenceCategoryValues),
        &data.scores,
    )?;
    let d = end_task_eval(&data.values, &direct.values, zd)?;
    let g = end_task_eval(&data.values, &gated.values, zd)?;
    let gate = gated.trace.presence.as_ref().expect("presence stage ran");
    let in_gate = in_gate_eval(&data.values, &gated.values, gate, zd)?;
    let recalls = |r: &crate::metrics::F1Report| r.per_label.values().map(|s| s.recall).collect();
    let f1s = |r: &crate::metrics::F1Report| r.per_label.values().map(|s| s.f1).collect();
    Ok(CompoundingRow {
        fnr: cfg.corruption.fnr,
        direct_f1: d.macro_f1,
        gated_f1: g.macro_f1,
        in_gate_f1: in_gate.macro_f1,
        direct_recall: d.macro_recall(),
        gated_recall: g.macro_recall(),
        direct_label_recall: recalls(&d),
        gated_label_recall: recalls(&g),
        direct_label_f1: f1s(&d),
        gated_label_f1: f1s(&g),
    })
}

/// One experiment per gate false-negative rate, all other settings fixed.
pub fn error_compounding_report(cfg: &SyntheticConfig, fnrs: &[f64]) -> Result<Vec<CompoundingRow>> {
    fnrs.par_iter()
        .map(|&fnr| {
            let mut c = cfg.clone();
            c.corruption.fnr = fnr;
            run_experiment(&c)
        })
        .collect()
}

pub fn render_report(rows: &[CompoundingRow]) -> String {
    let mut out = String::from("fnr\tdirect_f1\tgated_f1\tin_gate_f1\tdirect_recall\tgated_recall\n");
    for r in rows {
        out.push_str(&format!(
            "{:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
            r.fnr, r.direct_f1, r.gated_f1, r.in_gate_f1, r.direct_recall, r.gated_recall
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n: 500,
            seed,
            ..SyntheticConfig::g1()
        }
    }

    #[test]
    fn zero_rows_rejected() {
        let cfg = SyntheticConfig {
            n: 0,
            ..SyntheticConfig::g1()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn inverted_means_rejected() {
        let mut cfg = small(1);
        cfg.values = ScoreModel::new(0.2, 0.8, 0.1);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_prevalence_gives_empty_gold() {
        let mut cfg = small(3);
        cfg.prevalence = vec![0.0; 19];
        let d = generate(&cfg).unwrap();
        assert_eq!(d.values.count_ones(), 0);
        assert_eq!(d.presence.count_ones(), 0);
    }

    #[test]
    fn score_model_window() {
        let m = ScoreModel::new(0.7, 0.3, 0.15);
        assert!((m.score(true, 0.0) - 0.55).abs() < 1e-12);
        assert!((m.score(false, 0.5) - 0.3).abs() < 1e-12);
        assert_eq!(ScoreModel::new(1.0, 0.0, 0.5).score(true, 0.99), 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.scores.values, b.scores.values);
        assert_ne!(generate(&small(6)).unwrap().scores.values, a.scores.values);
    }

    #[test]
    fn noiseless_direct_is_perfect() {
        let mut cfg = small(8);
        cfg.prevalence = vec![0.1; 19];
        cfg.values = ScoreModel::oracle();
        cfg.corruption = GateCorruption { fnr: 0.0, fpr: 0.0 };
        let row = run_experiment(&cfg).unwrap();
        assert_eq!(row.direct_f1, 1.0);
    }

    #[test]
    fn config_from_toml_uses_defaults() {
        let text = r#"
n = 100
seed = 4
values = { mu_pos = 0.7, mu_neg = 0.3, spread = 0.15 }
ho = { mu_pos = 0.7, mu_neg = 0.3, spread = 0.15 }
presence = { mu_pos = 0.7, mu_neg = 0.3, spread = 0.15 }
corruption = { fnr = 0.3, fpr = 0.1 }
"#;
        let cfg = SyntheticConfig::from_toml(text).unwrap();
        assert_eq!(cfg.prevalence.len(), 19);
        assert_eq!(cfg.gate_threshold, 0.5);
    }
}
