//! Per-label precision/recall/F1, Macro-F1 and the two evaluation modes.
//!
//! End-task evaluation scores final outputs over every sentence of a split,
//! so upstream gate errors count against the system. In-gate evaluation
//! scores only the sentences a gate let through.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_aligned, Keyed, LabelMatrix};

/// Value assigned to precision or recall when its denominator is zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroDivision {
    #[default]
    Zero,
    One,
}

impl ZeroDivision {
    fn value(self) -> f64 {
        match self {
            ZeroDivision::Zero => 0.0,
            ZeroDivision::One => 1.0,
        }
    }
}

impl std::str::FromStr for ZeroDivision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "0" => Ok(ZeroDivision::Zero),
            "one" | "1" => Ok(ZeroDivision::One),
            other => Err(Error::InvalidConfig(format!("unknown zero-division rule `{other}`"))),
        }
    }
}

/// Binary confusion counts for one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fneg: u64,
    pub tn: u64,
}

impl Confusion {
    #[inline]
    pub fn add(&mut self, gold: bool, pred: bool) {
        self.add_weighted(gold, pred, 1);
    }

    #[inline]
    pub fn add_weighted(&mut self, gold: bool, pred: bool, w: u64) {
        match (gold, pred) {
            (true, true) => self.tp += w,
            (false, true) => self.fp += w,
            (true, false) => self.fneg += w,
            (false, false) => self.tn += w,
        }
    }

    pub fn precision(&self, zd: ZeroDivision) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            zd.value()
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn recall(&self, zd: ZeroDivision) -> f64 {
        let d = self.tp + self.fneg;
        if d == 0 {
            zd.value()
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn f1(&self, zd: ZeroDivision) -> f64 {
        let p = self.precision(zd);
        let r = self.recall(zd);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// No gold positives or no predicted positives.
    pub fn is_degenerate(&self) -> bool {
        self.tp + self.fneg == 0 || self.tp + self.fp == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fneg: u64,
    pub degenerate: bool,
}

impl LabelScore {
    fn from_confusion(c: &Confusion, zd: ZeroDivision) -> Self {
        Self {
            precision: c.precision(zd),
            recall: c.recall(zd),
            f1: c.f1(zd),
            tp: c.tp,
            fp: c.fp,
            fneg: c.fneg,
            degenerate: c.is_degenerate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub rows: usize,
    pub zero_division: ZeroDivision,
    pub per_label: IndexMap<String, LabelScore>,
}

impl F1Report {
    pub fn from_confusions(labels: &[String], counts: &[Confusion], rows: usize, zd: ZeroDivision) -> Self {
        let per_label: IndexMap<String, LabelScore> = labels
            .iter()
            .zip(counts)
            .map(|(l, c)| (l.clone(), LabelScore::from_confusion(c, zd)))
            .collect();
        Self {
            macro_f1: macro_f1_from_counts(counts, zd),
            rows,
            zero_division: zd,
            per_label,
        }
    }

    pub fn f1(&self, label: &str) -> Option<f64> {
        self.per_label.get(label).map(|s| s.f1)
    }

    pub fn macro_recall(&self) -> f64 {
        mean(self.per_label.values().map(|s| s.recall))
    }

    pub fn macro_precision(&self) -> f64 {
        mean(self.per_label.values().map(|s| s.precision))
    }

    /// Macro-F1 over a subset of labels (e.g. the values of one HO slice).
    pub fn macro_over<S: AsRef<str>>(&self, labels: &[S]) -> Result<f64> {
        let f1s = labels
            .iter()
            .map(|l| {
                self.f1(l.as_ref())
                    .ok_or_else(|| Error::VocabularyMismatch(format!("label `{}` not in report", l.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(mean(f1s.into_iter()))
    }

    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        let width = self
            .per_label
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max("Macro-F1".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}",
            "Label", "Precision", "Recall", "F1", "TP", "FP", "FN"
        );
        for (label, s) in &self.per_label {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}  {:>7}  {:>7}{}",
                label,
                s.precision,
                s.recall,
                s.f1,
                s.tp,
                s.fp,
                s.fneg,
                if s.degenerate { "  degenerate" } else { "" }
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9.4}",
            "Macro-F1", "", "", self.macro_f1
        );
        let _ = writeln!(out, "rows: {}", self.rows);
        out
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn macro_f1_from_counts(counts: &[Confusion], zd: ZeroDivision) -> f64 {
    mean(counts.iter().map(|c| c.f1(zd)))
}

/// Confusion counts per label. The two matrices must share ids and labels.
pub fn confusions(gold: &LabelMatrix, pred: &LabelMatrix) -> Result<Vec<Confusion>> {
    check_aligned(gold, pred)?;
    let mut counts = vec![Confusion::default(); gold.n_labels()];
    for r in 0..gold.n_rows() {
        for (c, (&g, &p)) in gold.row(r).iter().zip(pred.row(r)).enumerate() {
            counts[c].add(g, p);
        }
    }
    Ok(counts)
}

pub fn per_label_f1(gold: &LabelMatrix, pred: &LabelMatrix, zd: ZeroDivision) -> Result<F1Report> {
    let counts = confusions(gold, pred)?;
    Ok(F1Report::from_confusions(gold.labels(), &counts, gold.n_rows(), zd))
}

/// Mean F1 of the two poles of a bipolar pair.
pub fn bipolar_f1(report: &F1Report, pair: (&str, &str)) -> Result<f64> {
    let pole = |name: &str| {
        report
            .f1(name)
            .ok_or_else(|| Error::VocabularyMismatch(format!("pole `{name}` not in report")))
    };
    Ok((pole(pair.0)? + pole(pair.1)?) / 2.0)
}

/// Scores final outputs over the full split.
pub fn end_task_eval(gold: &LabelMatrix, final_pred: &LabelMatrix, zd: ZeroDivision) -> Result<F1Report> {
    per_label_f1(gold, final_pred, zd)
}

/// Scores only the rows where `gate_pred` is positive. All labels are kept
/// even if some have no positives inside the gated subset.
pub fn in_gate_eval(
    gold: &LabelMatrix,
    pred: &LabelMatrix,
    gate_pred: &LabelMatrix,
    zd: ZeroDivision,
) -> Result<F1Report> {
    check_aligned(gold, pred)?;
    if gate_pred.n_labels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "gate has {} labels, expected 1",
            gate_pred.n_labels()
        )));
    }
    crate::matrix::check_same_rows(gold.ids(), gate_pred.ids())?;
    let rows: Vec<usize> = (0..gold.n_rows()).filter(|&r| gate_pred.get(r, 0)).collect();
    if rows.is_empty() {
        return Err(Error::EmptyGate);
    }
    per_label_f1(&gold.select_rows(&rows), &pred.select_rows(&rows), zd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SentenceId;

    fn col(values: &[u8]) -> LabelMatrix {
        let ids = (0..values.len()).map(|i| SentenceId::new("t", i.to_string())).collect();
        LabelMatrix::new(ids, vec!["a".into()], values.iter().map(|&v| v == 1).collect()).unwrap()
    }

    #[test]
    fn hand_counted_confusion() {
        let r = per_label_f1(&col(&[1, 1, 0, 0]), &col(&[1, 0, 1, 0]), ZeroDivision::Zero).unwrap();
        let s = &r.per_label["a"];
        assert_eq!((s.tp, s.fp, s.fneg), (1, 1, 1));
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert!(!s.degenerate);
    }

    #[test]
    fn perfect_prediction() {
        let g = col(&[1, 0, 1, 1, 0]);
        let r = per_label_f1(&g, &g, ZeroDivision::Zero).unwrap();
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn all_zero_column_is_degenerate_zero() {
        let z = col(&[0, 0, 0]);
        let r = per_label_f1(&z, &z, ZeroDivision::Zero).unwrap();
        assert_eq!(r.per_label["a"].f1, 0.0);
        assert!(r.per_label["a"].degenerate);
        let r1 = per_label_f1(&z, &z, ZeroDivision::One).unwrap();
        assert_eq!(r1.per_label["a"].f1, 1.0);
    }

    #[test]
    fn bipolar_means() {
        let mut report = per_label_f1(&col(&[1]), &col(&[1]), ZeroDivision::Zero).unwrap();
        let template = report.per_label["a"].clone();
        report.per_label.clear();
        for (name, f1) in [
            ("Growth", 0.54),
            ("Self-Protection", 0.62),
            ("Openness to Change", 0.34),
            ("Conservation", 0.50),
        ] {
            let mut s = template.clone();
            s.f1 = f1;
            report.per_label.insert(name.into(), s);
        }
        let gsp = bipolar_f1(&report, ("Growth", "Self-Protection")).unwrap();
        assert!((gsp - 0.58).abs() < 1e-12);
        let oc = bipolar_f1(&report, ("Openness to Change", "Conservation")).unwrap();
        assert!((oc - 0.42).abs() < 1e-12);
        assert_eq!(bipolar_f1(&report, ("Growth", "Growth")).unwrap(), 0.54);
        assert!(bipolar_f1(&report, ("Growth", "Social Focus")).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(per_label_f1(&col(&[1, 0]), &col(&[1]), ZeroDivision::Zero).is_err());
    }

    #[test]
    fn in_gate_modes() {
        let gold = col(&[1, 0, 1, 0]);
        let pred = col(&[1, 1, 0, 0]);
        let open = col(&[1, 1, 1, 1]);
        assert_eq!(
            in_gate_eval(&gold, &pred, &open, ZeroDivision::Zero).unwrap(),
            end_task_eval(&gold, &pred, ZeroDivision::Zero).unwrap()
        );
        let gate = col(&[1, 0, 0, 0]);
        let r = in_gate_eval(&gold, &pred, &gate, ZeroDivision::Zero).unwrap();
        assert_eq!(r.rows, 1);
        assert_eq!(r.macro_f1, 1.0);
        let closed = col(&[0, 0, 0, 0]);
        assert!(matches!(
            in_gate_eval(&gold, &pred, &closed, ZeroDivision::Zero),
            Err(Error::EmptyGate)
        ));
    }

    #[test]
    fn forced_zero_predictions() {
        let gold = col(&[1, 0, 1, 0]);
        let r = end_task_eval(&gold, &col(&[0, 0, 0, 0]), ZeroDivision::Zero).unwrap();
        assert_eq!(r.macro_f1, 0.0);
    }
}
