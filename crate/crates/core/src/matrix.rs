//! Row-keyed matrices shared by every stage of the pipeline.
//!
//! All three matrix types keep their rows in a fixed order keyed by a
//! [`SentenceId`], store cells row-major, and carry the label vocabulary
//! that names their columns.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(Text-ID, Sentence-ID)` pair identifying one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceId {
    pub text_id: String,
    pub sentence_id: String,
}

impl SentenceId {
    pub fn new(text_id: impl Into<String>, sentence_id: impl Into<String>) -> Self {
        Self {
            text_id: text_id.into(),
            sentence_id: sentence_id.into(),
        }
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.text_id, self.sentence_id)
    }
}

fn check_unique(ids: &[SentenceId], source: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for (row, id) in ids.iter().enumerate() {
        if !seen.insert(id) {
            return Err(Error::DuplicateId {
                path: source.to_string(),
                id: id.to_string(),
                row,
            });
        }
    }
    Ok(())
}

fn check_cells(len: usize, rows: usize, cols: usize) -> Result<()> {
    if len != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "{len} cells for {rows} rows x {cols} labels"
        )));
    }
    Ok(())
}

/// Matrices whose rows are keyed by sentence id and can be re-indexed.
pub trait Keyed: Sized {
    fn ids(&self) -> &[SentenceId];

    /// Column names, in order.
    fn labels(&self) -> &[String];

    /// New matrix holding the given rows, in the given order.
    fn select_rows(&self, rows: &[usize]) -> Self;

    fn n_rows(&self) -> usize {
        self.ids().len()
    }
}

/// Binary label matrix (`n` sentences by `K` labels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    ids: Vec<SentenceId>,
    labels: Vec<String>,
    data: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(ids: Vec<SentenceId>, labels: Vec<String>, data: Vec<bool>) -> Result<Self> {
        check_cells(data.len(), ids.len(), labels.len())?;
        check_unique(&ids, "label matrix")?;
        Ok(Self { ids, labels, data })
    }

    pub fn zeros(ids: Vec<SentenceId>, labels: Vec<String>) -> Result<Self> {
        let data = vec![false; ids.len() * labels.len()];
        Self::new(ids, labels, data)
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.labels.len() + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        let k = self.labels.len();
        self.data[row * k + col] = value;
    }

    pub fn row(&self, row: usize) -> &[bool] {
        let k = self.labels.len();
        &self.data[row * k..(row + 1) * k]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [bool] {
        let k = self.labels.len();
        &mut self.data[row * k..(row + 1) * k]
    }

    pub fn column(&self, col: usize) -> Vec<bool> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Number of positive cells per label.
    pub fn positives(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_labels()];
        for r in 0..self.n_rows() {
            for (c, &v) in self.row(r).iter().enumerate() {
                counts[c] += usize::from(v);
            }
        }
        counts
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Restrict to the named labels, in the order given.
    pub fn select_labels<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                self.label_index(n.as_ref())
                    .ok_or_else(|| Error::VocabularyMismatch(format!("label `{}` not present", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            data.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        Ok(Self {
            ids: self.ids.clone(),
            labels: names.iter().map(|n| n.as_ref().to_string()).collect(),
            data,
        })
    }
}

impl Keyed for LabelMatrix {
    fn ids(&self) -> &[SentenceId] {
        &self.ids
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_labels());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            labels: self.labels.clone(),
            data,
        }
    }
}

/// Per-label probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    ids: Vec<SentenceId>,
    labels: Vec<String>,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(ids: Vec<SentenceId>, labels: Vec<String>, data: Vec<f64>) -> Result<Self> {
        check_cells(data.len(), ids.len(), labels.len())?;
        check_unique(&ids, "score matrix")?;
        let k = labels.len().max(1);
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::BadCell {
                path: "score matrix".into(),
                row: pos / k,
                column: labels[pos % k].clone(),
                message: format!("score {} outside [0, 1]", data[pos]),
            });
        }
        Ok(Self { ids, labels, data })
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.labels.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let k = self.labels.len();
        &self.data[row * k..(row + 1) * k]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn select_labels<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                self.label_index(n.as_ref())
                    .ok_or_else(|| Error::VocabularyMismatch(format!("label `{}` not present", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            data.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        Ok(Self {
            ids: self.ids.clone(),
            labels: names.iter().map(|n| n.as_ref().to_string()).collect(),
            data,
        })
    }

    /// Scores of a binary matrix: 1.0 for positives, 0.0 otherwise.
    pub fn from_labels(labels: &LabelMatrix) -> Self {
        Self {
            ids: labels.ids().to_vec(),
            labels: labels.labels().to_vec(),
            data: labels.data().iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        }
    }
}

impl Keyed for ScoreMatrix {
    fn ids(&self) -> &[SentenceId] {
        &self.ids
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_labels());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            labels: self.labels.clone(),
            data,
        }
    }
}

/// Raw per-value annotations over `{0, 0.5, 1}` for the attained and
/// constrained signals.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix {
    ids: Vec<SentenceId>,
    values: Vec<String>,
    attained: Vec<f64>,
    constrained: Vec<f64>,
}

pub(crate) fn is_annotation_level(v: f64) -> bool {
    v == 0.0 || v == 0.5 || v == 1.0
}

impl AnnotationMatrix {
    pub fn new(ids: Vec<SentenceId>, values: Vec<String>, attained: Vec<f64>, constrained: Vec<f64>) -> Result<Self> {
        check_cells(attained.len(), ids.len(), values.len())?;
        check_cells(constrained.len(), ids.len(), values.len())?;
        check_unique(&ids, "annotation matrix")?;
        let k = values.len().max(1);
        for signal in [&attained, &constrained] {
            if let Some(pos) = signal.iter().position(|&v| !is_annotation_level(v)) {
                return Err(Error::AnnotationDomain {
                    row: pos / k,
                    column: pos % k,
                    value: signal[pos],
                });
            }
        }
        Ok(Self {
            ids,
            values,
            attained,
            constrained,
        })
    }

    pub fn attained(&self, row: usize, col: usize) -> f64 {
        self.attained[row * self.values.len() + col]
    }

    pub fn constrained(&self, row: usize, col: usize) -> f64 {
        self.constrained[row * self.values.len() + col]
    }
}

impl Keyed for AnnotationMatrix {
    fn ids(&self) -> &[SentenceId] {
        &self.ids
    }

    fn labels(&self) -> &[String] {
        &self.values
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        let k = self.values.len();
        let pick = |src: &[f64]| {
            let mut out = Vec::with_capacity(rows.len() * k);
            for &r in rows {
                out.extend_from_slice(&src[r * k..(r + 1) * k]);
            }
            out
        };
        Self {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            values: self.values.clone(),
            attained: pick(&self.attained),
            constrained: pick(&self.constrained),
        }
    }
}

/// Errors unless both matrices have the same row ids and labels, in order.
pub fn check_aligned<A: Keyed, B: Keyed>(a: &A, b: &B) -> Result<()> {
    check_same_rows(a.ids(), b.ids())?;
    check_same_labels(a.labels(), b.labels())
}

pub(crate) fn check_same_rows(a: &[SentenceId], b: &[SentenceId]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} rows vs {} rows", a.len(), b.len())));
    }
    if let Some(r) = (0..a.len()).find(|&r| a[r] != b[r]) {
        return Err(Error::ShapeMismatch(format!(
            "row {r}: sentence id {} vs {}",
            a[r], b[r]
        )));
    }
    Ok(())
}

pub(crate) fn check_same_labels(a: &[String], b: &[String]) -> Result<()> {
    if a != b {
        return Err(Error::VocabularyMismatch(format!(
            "labels [{}] vs [{}]",
            a.join(", "),
            b.join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<SentenceId> {
        (0..n).map(|i| SentenceId::new("t", i.to_string())).collect()
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut v = ids(2);
        v[1] = v[0].clone();
        let err = LabelMatrix::zeros(v, vec!["a".into()]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { row: 1, .. }));
    }

    #[test]
    fn scores_outside_unit_interval_are_rejected() {
        let err = ScoreMatrix::new(ids(1), vec!["a".into()], vec![-0.01]).unwrap_err();
        assert!(matches!(err, Error::BadCell { row: 0, .. }));
        assert!(ScoreMatrix::new(ids(1), vec!["a".into()], vec![f64::NAN]).is_err());
        assert!(ScoreMatrix::new(ids(2), vec!["a".into()], vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn annotation_domain_reports_position() {
        let err = AnnotationMatrix::new(
            ids(2),
            vec!["a".into(), "b".into()],
            vec![0.0, 0.5, 1.0, 0.7],
            vec![0.0; 4],
        )
        .unwrap_err();
        assert!(matches!(err, Error::AnnotationDomain { row: 1, column: 1, .. }));
    }

    #[test]
    fn select_rows_and_labels() {
        let m = LabelMatrix::new(
            ids(3),
            vec!["a".into(), "b".into()],
            vec![true, false, false, true, true, true],
        )
        .unwrap();
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.ids()[0].sentence_id, "2");
        assert_eq!(s.row(1), &[true, false]);
        let b = m.select_labels(&["b"]).unwrap();
        assert_eq!(b.column(0), vec![false, true, true]);
        assert!(m.select_labels(&["c"]).is_err());
        assert_eq!(m.positives(), vec![2, 2]);
    }
}
