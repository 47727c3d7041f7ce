//! Reading and writing annotation, score, label and split files.
//!
//! TSV is the canonical format: UTF-8, tab separated, `\n` line endings and
//! a header row whose first two columns are `Text-ID` and `Sentence-ID`.
//! JSONL carries the same content as one object per sentence, keyed by
//! `text_id`, `sentence_id` and the column names used in the TSV header.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::label_space::{value_labels, VALUE_NAMES};
use crate::matrix::{is_annotation_level, AnnotationMatrix, Keyed, LabelMatrix, ScoreMatrix, SentenceId};

pub const TEXT_ID: &str = "Text-ID";
pub const SENTENCE_ID: &str = "Sentence-ID";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Tsv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Tsv => "tsv",
            Format::Jsonl => "jsonl",
        }
    }
}

/// Formats a float with at most six fractional digits (round half to even),
/// trailing zeros removed.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let mut s = format!("{v:.6}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// Renames columns of an incoming gold file before they are matched
/// against canonical names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnRemap {
    map: HashMap<String, String>,
}

impl ColumnRemap {
    pub fn new(map: HashMap<String, String>) -> Self {
        Self { map }
    }

    /// TSV with `from` and `to` columns.
    pub fn from_tsv_path(path: &Path) -> Result<Self> {
        let src = path.display().to_string();
        let table = read_tsv_table(&open(path)?, &src)?;
        let from = table.column("from", &src)?;
        let to = table.column("to", &src)?;
        let map = table
            .rows
            .iter()
            .map(|r| (r[from].trim().to_string(), r[to].trim().to_string()))
            .collect();
        Ok(Self { map })
    }

    pub fn apply<'a>(&'a self, name: &'a str) -> &'a str {
        let name = name.trim();
        self.map.get(name).map(String::as_str).unwrap_or(name)
    }
}

fn open(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling file and renames it into place, so
/// a failed command never leaves a partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn column(&self, name: &str, src: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: src.into(),
                column: name.into(),
            })
    }
}

fn read_tsv_table(text: &str, src: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Malformed {
            path: src.into(),
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::Malformed {
            path: src.into(),
            row: 0,
            message: "missing header row".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed {
            path: src.into(),
            row: i + 1,
            message: e.to_string(),
        })?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

pub(crate) fn json_id(obj: &Map<String, Value>, key: &str, src: &str, row: usize) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(Error::MissingColumn {
            path: format!("{src} (record {row})"),
            column: key.into(),
        }),
    }
}

fn read_jsonl_records(text: &str, src: &str) -> Result<Vec<Map<String, Value>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: src.into(),
            row: i + 1,
            message: e.to_string(),
        })?;
        match v {
            Value::Object(m) => out.push(m),
            _ => {
                return Err(Error::Malformed {
                    path: src.into(),
                    row: i + 1,
                    message: "expected a JSON object".into(),
                })
            }
        }
    }
    Ok(out)
}

fn parse_cell(raw: &str, src: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::BadCell {
        path: src.into(),
        row,
        column: column.into(),
        message: format!("`{raw}` is not a number"),
    })
}

fn json_number(obj: &Map<String, Value>, key: &str, src: &str, row: usize) -> Result<f64> {
    match obj.get(key) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| Error::BadCell {
            path: src.into(),
            row,
            column: key.into(),
            message: "not representable as f64".into(),
        }),
        Some(Value::String(s)) => parse_cell(s, src, row, key),
        Some(Value::Bool(b)) => Ok(if *b { 1.0 } else { 0.0 }),
        _ => Err(Error::MissingColumn {
            path: format!("{src} (record {row})"),
            column: key.into(),
        }),
    }
}

pub(crate) fn push_id(
    ids: &mut Vec<SentenceId>,
    seen: &mut HashSet<SentenceId>,
    id: SentenceId,
    src: &str,
    row: usize,
) -> Result<()> {
    if !seen.insert(id.clone()) {
        return Err(Error::DuplicateId {
            path: src.into(),
            id: id.to_string(),
            row,
        });
    }
    ids.push(id);
    Ok(())
}

pub fn attained_column(value: &str) -> String {
    format!("{value} attained")
}

pub fn constrained_column(value: &str) -> String {
    format!("{value} constrained")
}

/// Reads gold annotations: ids plus `<Value> attained` / `<Value> constrained`
/// for each of the 19 values.
pub fn read_gold(path: &Path, format: Format, remap: &ColumnRemap) -> Result<AnnotationMatrix> {
    let src = path.display().to_string();
    read_gold_str(&open(path)?, &src, format, remap)
}

pub fn read_gold_str(text: &str, src: &str, format: Format, remap: &ColumnRemap) -> Result<AnnotationMatrix> {
    let k = VALUE_NAMES.len();
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut attained = Vec::new();
    let mut constrained = Vec::new();
    let check = |v: f64, row: usize, column: &str| -> Result<f64> {
        if is_annotation_level(v) {
            Ok(v)
        } else {
            Err(Error::BadCell {
                path: src.into(),
                row,
                column: column.into(),
                message: format!("annotation {v} is not one of 0, 0.5, 1"),
            })
        }
    };
    match format {
        Format::Tsv => {
            let mut table = read_tsv_table(text, src)?;
            for h in table.header.iter_mut() {
                *h = remap.apply(h).to_string();
            }
            let ti = table.column(TEXT_ID, src)?;
            let si = table.column(SENTENCE_ID, src)?;
            let mut att_cols = Vec::with_capacity(k);
            let mut con_cols = Vec::with_capacity(k);
            for v in VALUE_NAMES {
                att_cols.push(table.column(&attained_column(v), src)?);
                con_cols.push(table.column(&constrained_column(v), src)?);
            }
            for (i, rec) in table.rows.iter().enumerate() {
                let row = i + 1;
                let id = SentenceId::new(rec[ti].trim(), rec[si].trim());
                push_id(&mut ids, &mut seen, id, src, row)?;
                for (v, (&a, &c)) in att_cols.iter().zip(&con_cols).enumerate() {
                    let an = attained_column(VALUE_NAMES[v]);
                    let cn = constrained_column(VALUE_NAMES[v]);
                    attained.push(check(parse_cell(&rec[a], src, row, &an)?, row, &an)?);
                    constrained.push(check(parse_cell(&rec[c], src, row, &cn)?, row, &cn)?);
                }
            }
        }
        Format::Jsonl => {
            for (i, rec) in read_jsonl_records(text, src)?.into_iter().enumerate() {
                let row = i + 1;
                let rec: Map<String, Value> = rec
                    .into_iter()
                    .map(|(key, v)| (remap.apply(&key).to_string(), v))
                    .collect();
                let id = SentenceId::new(
                    json_id(&rec, "text_id", src, row)?,
                    json_id(&rec, "sentence_id", src, row)?,
                );
                push_id(&mut ids, &mut seen, id, src, row)?;
                for v in VALUE_NAMES {
                    let an = attained_column(v);
                    let cn = constrained_column(v);
                    attained.push(check(json_number(&rec, &an, src, row)?, row, &an)?);
                    constrained.push(check(json_number(&rec, &cn, src, row)?, row, &cn)?);
                }
            }
        }
    }
    AnnotationMatrix::new(ids, value_labels(), attained, constrained)
}

fn id_map(id: &SentenceId) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("text_id".into(), Value::String(id.text_id.clone()));
    m.insert("sentence_id".into(), Value::String(id.sentence_id.clone()));
    m
}

fn json_float(v: f64) -> Value {
    let s = format_float(v);
    serde_json::from_str(&s).unwrap_or(Value::Null)
}

pub fn render_gold(ann: &AnnotationMatrix, format: Format) -> String {
    let mut out = String::new();
    let values = ann.labels();
    match format {
        Format::Tsv => {
            out.push_str(TEXT_ID);
            out.push('\t');
            out.push_str(SENTENCE_ID);
            for v in values {
                let _ = write!(out, "\t{}\t{}", attained_column(v), constrained_column(v));
            }
            out.push('\n');
            for r in 0..ann.n_rows() {
                let id = &ann.ids()[r];
                let _ = write!(out, "{}\t{}", id.text_id, id.sentence_id);
                for c in 0..values.len() {
                    let _ = write!(
                        out,
                        "\t{}\t{}",
                        format_float(ann.attained(r, c)),
                        format_float(ann.constrained(r, c))
                    );
                }
                out.push('\n');
            }
        }
        Format::Jsonl => {
            for r in 0..ann.n_rows() {
                let mut m = id_map(&ann.ids()[r]);
                for (c, v) in values.iter().enumerate() {
                    m.insert(attained_column(v), json_float(ann.attained(r, c)));
                    m.insert(constrained_column(v), json_float(ann.constrained(r, c)));
                }
                out.push_str(&Value::Object(m).to_string());
                out.push('\n');
            }
        }
    }
    out
}

fn render_matrix<F: Fn(usize, usize) -> Value, G: Fn(usize, usize) -> String>(
    ids: &[SentenceId],
    labels: &[String],
    format: Format,
    json_cell: F,
    tsv_cell: G,
) -> String {
    let mut out = String::new();
    match format {
        Format::Tsv => {
            out.push_str(TEXT_ID);
            out.push('\t');
            out.push_str(SENTENCE_ID);
            for l in labels {
                out.push('\t');
                out.push_str(l);
            }
            out.push('\n');
            for (r, id) in ids.iter().enumerate() {
                out.push_str(&id.text_id);
                out.push('\t');
                out.push_str(&id.sentence_id);
                for c in 0..labels.len() {
                    out.push('\t');
                    out.push_str(&tsv_cell(r, c));
                }
                out.push('\n');
            }
        }
        Format::Jsonl => {
            for (r, id) in ids.iter().enumerate() {
                let mut m = id_map(id);
                for (c, l) in labels.iter().enumerate() {
                    m.insert(l.clone(), json_cell(r, c));
                }
                out.push_str(&Value::Object(m).to_string());
                out.push('\n');
            }
        }
    }
    out
}

pub fn render_scores(m: &ScoreMatrix, format: Format) -> String {
    render_matrix(
        m.ids(),
        m.labels(),
        format,
        |r, c| json_float(m.get(r, c)),
        |r, c| format_float(m.get(r, c)),
    )
}

pub fn render_labels(m: &LabelMatrix, format: Format) -> String {
    render_matrix(
        m.ids(),
        m.labels(),
        format,
        |r, c| Value::from(u8::from(m.get(r, c))),
        |r, c| if m.get(r, c) { "1".into() } else { "0".into() },
    )
}

pub fn write_scores(path: &Path, m: &ScoreMatrix, format: Format) -> Result<()> {
    write_atomic(path, render_scores(m, format).as_bytes())
}

pub fn write_labels(path: &Path, m: &LabelMatrix, format: Format) -> Result<()> {
    write_atomic(path, render_labels(m, format).as_bytes())
}

pub fn write_gold(path: &Path, m: &AnnotationMatrix, format: Format) -> Result<()> {
    write_atomic(path, render_gold(m, format).as_bytes())
}

/// Reads ids and one numeric column per expected label, in that exact order.
fn read_numeric(
    text: &str,
    src: &str,
    expected: &[String],
    format: Format,
) -> Result<(Vec<SentenceId>, Vec<(usize, f64)>)> {
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    match format {
        Format::Tsv => {
            let table = read_tsv_table(text, src)?;
            let head = &table.header;
            if head.len() < 2 || head[0] != TEXT_ID || head[1] != SENTENCE_ID {
                return Err(Error::VocabularyMismatch(format!(
                    "{src}: header must start with `{TEXT_ID}` and `{SENTENCE_ID}`"
                )));
            }
            if head[2..] != *expected {
                return Err(Error::VocabularyMismatch(format!(
                    "{src}: label columns [{}] differ from expected [{}]",
                    head[2..].join(", "),
                    expected.join(", ")
                )));
            }
            for (i, rec) in table.rows.iter().enumerate() {
                let row = i + 1;
                push_id(
                    &mut ids,
                    &mut seen,
                    SentenceId::new(rec[0].trim(), rec[1].trim()),
                    src,
                    row,
                )?;
                for (c, l) in expected.iter().enumerate() {
                    cells.push((row, parse_cell(&rec[c + 2], src, row, l)?));
                }
            }
        }
        Format::Jsonl => {
            for (i, rec) in read_jsonl_records(text, src)?.into_iter().enumerate() {
                let row = i + 1;
                let extra: Vec<&String> = rec
                    .keys()
                    .filter(|k| *k != "text_id" && *k != "sentence_id" && !expected.contains(k))
                    .collect();
                if !extra.is_empty() {
                    return Err(Error::VocabularyMismatch(format!(
                        "{src}: record {row} has unexpected labels {extra:?}"
                    )));
                }
                let id = SentenceId::new(
                    json_id(&rec, "text_id", src, row)?,
                    json_id(&rec, "sentence_id", src, row)?,
                );
                push_id(&mut ids, &mut seen, id, src, row)?;
                for l in expected {
                    cells.push((row, json_number(&rec, l, src, row)?));
                }
            }
        }
    }
    Ok((ids, cells))
}

pub fn read_scores(path: &Path, expected: &[String], format: Format) -> Result<ScoreMatrix> {
    let src = path.display().to_string();
    read_scores_str(&open(path)?, &src, expected, format)
}

pub fn read_scores_str(text: &str, src: &str, expected: &[String], format: Format) -> Result<ScoreMatrix> {
    let (ids, cells) = read_numeric(text, src, expected, format)?;
    let k = expected.len();
    let mut data = Vec::with_capacity(cells.len());
    for (i, (row, v)) in cells.into_iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::BadCell {
                path: src.into(),
                row,
                column: expected[i % k].clone(),
                message: format!("score {v} outside [0, 1]"),
            });
        }
        data.push(v);
    }
    ScoreMatrix::new(ids, expected.to_vec(), data)
}

pub fn read_labels(path: &Path, expected: &[String], format: Format) -> Result<LabelMatrix> {
    let src = path.display().to_string();
    read_labels_str(&open(path)?, &src, expected, format)
}

pub fn read_labels_str(text: &str, src: &str, expected: &[String], format: Format) -> Result<LabelMatrix> {
    let (ids, cells) = read_numeric(text, src, expected, format)?;
    let k = expected.len();
    let mut data = Vec::with_capacity(cells.len());
    for (i, (row, v)) in cells.into_iter().enumerate() {
        data.push(match v {
            x if x == 0.0 => false,
            x if x == 1.0 => true,
            _ => {
                return Err(Error::BadCell {
                    path: src.into(),
                    row,
                    column: expected[i % k].clone(),
                    message: format!("label {v} is not 0 or 1"),
                })
            }
        });
    }
    LabelMatrix::new(ids, expected.to_vec(), data)
}

/// Row-aligned pair of matrices over the intersection of their ids, in the
/// row order of the first input.
#[derive(Debug, Clone)]
pub struct Aligned<A, B> {
    pub left: A,
    pub right: B,
    /// Ids present only in the left input.
    pub left_orphans: Vec<SentenceId>,
    /// Ids present only in the right input.
    pub right_orphans: Vec<SentenceId>,
}

pub fn align<A: Keyed, B: Keyed>(left: &A, right: &B) -> Result<Aligned<A, B>> {
    let right_pos: HashMap<&SentenceId, usize> = right.ids().iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut left_rows = Vec::new();
    let mut right_rows = Vec::new();
    let mut left_orphans = Vec::new();
    for (i, id) in left.ids().iter().enumerate() {
        match right_pos.get(id) {
            Some(&j) => {
                left_rows.push(i);
                right_rows.push(j);
            }
            None => left_orphans.push(id.clone()),
        }
    }
    if left_rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let left_ids: HashSet<&SentenceId> = left.ids().iter().collect();
    let right_orphans = right
        .ids()
        .iter()
        .filter(|id| !left_ids.contains(id))
        .cloned()
        .collect();
    Ok(Aligned {
        left: left.select_rows(&left_rows),
        right: right.select_rows(&right_rows),
        left_orphans,
        right_orphans,
    })
}

/// Reorders `m` to follow `order` exactly; every id in `order` must exist.
pub fn reorder<M: Keyed>(m: &M, order: &[SentenceId]) -> Result<M> {
    let pos: HashMap<&SentenceId, usize> = m.ids().iter().enumerate().map(|(i, id)| (id, i)).collect();
    let rows = order
        .iter()
        .map(|id| pos.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string())))
        .collect::<Result<Vec<_>>>()?;
    Ok(m.select_rows(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub split: Split,
    pub ids: Vec<SentenceId>,
}

/// Reads a manifest TSV with `Split`, `Text-ID` and `Sentence-ID` columns.
/// Returns one manifest per split present, in train/validation/test order.
pub fn read_manifests(path: &Path) -> Result<Vec<SplitManifest>> {
    let src = path.display().to_string();
    read_manifests_str(&open(path)?, &src)
}

pub fn read_manifests_str(text: &str, src: &str) -> Result<Vec<SplitManifest>> {
    let table = read_tsv_table(text, src)?;
    let (sp, ti, si) = (
        table.column("Split", src)?,
        table.column(TEXT_ID, src)?,
        table.column(SENTENCE_ID, src)?,
    );
    let mut by_split: IndexMap<Split, Vec<SentenceId>> = IndexMap::new();
    let mut seen = HashSet::new();
    for (i, rec) in table.rows.iter().enumerate() {
        let split: Split = rec[sp].parse().map_err(|_| Error::BadCell {
            path: src.into(),
            row: i + 1,
            column: "Split".into(),
            message: format!("unknown split `{}`", rec[sp]),
        })?;
        let id = SentenceId::new(rec[ti].trim(), rec[si].trim());
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                path: src.into(),
                id: id.to_string(),
                row: i + 1,
            });
        }
        by_split.entry(split).or_default().push(id);
    }
    by_split.sort_keys();
    Ok(by_split
        .into_iter()
        .map(|(split, ids)| SplitManifest { split, ids })
        .collect())
}

/// Per-label prevalence (percent of sentences with label 1), per split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceTable {
    pub labels: Vec<String>,
    pub splits: IndexMap<String, Vec<f64>>,
}

impl PrevalenceTable {
    pub fn get(&self, split: Split, label: &str) -> Option<f64> {
        let col = self.labels.iter().position(|l| l == label)?;
        self.splits.get(split.name()).map(|v| v[col])
    }

    pub fn render(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}", "Label");
        for s in self.splits.keys() {
            let _ = write!(out, "  {s:>10}");
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            let _ = write!(out, "{l:<width$}");
            for v in self.splits.values() {
                let _ = write!(out, "  {:>10.2}", v[i]);
            }
            out.push('\n');
        }
        out
    }
}

pub fn compute_prevalence(labels: &LabelMatrix, manifest: &SplitManifest) -> Result<Vec<f64>> {
    let pos: HashMap<&SentenceId, usize> = labels.ids().iter().enumerate().map(|(i, id)| (id, i)).collect();
    let rows = manifest
        .ids
        .iter()
        .map(|id| pos.get(id).copied().ok_or_else(|| Error::UnknownId(id.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0usize; labels.n_labels()];
    for &r in &rows {
        for (c, &v) in labels.row(r).iter().enumerate() {
            counts[c] += usize::from(v);
        }
    }
    let n = rows.len();
    Ok(counts
        .into_iter()
        .map(|c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
        .collect())
}

pub fn prevalence_table(labels: &LabelMatrix, manifests: &[SplitManifest]) -> Result<PrevalenceTable> {
    let mut splits = IndexMap::new();
    for m in manifests {
        splits.insert(m.split.name().to_string(), compute_prevalence(labels, m)?);
    }
    Ok(PrevalenceTable {
        labels: labels.labels().to_vec(),
        splits,
    })
}

/// Streams JSONL objects from any reader.
pub fn read_jsonl_objects<R: Read>(reader: R, src: &str) -> Result<Vec<Map<String, Value>>> {
    let mut text = String::new();
    BufReader::new(reader)
        .read_to_string(&mut text)
        .map_err(|e| Error::io(src, e))?;
    read_jsonl_records(&text, src)
}
