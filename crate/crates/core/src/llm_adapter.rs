//! Turns raw LLM generations (JSON arrays of value names) into value
//! predictions, and derives HO predictions from them.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{json_id, push_id, read_jsonl_objects, SENTENCE_ID, TEXT_ID};
use crate::error::{Error, Result};
use crate::label_space::{derive_ho, value_labels, HoMapping, VALUE_NAMES};
use crate::matrix::{LabelMatrix, SentenceId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawGeneration {
    pub id: SentenceId,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseStatus {
    Valid,
    ValidEmpty,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedRow {
    pub bits: Vec<bool>,
    pub status: ParseStatus,
    /// Elements that were not strings or matched no value name.
    pub dropped: Vec<String>,
    pub duplicates: usize,
    /// The array was surrounded by other text or followed by more arrays.
    pub recovered: bool,
}

/// First complete JSON array in `text`, and whether the text held anything
/// besides it.
fn first_array(text: &str) -> Option<(Vec<Value>, bool)> {
    let trimmed = text.trim();
    for (i, _) in trimmed.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&trimmed[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            let end = i + stream.byte_offset();
            let recovered = i > 0 || !trimmed[end..].trim().is_empty();
            return Some((items, recovered));
        }
    }
    None
}

fn match_name(name: &str, lenient: bool) -> Option<usize> {
    let name = name.trim();
    VALUE_NAMES.iter().position(|v| {
        if lenient {
            v.to_lowercase() == name.to_lowercase()
        } else {
            *v == name
        }
    })
}

/// Never fails: unparseable text yields an all-zero `invalid` row.
pub fn parse_generation(text: &str, lenient: bool) -> ParsedRow {
    let mut bits = vec![false; VALUE_NAMES.len()];
    let Some((items, recovered)) = first_array(text) else {
        return ParsedRow {
            bits,
            status: ParseStatus::Invalid,
            dropped: Vec::new(),
            duplicates: 0,
            recovered: false,
        };
    };
    let status = if items.is_empty() {
        ParseStatus::ValidEmpty
    } else {
        ParseStatus::Valid
    };
    let mut dropped = Vec::new();
    let mut duplicates = 0;
    for item in items {
        match item {
            Value::String(s) => match match_name(&s, lenient) {
                Some(v) if bits[v] => duplicates += 1,
                Some(v) => bits[v] = true,
                None => dropped.push(s),
            },
            other => dropped.push(other.to_string()),
        }
    }
    ParsedRow {
        bits,
        status,
        dropped,
        duplicates,
        recovered,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub rows: usize,
    pub valid: usize,
    pub valid_empty: usize,
    pub invalid: usize,
    pub dropped_names: usize,
    pub duplicate_names: usize,
    pub recovered_arrays: usize,
}

impl ParseStats {
    fn record(&mut self, row: &ParsedRow) {
        self.rows += 1;
        match row.status {
            ParseStatus::Valid => self.valid += 1,
            ParseStatus::ValidEmpty => self.valid_empty += 1,
            ParseStatus::Invalid => self.invalid += 1,
        }
        self.dropped_names += row.dropped.len();
        self.duplicate_names += row.duplicates;
        self.recovered_arrays += row.recovered as usize;
    }
}

#[derive(Debug, Clone)]
pub struct ParsedGenerations {
    pub values: LabelMatrix,
    pub statuses: Vec<ParseStatus>,
    pub stats: ParseStats,
}

/// Parses every generation. When `manifest` is given, each id must appear
/// in it.
pub fn parse_generations(
    gens: &[RawGeneration],
    lenient: bool,
    manifest: Option<&[SentenceId]>,
) -> Result<ParsedGenerations> {
    let allowed: Option<HashSet<&SentenceId>> = manifest.map(|m| m.iter().collect());
    let mut stats = ParseStats::default();
    let mut statuses = Vec::with_capacity(gens.len());
    let mut data = Vec::with_capacity(gens.len() * VALUE_NAMES.len());
    for g in gens {
        if let Some(allowed) = &allowed {
            if !allowed.contains(&g.id) {
                return Err(Error::UnknownId(g.id.to_string()));
            }
        }
        let row = parse_generation(&g.text, lenient);
        stats.record(&row);
        statuses.push(row.status);
        data.extend(row.bits);
    }
    let ids = gens.iter().map(|g| g.id.clone()).collect();
    Ok(ParsedGenerations {
        values: LabelMatrix::new(ids, value_labels(), data)?,
        statuses,
        stats,
    })
}

pub fn read_generations_str(text: &str, src: &str) -> Result<Vec<RawGeneration>> {
    let records = read_jsonl_objects(text.as_bytes(), src)?;
    let mut ids = Vec::with_capacity(records.len());
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        let id = SentenceId::new(
            json_id(rec, "text_id", src, row).or_else(|_| json_id(rec, TEXT_ID, src, row))?,
            json_id(rec, "sentence_id", src, row).or_else(|_| json_id(rec, SENTENCE_ID, src, row))?,
        );
        push_id(&mut ids, &mut seen, id.clone(), src, row)?;
        let text = match rec.get("generation") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Null) | None => String::new(),
            Some(other) => other.to_string(),
        };
        out.push(RawGeneration { id, text });
    }
    Ok(out)
}

pub fn read_generations(path: &Path) -> Result<Vec<RawGeneration>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_generations_str(&text, &path.display().to_string())
}

/// HO predictions for an LLM; the same derivation as for gold labels.
pub fn derive_llm_ho(llm_values: &LabelMatrix, mapping: &HoMapping) -> Result<LabelMatrix> {
    derive_ho(llm_values, mapping)
}
