//! Loading score tables and per-sample outcome records, parsing raw model
//! responses into ternary outcomes, and assembling the outcome matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered family of same-architecture reference models, smallest first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFamily {
    pub family_id: String,
    /// (model_id, parameter count in billions), strictly ascending by size.
    pub models: Vec<(String, f64)>,
}

impl ModelFamily {
    pub fn new(family_id: impl Into<String>, models: Vec<(String, f64)>) -> Result<Self> {
        let family = ModelFamily {
            family_id: family_id.into(),
            models,
        };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() < 2 {
            return Err(Error::Schema(format!(
                "family '{}' needs at least 2 models, has {}",
                self.family_id,
                self.models.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (id, p) in &self.models {
            if !seen.insert(id.as_str()) {
                return Err(Error::Schema(format!("duplicate model id '{id}'")));
            }
            if !p.is_finite() || *p <= 0.0 {
                return Err(Error::Schema(format!(
                    "model '{id}' has non-positive parameter count {p}"
                )));
            }
        }
        for pair in self.models.windows(2) {
            if pair[1].1 <= pair[0].1 {
                return Err(Error::Schema(format!(
                    "models must be strictly ascending by size: '{}' ({}) before '{}' ({})",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn param_counts(&self) -> Vec<f64> {
        self.models.iter().map(|(_, p)| *p).collect()
    }

    pub fn index_of(&self, model_id: &str) -> Option<usize> {
        self.models.iter().position(|(id, _)| id == model_id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let family: ModelFamily = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        family.validate()?;
        Ok(family)
    }
}

/// Benchmark x model aggregate accuracy matrix. Cells are percentages in
/// [0,100]; `None` marks a missing entry (the CSV literal "-").
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub benchmarks: Vec<String>,
    pub model_ids: Vec<String>,
    /// scores[benchmark_index][model_index]
    pub scores: Vec<Vec<Option<f64>>>,
}

impl ScoreTable {
    pub fn get(&self, benchmark_id: &str, model_id: &str) -> Option<f64> {
        let b = self.benchmarks.iter().position(|x| x == benchmark_id)?;
        let m = self.model_ids.iter().position(|x| x == model_id)?;
        self.scores[b][m]
    }

    /// Scores for one benchmark restricted to the given models; `None` if any
    /// of them is missing a cell.
    pub fn row_for_models(&self, benchmark_id: &str, model_ids: &[&str]) -> Option<Vec<f64>> {
        model_ids
            .iter()
            .map(|m| self.get(benchmark_id, m))
            .collect()
    }
}

/// One (sample, model) inference outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub sample_id: String,
    pub benchmark_id: String,
    pub model_id: String,
    pub outcome: i8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

/// Per-sample ternary vectors over an ordered family, one benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub family: ModelFamily,
    pub benchmark_id: String,
    /// sample_id -> outcomes ordered by family model order, length n.
    pub entries: BTreeMap<String, Vec<i8>>,
}

fn check_outcome(v: i8) -> Result<()> {
    if matches!(v, -1 | 0 | 1) {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "outcome must be -1, 0 or 1, got {v}"
        )))
    }
}

/// Loads a score CSV: header `benchmark,<model_id_1>,...`; missing cell is "-".
pub fn load_score_table(path: &Path) -> Result<ScoreTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Schema("header must name at least one model".into()));
    }
    let model_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    {
        let mut seen = std::collections::BTreeSet::new();
        for id in &model_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Schema(format!("duplicate model column '{id}'")));
            }
        }
    }

    let mut benchmarks = Vec::new();
    let mut scores = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2; // 1-based, after header
        let record = record.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        let benchmark = record
            .get(0)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: "empty row".into(),
            })?
            .to_string();
        if benchmarks.contains(&benchmark) {
            return Err(Error::Schema(format!("duplicate benchmark row '{benchmark}'")));
        }
        let mut row = Vec::with_capacity(model_ids.len());
        for (col, cell) in record.iter().skip(1).enumerate() {
            if cell == "-" || cell.is_empty() {
                row.push(None);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("malformed number '{cell}' in column '{}'", model_ids[col]),
            })?;
            if !(0.0..=100.0).contains(&value) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: format!("score {value} out of [0,100] in column '{}'", model_ids[col]),
                });
            }
            row.push(Some(value));
        }
        if row.len() != model_ids.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                msg: format!("expected {} cells, got {}", model_ids.len(), row.len()),
            });
        }
        benchmarks.push(benchmark);
        scores.push(row);
    }
    if benchmarks.is_empty() {
        return Err(Error::Schema("no benchmarks".into()));
    }
    Ok(ScoreTable {
        benchmarks,
        model_ids,
        scores,
    })
}

/// Loads outcome JSONL; one record per line, in file order.
pub fn load_outcome_records(path: &Path) -> Result<Vec<OutcomeRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_outcome_records(&text, &path.display().to_string())
}

pub fn parse_outcome_records(text: &str, source: &str) -> Result<Vec<OutcomeRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: OutcomeRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        check_outcome(record.outcome).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            msg: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_outcome_records(records: &[OutcomeRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Serialize(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Extracts the first balanced `{...}` region from free-form text, tracking
/// string delimiters (both `'` and `"`) and escapes.
fn first_json_object(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string: Option<u8> = None;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if let Some(delim) = in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == delim {
                in_string = None;
            }
            continue;
        }
        match b {
            b'"' | b'\'' => in_string = Some(b),
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Rewrites single-quoted strings to double-quoted JSON strings so the
/// Appendix-style `{'answer': ''}` shape parses.
fn normalize_quotes(json: &str) -> String {
    let mut out = String::with_capacity(json.len());
    let mut chars = json.chars().peekable();
    let mut in_string: Option<char> = None;
    while let Some(c) = chars.next() {
        match in_string {
            Some(delim) => {
                if c == '\\' {
                    if let Some(&next) = chars.peek() {
                        chars.next();
                        if next == '\'' {
                            out.push('\''); // \' is not a JSON escape
                        } else {
                            out.push('\\');
                            out.push(next);
                        }
                    }
                } else if c == delim {
                    out.push('"');
                    in_string = None;
                } else if c == '"' && delim == '\'' {
                    out.push_str("\\\"");
                } else {
                    out.push(c);
                }
            }
            None => match c {
                '\'' | '"' => {
                    out.push('"');
                    in_string = Some(c);
                }
                _ => out.push(c),
            },
        }
    }
    out
}

fn extract_json_value(raw: &str) -> Option<serde_json::Value> {
    let region = first_json_object(raw)?;
    if let Ok(v) = serde_json::from_str(region) {
        return Some(v);
    }
    serde_json::from_str(&normalize_quotes(region)).ok()
}

/// Parses a multiple-choice response. Outcome 1 iff the extracted letter
/// equals gold case-insensitively, 0 if a different letter was parsed,
/// -1 if no parsable answer was found.
pub fn parse_choice_answer(raw_response: &str, gold_letter: char) -> (Option<char>, i8) {
    let parsed = extract_json_value(raw_response)
        .and_then(|v| v.get("answer").and_then(|a| a.as_str().map(str::to_string)))
        .and_then(|s| {
            let t = s.trim().trim_end_matches(['.', ')']).trim();
            let mut chars = t.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => Some(c.to_ascii_uppercase()),
                _ => None,
            }
        });
    match parsed {
        Some(letter) => {
            let outcome = if letter == gold_letter.to_ascii_uppercase() {
                1
            } else {
                0
            };
            (Some(letter), outcome)
        }
        None => (None, -1),
    }
}

/// Parses a judge verdict response: key "result", values "True"/"False"
/// (case-insensitive, JSON booleans accepted).
pub fn parse_judge_verdict(raw_response: &str) -> (Option<bool>, i8) {
    let verdict = extract_json_value(raw_response).and_then(|v| match v.get("result") {
        Some(serde_json::Value::Bool(b)) => Some(*b),
        Some(serde_json::Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        },
        _ => None,
    });
    match verdict {
        Some(true) => (Some(true), 1),
        Some(false) => (Some(false), 0),
        None => (None, -1),
    }
}

/// Samples excluded from a matrix, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectionReport {
    /// sample_id -> covered model count (incomplete coverage).
    pub incomplete: BTreeMap<String, usize>,
}

/// Assembles per-sample ternary vectors in family order. Samples missing any
/// model's record are rejected; conflicting duplicates are a hard error.
pub fn build_outcome_matrix(
    records: &[OutcomeRecord],
    family: &ModelFamily,
    benchmark_id: &str,
) -> Result<(OutcomeMatrix, RejectionReport)> {
    family.validate()?;
    let n = family.len();
    let mut per_sample: BTreeMap<String, Vec<Option<i8>>> = BTreeMap::new();
    for record in records {
        if record.benchmark_id != benchmark_id {
            continue;
        }
        check_outcome(record.outcome)?;
        let Some(model_idx) = family.index_of(&record.model_id) else {
            continue; // record for a model outside the family
        };
        let slot = per_sample
            .entry(record.sample_id.clone())
            .or_insert_with(|| vec![None; n]);
        match slot[model_idx] {
            Some(existing) if existing != record.outcome => {
                return Err(Error::Data(format!(
                    "conflicting outcomes for sample '{}' model '{}': {} vs {}",
                    record.sample_id, record.model_id, existing, record.outcome
                )));
            }
            _ => slot[model_idx] = Some(record.outcome),
        }
    }

    let mut entries = BTreeMap::new();
    let mut incomplete = BTreeMap::new();
    for (sample_id, slots) in per_sample {
        let covered = slots.iter().filter(|s| s.is_some()).count();
        if covered == n {
            entries.insert(sample_id, slots.into_iter().map(|s| s.unwrap()).collect());
        } else {
            incomplete.insert(sample_id, covered);
        }
    }
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "no usable samples for benchmark '{benchmark_id}'"
        )));
    }
    Ok((
        OutcomeMatrix {
            family: family.clone(),
            benchmark_id: benchmark_id.to_string(),
            entries,
        },
        RejectionReport { incomplete },
    ))
}
