//! IRV classification, transition-index assignment, pool construction and
//! abnormal-sample reporting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{ModelFamily, OutcomeMatrix};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One sample's ternary outcome vector over the ordered family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Irv(pub Vec<i8>);

/// Classification of an IRV.
///
/// - `Valid(k)`: no -1 and the 0/1 sequence is non-decreasing; `k` is the
///   1-based index of the smallest model answering correctly, or n+1 when
///   no model does.
/// - `NonMonotonic`: no -1 but a correct answer is followed by a wrong one
///   somewhere (contamination suspect).
/// - `InferenceError`: any entry is -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "transition_index")]
pub enum IrvClass {
    Valid(usize),
    NonMonotonic,
    InferenceError,
}

/// Classifies one IRV. Requires length >= 2.
pub fn classify_irv(irv: &Irv) -> IrvClass {
    let values = &irv.0;
    debug_assert!(values.len() >= 2);
    if values.iter().any(|&v| v == -1) {
        return IrvClass::InferenceError;
    }
    let first_one = values.iter().position(|&v| v == 1);
    match first_one {
        None => IrvClass::Valid(values.len() + 1),
        Some(idx) => {
            if values[idx..].iter().all(|&v| v == 1) {
                IrvClass::Valid(idx + 1)
            } else {
                IrvClass::NonMonotonic
            }
        }
    }
}

/// Samples bucketed by transition index k in 1..=n+1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StsPool {
    pub family: ModelFamily,
    pub benchmark_id: String,
    /// Every key in 1..=n+1 present; values sorted by sample_id.
    pub buckets: BTreeMap<usize, Vec<String>>,
}

impl StsPool {
    pub fn class_range(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.family.len() + 1
    }

    pub fn total_samples(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }
}

/// Serialized form of the pool: bucket keys are strings, family collapsed to
/// its id plus size so the file stands alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolFile {
    pub family_id: String,
    pub benchmark_id: String,
    pub buckets: BTreeMap<String, Vec<String>>,
}

impl PoolFile {
    pub fn from_pool(pool: &StsPool) -> PoolFile {
        PoolFile {
            family_id: pool.family.family_id.clone(),
            benchmark_id: pool.benchmark_id.clone(),
            buckets: pool
                .buckets
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    pub fn into_pool(self, family: ModelFamily) -> Result<StsPool> {
        let mut buckets = BTreeMap::new();
        for (key, samples) in self.buckets {
            let k: usize = key
                .parse()
                .map_err(|_| Error::Schema(format!("bad bucket key '{key}'")))?;
            if k < 1 || k > family.len() + 1 {
                return Err(Error::Schema(format!(
                    "bucket key {k} outside 1..={}",
                    family.len() + 1
                )));
            }
            buckets.insert(k, samples);
        }
        for k in 1..=family.len() + 1 {
            buckets.entry(k).or_default();
        }
        let benchmark_id = self.benchmark_id;
        Ok(StsPool {
            family,
            benchmark_id,
            buckets,
        })
    }
}

/// Fractions and counts over all input samples of a matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolSummary {
    pub total: usize,
    pub per_ti_counts: BTreeMap<usize, usize>,
    pub per_ti_fraction: BTreeMap<usize, f64>,
    pub abnormal_count: usize,
    pub abnormal_fraction: f64,
    pub error_count: usize,
    pub error_fraction: f64,
    /// NonMonotonic and InferenceError combined.
    pub combined_abnormal_fraction: f64,
}

fn classify_entries(entries: &[(&String, &Vec<i8>)]) -> Vec<IrvClass> {
    #[cfg(feature = "parallel")]
    {
        entries
            .par_iter()
            .map(|(_, v)| classify_irv(&Irv((*v).clone())))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        classify_entries_serial(entries)
    }
}

fn classify_entries_serial(entries: &[(&String, &Vec<i8>)]) -> Vec<IrvClass> {
    entries
        .iter()
        .map(|(_, v)| classify_irv(&Irv((*v).clone())))
        .collect()
}

fn assemble_pool(
    matrix: &OutcomeMatrix,
    classes: Vec<IrvClass>,
) -> (StsPool, PoolSummary, Vec<(String, IrvClass)>) {
    let n = matrix.family.len();
    let mut buckets: BTreeMap<usize, Vec<String>> = (1..=n + 1).map(|k| (k, Vec::new())).collect();
    let mut rejects = Vec::new();
    let mut abnormal = 0usize;
    let mut errors = 0usize;
    for ((sample_id, _), class) in matrix.entries.iter().zip(classes) {
        match class {
            IrvClass::Valid(k) => buckets.get_mut(&k).unwrap().push(sample_id.clone()),
            IrvClass::NonMonotonic => {
                abnormal += 1;
                rejects.push((sample_id.clone(), class));
            }
            IrvClass::InferenceError => {
                errors += 1;
                rejects.push((sample_id.clone(), class));
            }
        }
    }
    // entries is a BTreeMap, so buckets are already sorted by sample_id
    let total = matrix.entries.len();
    let per_ti_counts: BTreeMap<usize, usize> =
        buckets.iter().map(|(k, v)| (*k, v.len())).collect();
    let frac = |c: usize| c as f64 / total as f64;
    let summary = PoolSummary {
        total,
        per_ti_fraction: per_ti_counts.iter().map(|(k, c)| (*k, frac(*c))).collect(),
        per_ti_counts,
        abnormal_count: abnormal,
        abnormal_fraction: frac(abnormal),
        error_count: errors,
        error_fraction: frac(errors),
        combined_abnormal_fraction: frac(abnormal + errors),
    };
    let pool = StsPool {
        family: matrix.family.clone(),
        benchmark_id: matrix.benchmark_id.clone(),
        buckets,
    };
    (pool, summary, rejects)
}

/// Builds the STS pool: Valid samples land in bucket[TI]; non-monotonic and
/// inference-error samples go to the rejects list.
pub fn build_sts_pool(
    matrix: &OutcomeMatrix,
) -> Result<(StsPool, PoolSummary, Vec<(String, IrvClass)>)> {
    if matrix.entries.is_empty() {
        return Err(Error::Data("empty outcome matrix".into()));
    }
    let entries: Vec<_> = matrix.entries.iter().collect();
    let classes = classify_entries(&entries);
    Ok(assemble_pool(matrix, classes))
}

/// Sequential variant of [`build_sts_pool`], kept callable alongside the
/// parallel path for benchmarking.
pub fn build_sts_pool_serial(
    matrix: &OutcomeMatrix,
) -> Result<(StsPool, PoolSummary, Vec<(String, IrvClass)>)> {
    if matrix.entries.is_empty() {
        return Err(Error::Data("empty outcome matrix".into()));
    }
    let entries: Vec<_> = matrix.entries.iter().collect();
    let classes = classify_entries_serial(&entries);
    Ok(assemble_pool(matrix, classes))
}

/// Contamination suspects: exactly the NonMonotonic sample ids, sorted.
pub fn flag_contamination(matrix: &OutcomeMatrix) -> Result<Vec<String>> {
    if matrix.entries.is_empty() {
        return Err(Error::Data("empty outcome matrix".into()));
    }
    let mut flagged: Vec<String> = matrix
        .entries
        .iter()
        .filter(|(_, v)| classify_irv(&Irv((*v).clone())) == IrvClass::NonMonotonic)
        .map(|(id, _)| id.clone())
        .collect();
    flagged.sort();
    Ok(flagged)
}
