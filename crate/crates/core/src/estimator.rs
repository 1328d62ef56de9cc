//! Per-TI accuracy profiles and capability-interval inference by
//! first-significant-drop detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::ModelFamily;
use crate::sampling::BalancedSubset;

/// One end of a capability interval.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    BelowFamily,
    Model(String),
    AboveFamily,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::BelowFamily => write!(f, "below_family"),
            Endpoint::Model(id) => write!(f, "{id}"),
            Endpoint::AboveFamily => write!(f, "above_family"),
        }
    }
}

/// Pair of adjacent reference models bracketing an estimated capability.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CapabilityInterval {
    pub lower: Endpoint,
    pub upper: Endpoint,
}

impl CapabilityInterval {
    pub fn new(lower: Endpoint, upper: Endpoint) -> Self {
        CapabilityInterval { lower, upper }
    }

    pub fn label(&self) -> String {
        format!("{}..{}", self.lower, self.upper)
    }
}

/// Per-class tallies: (correct, wrong, error).
pub type ClassCounts = (usize, usize, usize);

/// Per-transition-index accuracy of an evaluated model on a balanced subset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TiAccuracyProfile {
    /// class -> accuracy percentage in [0,100]
    pub per_ti_accuracy: BTreeMap<usize, f64>,
    pub per_ti_counts: BTreeMap<usize, ClassCounts>,
    pub subset_seed: u64,
    pub subset_m: usize,
}

/// Computes the per-class accuracy profile. A -1 outcome counts against
/// accuracy and is tallied in the error column.
pub fn ti_accuracy_profile(
    subset: &BalancedSubset,
    outcomes: &BTreeMap<String, i8>,
) -> Result<TiAccuracyProfile> {
    let mut counts: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    for (sample_id, class) in &subset.items {
        let outcome = outcomes.get(sample_id).ok_or_else(|| {
            Error::Data(format!("missing outcome for subset sample '{sample_id}'"))
        })?;
        let entry = counts.entry(*class).or_insert((0, 0, 0));
        match outcome {
            1 => entry.0 += 1,
            0 => entry.1 += 1,
            -1 => entry.2 += 1,
            other => {
                return Err(Error::Data(format!(
                    "invalid outcome {other} for sample '{sample_id}'"
                )))
            }
        }
    }
    let per_ti_accuracy = counts
        .iter()
        .map(|(k, (c, w, e))| {
            let total = (c + w + e) as f64;
            (*k, 100.0 * *c as f64 / total)
        })
        .collect();
    Ok(TiAccuracyProfile {
        per_ti_accuracy,
        per_ti_counts: counts,
        subset_seed: subset.seed,
        subset_m: subset.per_class_count,
    })
}

/// A detected accuracy drop between consecutive classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDrop {
    pub from_class: usize,
    pub to_class: usize,
    pub magnitude_pp: f64,
}

/// Finds the smallest k with accuracy(k) - accuracy(k+1) >= threshold_pp.
pub fn detect_drop(profile: &TiAccuracyProfile, threshold_pp: f64) -> Option<AccuracyDrop> {
    let mut k = 1usize;
    loop {
        let (Some(&a), Some(&b)) = (
            profile.per_ti_accuracy.get(&k),
            profile.per_ti_accuracy.get(&(k + 1)),
        ) else {
            return None;
        };
        let magnitude = a - b;
        if magnitude >= threshold_pp {
            return Some(AccuracyDrop {
                from_class: k,
                to_class: k + 1,
                magnitude_pp: magnitude,
            });
        }
        k += 1;
    }
}

fn all_drops(profile: &TiAccuracyProfile, threshold_pp: f64) -> Vec<AccuracyDrop> {
    let mut drops = Vec::new();
    let mut k = 1usize;
    while let (Some(&a), Some(&b)) = (
        profile.per_ti_accuracy.get(&k),
        profile.per_ti_accuracy.get(&(k + 1)),
    ) {
        if a - b >= threshold_pp {
            drops.push(AccuracyDrop {
                from_class: k,
                to_class: k + 1,
                magnitude_pp: a - b,
            });
        }
        k += 1;
    }
    drops
}

/// Capability placement of an unknown model inside the reference family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapabilityEstimate {
    pub interval: CapabilityInterval,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop: Option<AccuracyDrop>,
    pub confidence_flags: Vec<String>,
}

/// Places the model: a drop at (k, k+1) maps to the interval
/// (M_k, M_{k+1}); no drop with accuracy(1) >= floor_pct means above the
/// family; accuracy(1) < floor_pct means below it.
pub fn estimate_capability(
    profile: &TiAccuracyProfile,
    family: &ModelFamily,
    threshold_pp: f64,
    floor_pct: f64,
) -> Result<CapabilityEstimate> {
    let n = family.len();
    for k in 1..=n + 1 {
        if !profile.per_ti_accuracy.contains_key(&k) {
            return Err(Error::Data(format!("profile missing class {k}")));
        }
    }
    let drops = all_drops(profile, threshold_pp);
    let mut flags = Vec::new();
    if drops.len() > 1 {
        flags.push(format!(
            "multiple qualifying drops: {}",
            drops
                .iter()
                .map(|d| format!("({},{}) {:.2}pp", d.from_class, d.to_class, d.magnitude_pp))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    if let Some(first) = drops.first() {
        if first.magnitude_pp < threshold_pp + 2.0 {
            flags.push(format!(
                "borderline drop magnitude {:.2}pp vs threshold {threshold_pp}pp",
                first.magnitude_pp
            ));
        }
        let k = first.from_class;
        let interval = CapabilityInterval::new(
            Endpoint::Model(family.models[k - 1].0.clone()),
            Endpoint::Model(family.models[k].0.clone()),
        );
        return Ok(CapabilityEstimate {
            interval,
            drop: Some(first.clone()),
            confidence_flags: flags,
        });
    }
    let acc1 = profile.per_ti_accuracy[&1];
    let interval = if acc1 >= floor_pct {
        CapabilityInterval::new(
            Endpoint::Model(family.models[n - 1].0.clone()),
            Endpoint::AboveFamily,
        )
    } else {
        CapabilityInterval::new(
            Endpoint::BelowFamily,
            Endpoint::Model(family.models[0].0.clone()),
        )
    };
    Ok(CapabilityEstimate {
        interval,
        drop: None,
        confidence_flags: flags,
    })
}

/// Histogram of interval estimates over repeated trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialAggregate {
    pub trials: usize,
    pub interval_histogram: BTreeMap<String, usize>,
    pub accuracy_rate: f64,
}

pub fn aggregate_trials(
    estimates: &[CapabilityEstimate],
    ground_truth: &CapabilityInterval,
) -> Result<TrialAggregate> {
    if estimates.is_empty() {
        return Err(Error::Argument("no trial estimates".into()));
    }
    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    let mut correct = 0usize;
    for e in estimates {
        *histogram.entry(e.interval.label()).or_default() += 1;
        if &e.interval == ground_truth {
            correct += 1;
        }
    }
    Ok(TrialAggregate {
        trials: estimates.len(),
        interval_histogram: histogram,
        accuracy_rate: correct as f64 / estimates.len() as f64,
    })
}
