//! Random-sampling evaluation baseline and its trial-accuracy scoring.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{CapabilityInterval, Endpoint};
use crate::sampling::draw_without_replacement;

/// One random-subset evaluation trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomTrial {
    pub sampled_ids: Vec<String>,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<CapabilityInterval>,
}

/// Draws n sample ids without replacement (same PRNG contract as the subset
/// sampler, stream 0) and scores them: -1 counts as incorrect.
pub fn random_subset_trial(
    all_sample_ids: &[String],
    n: usize,
    seed: u64,
    outcomes: &BTreeMap<String, i8>,
) -> Result<RandomTrial> {
    if n == 0 {
        return Err(Error::Argument("subset size n must be positive".into()));
    }
    if n > all_sample_ids.len() {
        return Err(Error::Argument(format!(
            "subset size {n} exceeds population {}",
            all_sample_ids.len()
        )));
    }
    let mut population: Vec<String> = all_sample_ids.to_vec();
    population.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let sampled_ids = draw_without_replacement(&mut rng, &population, n);
    let mut correct = 0usize;
    for id in &sampled_ids {
        let outcome = outcomes
            .get(id)
            .ok_or_else(|| Error::Data(format!("missing outcome for sample '{id}'")))?;
        if *outcome == 1 {
            correct += 1;
        }
    }
    Ok(RandomTrial {
        score: 100.0 * correct as f64 / n as f64,
        sampled_ids,
        placement: None,
    })
}

/// Places a score inside a reference ranking: the interval (M_low, M_high)
/// with reference(M_low) <= score < reference(M_high) over adjacent models.
/// Lower-inclusive at ties; below the weakest model -> (below_family, M_min),
/// at or above the strongest -> (M_max, above_family).
pub fn placement_from_score(
    score: f64,
    reference: &[(String, f64)],
) -> Result<CapabilityInterval> {
    if reference.is_empty() {
        return Err(Error::Argument("empty reference ranking".into()));
    }
    let mut ordered: Vec<(String, f64)> = reference.to_vec();
    ordered.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    for pair in ordered.windows(2) {
        if pair[0].1 == pair[1].1 {
            return Err(Error::Argument(format!(
                "reference ranking not strictly ordered: '{}' and '{}' tie at {}",
                pair[0].0, pair[1].0, pair[0].1
            )));
        }
    }
    if score < ordered[0].1 {
        return Ok(CapabilityInterval::new(
            Endpoint::BelowFamily,
            Endpoint::Model(ordered[0].0.clone()),
        ));
    }
    for pair in ordered.windows(2) {
        if pair[0].1 <= score && score < pair[1].1 {
            return Ok(CapabilityInterval::new(
                Endpoint::Model(pair[0].0.clone()),
                Endpoint::Model(pair[1].0.clone()),
            ));
        }
    }
    Ok(CapabilityInterval::new(
        Endpoint::Model(ordered.last().unwrap().0.clone()),
        Endpoint::AboveFamily,
    ))
}

/// Fraction of placements matching the ground-truth interval.
pub fn baseline_accuracy_rate(
    placements: &[CapabilityInterval],
    ground_truth: &CapabilityInterval,
) -> Result<f64> {
    if placements.is_empty() {
        return Err(Error::Argument("no placements".into()));
    }
    let correct = placements.iter().filter(|p| *p == ground_truth).count();
    Ok(correct as f64 / placements.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:04}")).collect()
    }

    fn outcomes_with(ids: &[String], correct: usize) -> BTreeMap<String, i8> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), if i < correct { 1 } else { 0 }))
            .collect()
    }

    #[test]
    fn exhaustive_draw_scores_population() {
        let population = ids(10);
        let outcomes = outcomes_with(&population, 5);
        let trial = random_subset_trial(&population, 10, 3, &outcomes).unwrap();
        assert_eq!(trial.score, 50.0);
        assert_eq!(trial.sampled_ids.len(), 10);
    }

    #[test]
    fn trial_determinism_and_bounds() {
        let population = ids(50);
        let outcomes = outcomes_with(&population, 20);
        let a = random_subset_trial(&population, 10, 9, &outcomes).unwrap();
        let b = random_subset_trial(&population, 10, 9, &outcomes).unwrap();
        assert_eq!(a.sampled_ids, b.sampled_ids);
        assert!(random_subset_trial(&population, 51, 0, &outcomes).is_err());
        assert!(random_subset_trial(&population, 0, 0, &outcomes).is_err());
    }

    #[test]
    fn binomial_band_at_planted_accuracy() {
        // planted 80% accuracy, n = 100, hypergeometric sigma ~= 3.9:
        // score within +/- ~4 sigma in >= 99.9% of seeds
        let population = ids(2000);
        let outcomes = outcomes_with(&population, 1600);
        let mut hits = 0usize;
        let trials = 2000;
        for seed in 0..trials {
            let t = random_subset_trial(&population, 100, seed, &outcomes).unwrap();
            if (64.0..=94.0).contains(&t.score) {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 0.999, "hits {hits}/{trials}");
    }

    #[test]
    fn variance_shrinks_with_n() {
        let population = ids(5000);
        let outcomes = outcomes_with(&population, 3000);
        let std_at = |n: usize| {
            let scores: Vec<f64> = (0..1000)
                .map(|seed| {
                    random_subset_trial(&population, n, seed, &outcomes)
                        .unwrap()
                        .score
                })
                .collect();
            crate::stats::sample_std(&scores)
        };
        assert!(std_at(400) < std_at(100));
    }

    fn table3_ranking() -> Vec<(String, f64)> {
        vec![
            ("Qwen3-235B-A22B".into(), 77.39),
            ("Qwen3-32B".into(), 73.45),
            ("Qwen3-30B-A3B".into(), 70.66),
            ("Qwen3-14B".into(), 70.84),
            ("Qwen3-8B".into(), 69.53),
            ("Qwen3-4B".into(), 64.61),
            ("Qwen3-1.7B".into(), 54.01),
            ("Qwen3-0.6B".into(), 43.86),
        ]
    }

    #[test]
    fn placements() {
        let reference = table3_ranking();
        let p = placement_from_score(54.98, &reference).unwrap();
        assert_eq!(
            p,
            CapabilityInterval::new(
                Endpoint::Model("Qwen3-1.7B".into()),
                Endpoint::Model("Qwen3-4B".into())
            )
        );
        // 41.82 sits below the weakest 4-benchmark aggregate reference
        let p = placement_from_score(41.82, &reference).unwrap();
        assert_eq!(
            p,
            CapabilityInterval::new(Endpoint::BelowFamily, Endpoint::Model("Qwen3-0.6B".into()))
        );
        let p = placement_from_score(99.0, &reference).unwrap();
        assert_eq!(
            p,
            CapabilityInterval::new(
                Endpoint::Model("Qwen3-235B-A22B".into()),
                Endpoint::AboveFamily
            )
        );
        // lower-inclusive tie rule
        let p = placement_from_score(54.01, &reference).unwrap();
        assert_eq!(
            p,
            CapabilityInterval::new(
                Endpoint::Model("Qwen3-1.7B".into()),
                Endpoint::Model("Qwen3-4B".into())
            )
        );
    }

    #[test]
    fn placement_is_monotone_in_score() {
        let reference = table3_ranking();
        let mut ascending = reference.clone();
        ascending.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let rank_of = |interval: &CapabilityInterval| match &interval.lower {
            Endpoint::BelowFamily => 0usize,
            Endpoint::Model(id) => 1 + ascending.iter().position(|(m, _)| m == id).unwrap(),
            Endpoint::AboveFamily => unreachable!("lower endpoint is never above_family"),
        };
        let mut prev = 0usize;
        let mut score = 30.0;
        while score < 100.0 {
            let p = placement_from_score(score, &reference).unwrap();
            let r = rank_of(&p);
            assert!(r >= prev, "placement moved down as score rose at {score}");
            prev = r;
            score += 0.5;
        }
    }

    #[test]
    fn accuracy_rates() {
        let truth = CapabilityInterval::new(
            Endpoint::Model("a".into()),
            Endpoint::Model("b".into()),
        );
        let wrong = CapabilityInterval::new(Endpoint::BelowFamily, Endpoint::Model("a".into()));
        let mut placements = vec![truth.clone(); 88];
        placements.extend(vec![wrong.clone(); 12]);
        assert!((baseline_accuracy_rate(&placements, &truth).unwrap() - 0.88).abs() < 1e-12);
        assert_eq!(
            baseline_accuracy_rate(&vec![truth.clone(); 5], &truth).unwrap(),
            1.0
        );
        assert_eq!(
            baseline_accuracy_rate(&vec![wrong; 5], &truth).unwrap(),
            0.0
        );
        assert!(baseline_accuracy_rate(&[], &truth).is_err());
    }
}
