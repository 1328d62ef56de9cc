//! Synthetic model families with controllable difficulty distributions,
//! monotone capability behavior, contamination and inference errors.
//! Ground-truth generator for end-to-end tests.
//!
//! Noise is injected by sampling the transition point directly (never by
//! per-cell coin flips), so clean vectors stay monotone by construction;
//! contamination and errors are separate explicit mechanisms. All
//! randomness derives from per-sample ChaCha8 streams, so generation is
//! independent of scheduling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{CapabilityInterval, Endpoint};
use crate::ingestion::{ModelFamily, OutcomeMatrix};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One component of the latent difficulty mixture.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub spread: f64,
}

/// Configuration of a synthetic reference family and its sample population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Latent capability per reference model, strictly increasing.
    pub capabilities: Vec<f64>,
    pub sample_count: usize,
    pub difficulty_mixture: Vec<MixtureComponent>,
    pub contamination_rate: f64,
    pub error_rate: f64,
    pub noise_temperature: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capabilities.len() < 2 {
            return Err(Error::Argument("need at least 2 capabilities".into()));
        }
        if !self.capabilities.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Argument("capabilities must be strictly increasing".into()));
        }
        if self.sample_count == 0 {
            return Err(Error::Argument("sample_count must be positive".into()));
        }
        if self.difficulty_mixture.is_empty() {
            return Err(Error::Argument("empty difficulty mixture".into()));
        }
        let total: f64 = self.difficulty_mixture.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        for c in &self.difficulty_mixture {
            if c.weight < 0.0 || c.spread < 0.0 {
                return Err(Error::Argument("negative mixture weight or spread".into()));
            }
        }
        for rate in [self.contamination_rate, self.error_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Argument(format!("rate {rate} outside [0,1]")));
            }
        }
        if self.noise_temperature < 0.0 {
            return Err(Error::Argument("noise_temperature must be nonnegative".into()));
        }
        Ok(())
    }

    /// Heavy mass at both tails, thin middle: the polarization pathology.
    pub fn polarized_mixture(capabilities: &[f64]) -> Vec<MixtureComponent> {
        let lo = capabilities[0];
        let hi = *capabilities.last().unwrap();
        let span = hi - lo;
        vec![
            MixtureComponent {
                weight: 0.45,
                mean: lo - 0.2 * span,
                spread: 0.1 * span,
            },
            MixtureComponent {
                weight: 0.30,
                mean: lo + 0.5 * span,
                spread: 0.35 * span,
            },
            MixtureComponent {
                weight: 0.25,
                mean: hi + 0.2 * span,
                spread: 0.1 * span,
            },
        ]
    }

    pub fn family(&self) -> ModelFamily {
        ModelFamily {
            family_id: "synthetic".into(),
            models: (0..self.capabilities.len())
                .map(|i| (format!("synth-m{}", i + 1), (i + 1) as f64))
                .collect(),
        }
    }
}

/// Planted ground-truth label per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedFlag {
    Clean,
    Contaminated,
    Erroneous,
}

/// Generated population with its latent ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub matrix: OutcomeMatrix,
    pub latent_difficulty: BTreeMap<String, f64>,
    pub planted_flags: BTreeMap<String, PlantedFlag>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sample_rng(seed: u64, sample_idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_idx + 1);
    rng
}

fn sample_difficulty(rng: &mut ChaCha8Rng, mixture: &[MixtureComponent]) -> f64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = &mixture[mixture.len() - 1];
    for c in mixture {
        acc += c.weight;
        if u <= acc {
            chosen = c;
            break;
        }
    }
    if chosen.spread == 0.0 {
        chosen.mean
    } else {
        Normal::new(chosen.mean, chosen.spread).unwrap().sample(rng)
    }
}

/// Clean monotone vector: transition point sampled so that the marginal
/// P(model i correct) = logistic((c_i - d)/t); at t = 0 this degenerates to
/// the threshold rule (correct iff c_i >= d).
fn clean_vector(rng: &mut ChaCha8Rng, capabilities: &[f64], difficulty: f64, noise: f64) -> Vec<i8> {
    let n = capabilities.len();
    if noise == 0.0 {
        return capabilities
            .iter()
            .map(|&c| if c >= difficulty { 1 } else { 0 })
            .collect();
    }
    let u: f64 = rng.gen();
    let ti = capabilities
        .iter()
        .position(|&c| u <= logistic((c - difficulty) / noise))
        .map(|i| i + 1)
        .unwrap_or(n + 1);
    (0..n).map(|i| if i + 1 >= ti { 1 } else { 0 }).collect()
}

/// Flips one entry so the vector becomes non-monotonic; candidates verified
/// against the classifier so the planted flag is consistent by construction.
fn plant_inversion(rng: &mut ChaCha8Rng, values: &mut [i8]) {
    use crate::transition::{classify_irv, Irv, IrvClass};
    let mut candidates = Vec::new();
    for i in 0..values.len() {
        let flipped = 1 - values[i];
        let mut trial = values.to_vec();
        trial[i] = flipped;
        if classify_irv(&Irv(trial)) == IrvClass::NonMonotonic {
            candidates.push(i);
        }
    }
    debug_assert!(!candidates.is_empty());
    let pick = candidates[crate::sampling::bounded_u64(rng, candidates.len() as u64) as usize];
    values[pick] = 1 - values[pick];
}

fn generate_one(
    config: &SyntheticConfig,
    idx: u64,
) -> (String, Vec<i8>, f64, PlantedFlag) {
    let mut rng = sample_rng(config.seed, idx);
    let difficulty = sample_difficulty(&mut rng, &config.difficulty_mixture);
    let u_flag: f64 = rng.gen();
    let flag = if u_flag < config.contamination_rate {
        PlantedFlag::Contaminated
    } else if u_flag < config.contamination_rate + config.error_rate {
        PlantedFlag::Erroneous
    } else {
        PlantedFlag::Clean
    };
    let mut values = clean_vector(
        &mut rng,
        &config.capabilities,
        difficulty,
        config.noise_temperature,
    );
    match flag {
        PlantedFlag::Clean => {}
        PlantedFlag::Contaminated => plant_inversion(&mut rng, &mut values),
        PlantedFlag::Erroneous => {
            let pos = crate::sampling::bounded_u64(&mut rng, values.len() as u64) as usize;
            values[pos] = -1;
        }
    }
    let sample_id = format!("synth-s{idx:06}");
    (sample_id, values, difficulty, flag)
}

fn assemble(config: &SyntheticConfig, rows: Vec<(String, Vec<i8>, f64, PlantedFlag)>) -> SyntheticDataset {
    let mut entries = BTreeMap::new();
    let mut latent_difficulty = BTreeMap::new();
    let mut planted_flags = BTreeMap::new();
    for (id, values, difficulty, flag) in rows {
        entries.insert(id.clone(), values);
        latent_difficulty.insert(id.clone(), difficulty);
        planted_flags.insert(id, flag);
    }
    SyntheticDataset {
        matrix: OutcomeMatrix {
            family: config.family(),
            benchmark_id: "synthetic".into(),
            entries,
        },
        latent_difficulty,
        planted_flags,
    }
}

/// Generates the full population deterministically from the config seed.
pub fn generate_family(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    let rows: Vec<_> = (0..config.sample_count as u64)
        .into_par_iter()
        .map(|idx| generate_one(config, idx))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<_> = (0..config.sample_count as u64)
        .map(|idx| generate_one(config, idx))
        .collect();
    Ok(assemble(config, rows))
}

/// Sequential variant of [`generate_family`], kept callable alongside the
/// parallel path for benchmarking.
pub fn generate_family_serial(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let rows: Vec<_> = (0..config.sample_count as u64)
        .map(|idx| generate_one(config, idx))
        .collect();
    Ok(assemble(config, rows))
}

/// Outcomes of a hypothetical model at the given capability on the listed
/// samples, from the same correctness law as the family generator.
pub fn generate_unknown(
    dataset: &SyntheticDataset,
    capability: f64,
    noise_temperature: f64,
    seed: u64,
    sample_ids: &[String],
) -> Result<BTreeMap<String, i8>> {
    if !capability.is_finite() {
        return Err(Error::Argument("capability must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX); // distinct from family sample streams
    let mut outcomes = BTreeMap::new();
    for id in sample_ids {
        let difficulty = *dataset
            .latent_difficulty
            .get(id)
            .ok_or_else(|| Error::Data(format!("unknown sample '{id}'")))?;
        let correct = if noise_temperature == 0.0 {
            capability >= difficulty
        } else {
            let u: f64 = rng.gen();
            u <= logistic((capability - difficulty) / noise_temperature)
        };
        outcomes.insert(id.clone(), if correct { 1 } else { 0 });
    }
    Ok(outcomes)
}

/// Ground-truth interval bracketing a capability; lower-inclusive at ties,
/// mirroring the placement boundary rule.
pub fn oracle_interval(
    capability: f64,
    capabilities: &[f64],
    family: &ModelFamily,
) -> Result<CapabilityInterval> {
    if capabilities.len() != family.len() {
        return Err(Error::Argument(format!(
            "{} capabilities vs {} family models",
            capabilities.len(),
            family.len()
        )));
    }
    if !capabilities.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Argument("capabilities must be strictly increasing".into()));
    }
    if capability < capabilities[0] {
        return Ok(CapabilityInterval::new(
            Endpoint::BelowFamily,
            Endpoint::Model(family.models[0].0.clone()),
        ));
    }
    for i in 0..capabilities.len() - 1 {
        if capabilities[i] <= capability && capability < capabilities[i + 1] {
            return Ok(CapabilityInterval::new(
                Endpoint::Model(family.models[i].0.clone()),
                Endpoint::Model(family.models[i + 1].0.clone()),
            ));
        }
    }
    Ok(CapabilityInterval::new(
        Endpoint::Model(family.models.last().unwrap().0.clone()),
        Endpoint::AboveFamily,
    ))
}
