//! Benchmark discriminability, score weighting, weighted reference ranking,
//! scaling-law regression with residual diagnostics, and difficulty
//! distribution analysis.
//!
//! Conventions, fixed by exact table reproduction: the discriminability
//! sigma uses the population (n) denominator; the residual standard
//! deviation uses the sample (n-1) denominator; skewness and kurtosis are
//! the bias-corrected (adjusted) estimators. Natural log is the default and
//! every reported quantity is invariant under a change of log base.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::ScoreTable;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn central_moment(xs: &[f64], order: u32) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(order as i32)).sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (n denominator).
pub fn population_std(xs: &[f64]) -> f64 {
    central_moment(xs, 2).sqrt()
}

/// Sample standard deviation (n-1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("correlation undefined for constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn log_params(params: &[f64], base: f64) -> Result<Vec<f64>> {
    params
        .iter()
        .map(|&p| {
            if p <= 0.0 || !p.is_finite() {
                Err(Error::Domain(format!("nonpositive parameter count {p}")))
            } else {
                Ok(p.ln() / base.ln())
            }
        })
        .collect()
}

/// Discriminability of one benchmark: D = sigma x rho, where sigma is the
/// population standard deviation of the scores and rho the Pearson
/// correlation of scores with log parameter count.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Discriminability {
    pub d: f64,
    pub sigma: f64,
    pub rho: f64,
}

pub fn discriminability(scores: &[f64], params: &[f64]) -> Result<Discriminability> {
    discriminability_with_base(scores, params, std::f64::consts::E)
}

pub fn discriminability_with_base(
    scores: &[f64],
    params: &[f64],
    base: f64,
) -> Result<Discriminability> {
    if scores.len() != params.len() || scores.len() < 3 {
        return Err(Error::Argument(format!(
            "need matching vectors of length >= 3, got {} and {}",
            scores.len(),
            params.len()
        )));
    }
    let lp = log_params(params, base)?;
    let sigma = population_std(scores);
    let rho = pearson(scores, &lp)?;
    Ok(Discriminability {
        d: sigma * rho,
        sigma,
        rho,
    })
}

/// Benchmark weights w_j = D_j / sum(D); requires every D > 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: BTreeMap<String, f64>,
}

pub fn weight_vector(ds: &BTreeMap<String, f64>) -> Result<WeightVector> {
    if ds.is_empty() {
        return Err(Error::Argument("no discriminability values".into()));
    }
    for (b, d) in ds {
        if *d <= 0.0 {
            return Err(Error::Domain(format!(
                "benchmark '{b}' has non-positive discriminability {d}; it anti-correlates with scale"
            )));
        }
    }
    let total: f64 = ds.values().sum();
    Ok(WeightVector {
        weights: ds.iter().map(|(b, d)| (b.clone(), d / total)).collect(),
    })
}

/// Weighted reference scores, sorted descending. Models missing any weighted
/// benchmark are excluded and listed separately.
pub fn reference_scores(
    table: &ScoreTable,
    weights: &WeightVector,
) -> Result<(Vec<(String, f64)>, Vec<String>)> {
    for b in weights.weights.keys() {
        if !table.benchmarks.contains(b) {
            return Err(Error::Argument(format!(
                "weighted benchmark '{b}' absent from score table"
            )));
        }
    }
    let mut ranking = Vec::new();
    let mut excluded = Vec::new();
    for model in &table.model_ids {
        let mut score = 0.0;
        let mut complete = true;
        for (bench, w) in &weights.weights {
            match table.get(bench, model) {
                Some(s) => score += w * s,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            ranking.push((model.clone(), score));
        } else {
            excluded.push(model.clone());
        }
    }
    if ranking.is_empty() {
        return Err(Error::Data("no model covers all weighted benchmarks".into()));
    }
    ranking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok((ranking, excluded))
}

/// Ordinary least squares of scores on log parameter count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionFit {
    pub alpha: f64,
    pub beta: f64,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

pub fn fit_scaling_law(scores: &[f64], params: &[f64]) -> Result<RegressionFit> {
    fit_scaling_law_with_base(scores, params, std::f64::consts::E)
}

pub fn fit_scaling_law_with_base(
    scores: &[f64],
    params: &[f64],
    base: f64,
) -> Result<RegressionFit> {
    if scores.len() != params.len() || scores.len() < 3 {
        return Err(Error::Argument(format!(
            "need matching vectors of length >= 3, got {} and {}",
            scores.len(),
            params.len()
        )));
    }
    let lp = log_params(params, base)?;
    let mx = mean(&lp);
    let my = mean(scores);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in lp.iter().zip(scores) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
    }
    if sxx == 0.0 {
        return Err(Error::Domain("singular design: all parameter counts equal".into()));
    }
    let alpha = sxy / sxx;
    let beta = my - alpha * mx;
    let residuals: Vec<f64> = lp
        .iter()
        .zip(scores)
        .map(|(x, y)| y - (alpha * x + beta))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = scores.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 0.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RegressionFit {
        alpha,
        beta,
        residuals,
        r_squared,
    })
}

/// Moment diagnostics of a residual vector: sample std, adjusted skewness
/// G1, adjusted excess kurtosis G2.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualDiagnostics {
    pub std_dev: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

pub fn residual_diagnostics(residuals: &[f64]) -> Result<ResidualDiagnostics> {
    let n = residuals.len();
    if n < 4 {
        return Err(Error::Argument(format!(
            "need at least 4 residuals for adjusted kurtosis, got {n}"
        )));
    }
    let m2 = central_moment(residuals, 2);
    if m2 == 0.0 {
        return Err(Error::Domain("zero variance: moments undefined".into()));
    }
    let m3 = central_moment(residuals, 3);
    let m4 = central_moment(residuals, 4);
    let nf = n as f64;
    let g1 = m3 / m2.powf(1.5);
    let skewness = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    let g2 = m4 / (m2 * m2) - 3.0;
    let kurtosis = ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
    Ok(ResidualDiagnostics {
        std_dev: sample_std(residuals),
        skewness,
        kurtosis,
    })
}

/// Simple / intermediate / difficult split from marginal accuracies.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DifficultyDistribution {
    pub simple_pct: f64,
    pub intermediate_pct: f64,
    pub difficult_pct: f64,
    /// Set when the inputs were inverted (largest below smallest).
    pub inverted_inputs: bool,
}

pub fn difficulty_distribution(
    smallest_model_acc: f64,
    largest_model_acc: f64,
) -> DifficultyDistribution {
    DifficultyDistribution {
        simple_pct: smallest_model_acc,
        intermediate_pct: largest_model_acc - smallest_model_acc,
        difficult_pct: 100.0 - largest_model_acc,
        inverted_inputs: largest_model_acc < smallest_model_acc,
    }
}
