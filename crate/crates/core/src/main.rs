//! Command-line orchestration of the evaluation pipeline. Every subcommand
//! writes a canonical-JSON report with an embedded run manifest.
//! Exit codes: 0 success, 1 validation error, 2 I/O or transport error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use stem::baselines;
use stem::client::{self, EndpointConfig, PromptTemplate, TemplateKind};
use stem::error::{Error, Result};
use stem::estimator::{self, CapabilityInterval, Endpoint};
use stem::ingestion::{self, ModelFamily, OutcomeMatrix};
use stem::report::{emit_report, to_payload, RunManifest};
use stem::sampling::{self, BalancedSubset};
use stem::stats;
use stem::synth::{self, SyntheticConfig};
use stem::transition::{self, PoolFile, StsPool};

#[derive(Parser)]
#[command(name = "stem", version, about = "Transition-based LLM capability estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble an outcome matrix from JSONL records
    Ingest {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the transition-index pool from an outcome matrix
    Pool {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a difficulty-balanced subset from a pool
    Subset {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        /// Comma-separated class list; defaults to all classes
        #[arg(long)]
        classes: Option<String>,
        #[arg(long, default_value_t = false)]
        allow_underfill: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a model's capability interval from subset outcomes
    Evaluate {
        #[arg(long)]
        subset: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 15.0)]
        threshold: f64,
        #[arg(long, default_value_t = 50.0)]
        floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark statistics: discriminability, weights, ranking, regression
    Stats {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        family: PathBuf,
        /// Comma-separated benchmark subset for the weighted ranking
        #[arg(long)]
        benchmarks: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random-sampling baseline trials
    Baseline {
        #[arg(long)]
        outcomes: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// JSON file with a "ranking" array of [model_id, score] pairs
        #[arg(long)]
        reference: PathBuf,
        /// "lower,upper" interval for accuracy-rate scoring
        #[arg(long)]
        ground_truth: Option<String>,
        #[arg(long, default_value = "aggregate")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic family population
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Outcome JSONL destination (same schema ingest consumes)
        #[arg(long)]
        records_out: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect live outcomes from an OpenAI-compatible endpoint
    Infer {
        #[arg(long)]
        endpoint: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, value_parser = ["multiple_choice", "math_judge"])]
        template: String,
        /// JSON object mapping sample_id to gold letter (multiple choice)
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn outcome_map(records: &[ingestion::OutcomeRecord]) -> Result<BTreeMap<String, i8>> {
    let mut map = BTreeMap::new();
    for r in records {
        match map.insert(r.sample_id.clone(), r.outcome) {
            Some(prev) if prev != r.outcome => {
                return Err(Error::Data(format!(
                    "conflicting outcomes for sample '{}'",
                    r.sample_id
                )))
            }
            _ => {}
        }
    }
    Ok(map)
}

fn parse_interval(text: &str) -> Result<CapabilityInterval> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| Error::Argument(format!("interval '{text}' must be 'lower,upper'")))?;
    let endpoint = |s: &str| match s.trim() {
        "below_family" => Endpoint::BelowFamily,
        "above_family" => Endpoint::AboveFamily,
        id => Endpoint::Model(id.to_string()),
    };
    Ok(CapabilityInterval::new(endpoint(lo), endpoint(hi)))
}

fn parse_classes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("bad class '{s}'")))
        })
        .collect()
}

fn run(cli: Cli, argv: &[String]) -> Result<()> {
    match cli.command {
        Command::Ingest {
            records,
            family,
            benchmark,
            out,
        } => {
            let family_spec = ModelFamily::load(&family)?;
            let recs = ingestion::load_outcome_records(&records)?;
            let (matrix, rejects) = ingestion::build_outcome_matrix(&recs, &family_spec, &benchmark)?;
            let manifest = RunManifest::new(
                "ingest",
                argv,
                vec![records.display().to_string(), family.display().to_string()],
                None,
            );
            let payload = json!({
                "matrix": to_payload(&matrix)?,
                "rejects": to_payload(&rejects)?,
            });
            emit_report(payload, &manifest, &out)
        }
        Command::Pool { matrix, out } => {
            let document: Value = read_json(&matrix)?;
            let matrix: OutcomeMatrix = serde_json::from_value(
                document.get("matrix").cloned().unwrap_or(document),
            )
            .map_err(|e| Error::Schema(format!("bad matrix file: {e}")))?;
            let (pool, summary, rejects) = transition::build_sts_pool(&matrix)?;
            let flagged = transition::flag_contamination(&matrix)?;
            let manifest = RunManifest::new("pool", argv, vec![], None);
            let file = PoolFile::from_pool(&pool);
            let payload = json!({
                "family_id": file.family_id,
                "benchmark_id": file.benchmark_id,
                "buckets": file.buckets,
                "summary": to_payload(&summary)?,
                "rejects": to_payload(&rejects)?,
                "contamination_suspects": flagged,
            });
            emit_report(payload, &manifest, &out)
        }
        Command::Subset {
            pool,
            family,
            m,
            seed,
            classes,
            allow_underfill,
            out,
        } => {
            let family_spec = ModelFamily::load(&family)?;
            let file: PoolFile = read_json(&pool)?;
            let pool_data: StsPool = file.into_pool(family_spec)?;
            let class_list = classes.as_deref().map(parse_classes).transpose()?;
            let subset = sampling::sample_balanced_subset(
                &pool_data,
                m,
                seed,
                class_list.as_deref(),
                allow_underfill,
            )?;
            let violations = sampling::validate_subset(&subset, &pool_data);
            let manifest = RunManifest::new("subset", argv, vec![], Some(seed));
            let payload = json!({
                "seed": subset.seed,
                "m": subset.per_class_count,
                "family_id": subset.family_id,
                "benchmark_id": subset.benchmark_id,
                "items": subset.items.iter().map(|(id, ti)| json!({"sample_id": id, "ti": ti})).collect::<Vec<_>>(),
                "underfilled": subset.underfilled,
                "violations": to_payload(&violations)?,
            });
            emit_report(payload, &manifest, &out)
        }
        Command::Evaluate {
            subset,
            outcomes,
            family,
            threshold,
            floor,
            out,
        } => {
            let family_spec = ModelFamily::load(&family)?;
            let subset_doc: Value = read_json(&subset)?;
            let items = subset_doc
                .get("items")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Schema("subset file has no items".into()))?;
            let parsed_items: Vec<(String, usize)> = items
                .iter()
                .map(|item| {
                    let id = item["sample_id"].as_str().map(str::to_string);
                    let ti = item["ti"].as_u64().map(|v| v as usize);
                    match (id, ti) {
                        (Some(id), Some(ti)) => Ok((id, ti)),
                        _ => Err(Error::Schema("bad subset item".into())),
                    }
                })
                .collect::<Result<_>>()?;
            let balanced = BalancedSubset {
                per_class_count: subset_doc["m"].as_u64().unwrap_or(0) as usize,
                seed: subset_doc["seed"].as_u64().unwrap_or(0),
                family_id: family_spec.family_id.clone(),
                benchmark_id: String::new(),
                items: parsed_items,
                underfilled: vec![],
            };
            let records = ingestion::load_outcome_records(&outcomes)?;
            let map = outcome_map(&records)?;
            let profile = estimator::ti_accuracy_profile(&balanced, &map)?;
            let estimate = estimator::estimate_capability(&profile, &family_spec, threshold, floor)?;
            let manifest = RunManifest::new("evaluate", argv, vec![], None);
            let mut payload = json!({
                "interval": [estimate.interval.lower.to_string(), estimate.interval.upper.to_string()],
                "profile": to_payload(&profile)?,
                "flags": estimate.confidence_flags,
            });
            if let Some(drop) = &estimate.drop {
                payload["drop"] = to_payload(drop)?;
            }
            emit_report(payload, &manifest, &out)
        }
        Command::Stats {
            scores,
            family,
            benchmarks,
            out,
        } => {
            let family_spec = ModelFamily::load(&family)?;
            let table = ingestion::load_score_table(&scores)?;
            let model_ids = family_spec.model_ids();
            let params = family_spec.param_counts();
            let selected: Vec<String> = match benchmarks {
                Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
                None => table.benchmarks.clone(),
            };

            let mut per_benchmark = serde_json::Map::new();
            let mut ds: BTreeMap<String, f64> = BTreeMap::new();
            for bench in &table.benchmarks {
                let Some(row) = table.row_for_models(bench, &model_ids) else {
                    continue; // benchmark not fully covered by the family
                };
                let disc = stats::discriminability(&row, &params)?;
                let fit = stats::fit_scaling_law(&row, &params)?;
                let diagnostics = stats::residual_diagnostics(&fit.residuals)?;
                let difficulty =
                    stats::difficulty_distribution(row[0], *row.last().unwrap());
                if selected.contains(bench) {
                    ds.insert(bench.clone(), disc.d);
                }
                per_benchmark.insert(
                    bench.clone(),
                    json!({
                        "discriminability": to_payload(&disc)?,
                        "regression": to_payload(&fit)?,
                        "diagnostics": to_payload(&diagnostics)?,
                        "difficulty": to_payload(&difficulty)?,
                    }),
                );
            }
            if ds.is_empty() {
                return Err(Error::Data("no selected benchmark fully covers the family".into()));
            }
            let weights = stats::weight_vector(&ds)?;
            let (ranking, excluded) = stats::reference_scores(&table, &weights)?;
            let manifest = RunManifest::new(
                "stats",
                argv,
                vec![scores.display().to_string(), family.display().to_string()],
                None,
            );
            let payload = json!({
                "benchmarks": Value::Object(per_benchmark),
                "weights": to_payload(&weights)?,
                "ranking": ranking,
                "excluded_models": excluded,
            });
            emit_report(payload, &manifest, &out)
        }
        Command::Baseline {
            outcomes,
            n,
            seed,
            trials,
            reference,
            ground_truth,
            mode,
            out,
        } => {
            let records = ingestion::load_outcome_records(&outcomes)?;
            let map = outcome_map(&records)?;
            let population: Vec<String> = map.keys().cloned().collect();
            let ref_doc: Value = read_json(&reference)?;
            let ranking_value = ref_doc.get("ranking").cloned().unwrap_or(ref_doc);
            let ranking: Vec<(String, f64)> = serde_json::from_value(ranking_value)
                .map_err(|e| Error::Schema(format!("bad reference ranking: {e}")))?;
            let truth = ground_truth.as_deref().map(parse_interval).transpose()?;

            let mut trial_reports = Vec::new();
            let mut placements = Vec::new();
            for t in 0..trials {
                let trial_seed = seed.wrapping_add(t);
                let mut trial = baselines::random_subset_trial(&population, n, trial_seed, &map)?;
                let placement = baselines::placement_from_score(trial.score, &ranking)?;
                trial.placement = Some(placement.clone());
                placements.push(placement.clone());
                trial_reports.push(json!({
                    "seed": trial_seed,
                    "n": n,
                    "score": trial.score,
                    "placement": [placement.lower.to_string(), placement.upper.to_string()],
                    "mode": mode,
                }));
            }
            let manifest = RunManifest::new("baseline", argv, vec![], Some(seed));
            let mut payload = json!({
                "trials": trial_reports,
                "mode": mode,
            });
            if let Some(truth) = truth {
                let rate = baselines::baseline_accuracy_rate(&placements, &truth)?;
                payload["accuracy_rate"] = json!(rate);
                payload["ground_truth"] =
                    json!([truth.lower.to_string(), truth.upper.to_string()]);
            }
            emit_report(payload, &manifest, &out)
        }
        Command::Synth {
            config,
            seed,
            records_out,
            out,
        } => {
            let mut spec: SyntheticConfig = read_json(&config)?;
            spec.seed = seed;
            let dataset = synth::generate_family(&spec)?;
            let mut records = Vec::new();
            for (sample_id, values) in &dataset.matrix.entries {
                for ((model_id, _), outcome) in dataset.matrix.family.models.iter().zip(values) {
                    records.push(ingestion::OutcomeRecord {
                        sample_id: sample_id.clone(),
                        benchmark_id: dataset.matrix.benchmark_id.clone(),
                        model_id: model_id.clone(),
                        outcome: *outcome,
                        raw_response: None,
                    });
                }
            }
            std::fs::write(&records_out, ingestion::write_outcome_records(&records)?)?;
            let flag_counts = dataset.planted_flags.values().fold(
                BTreeMap::<String, usize>::new(),
                |mut acc, f| {
                    *acc.entry(format!("{f:?}").to_lowercase()).or_default() += 1;
                    acc
                },
            );
            let manifest = RunManifest::new("synth", argv, vec![config.display().to_string()], Some(seed));
            let payload = json!({
                "records_path": records_out.display().to_string(),
                "sample_count": dataset.matrix.entries.len(),
                "planted_flag_counts": flag_counts,
                "latent_difficulty": dataset.latent_difficulty,
                "planted_flags": to_payload(&dataset.planted_flags)?,
            });
            emit_report(payload, &manifest, &out)
        }
        Command::Infer {
            endpoint,
            samples,
            template,
            gold,
            out,
        } => {
            let config: EndpointConfig = read_json(&endpoint)?;
            let template = match template.as_str() {
                "multiple_choice" => PromptTemplate::multiple_choice(),
                _ => PromptTemplate::math_judge(),
            };
            let text = std::fs::read_to_string(&samples)?;
            let mut batch = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let sample: client::BatchSample =
                    serde_json::from_str(line).map_err(|e| Error::Parse {
                        path: samples.display().to_string(),
                        line: idx + 1,
                        msg: e.to_string(),
                    })?;
                batch.push(sample);
            }
            let gold_map: BTreeMap<String, String> = match &gold {
                Some(path) => read_json(path)?,
                None => BTreeMap::new(),
            };
            if template.kind == TemplateKind::MultipleChoice && gold.is_none() {
                return Err(Error::Argument(
                    "--gold is required for multiple_choice".into(),
                ));
            }
            let records = client::run_batch(&config, &batch, &template, &gold_map)?;
            std::fs::write(&out, ingestion::write_outcome_records(&records)?)?;
            Ok(())
        }
    }
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli, &argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
