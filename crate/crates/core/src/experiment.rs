//! Simulated-human experiments: repeated seeded sessions, learning curves,
//! and paired strategy comparisons.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{AcquisitionKind, StrategyClass};
use crate::assess::{curve_point, mean_std, CurvePoint};
use crate::batch::{BatchConfig, BatchMethod};
use crate::belief::{Evidence, SamplerConfig};
use crate::domain::{Query, Response, TrajectorySet, Weights};
use crate::envs::{sample_unit_sphere, EnvConfig, SyntheticEnv};
use crate::error::{Error, Result};
use crate::human::{ResponseModel, SimulatedHuman};
use crate::optimizer::OptimizerConfig;
use crate::seed::{derive_seed, rng_from};
use crate::session::{ActiveSession, DemoConfig, SessionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchSpec {
    pub method: BatchMethod,
    pub batch_size: usize,
    pub reduced_size: Option<usize>,
    pub dpp_sigma: Option<f64>,
    pub dpp_gamma: f64,
    pub kmedoids_iters: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        let c = BatchConfig::default();
        BatchSpec {
            method: BatchMethod::Greedy,
            batch_size: c.batch_size,
            reduced_size: c.reduced_size,
            dpp_sigma: c.dpp_sigma,
            dpp_gamma: c.dpp_gamma,
            kmedoids_iters: c.kmedoids_iters,
        }
    }
}

impl BatchSpec {
    pub fn config(&self) -> BatchConfig {
        BatchConfig {
            batch_size: self.batch_size,
            reduced_size: self.reduced_size,
            dpp_sigma: self.dpp_sigma,
            dpp_gamma: self.dpp_gamma,
            kmedoids_iters: self.kmedoids_iters,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub environment: EnvConfig,
    pub num_trajectories: usize,
    pub standardize: bool,
    pub strategy: AcquisitionKind,
    /// Strategies for `compare`; ignored by `run`.
    pub strategies: Vec<AcquisitionKind>,
    /// The learner's response model.
    pub model: ResponseModel,
    /// The simulated human's model; defaults to `model`.
    pub human: Option<ResponseModel>,
    pub sampler: SamplerConfig,
    pub optimizer: OptimizerConfig,
    pub demonstrations: Option<DemoConfig>,
    /// Fixed ground truth for every run; drawn uniformly per run when absent.
    pub true_weights: Option<Vec<f64>>,
    /// Ask `b` queries per iteration instead of one.
    pub batch: Option<BatchSpec>,
    pub iterations: usize,
    pub runs: usize,
    /// Size of the per-run held-out answer set; 0 disables the metric.
    pub heldout_queries: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: EnvConfig::Synthetic(SyntheticEnv { dim: 3 }),
            num_trajectories: 100,
            standardize: false,
            strategy: AcquisitionKind::MutualInformation,
            strategies: Vec::new(),
            model: ResponseModel::default(),
            human: None,
            sampler: SamplerConfig::default(),
            optimizer: OptimizerConfig::default(),
            demonstrations: None,
            true_weights: None,
            batch: None,
            iterations: 10,
            runs: 5,
            heldout_queries: 20,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let config = Self::parse(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without validating, for callers that patch fields first.
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        if let Some(h) = &self.human {
            h.validate()?;
        }
        if let Some(b) = &self.batch {
            b.config().validate()?;
            if self.strategy.class() == StrategyClass::Constructive {
                return Err(Error::param(
                    "batch",
                    format!("strategy `{}` cannot be batched", self.strategy),
                ));
            }
            if self.optimizer.query_size != 2 {
                return Err(Error::param("batch", "batch selection needs optimizer.query_size = 2"));
            }
        }
        if let Some(w) = &self.true_weights {
            Weights::normalized(w.clone())?;
        }
        // every run has ground truth, drawn when not fixed
        let dim = self.environment.as_env().feature_dim();
        let truth = self.true_weights.clone().unwrap_or_else(|| vec![1.0; dim]);
        self.session_config(self.seed, truth).validate()
    }

    fn session_config(&self, seed: u64, truth: Vec<f64>) -> SessionConfig {
        SessionConfig {
            environment: self.environment.clone(),
            num_trajectories: self.num_trajectories,
            standardize: self.standardize,
            strategy: self.strategy,
            model: self.model,
            sampler: self.sampler,
            optimizer: self.optimizer,
            demonstrations: self.demonstrations,
            true_weights: Some(truth),
            seed,
        }
    }

    fn human_model(&self) -> ResponseModel {
        self.human.unwrap_or(self.model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub set_hash: String,
    pub true_weights: Vec<f64>,
    pub curve: Vec<CurvePoint>,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: AcquisitionKind,
    pub batch_method: Option<BatchMethod>,
    pub runs: usize,
    pub iterations: usize,
    pub final_cosine_mean: f64,
    /// Population standard deviation across runs.
    pub final_cosine_std: f64,
    pub final_cosines: Vec<f64>,
    pub set_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<RunResult>,
    pub summary: Summary,
}

/// Hex SHA-256 of the set's JSON form.
pub fn set_hash(set: &TrajectorySet) -> Result<String> {
    let bytes = serde_json::to_vec(set).map_err(|e| Error::Io(e.to_string()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Random answered queries that are never shown to the learner.
fn heldout_set(
    set: &TrajectorySet,
    config: &OptimizerConfig,
    human: &mut SimulatedHuman,
    n: usize,
    seed: u64,
) -> Result<Vec<(Query, Response)>> {
    let ids: Vec<usize> = set.ids().collect();
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let items = index::sample(&mut rng, ids.len(), config.query_size)
                .into_iter()
                .map(|i| ids[i])
                .collect();
            let q = Query::new(config.query_kind, items)?;
            let r = human.simulate_response(&q, set)?;
            Ok((q, r))
        })
        .collect()
}

/// One seeded session against a simulated human.
pub fn run_session(config: &ExperimentConfig, run: usize) -> Result<RunResult> {
    let seed = derive_seed(config.seed, "run", run as u64);
    let dim = config.environment.as_env().feature_dim();
    let truth = match &config.true_weights {
        Some(w) => Weights::normalized(w.clone())?,
        None => Weights::new(sample_unit_sphere(dim, &mut rng_from(derive_seed(seed, "truth", 0)))),
    };
    let mut session = ActiveSession::new(config.session_config(seed, truth.values.clone()))?;
    let human_model = config.human_model();
    let mut human = SimulatedHuman::new(truth.clone(), human_model, derive_seed(seed, "human", 0))?;
    let mut heldout_human = SimulatedHuman::new(truth.clone(), human_model, derive_seed(seed, "heldout", 1))?;
    let heldout = heldout_set(
        session.set(),
        &config.optimizer,
        &mut heldout_human,
        config.heldout_queries,
        derive_seed(seed, "heldout", 0),
    )?;

    let point =
        |i: usize, s: &ActiveSession| curve_point(i, s.belief(), Some(&truth), &heldout, &config.model, s.set());
    let mut curve = vec![point(0, &session)?];
    for i in 1..=config.iterations {
        match &config.batch {
            Some(spec) => {
                let queries = session.next_batch(spec.method, &spec.config())?;
                let answers = queries
                    .into_iter()
                    .map(|q| {
                        let r = human.simulate_response(&q, session.set())?;
                        Ok((q, r))
                    })
                    .collect::<Result<Vec<_>>>()?;
                session.answer_batch(&answers)?;
            }
            None => {
                let pending = session.next_query()?;
                let r = human.simulate_response(&pending.query, session.set())?;
                session.answer(Some(pending.query_id), &r)?;
            }
        }
        curve.push(point(i, &session)?);
    }
    Ok(RunResult {
        run,
        seed,
        set_hash: set_hash(session.set())?,
        true_weights: truth.values,
        curve,
        evidence: session.belief().dataset().to_vec(),
    })
}

/// All runs of one configuration. Runs execute in parallel; results are in run order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let runs = (0..config.runs)
        .into_par_iter()
        .map(|r| run_session(config, r))
        .collect::<Result<Vec<_>>>()?;
    let final_cosines: Vec<f64> = runs
        .iter()
        .map(|r| r.curve.last().and_then(|p| p.cosine).unwrap_or(f64::NAN))
        .collect();
    let (mean, std) = mean_std(&final_cosines);
    let summary = Summary {
        strategy: config.strategy,
        batch_method: config.batch.map(|b| b.method),
        runs: config.runs,
        iterations: config.iterations,
        final_cosine_mean: mean,
        final_cosine_std: std,
        final_cosines,
        set_hashes: runs.iter().map(|r| r.set_hash.clone()).collect(),
    };
    Ok(ExperimentResult { runs, summary })
}

#[derive(Serialize)]
struct CurveRow {
    run: usize,
    iteration: usize,
    cosine: Option<f64>,
    heldout_loglik: Option<f64>,
}

#[derive(Serialize)]
struct EvidenceLine<'a> {
    run: usize,
    index: usize,
    evidence: &'a Evidence,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes `curves.csv`, `summary.json` and `sessions.jsonl` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut curves = csv::Writer::from_path(dir.join("curves.csv")).map_err(csv_err)?;
    for run in &result.runs {
        for p in &run.curve {
            curves
                .serialize(CurveRow {
                    run: run.run,
                    iteration: p.iteration,
                    cosine: p.cosine,
                    heldout_loglik: p.heldout_loglik,
                })
                .map_err(csv_err)?;
        }
    }
    curves.flush()?;

    let mut summary = serde_json::to_string_pretty(&result.summary).map_err(json_err)?;
    summary.push('\n');
    fs::write(dir.join("summary.json"), summary)?;

    let mut log = std::io::BufWriter::new(fs::File::create(dir.join("sessions.jsonl"))?);
    for run in &result.runs {
        for (index, evidence) in run.evidence.iter().enumerate() {
            let line = EvidenceLine {
                run: run.run,
                index,
                evidence,
            };
            serde_json::to_writer(&mut log, &line).map_err(json_err)?;
            log.write_all(b"\n")?;
        }
    }
    log.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub strategies: Vec<AcquisitionKind>,
    /// `rows[i][s]`: mean cosine after iteration `i` for strategy `s`.
    pub rows: Vec<Vec<f64>>,
    pub summaries: Vec<Summary>,
}

/// Runs every strategy in `config.strategies` on the same run seeds, so run
/// `r` sees the same trajectory set and true weights under each strategy.
pub fn compare_strategies(config: &ExperimentConfig) -> Result<(Comparison, Vec<ExperimentResult>)> {
    if config.strategies.len() < 2 {
        return Err(Error::param(
            "strategies",
            format!("need at least 2 strategies to compare, got {}", config.strategies.len()),
        ));
    }
    let results = config
        .strategies
        .iter()
        .map(|&strategy| {
            run_experiment(&ExperimentConfig {
                strategy,
                ..config.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..=config.iterations)
        .map(|i| {
            results
                .iter()
                .map(|res| {
                    let c: Vec<f64> = res.runs.iter().map(|r| r.curve[i].cosine.unwrap_or(f64::NAN)).collect();
                    mean_std(&c).0
                })
                .collect()
        })
        .collect();
    let comparison = Comparison {
        strategies: config.strategies.clone(),
        rows,
        summaries: results.iter().map(|r| r.summary.clone()).collect(),
    };
    Ok((comparison, results))
}

/// Writes `comparison.csv`, `comparison.json`, and each strategy's outputs
/// into a subdirectory named after it.
pub fn write_comparison(comparison: &Comparison, results: &[ExperimentResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut table = csv::Writer::from_path(dir.join("comparison.csv")).map_err(csv_err)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(comparison.strategies.iter().map(|s| s.name().to_string()));
    table.write_record(&header).map_err(csv_err)?;
    for (i, row) in comparison.rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        table.write_record(&rec).map_err(csv_err)?;
    }
    table.flush()?;
    let mut json = serde_json::to_string_pretty(comparison).map_err(json_err)?;
    json.push('\n');
    fs::write(dir.join("comparison.json"), json)?;
    for (strategy, result) in comparison.strategies.iter().zip(results) {
        write_outputs(result, &dir.join(strategy.name()))?;
    }
    Ok(())
}
