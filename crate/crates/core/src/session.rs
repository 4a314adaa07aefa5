//! A single elicitation session: trajectory pool, belief, and the
//! ask/answer loop. Shared by the experiment runner and the HTTP service so
//! both paths produce identical beliefs for identical seeds and answers.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionKind;
use crate::assess::cosine_similarity;
use crate::batch::{BatchConfig, BatchMethod};
use crate::belief::{Belief, SamplerConfig};
use crate::domain::{
    validate_response, Demonstration, Query, QueryKind, RenderRecord, Response, TrajectorySet, Weights,
};
use crate::envs::{standardize, EnvConfig, SyntheticEnv};
use crate::error::{Error, Result};
use crate::human::ResponseModel;
use crate::optimizer::{next_batch, next_query, OptimizerConfig};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub count: usize,
    /// Demonstrations are drawn from this top percentage of the pool under
    /// the true weights.
    pub top_percent: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            count: 1,
            top_percent: 5.0,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_percent > 0.0 && self.top_percent <= 100.0) {
            return Err(Error::param("demonstrations.top_percent", "must lie in (0, 100]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub environment: EnvConfig,
    pub num_trajectories: usize,
    /// Standardize features to zero mean, unit variance across the pool.
    pub standardize: bool,
    pub strategy: AcquisitionKind,
    /// The learner's response model.
    pub model: ResponseModel,
    /// `seed` is replaced by a value derived from the session seed.
    pub sampler: SamplerConfig,
    /// `seed` is replaced per round by a value derived from the session seed.
    pub optimizer: OptimizerConfig,
    /// Synthesized from the pool's best trajectories; needs `true_weights`.
    pub demonstrations: Option<DemoConfig>,
    /// Ground truth, when known; rescaled to unit norm.
    pub true_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            environment: EnvConfig::Synthetic(SyntheticEnv { dim: 3 }),
            num_trajectories: 100,
            standardize: false,
            strategy: AcquisitionKind::MutualInformation,
            model: ResponseModel::default(),
            sampler: SamplerConfig::default(),
            optimizer: OptimizerConfig::default(),
            demonstrations: None,
            true_weights: None,
            seed: 0,
        }
    }
}

impl SessionConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: SessionConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.sampler.validate()?;
        self.optimizer.validate()?;
        if let Some(d) = &self.demonstrations {
            d.validate()?;
            if d.count > 0 && self.true_weights.is_none() {
                return Err(Error::param(
                    "demonstrations",
                    "synthesized demonstrations need true_weights",
                ));
            }
        }
        let dim = self.environment.as_env().feature_dim();
        if let Some(w) = &self.true_weights {
            if w.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: w.len(),
                });
            }
        }
        if self.optimizer.query_size > self.num_trajectories {
            return Err(Error::param(
                "optimizer.query_size",
                format!(
                    "K = {} exceeds num_trajectories = {}",
                    self.optimizer.query_size, self.num_trajectories
                ),
            ));
        }
        Ok(())
    }
}

/// The `count` demonstrations, drawn without replacement from the
/// top-`top_percent` trajectories under `truth` (at least `count` of them).
pub fn synthesize_demonstrations(
    set: &TrajectorySet,
    truth: &Weights,
    config: &DemoConfig,
    seed: u64,
) -> Result<Vec<Demonstration>> {
    config.validate()?;
    if config.count > set.len() {
        return Err(Error::param(
            "demonstrations.count",
            format!("{} exceeds the pool size {}", config.count, set.len()),
        ));
    }
    if config.count == 0 {
        return Ok(Vec::new());
    }
    let rewards = set.rewards(truth.as_slice());
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| {
        rewards[b]
            .total_cmp(&rewards[a])
            .then(set.trajectories()[a].id.cmp(&set.trajectories()[b].id))
    });
    let top = ((config.top_percent / 100.0 * set.len() as f64).ceil() as usize)
        .max(config.count)
        .min(set.len());
    let mut rng = rng_from(seed);
    let mut picks = index::sample(&mut rng, top, config.count).into_vec();
    picks.sort_unstable();
    Ok(picks
        .into_iter()
        .map(|p| Demonstration {
            trajectory: set.trajectories()[order[p]].clone(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub query_id: u64,
    pub query: Query,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryItem {
    pub id: usize,
    pub features: Vec<f64>,
    pub render: Option<Vec<RenderRecord>>,
}

/// What a client needs to show a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub query_id: u64,
    pub iteration: usize,
    pub kind: QueryKind,
    pub items: Vec<QueryItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub iteration: usize,
    pub evidence_count: usize,
    pub num_samples: usize,
    /// Normalized sample mean; `None` when the samples cancel out.
    pub mean: Option<Vec<f64>>,
    pub marginals: Vec<Marginal>,
    pub acceptance_rate: Option<f64>,
    /// Cosine between `mean` and the true weights, when both exist.
    pub cosine: Option<f64>,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ActiveSession {
    config: SessionConfig,
    set: TrajectorySet,
    truth: Option<Weights>,
    belief: Belief,
    pending: Option<PendingQuery>,
    iteration: usize,
    issued: u64,
}

impl ActiveSession {
    pub fn new(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let raw = config
            .environment
            .as_env()
            .generate_trajectory_set(config.num_trajectories, derive_seed(seed, "trajectories", 0))?;
        let set = if config.standardize { standardize(&raw)? } else { raw };
        let truth = config
            .true_weights
            .as_ref()
            .map(|w| Weights::normalized(w.clone()))
            .transpose()?;
        let demos = match (&config.demonstrations, &truth) {
            (Some(d), Some(t)) => synthesize_demonstrations(&set, t, d, derive_seed(seed, "demos", 0))?,
            _ => Vec::new(),
        };
        let sampler = SamplerConfig {
            seed: derive_seed(seed, "belief", 0),
            ..config.sampler
        };
        let belief = Belief::init_prior(set.dim(), &demos, &set, &config.model, sampler)?;
        Ok(ActiveSession {
            config,
            set,
            truth,
            belief,
            pending: None,
            iteration: 0,
            issued: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn set(&self) -> &TrajectorySet {
        &self.set
    }

    pub fn truth(&self) -> Option<&Weights> {
        self.truth.as_ref()
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn pending(&self) -> Option<&PendingQuery> {
        self.pending.as_ref()
    }

    /// Accepted responses so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn round_config(&self, stream: &str) -> OptimizerConfig {
        self.config
            .optimizer
            .with_seed(derive_seed(self.config.seed, stream, self.iteration as u64))
    }

    /// The pending query, choosing a new one only when none is outstanding.
    pub fn next_query(&mut self) -> Result<PendingQuery> {
        if let Some(p) = &self.pending {
            return Ok(p.clone());
        }
        let query = next_query(
            &self.belief,
            self.config.strategy,
            &self.set,
            &self.config.model,
            &self.round_config("query"),
        )?;
        self.issued += 1;
        let pending = PendingQuery {
            query_id: self.issued,
            query,
        };
        self.pending = Some(pending.clone());
        Ok(pending)
    }

    /// Answers the pending query. When `query_id` is given it must match.
    /// The pending query survives a rejected response.
    pub fn answer(&mut self, query_id: Option<u64>, response: &Response) -> Result<()> {
        let Some(pending) = &self.pending else {
            return Err(Error::Conflict("no pending query".into()));
        };
        if let Some(id) = query_id {
            if id != pending.query_id {
                return Err(Error::Conflict(format!(
                    "query {id} is not pending (pending: {})",
                    pending.query_id
                )));
            }
        }
        validate_response(&pending.query, response)?;
        self.belief = self
            .belief
            .update(&pending.query, response, &self.config.model, &self.set)?;
        self.pending = None;
        self.iteration += 1;
        Ok(())
    }

    /// A batch of queries for the current round. Does not touch the pending query.
    pub fn next_batch(&self, method: BatchMethod, batch: &BatchConfig) -> Result<Vec<Query>> {
        let batch = BatchConfig {
            seed: derive_seed(self.config.seed, "batch", self.iteration as u64),
            ..*batch
        };
        next_batch(
            &self.belief,
            self.config.strategy,
            method,
            &self.set,
            &self.config.model,
            &self.round_config("query"),
            &batch,
        )
    }

    /// Folds several answers into the belief with a single refit.
    pub fn answer_batch(&mut self, answers: &[(Query, Response)]) -> Result<()> {
        if self.pending.is_some() {
            return Err(Error::Conflict("a single query is pending".into()));
        }
        self.belief = self.belief.update_many(answers, &self.config.model, &self.set)?;
        self.iteration += answers.len();
        Ok(())
    }

    pub fn payload(&self, pending: &PendingQuery) -> Result<QueryPayload> {
        let items = pending
            .query
            .items
            .iter()
            .map(|&id| {
                let t = self.set.get(id).ok_or(Error::UnknownId(id))?;
                Ok(QueryItem {
                    id,
                    features: t.features.clone(),
                    render: t.render.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QueryPayload {
            query_id: pending.query_id,
            iteration: self.iteration,
            kind: pending.query.kind,
            items,
        })
    }

    pub fn summary(&self) -> Result<BeliefSummary> {
        let samples = self.belief.samples();
        let m = samples.len() as f64;
        let marginals = (0..self.belief.dim())
            .map(|j| {
                let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
                let mean = col.iter().sum::<f64>() / m;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                Marginal {
                    mean,
                    std: var.sqrt(),
                    min: col.iter().copied().fold(f64::INFINITY, f64::min),
                    max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        let mean = match self.belief.mean_weights() {
            Ok(w) => Some(w),
            Err(Error::DegenerateMean(_)) => None,
            Err(e) => return Err(e),
        };
        let cosine = match (&mean, &self.truth) {
            (Some(m), Some(t)) => Some(cosine_similarity(m, t)?),
            _ => None,
        };
        Ok(BeliefSummary {
            iteration: self.iteration,
            evidence_count: self.belief.dataset().len(),
            num_samples: samples.len(),
            mean: mean.map(|w| w.values),
            marginals,
            acceptance_rate: self.belief.acceptance_rate(),
            cosine,
            samples: samples.to_vec(),
        })
    }
}
