//! Human response models and a simulated human.
//!
//! All likelihoods are computed in log space; the probability-returning
//! functions are exponentiated views of the same computation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    dot, is_permutation, validate_response, Demonstration, Query, QueryKind, Response, TrajectorySet, WeakChoice,
    Weights,
};
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln σ(x)` for the logistic σ.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A likelihood over the responses to one query kind, given item rewards.
pub trait ResponseLikelihood {
    fn log_prob(&self, rewards: &[f64], response: &Response) -> Result<f64>;
}

/// Boltzmann choice of the single best item.
#[derive(Debug, Clone, Copy)]
pub struct Softmax {
    pub beta: f64,
}

impl ResponseLikelihood for Softmax {
    fn log_prob(&self, rewards: &[f64], response: &Response) -> Result<f64> {
        let Response::Preference { chosen } = response else {
            return Err(Error::InvalidResponse(format!(
                "expected a preference, got {}",
                response.kind()
            )));
        };
        let scaled: Vec<f64> = rewards.iter().map(|r| self.beta * r).collect();
        let x = scaled
            .get(*chosen)
            .ok_or_else(|| Error::InvalidResponse(format!("chosen index {chosen} out of range")))?;
        Ok(x - log_sum_exp(&scaled))
    }
}

/// Pairwise comparison with an "about equal" band of half-width `delta`:
/// `P(first) = σ(x − δ)`, `P(second) = σ(−x − δ)` with `x = β(R₁ − R₂)`.
#[derive(Debug, Clone, Copy)]
pub struct WeakThreshold {
    pub beta: f64,
    pub delta: f64,
}

impl WeakThreshold {
    fn log_equal(&self, x: f64) -> f64 {
        if self.delta == 0.0 {
            return f64::NEG_INFINITY;
        }
        // σ(a+δ) − σ(a−δ) = 2 e^{−a} sinh δ / ((1 + e^{δ−a})(1 + e^{−a−δ})), a = |x|
        let a = x.abs();
        let d = self.delta;
        let ln_sinh = d + (-(-2.0 * d).exp()).ln_1p() - std::f64::consts::LN_2;
        std::f64::consts::LN_2 - a + ln_sinh - softplus(d - a) - softplus(-a - d)
    }
}

impl ResponseLikelihood for WeakThreshold {
    fn log_prob(&self, rewards: &[f64], response: &Response) -> Result<f64> {
        let Response::WeakComparison { choice } = response else {
            return Err(Error::InvalidResponse(format!(
                "expected a weak comparison, got {}",
                response.kind()
            )));
        };
        if rewards.len() != 2 {
            return Err(Error::Arity(format!(
                "weak comparisons take 2 rewards, got {}",
                rewards.len()
            )));
        }
        if self.delta < 0.0 {
            return Err(Error::param("equality_threshold", "must be non-negative"));
        }
        let x = self.beta * (rewards[0] - rewards[1]);
        Ok(match choice {
            WeakChoice::First => log_sigmoid(x - self.delta),
            WeakChoice::Second => log_sigmoid(-x - self.delta),
            WeakChoice::Equal => self.log_equal(x),
        })
    }
}

/// Plackett–Luce over a full ranking: a product of softmax stages.
#[derive(Debug, Clone, Copy)]
pub struct PlackettLuce {
    pub beta: f64,
}

impl ResponseLikelihood for PlackettLuce {
    fn log_prob(&self, rewards: &[f64], response: &Response) -> Result<f64> {
        let Response::Ranking { order } = response else {
            return Err(Error::InvalidResponse(format!(
                "expected a ranking, got {}",
                response.kind()
            )));
        };
        if !is_permutation(order, rewards.len()) {
            return Err(Error::InvalidResponse(format!(
                "{order:?} is not a permutation of 0..{}",
                rewards.len()
            )));
        }
        let scaled: Vec<f64> = order.iter().map(|&i| self.beta * rewards[i]).collect();
        Ok((0..scaled.len().saturating_sub(1))
            .map(|k| scaled[k] - log_sum_exp(&scaled[k..]))
            .sum())
    }
}

/// Parameters of the assumed human: rationality `β`, equality threshold `δ`
/// for weak comparisons and demonstration rationality `β_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResponseModel {
    pub rationality: f64,
    pub equality_threshold: f64,
    pub demo_rationality: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        ResponseModel {
            rationality: 1.0,
            equality_threshold: 1.0,
            demo_rationality: 1.0,
        }
    }
}

impl ResponseModel {
    pub fn new(rationality: f64, equality_threshold: f64, demo_rationality: f64) -> Result<Self> {
        let m = ResponseModel {
            rationality,
            equality_threshold,
            demo_rationality,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rationality > 0.0) {
            return Err(Error::param("rationality", "must be positive"));
        }
        if !(self.demo_rationality > 0.0) {
            return Err(Error::param("demo_rationality", "must be positive"));
        }
        if !(self.equality_threshold >= 0.0) || !self.equality_threshold.is_finite() {
            return Err(Error::param("equality_threshold", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Log-probability of `response` given the rewards of the query's items.
    pub fn log_likelihood(&self, kind: QueryKind, rewards: &[f64], response: &Response) -> Result<f64> {
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("reward {r}")));
        }
        match kind {
            QueryKind::Preference => Softmax { beta: self.rationality }.log_prob(rewards, response),
            QueryKind::WeakComparison => WeakThreshold {
                beta: self.rationality,
                delta: self.equality_threshold,
            }
            .log_prob(rewards, response),
            QueryKind::Ranking => PlackettLuce { beta: self.rationality }.log_prob(rewards, response),
        }
    }

    /// Log-probabilities over `query.response_space()`, in that order.
    pub fn response_log_probs(&self, query: &Query, rewards: &[f64]) -> Result<Vec<f64>> {
        query
            .response_space()
            .iter()
            .map(|r| self.log_likelihood(query.kind, rewards, r))
            .collect()
    }

    /// Boltzmann probability of a demonstration against the trajectory pool
    /// (plus the demonstration itself when it is not already a pool member).
    pub fn demonstration_log_likelihood(
        &self,
        weights: &[f64],
        demo: &Demonstration,
        set: &TrajectorySet,
    ) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::param("set", "demonstration likelihood needs a non-empty pool"));
        }
        if demo.trajectory.dim() != set.dim() || weights.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                actual: if weights.len() != set.dim() {
                    weights.len()
                } else {
                    demo.trajectory.dim()
                },
            });
        }
        let beta = self.demo_rationality;
        let demo_score = beta * dot(weights, &demo.trajectory.features);
        let mut scores: Vec<f64> = set.rewards(weights).into_iter().map(|r| beta * r).collect();
        let in_pool = set
            .get(demo.trajectory.id)
            .is_some_and(|t| t.features == demo.trajectory.features);
        if !in_pool {
            scores.push(demo_score);
        }
        Ok(demo_score - log_sum_exp(&scores))
    }
}

fn query_rewards(weights: &Weights, query: &Query, set: &TrajectorySet) -> Result<Vec<f64>> {
    let feats = set.query_features(query)?;
    feats
        .iter()
        .map(|f| {
            if f.len() != weights.dim() {
                return Err(Error::DimensionMismatch {
                    expected: weights.dim(),
                    actual: f.len(),
                });
            }
            Ok(dot(&weights.values, f))
        })
        .collect()
}

fn require_kind(query: &Query, kind: QueryKind) -> Result<()> {
    if query.kind != kind {
        return Err(Error::InvalidResponse(format!(
            "expected a {kind} query, got {}",
            query.kind
        )));
    }
    Ok(())
}

pub fn preference_likelihood(
    model: &ResponseModel,
    weights: &Weights,
    query: &Query,
    chosen: usize,
    set: &TrajectorySet,
) -> Result<f64> {
    require_kind(query, QueryKind::Preference)?;
    let rewards = query_rewards(weights, query, set)?;
    let lp = model.log_likelihood(query.kind, &rewards, &Response::Preference { chosen })?;
    Ok(lp.exp())
}

pub fn weak_comparison_likelihood(
    model: &ResponseModel,
    weights: &Weights,
    query: &Query,
    choice: WeakChoice,
    set: &TrajectorySet,
) -> Result<f64> {
    require_kind(query, QueryKind::WeakComparison)?;
    if model.equality_threshold < 0.0 {
        return Err(Error::param("equality_threshold", "must be non-negative"));
    }
    let rewards = query_rewards(weights, query, set)?;
    let lp = model.log_likelihood(query.kind, &rewards, &Response::WeakComparison { choice })?;
    Ok(lp.exp())
}

pub fn ranking_likelihood(
    model: &ResponseModel,
    weights: &Weights,
    query: &Query,
    order: &[usize],
    set: &TrajectorySet,
) -> Result<f64> {
    require_kind(query, QueryKind::Ranking)?;
    let rewards = query_rewards(weights, query, set)?;
    let lp = model.log_likelihood(query.kind, &rewards, &Response::Ranking { order: order.to_vec() })?;
    Ok(lp.exp())
}

pub fn demonstration_likelihood(
    model: &ResponseModel,
    weights: &Weights,
    demo: &Demonstration,
    set: &TrajectorySet,
) -> Result<f64> {
    Ok(model.demonstration_log_likelihood(&weights.values, demo, set)?.exp())
}

/// Answers queries by sampling from the response model under hidden true weights.
#[derive(Debug, Clone)]
pub struct SimulatedHuman {
    true_weights: Weights,
    model: ResponseModel,
    rng: ChaCha8Rng,
}

impl SimulatedHuman {
    pub fn new(true_weights: Weights, model: ResponseModel, seed: u64) -> Result<Self> {
        if !true_weights.is_normalized() {
            return Err(Error::NotNormalized(true_weights.norm()));
        }
        model.validate()?;
        Ok(SimulatedHuman {
            true_weights,
            model,
            rng: rng_from(seed),
        })
    }

    pub fn true_weights(&self) -> &Weights {
        &self.true_weights
    }

    pub fn model(&self) -> &ResponseModel {
        &self.model
    }

    pub fn simulate_response(&mut self, query: &Query, set: &TrajectorySet) -> Result<Response> {
        let rewards = query_rewards(&self.true_weights, query, set)?;
        let response = match query.kind {
            QueryKind::Preference | QueryKind::WeakComparison => {
                let log_probs = self.model.response_log_probs(query, &rewards)?;
                let idx = sample_categorical(&log_probs, &mut self.rng);
                query.response_space().swap_remove(idx)
            }
            QueryKind::Ranking => {
                let mut remaining: Vec<usize> = (0..query.len()).collect();
                let mut order = Vec::with_capacity(query.len());
                while remaining.len() > 1 {
                    let scores: Vec<f64> = remaining.iter().map(|&i| self.model.rationality * rewards[i]).collect();
                    let lse = log_sum_exp(&scores);
                    let log_probs: Vec<f64> = scores.iter().map(|s| s - lse).collect();
                    let pick = sample_categorical(&log_probs, &mut self.rng);
                    order.push(remaining.remove(pick));
                }
                order.extend(remaining);
                Response::Ranking { order }
            }
        };
        validate_response(query, &response)?;
        Ok(response)
    }
}

/// Inverse-CDF draw from a categorical given log-probabilities.
fn sample_categorical<R: Rng>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    log_probs
        .iter()
        .rposition(|lp| *lp > f64::NEG_INFINITY)
        .unwrap_or(log_probs.len() - 1)
}
