//! Query selection over a finite trajectory set.

use std::collections::HashSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    construct_disagreement_query, construct_regret_query, construct_thompson_query, likelihood_table,
    mutual_information_from_table, score_random, volume_removal_from_table, AcquisitionKind, StrategyClass,
};
use crate::batch::{select_batch, BatchConfig, BatchMethod, ScoredQuery};
use crate::belief::Belief;
use crate::domain::{Query, QueryKind, TrajectorySet};
use crate::error::{Error, Result};
use crate::human::ResponseModel;
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Trajectories per query (`K`).
    pub query_size: usize,
    pub query_kind: QueryKind,
    pub num_candidates: usize,
    /// Enumerate every `K`-subset when there are at most this many.
    pub exhaustive_threshold: usize,
    pub pair_budget: usize,
    pub thompson_retries: usize,
    /// Score candidates on the rayon pool. Output is identical either way.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            query_size: 2,
            query_kind: QueryKind::Preference,
            num_candidates: 100,
            exhaustive_threshold: 500,
            pair_budget: 200,
            thompson_retries: 10,
            parallel: true,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.query_size < 2 {
            return Err(Error::param("query_size", "K must be at least 2"));
        }
        if self.query_kind == QueryKind::WeakComparison && self.query_size != 2 {
            return Err(Error::param("query_size", "weak comparison queries need K = 2"));
        }
        if self.num_candidates < 1 {
            return Err(Error::param("num_candidates", "must be at least 1"));
        }
        if self.pair_budget < 1 {
            return Err(Error::param("pair_budget", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn lexicographic_subsets(ids: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = ids.len();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| ids[i]).collect());
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            return out;
        };
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// Candidate queries for one iteration: every `K`-subset in lexicographic id
/// order when that space is small, otherwise `num_candidates` distinct seeded
/// subsets (each with ascending ids).
pub fn candidate_queries(set: &TrajectorySet, config: &OptimizerConfig) -> Result<Vec<Query>> {
    config.validate()?;
    let k = config.query_size;
    if set.len() < k {
        return Err(Error::param(
            "query_size",
            format!("K = {k} exceeds the {} trajectories in the set", set.len()),
        ));
    }
    let mut ids: Vec<usize> = set.ids().collect();
    ids.sort_unstable();
    let space = binomial(ids.len(), k);
    let subsets = if space <= config.exhaustive_threshold as u128 {
        lexicographic_subsets(&ids, k)
    } else {
        let want = (config.num_candidates as u128).min(space) as usize;
        let mut rng = rng_from(derive_seed(config.seed, "candidates", 0));
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let mut pick: Vec<usize> = index::sample(&mut rng, ids.len(), k)
                .into_iter()
                .map(|i| ids[i])
                .collect();
            pick.sort_unstable();
            if seen.insert(pick.clone()) {
                out.push(pick);
            }
        }
        out
    };
    subsets
        .into_iter()
        .map(|items| Query::new(config.query_kind, items))
        .collect()
}

/// Acquisition values for a scoring strategy, in candidate order.
pub fn score_candidates(
    belief: &Belief,
    strategy: AcquisitionKind,
    candidates: &[Query],
    set: &TrajectorySet,
    model: &ResponseModel,
    config: &OptimizerConfig,
) -> Result<Vec<f64>> {
    let table_score: fn(&[Vec<f64>]) -> f64 = match strategy {
        AcquisitionKind::VolumeRemoval => volume_removal_from_table,
        AcquisitionKind::MutualInformation => mutual_information_from_table,
        AcquisitionKind::Random => {
            let mut rng = rng_from(derive_seed(config.seed, "random_scores", 0));
            return Ok(candidates.iter().map(|_| score_random(&mut rng)).collect());
        }
        other => {
            return Err(Error::Unsupported(format!(
                "`{other}` constructs queries and does not score candidates"
            )))
        }
    };
    let score = |q: &Query| likelihood_table(belief, q, model, set).map(|t| table_score(&t));
    if config.parallel {
        candidates.par_iter().map(score).collect()
    } else {
        candidates.iter().map(score).collect()
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// The next query to ask under `strategy`.
pub fn next_query(
    belief: &Belief,
    strategy: AcquisitionKind,
    set: &TrajectorySet,
    model: &ResponseModel,
    config: &OptimizerConfig,
) -> Result<Query> {
    config.validate()?;
    let constructive = |q: Result<Query>| -> Result<Query> {
        if config.query_size != 2 {
            return Err(Error::Unsupported(format!(
                "`{strategy}` builds pairwise queries; query_size must be 2"
            )));
        }
        q
    };
    match strategy {
        AcquisitionKind::Disagreement => constructive(construct_disagreement_query(
            belief,
            set,
            config.query_kind,
            config.pair_budget,
            config.seed,
        )),
        AcquisitionKind::Regret => constructive(construct_regret_query(
            belief,
            set,
            config.query_kind,
            config.pair_budget,
            config.seed,
        )),
        AcquisitionKind::Thompson => constructive(construct_thompson_query(
            belief,
            set,
            config.query_kind,
            config.thompson_retries,
            config.seed,
        )),
        _ => {
            let candidates = candidate_queries(set, config)?;
            let scores = score_candidates(belief, strategy, &candidates, set, model, config)?;
            let best = argmax(&scores);
            Ok(candidates.into_iter().nth(best).expect("non-empty candidates"))
        }
    }
}

/// Scored and embedded candidates, ready for batch selection.
pub fn scored_candidates(
    belief: &Belief,
    strategy: AcquisitionKind,
    set: &TrajectorySet,
    model: &ResponseModel,
    config: &OptimizerConfig,
) -> Result<Vec<ScoredQuery>> {
    let candidates = candidate_queries(set, config)?;
    let scores = score_candidates(belief, strategy, &candidates, set, model, config)?;
    candidates
        .into_iter()
        .zip(scores)
        .map(|(q, s)| ScoredQuery::new(q, s, set))
        .collect()
}

/// `b` queries chosen jointly by `method` from the scored candidates.
pub fn next_batch(
    belief: &Belief,
    strategy: AcquisitionKind,
    method: BatchMethod,
    set: &TrajectorySet,
    model: &ResponseModel,
    config: &OptimizerConfig,
    batch: &BatchConfig,
) -> Result<Vec<Query>> {
    if strategy.class() == StrategyClass::Constructive {
        return Err(Error::Unsupported(format!(
            "`{strategy}` yields one query at a time and cannot be batched; use one of \
             volume_removal, mutual_information, random"
        )));
    }
    batch.validate()?;
    let scored = scored_candidates(belief, strategy, set, model, config)?;
    if batch.batch_size > scored.len() {
        return Err(Error::param(
            "batch_size",
            format!(
                "b = {} exceeds the {} candidate queries",
                batch.batch_size,
                scored.len()
            ),
        ));
    }
    let chosen = select_batch(method, &scored, batch)?;
    Ok(chosen.into_iter().map(|i| scored[i].query.clone()).collect())
}
