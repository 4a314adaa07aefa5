//! Query acquisition strategies.
//!
//! Scoring strategies (volume removal, mutual information, random) rate a
//! candidate query against the current belief. Constructive strategies
//! (disagreement, regret, Thompson sampling) build a pairwise query directly
//! from belief samples by picking trajectories out of the pool.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::domain::{dot, make_query, Query, QueryKind, TrajectorySet};
use crate::error::{Error, Result};
use crate::human::ResponseModel;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    VolumeRemoval,
    MutualInformation,
    Disagreement,
    Regret,
    Thompson,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyClass {
    Scoring,
    Constructive,
}

impl AcquisitionKind {
    pub const ALL: [AcquisitionKind; 6] = [
        AcquisitionKind::VolumeRemoval,
        AcquisitionKind::MutualInformation,
        AcquisitionKind::Disagreement,
        AcquisitionKind::Regret,
        AcquisitionKind::Thompson,
        AcquisitionKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AcquisitionKind::VolumeRemoval => "volume_removal",
            AcquisitionKind::MutualInformation => "mutual_information",
            AcquisitionKind::Disagreement => "disagreement",
            AcquisitionKind::Regret => "regret",
            AcquisitionKind::Thompson => "thompson",
            AcquisitionKind::Random => "random",
        }
    }

    pub fn class(self) -> StrategyClass {
        match self {
            AcquisitionKind::VolumeRemoval | AcquisitionKind::MutualInformation | AcquisitionKind::Random => {
                StrategyClass::Scoring
            }
            AcquisitionKind::Disagreement | AcquisitionKind::Regret | AcquisitionKind::Thompson => {
                StrategyClass::Constructive
            }
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|k| k.name()).join(", ")
    }
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "strategy",
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// `table[m][q]` = P(response q | query, ω_m) over `query.response_space()`.
pub fn likelihood_table(
    belief: &Belief,
    query: &Query,
    model: &ResponseModel,
    set: &TrajectorySet,
) -> Result<Vec<Vec<f64>>> {
    let features = set.query_features(query)?;
    belief
        .samples()
        .iter()
        .map(|w| {
            let rewards: Vec<f64> = features.iter().map(|f| dot(w, f)).collect();
            Ok(model
                .response_log_probs(query, &rewards)?
                .into_iter()
                .map(f64::exp)
                .collect())
        })
        .collect()
}

/// `min_q (1 − P̄(q))` with `P̄` the sample-averaged answer distribution.
pub fn volume_removal_from_table(table: &[Vec<f64>]) -> f64 {
    let m = table.len() as f64;
    let responses = table.first().map_or(0, Vec::len);
    (0..responses)
        .map(|q| 1.0 - table.iter().map(|row| row[q]).sum::<f64>() / m)
        .fold(f64::INFINITY, f64::min)
}

/// Sample estimate of I(response; ω) in bits.
pub fn mutual_information_from_table(table: &[Vec<f64>]) -> f64 {
    let m = table.len() as f64;
    let responses = table.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for q in 0..responses {
        let column: f64 = table.iter().map(|row| row[q]).sum();
        if column <= 0.0 {
            continue;
        }
        for row in table {
            let p = row[q];
            if p > 0.0 {
                total += p * (m * p / column).log2();
            }
        }
    }
    total / m
}

pub fn score_volume_removal(belief: &Belief, query: &Query, model: &ResponseModel, set: &TrajectorySet) -> Result<f64> {
    Ok(volume_removal_from_table(&likelihood_table(belief, query, model, set)?))
}

pub fn score_mutual_information(
    belief: &Belief,
    query: &Query,
    model: &ResponseModel,
    set: &TrajectorySet,
) -> Result<f64> {
    Ok(mutual_information_from_table(&likelihood_table(
        belief, query, model, set,
    )?))
}

/// Uniform `[0, 1)` baseline score.
pub fn score_random<R: Rng>(rng: &mut R) -> f64 {
    rng.random()
}

/// Sample index pairs `(a, b)`, `a ≠ b`: every unordered pair when
/// `M² ≤ 400`, otherwise `pair_budget` seeded draws.
fn sample_pairs(m: usize, pair_budget: usize, seed: u64) -> Vec<(usize, usize)> {
    if m * m <= 400 {
        return (0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b))).collect();
    }
    let mut rng = rng_from(seed);
    (0..pair_budget)
        .map(|_| {
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            (a, b)
        })
        .collect()
}

fn check_pairwise(set: &TrajectorySet) -> Result<()> {
    if set.len() < 2 {
        return Err(Error::param(
            "set",
            "constructive strategies need at least 2 trajectories",
        ));
    }
    Ok(())
}

/// Seeded random distinct pair, used when no sample pair disagrees.
fn random_pair_query(kind: QueryKind, set: &TrajectorySet, seed: u64) -> Result<Query> {
    let mut rng = rng_from(seed ^ 0xA5A5_A5A5);
    let ids: Vec<usize> = set.ids().collect();
    let chosen: Vec<usize> = ids.choose_multiple(&mut rng, 2).copied().collect();
    make_query(kind, &chosen, set)
}

/// Shared pair scan for disagreement and regret: returns the best-scoring
/// pair of distinct sample optima, or a random fallback query.
fn construct_from_pairs<F>(
    belief: &Belief,
    set: &TrajectorySet,
    kind: QueryKind,
    pair_budget: usize,
    seed: u64,
    score: F,
) -> Result<Query>
where
    F: Fn(&[f64], &[f64], &[f64], &[f64]) -> f64,
{
    check_pairwise(set)?;
    let samples = belief.samples();
    let optima: Vec<usize> = samples.iter().map(|w| set.best_under(w).id).collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for (a, b) in sample_pairs(samples.len(), pair_budget, seed) {
        let (ta, tb) = (optima[a], optima[b]);
        if ta == tb {
            continue;
        }
        let fa = &set.get(ta).expect("optimum from set").features;
        let fb = &set.get(tb).expect("optimum from set").features;
        let s = score(&samples[a], &samples[b], fa, fb);
        if best.is_none_or(|(bs, _, _)| s > bs) {
            best = Some((s, ta, tb));
        }
    }
    match best {
        Some((_, ta, tb)) => make_query(kind, &[ta, tb], set),
        None => random_pair_query(kind, set, seed),
    }
}

fn gap(w: &[f64], own: &[f64], other: &[f64]) -> f64 {
    dot(w, own) - dot(w, other)
}

/// Disagreement between two samples' optimal trajectories:
/// `ω_a⊤(Φ_a* − Φ_b*) + ω_b⊤(Φ_b* − Φ_a*)`.
pub fn disagreement(wa: &[f64], wb: &[f64], fa: &[f64], fb: &[f64]) -> f64 {
    gap(wa, fa, fb) + gap(wb, fb, fa)
}

/// Worst-case regret of deploying the other sample's optimum.
pub fn regret(wa: &[f64], wb: &[f64], fa: &[f64], fb: &[f64]) -> f64 {
    gap(wa, fa, fb).max(gap(wb, fb, fa))
}

pub fn construct_disagreement_query(
    belief: &Belief,
    set: &TrajectorySet,
    kind: QueryKind,
    pair_budget: usize,
    seed: u64,
) -> Result<Query> {
    construct_from_pairs(belief, set, kind, pair_budget, seed, disagreement)
}

pub fn construct_regret_query(
    belief: &Belief,
    set: &TrajectorySet,
    kind: QueryKind,
    pair_budget: usize,
    seed: u64,
) -> Result<Query> {
    construct_from_pairs(belief, set, kind, pair_budget, seed, regret)
}

/// Optima of two independently drawn samples; after `max_retries` identical
/// redraws, pairs the first sample's best and second-best trajectories.
pub fn construct_thompson_query(
    belief: &Belief,
    set: &TrajectorySet,
    kind: QueryKind,
    max_retries: usize,
    seed: u64,
) -> Result<Query> {
    check_pairwise(set)?;
    let samples = belief.samples();
    let mut rng = rng_from(seed);
    let mut first = &samples[0];
    for _ in 0..=max_retries {
        first = &samples[rng.random_range(0..samples.len())];
        let second = &samples[rng.random_range(0..samples.len())];
        let (ta, tb) = (set.best_under(first).id, set.best_under(second).id);
        if ta != tb {
            return make_query(kind, &[ta, tb], set);
        }
    }
    let best = set.best_under(first).id;
    let runner_up = set.best_excluding(first, Some(best)).id;
    make_query(kind, &[best, runner_up], set)
}
