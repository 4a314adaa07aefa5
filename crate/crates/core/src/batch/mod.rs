//! Batch selection over scored candidate queries.
//!
//! Every method returns indices into the candidate list, ordered by score
//! (highest first, ties by lower index). All but `greedy` first reduce the
//! candidates to the top `B` by score and then pick `b` mutually diverse
//! queries from that reduced set.

mod dpp;
mod hull;
mod kmedoids;

pub use dpp::{build_kernel, greedy_map, log_det, median_distance, DIAG_JITTER};
pub use hull::{convex_hull, pca_2d};
pub use kmedoids::{kmedoids, Clustering};

use serde::{Deserialize, Serialize};

use crate::domain::{l2_norm, Query, TrajectorySet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredQuery {
    pub query: Query,
    pub score: f64,
    pub embed: Vec<f64>,
}

impl ScoredQuery {
    pub fn new(query: Query, score: f64, set: &TrajectorySet) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("acquisition score {score}")));
        }
        let embed = query_embedding(&query, set)?;
        Ok(ScoredQuery { query, score, embed })
    }
}

/// `Φ(ξ₁) − Φ(ξ₂)`, flipped so that its first nonzero coordinate is positive.
pub fn query_embedding(query: &Query, set: &TrajectorySet) -> Result<Vec<f64>> {
    if query.len() != 2 {
        return Err(Error::Unsupported(format!(
            "batch selection supports pairwise queries only, got K = {}",
            query.len()
        )));
    }
    let feats = set.query_features(query)?;
    let mut v: Vec<f64> = feats[0].iter().zip(feats[1]).map(|(a, b)| a - b).collect();
    if v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(v)
}

pub fn query_distance(a: &ScoredQuery, b: &ScoredQuery) -> Result<f64> {
    if a.embed.len() != b.embed.len() {
        return Err(Error::DimensionMismatch {
            expected: a.embed.len(),
            actual: b.embed.len(),
        });
    }
    let diff: Vec<f64> = a.embed.iter().zip(&b.embed).map(|(x, y)| x - y).collect();
    Ok(l2_norm(&diff))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMethod {
    Greedy,
    Medoids,
    BoundaryMedoids,
    SuccessiveElimination,
    Dpp,
}

impl BatchMethod {
    pub const ALL: [BatchMethod; 5] = [
        BatchMethod::Greedy,
        BatchMethod::Medoids,
        BatchMethod::BoundaryMedoids,
        BatchMethod::SuccessiveElimination,
        BatchMethod::Dpp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BatchMethod::Greedy => "greedy",
            BatchMethod::Medoids => "medoids",
            BatchMethod::BoundaryMedoids => "boundary_medoids",
            BatchMethod::SuccessiveElimination => "successive_elimination",
            BatchMethod::Dpp => "dpp",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|m| m.name()).join(", ")
    }
}

impl std::fmt::Display for BatchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BatchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "batch method",
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    /// `b`: queries per batch.
    pub batch_size: usize,
    /// `B`: size of the top-scoring reduced set; defaults to `10·b`
    /// (capped at the candidate count).
    pub reduced_size: Option<usize>,
    /// Kernel bandwidth; defaults to the median pairwise distance of the reduced set.
    pub dpp_sigma: Option<f64>,
    pub dpp_gamma: f64,
    pub kmedoids_iters: usize,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            batch_size: 5,
            reduced_size: None,
            dpp_sigma: None,
            dpp_gamma: 1.0,
            kmedoids_iters: 100,
            seed: 0,
        }
    }
}

impl BatchConfig {
    pub fn with_sizes(batch_size: usize, reduced_size: usize) -> Self {
        BatchConfig {
            batch_size,
            reduced_size: Some(reduced_size),
            ..Default::default()
        }
    }

    /// Checks the candidate-independent constraints.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::param("batch_size", "b must be at least 1"));
        }
        if let Some(big) = self.reduced_size {
            if self.batch_size > big {
                return Err(Error::param(
                    "reduced_size",
                    format!("b ≤ B violated: b = {}, B = {big}", self.batch_size),
                ));
            }
        }
        if let Some(s) = self.dpp_sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::param("dpp_sigma", "must be positive and finite"));
            }
        }
        if !(self.dpp_gamma >= 0.0) || !self.dpp_gamma.is_finite() {
            return Err(Error::param("dpp_gamma", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Effective `B` for `n` candidates.
    pub fn reduced_for(&self, n: usize) -> Result<usize> {
        self.validate()?;
        if self.batch_size > n {
            return Err(Error::param(
                "batch_size",
                format!("b = {} exceeds the {n} available candidates", self.batch_size),
            ));
        }
        match self.reduced_size {
            Some(big) if big > n => Err(Error::param(
                "reduced_size",
                format!("B = {big} exceeds the {n} available candidates"),
            )),
            Some(big) => Ok(big),
            None => Ok((10 * self.batch_size).min(n)),
        }
    }
}

fn score_order(candidates: &[ScoredQuery], idx: &mut [usize]) {
    idx.sort_by(|&a, &b| candidates[b].score.total_cmp(&candidates[a].score).then(a.cmp(&b)));
}

fn check_candidates(candidates: &[ScoredQuery]) -> Result<()> {
    if let Some(c) = candidates.iter().find(|c| !c.score.is_finite()) {
        return Err(Error::NonFinite(format!("acquisition score {}", c.score)));
    }
    if let Some(first) = candidates.first() {
        if let Some(c) = candidates.iter().find(|c| c.embed.len() != first.embed.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.embed.len(),
                actual: c.embed.len(),
            });
        }
    }
    Ok(())
}

/// The `b` highest-scoring candidates.
pub fn select_batch_greedy(candidates: &[ScoredQuery], b: usize) -> Result<Vec<usize>> {
    if b > candidates.len() {
        return Err(Error::param(
            "batch_size",
            format!("b = {b} exceeds the {} available candidates", candidates.len()),
        ));
    }
    reduce(candidates, b)
}

/// Top-`big` candidates by score, in score order.
pub fn reduce(candidates: &[ScoredQuery], big: usize) -> Result<Vec<usize>> {
    check_candidates(candidates)?;
    if big > candidates.len() {
        return Err(Error::param(
            "reduced_size",
            format!("B = {big} exceeds the {} available candidates", candidates.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    score_order(candidates, &mut idx);
    idx.truncate(big);
    Ok(idx)
}

fn embeds(candidates: &[ScoredQuery], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| candidates[i].embed.clone()).collect()
}

fn finish(candidates: &[ScoredQuery], mut chosen: Vec<usize>) -> Vec<usize> {
    score_order(candidates, &mut chosen);
    chosen
}

/// k-medoids over the reduced set; the medoids form the batch.
pub fn select_batch_medoids(candidates: &[ScoredQuery], config: &BatchConfig) -> Result<Vec<usize>> {
    let big = config.reduced_for(candidates.len())?;
    let reduced = reduce(candidates, big)?;
    let clustering = kmedoids(
        &embeds(candidates, &reduced),
        config.batch_size,
        config.kmedoids_iters,
        config.seed,
    )?;
    let chosen = clustering.medoids.iter().map(|&m| reduced[m]).collect();
    Ok(finish(candidates, chosen))
}

/// k-medoids restricted to the vertices of the planar convex hull of the
/// reduced set (after projecting onto its top two principal components).
/// When the hull has fewer than `b` vertices, the remaining slots go to the
/// best-scoring interior members.
pub fn select_batch_boundary_medoids(candidates: &[ScoredQuery], config: &BatchConfig) -> Result<Vec<usize>> {
    let big = config.reduced_for(candidates.len())?;
    let reduced = reduce(candidates, big)?;
    let points = embeds(candidates, &reduced);
    let hull = convex_hull(&pca_2d(&points));
    let b = config.batch_size;
    let chosen: Vec<usize> = if hull.len() >= b {
        let hull_points: Vec<Vec<f64>> = hull.iter().map(|&h| points[h].clone()).collect();
        let clustering = kmedoids(&hull_points, b, config.kmedoids_iters, config.seed)?;
        clustering.medoids.iter().map(|&m| reduced[hull[m]]).collect()
    } else {
        let mut chosen: Vec<usize> = hull.iter().map(|&h| reduced[h]).collect();
        // `reduced` is already in score order
        for &r in &reduced {
            if chosen.len() == b {
                break;
            }
            if !chosen.contains(&r) {
                chosen.push(r);
            }
        }
        chosen
    };
    Ok(finish(candidates, chosen))
}

/// One elimination step: the closest pair and the member removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EliminationStep {
    pub pair: (usize, usize),
    pub distance: f64,
    pub removed: usize,
}

/// Successive elimination with its removal log.
pub fn successive_elimination_trace(
    candidates: &[ScoredQuery],
    config: &BatchConfig,
) -> Result<(Vec<usize>, Vec<EliminationStep>)> {
    let big = config.reduced_for(candidates.len())?;
    let mut alive = reduce(candidates, big)?;
    alive.sort_unstable();
    let mut steps = Vec::new();
    while alive.len() > config.batch_size {
        let mut closest: Option<(f64, usize, usize)> = None;
        for (x, &i) in alive.iter().enumerate() {
            for &j in &alive[x + 1..] {
                let d = query_distance(&candidates[i], &candidates[j])?;
                if closest.is_none_or(|(cd, _, _)| d < cd) {
                    closest = Some((d, i, j));
                }
            }
        }
        let (distance, i, j) = closest.expect("at least two alive");
        // lower score loses; on equal scores the higher index goes
        let removed = if candidates[i].score < candidates[j].score {
            i
        } else {
            j
        };
        alive.retain(|&a| a != removed);
        steps.push(EliminationStep {
            pair: (i, j),
            distance,
            removed,
        });
    }
    Ok((finish(candidates, alive), steps))
}

/// Repeatedly drops the lower-scoring member of the closest remaining pair.
pub fn select_batch_successive_elimination(candidates: &[ScoredQuery], config: &BatchConfig) -> Result<Vec<usize>> {
    successive_elimination_trace(candidates, config).map(|(s, _)| s)
}

/// Greedy MAP of a k-DPP whose kernel mixes score quality and embedding similarity.
pub fn select_batch_dpp(candidates: &[ScoredQuery], config: &BatchConfig) -> Result<Vec<usize>> {
    let big = config.reduced_for(candidates.len())?;
    let mut reduced = reduce(candidates, big)?;
    // tie-breaking follows candidate index
    reduced.sort_unstable();
    let dist = kmedoids::distance_matrix(&embeds(candidates, &reduced));
    let sigma = match config.dpp_sigma {
        Some(s) => s,
        None => median_distance(&dist).filter(|m| *m > 0.0).unwrap_or(1.0),
    };
    let scores: Vec<f64> = reduced.iter().map(|&i| candidates[i].score).collect();
    let kernel = build_kernel(&dist, &scores, sigma, config.dpp_gamma);
    let chosen = greedy_map(&kernel, config.batch_size)
        .into_iter()
        .map(|p| reduced[p])
        .collect();
    Ok(finish(candidates, chosen))
}

pub fn select_batch(method: BatchMethod, candidates: &[ScoredQuery], config: &BatchConfig) -> Result<Vec<usize>> {
    match method {
        BatchMethod::Greedy => {
            config.validate()?;
            select_batch_greedy(candidates, config.batch_size)
        }
        BatchMethod::Medoids => select_batch_medoids(candidates, config),
        BatchMethod::BoundaryMedoids => select_batch_boundary_medoids(candidates, config),
        BatchMethod::SuccessiveElimination => select_batch_successive_elimination(candidates, config),
        BatchMethod::Dpp => select_batch_dpp(candidates, config),
    }
}
