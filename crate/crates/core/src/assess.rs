//! Metrics for judging a learned belief.

use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::domain::{dot, Query, Response, TrajectorySet, Weights};
use crate::error::{Error, Result};
use crate::human::{log_sum_exp, ResponseModel};

pub fn cosine_similarity(a: &Weights, b: &Weights) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::param(
            "weights",
            "cosine similarity is undefined for a zero vector",
        ));
    }
    Ok((dot(a.as_slice(), b.as_slice()) / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean posterior-predictive log-likelihood of held-out answers,
/// `mean_i log((1/M) Σ_m P(r_i | Q_i, ω_m))`.
pub fn heldout_loglik(
    belief: &Belief,
    heldout: &[(Query, Response)],
    model: &ResponseModel,
    set: &TrajectorySet,
) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::param("heldout", "need at least one held-out answer"));
    }
    let m = belief.num_samples() as f64;
    let mut total = 0.0;
    for (query, response) in heldout {
        let features = set.query_features(query)?;
        let per_sample = belief
            .samples()
            .iter()
            .map(|w| {
                let rewards: Vec<f64> = features.iter().map(|f| dot(w, f)).collect();
                model.log_likelihood(query.kind, &rewards, response)
            })
            .collect::<Result<Vec<f64>>>()?;
        total += log_sum_exp(&per_sample) - m.ln();
    }
    Ok(total / heldout.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    /// Against the true weights, when known.
    pub cosine: Option<f64>,
    /// When a held-out set is supplied.
    pub heldout_loglik: Option<f64>,
}

/// One row per belief snapshot, in order; snapshot `i` is the belief after
/// `i` rounds.
pub fn learning_curve<'a>(
    snapshots: impl IntoIterator<Item = &'a Belief>,
    truth: Option<&Weights>,
    heldout: &[(Query, Response)],
    model: &ResponseModel,
    set: &TrajectorySet,
) -> Result<Vec<CurvePoint>> {
    snapshots
        .into_iter()
        .enumerate()
        .map(|(iteration, belief)| curve_point(iteration, belief, truth, heldout, model, set))
        .collect()
}

pub fn curve_point(
    iteration: usize,
    belief: &Belief,
    truth: Option<&Weights>,
    heldout: &[(Query, Response)],
    model: &ResponseModel,
    set: &TrajectorySet,
) -> Result<CurvePoint> {
    let cosine = match truth {
        Some(t) => Some(cosine_similarity(&belief.mean_weights()?, t)?),
        None => None,
    };
    let heldout_loglik = if heldout.is_empty() {
        None
    } else {
        Some(heldout_loglik(belief, heldout, model, set)?)
    };
    Ok(CurvePoint {
        iteration,
        cosine,
        heldout_loglik,
    })
}

/// Sample mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
