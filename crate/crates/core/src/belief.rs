//! Sample-based posterior over unit-norm reward weights.
//!
//! The prior is uniform on the unit sphere, optionally tilted by Boltzmann
//! demonstration likelihoods. Every update appends one evidence item and
//! re-runs a fresh Metropolis–Hastings chain over the whole dataset, so a
//! belief is a pure function of `(dataset, sampler config)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    dot, l2_norm, validate_response, Demonstration, Query, QueryKind, Response, TrajectorySet, Weights, UNIT_NORM_TOL,
};
use crate::envs::sample_unit_sphere;
use crate::error::{Error, Result};
use crate::human::{log_sum_exp, ResponseModel};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub num_samples: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposal_scale: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_samples: 100,
            burn_in: 200,
            thinning: 5,
            proposal_scale: 0.3,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 1 {
            return Err(Error::param("num_samples", "must be at least 1"));
        }
        if self.burn_in < 1 {
            return Err(Error::param("burn_in", "must be at least 1"));
        }
        if self.thinning < 1 {
            return Err(Error::param("thinning", "must be at least 1"));
        }
        if !(self.proposal_scale > 0.0) || !self.proposal_scale.is_finite() {
            return Err(Error::param("proposal_scale", "must be positive and finite"));
        }
        Ok(())
    }
}

/// One conditionally independent piece of evidence about the reward weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Demonstration(Demonstration),
    Response { query: Query, response: Response },
}

/// Evidence with trajectory features resolved, ready for repeated evaluation.
#[derive(Debug, Clone)]
enum Term {
    Response {
        kind: QueryKind,
        features: Vec<Vec<f64>>,
        response: Response,
    },
    Demonstration {
        demo: Vec<f64>,
        pool: Vec<Vec<f64>>,
    },
}

/// Log-posterior over the unit sphere for a fixed dataset.
#[derive(Debug, Clone)]
pub struct Posterior {
    dim: usize,
    model: ResponseModel,
    terms: Vec<Term>,
}

impl Posterior {
    pub fn new(dataset: &[Evidence], model: &ResponseModel, set: &TrajectorySet) -> Result<Self> {
        let dim = set.dim();
        let terms = dataset
            .iter()
            .map(|e| match e {
                Evidence::Response { query, response } => {
                    validate_response(query, response)?;
                    let features = set.query_features(query)?.into_iter().map(<[f64]>::to_vec).collect();
                    Ok(Term::Response {
                        kind: query.kind,
                        features,
                        response: response.clone(),
                    })
                }
                Evidence::Demonstration(d) => {
                    if d.trajectory.dim() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: d.trajectory.dim(),
                        });
                    }
                    let mut pool: Vec<Vec<f64>> = set.trajectories().iter().map(|t| t.features.clone()).collect();
                    let in_pool = set
                        .get(d.trajectory.id)
                        .is_some_and(|t| t.features == d.trajectory.features);
                    if !in_pool {
                        pool.push(d.trajectory.features.clone());
                    }
                    Ok(Term::Demonstration {
                        demo: d.trajectory.features.clone(),
                        pool,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Posterior {
            dim,
            model: *model,
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unnormalized log density at a point assumed to lie on the sphere.
    /// The uniform log-prior constant is fixed at 0.
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.terms.iter().map(|t| self.term(t, w)).sum()
    }

    fn term(&self, term: &Term, w: &[f64]) -> f64 {
        match term {
            Term::Response {
                kind,
                features,
                response,
            } => {
                let rewards: Vec<f64> = features.iter().map(|f| dot(w, f)).collect();
                self.model.log_likelihood(*kind, &rewards, response).unwrap_or(f64::NAN)
            }
            Term::Demonstration { demo, pool } => {
                let beta = self.model.demo_rationality;
                let scores: Vec<f64> = pool.iter().map(|f| beta * dot(w, f)).collect();
                beta * dot(w, demo) - log_sum_exp(&scores)
            }
        }
    }
}

/// Sum of evidence log-likelihoods at `weights` (log-prior constant 0).
pub fn log_posterior(
    dataset: &[Evidence],
    weights: &Weights,
    model: &ResponseModel,
    set: &TrajectorySet,
) -> Result<f64> {
    if !weights.is_normalized() {
        return Err(Error::NotNormalized(weights.norm()));
    }
    if weights.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: weights.dim(),
        });
    }
    Ok(Posterior::new(dataset, model, set)?.eval(&weights.values))
}

#[derive(Debug, Clone)]
pub struct MhRun {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

/// Random-walk Metropolis–Hastings on the unit sphere.
///
/// Proposals add isotropic Gaussian noise and renormalize. The chain starts
/// at a uniformly drawn point, discards `burn_in` steps and then keeps every
/// `thinning`-th state until `num_samples` are collected.
pub fn mh_sample<F>(log_density: F, dim: usize, config: &SamplerConfig, seed: u64) -> Result<MhRun>
where
    F: Fn(&[f64]) -> f64,
{
    config.validate()?;
    if dim < 1 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, config.proposal_scale).map_err(|e| Error::param("proposal_scale", e.to_string()))?;

    let mut current = sample_unit_sphere(dim, &mut rng);
    let mut current_lp = log_density(&current);
    if !current_lp.is_finite() {
        return Err(Error::NonFiniteStart(current));
    }

    let total = config.burn_in + config.num_samples * config.thinning;
    let mut samples = Vec::with_capacity(config.num_samples);
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; dim];
    for step in 1..=total {
        for (p, c) in proposal.iter_mut().zip(&current) {
            *p = c + noise.sample(&mut rng);
        }
        let norm = l2_norm(&proposal);
        let u: f64 = rng.random();
        if norm > 1e-12 {
            proposal.iter_mut().for_each(|p| *p /= norm);
            let lp = log_density(&proposal);
            // NaN and -inf proposals fall through as rejections
            if u.ln() < lp - current_lp {
                std::mem::swap(&mut current, &mut proposal);
                current_lp = lp;
                accepted += 1;
            }
        }
        if step > config.burn_in && (step - config.burn_in).is_multiple_of(config.thinning) {
            samples.push(current.clone());
        }
    }
    Ok(MhRun {
        samples,
        acceptance_rate: accepted as f64 / total as f64,
    })
}

/// Posterior samples plus the evidence and sampler settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    dim: usize,
    samples: Vec<Vec<f64>>,
    dataset: Vec<Evidence>,
    config: SamplerConfig,
    /// `None` when the samples were supplied directly rather than drawn.
    acceptance_rate: Option<f64>,
}

impl Belief {
    /// Prior belief: uniform on the sphere, times the demonstration likelihoods
    /// when `demos` is non-empty.
    pub fn init_prior(
        dim: usize,
        demos: &[Demonstration],
        set: &TrajectorySet,
        model: &ResponseModel,
        config: SamplerConfig,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if set.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: set.dim(),
            });
        }
        if let Some(d) = demos.iter().find(|d| d.trajectory.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: d.trajectory.dim(),
            });
        }
        let dataset = demos.iter().cloned().map(Evidence::Demonstration).collect();
        Self::fit(dim, dataset, set, model, config)
    }

    /// Direct construction from samples, for tests and imported snapshots.
    pub fn from_samples(samples: Vec<Vec<f64>>, config: SamplerConfig) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        if samples.is_empty() || dim == 0 {
            return Err(Error::param("samples", "need at least one non-empty sample"));
        }
        for s in &samples {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.len(),
                });
            }
            let n = l2_norm(s);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotNormalized(n));
            }
        }
        Ok(Belief {
            dim,
            samples,
            dataset: Vec::new(),
            config,
            acceptance_rate: None,
        })
    }

    fn fit(
        dim: usize,
        dataset: Vec<Evidence>,
        set: &TrajectorySet,
        model: &ResponseModel,
        config: SamplerConfig,
    ) -> Result<Self> {
        if config.num_samples < 2 {
            return Err(Error::param("num_samples", "a belief needs at least 2 samples"));
        }
        let posterior = Posterior::new(&dataset, model, set)?;
        let seed = Self::chain_seed(&config, dataset.len());
        let run = mh_sample(|w| posterior.eval(w), dim, &config, seed)?;
        Ok(Belief {
            dim,
            samples: run.samples,
            dataset,
            config,
            acceptance_rate: Some(run.acceptance_rate),
        })
    }

    /// Each dataset length gets its own chain stream.
    pub fn chain_seed(config: &SamplerConfig, dataset_len: usize) -> u64 {
        derive_seed(config.seed, "mh", dataset_len as u64)
    }

    /// New belief with `(query, response)` appended; `self` is left untouched.
    pub fn update(
        &self,
        query: &Query,
        response: &Response,
        model: &ResponseModel,
        set: &TrajectorySet,
    ) -> Result<Self> {
        self.update_many(std::slice::from_ref(&(query.clone(), response.clone())), model, set)
    }

    /// Appends several answered queries and refits once.
    pub fn update_many(
        &self,
        answers: &[(Query, Response)],
        model: &ResponseModel,
        set: &TrajectorySet,
    ) -> Result<Self> {
        let mut dataset = self.dataset.clone();
        for (query, response) in answers {
            validate_response(query, response)?;
            set.query_features(query)?;
            dataset.push(Evidence::Response {
                query: query.clone(),
                response: response.clone(),
            });
        }
        Self::fit(self.dim, dataset, set, model, self.config)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn dataset(&self) -> &[Evidence] {
        &self.dataset
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        self.acceptance_rate
    }

    /// Normalized arithmetic mean of the samples.
    pub fn mean_weights(&self) -> Result<Weights> {
        let mut mean = vec![0.0; self.dim];
        for s in &self.samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        let m = self.samples.len() as f64;
        mean.iter_mut().for_each(|v| *v /= m);
        let norm = l2_norm(&mean);
        if norm < 1e-6 {
            return Err(Error::DegenerateMean(norm));
        }
        Ok(Weights::new(mean.into_iter().map(|v| v / norm).collect()))
    }
}

/// Points of a uniform angular grid on the sphere with normalized posterior mass.
pub fn grid_posterior_oracle(
    dataset: &[Evidence],
    model: &ResponseModel,
    set: &TrajectorySet,
    resolution: usize,
) -> Result<Vec<(Weights, f64)>> {
    let dim = set.dim();
    if resolution < 8 {
        return Err(Error::param("resolution", "must be at least 8"));
    }
    let points: Vec<Vec<f64>> = match dim {
        2 => (0..resolution)
            .map(|i| {
                let theta = std::f64::consts::TAU * i as f64 / resolution as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect(),
        3 => fibonacci_sphere(resolution),
        d => return Err(Error::Unsupported(format!("grid oracle supports d = 2 or 3, got {d}"))),
    };
    let posterior = Posterior::new(dataset, model, set)?;
    let log_w: Vec<f64> = points.iter().map(|p| posterior.eval(p)).collect();
    let lse = log_sum_exp(&log_w);
    if !lse.is_finite() {
        return Err(Error::NonFinite("grid posterior normalizer".into()));
    }
    Ok(points
        .into_iter()
        .zip(log_w)
        .map(|(p, lw)| (Weights::new(p), (lw - lse).exp()))
        .collect())
}

fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            vec![r * phi.cos(), y, r * phi.sin()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Trajectory, WeakChoice};
    use crate::envs::{Environment, SyntheticEnv};

    fn pair_set() -> TrajectorySet {
        TrajectorySet::new(vec![
            Trajectory::new(0, vec![1.0, 0.0]),
            Trajectory::new(1, vec![0.0, 1.0]),
            Trajectory::new(2, vec![-1.0, 0.5]),
        ])
        .unwrap()
    }

    fn pref(a: usize, b: usize, chosen: usize) -> Evidence {
        Evidence::Response {
            query: Query::new(QueryKind::Preference, vec![a, b]).unwrap(),
            response: Response::Preference { chosen },
        }
    }

    #[test]
    fn empty_dataset_has_zero_log_posterior() {
        let w = Weights::normalized(vec![0.3, -0.8]).unwrap();
        let lp = log_posterior(&[], &w, &ResponseModel::default(), &pair_set()).unwrap();
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn single_term_log_posterior() {
        // features differ by (ln 3, 0) along ω = (1, 0) at β = 1 → P = 0.75
        let set = TrajectorySet::new(vec![
            Trajectory::new(0, vec![3f64.ln(), 0.0]),
            Trajectory::new(1, vec![0.0, 0.0]),
        ])
        .unwrap();
        let m = ResponseModel::new(1.0, 0.0, 1.0).unwrap();
        let w = Weights::new(vec![1.0, 0.0]);
        let lp = log_posterior(&[pref(0, 1, 0)], &w, &m, &set).unwrap();
        assert!((lp - 0.75f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn mixed_terms_add_up() {
        let set = pair_set();
        let m = ResponseModel::new(2.0, 0.5, 3.0).unwrap();
        let w = Weights::normalized(vec![0.6, 0.8]).unwrap();
        let demo = Demonstration {
            trajectory: Trajectory::new(7, vec![0.2, 0.9]),
        };
        let weak = Evidence::Response {
            query: Query::new(QueryKind::WeakComparison, vec![0, 2]).unwrap(),
            response: Response::WeakComparison {
                choice: WeakChoice::Equal,
            },
        };
        let items = vec![pref(0, 1, 1), weak.clone(), Evidence::Demonstration(demo.clone())];
        let total = log_posterior(&items, &w, &m, &set).unwrap();

        // term-by-term from the public likelihood functions
        let p1 = crate::human::preference_likelihood(
            &m,
            &w,
            &Query::new(QueryKind::Preference, vec![0, 1]).unwrap(),
            1,
            &set,
        )
        .unwrap();
        let p2 = crate::human::weak_comparison_likelihood(
            &m,
            &w,
            &Query::new(QueryKind::WeakComparison, vec![0, 2]).unwrap(),
            WeakChoice::Equal,
            &set,
        )
        .unwrap();
        let p3 = crate::human::demonstration_likelihood(&m, &w, &demo, &set).unwrap();
        assert!((total - (p1.ln() + p2.ln() + p3.ln())).abs() < 1e-12);
    }

    #[test]
    fn log_posterior_rejects_unnormalized() {
        let w = Weights::new(vec![1.0, 1.0]);
        assert!(matches!(
            log_posterior(&[], &w, &ResponseModel::default(), &pair_set()),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn flat_density_always_accepts() {
        let cfg = SamplerConfig {
            num_samples: 50,
            ..Default::default()
        };
        let run = mh_sample(|_| 0.0, 3, &cfg, 1).unwrap();
        assert_eq!(run.acceptance_rate, 1.0);
        assert_eq!(run.samples.len(), 50);
    }

    #[test]
    fn mh_is_deterministic_and_on_sphere() {
        let cfg = SamplerConfig::default();
        let a = mh_sample(|w| 3.0 * w[0], 4, &cfg, 42).unwrap();
        let b = mh_sample(|w| 3.0 * w[0], 4, &cfg, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        for s in &a.samples {
            assert!((l2_norm(s) - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn mh_non_finite_start_names_point() {
        let err = mh_sample(|_| f64::NEG_INFINITY, 2, &SamplerConfig::default(), 0).unwrap_err();
        match err {
            Error::NonFiniteStart(p) => assert_eq!(p.len(), 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn sampler_config_validation() {
        for bad in [
            SamplerConfig {
                num_samples: 0,
                ..Default::default()
            },
            SamplerConfig {
                burn_in: 0,
                ..Default::default()
            },
            SamplerConfig {
                thinning: 0,
                ..Default::default()
            },
            SamplerConfig {
                proposal_scale: 0.0,
                ..Default::default()
            },
        ] {
            assert!(mh_sample(|_| 0.0, 2, &bad, 0).is_err());
        }
    }

    #[test]
    fn update_preserves_order_and_old_belief() {
        let set = pair_set();
        let m = ResponseModel::default();
        let prior = Belief::init_prior(2, &[], &set, &m, SamplerConfig::default()).unwrap();
        let q = Query::new(QueryKind::Preference, vec![0, 1]).unwrap();
        let b1 = prior.update(&q, &Response::Preference { chosen: 0 }, &m, &set).unwrap();
        let q2 = Query::new(QueryKind::Preference, vec![1, 2]).unwrap();
        let b2 = b1.update(&q2, &Response::Preference { chosen: 1 }, &m, &set).unwrap();
        assert!(prior.dataset().is_empty());
        assert_eq!(b1.dataset().len(), 1);
        assert_eq!(b2.dataset()[0], b1.dataset()[0]);
        assert_eq!(b2.dataset()[1], pref(1, 2, 1));
        assert!(b1.update(&q, &Response::Preference { chosen: 5 }, &m, &set).is_err());
    }

    #[test]
    fn prior_dimension_mismatch() {
        let set = pair_set();
        let demo = Demonstration {
            trajectory: Trajectory::new(9, vec![1.0, 2.0, 3.0]),
        };
        assert!(matches!(
            Belief::init_prior(2, &[demo], &set, &ResponseModel::default(), SamplerConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mean_weights_cases() {
        let cfg = SamplerConfig::default();
        let b = Belief::from_samples(vec![vec![0.6, 0.8]; 5], cfg).unwrap();
        let m = b.mean_weights().unwrap();
        assert!((m.values[0] - 0.6).abs() < 1e-15 && (m.values[1] - 0.8).abs() < 1e-15);
        let b = Belief::from_samples(vec![vec![1.0, 0.0], vec![0.0, 1.0]], cfg).unwrap();
        let m = b.mean_weights().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.values[0] - h).abs() < 1e-15 && (m.values[1] - h).abs() < 1e-15);
        let b = Belief::from_samples(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], cfg).unwrap();
        assert!(matches!(b.mean_weights(), Err(Error::DegenerateMean(_))));
    }

    #[test]
    fn grid_oracle_basics() {
        let set = pair_set();
        let m = ResponseModel::new(2.0, 0.0, 1.0).unwrap();
        let grid = grid_posterior_oracle(&[], &m, &set, 360).unwrap();
        assert_eq!(grid.len(), 360);
        assert!(grid.iter().all(|(_, w)| (w - 1.0 / 360.0).abs() < 1e-15));

        let item = pref(0, 1, 0);
        let grid = grid_posterior_oracle(std::slice::from_ref(&item), &m, &set, 64).unwrap();
        let liks: Vec<f64> = grid
            .iter()
            .map(|(w, _)| log_posterior(std::slice::from_ref(&item), w, &m, &set).unwrap().exp())
            .collect();
        let z: f64 = liks.iter().sum();
        for ((_, w), l) in grid.iter().zip(&liks) {
            assert!((w - l / z).abs() < 1e-14);
        }

        let set3 = SyntheticEnv::new(3).unwrap().generate_trajectory_set(5, 0).unwrap();
        let g3 = grid_posterior_oracle(&[], &m, &set3, 100).unwrap();
        assert!(g3.iter().all(|(w, _)| w.is_normalized()));
        let set4 = SyntheticEnv::new(4).unwrap().generate_trajectory_set(5, 0).unwrap();
        assert!(grid_posterior_oracle(&[], &m, &set4, 100).is_err());
        assert!(grid_posterior_oracle(&[], &m, &set, 4).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let set = pair_set();
        let m = ResponseModel::default();
        let b = Belief::init_prior(2, &[], &set, &m, SamplerConfig::default()).unwrap();
        let b = b
            .update(
                &Query::new(QueryKind::Preference, vec![0, 1]).unwrap(),
                &Response::Preference { chosen: 0 },
                &m,
                &set,
            )
            .unwrap();
        let json = serde_json::to_string(&b).unwrap();
        let back: Belief = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
    }
}
