use std::f64::consts::TAU;

use preflearn::belief::{grid_posterior_oracle, log_posterior, Belief, Evidence, SamplerConfig};
use preflearn::domain::{Demonstration, Query, QueryKind, Response, Trajectory, TrajectorySet, Weights};
use preflearn::envs::{Environment, SyntheticEnv};
use preflearn::human::{ResponseModel, SimulatedHuman};
use preflearn::seed::rng_from;
use rand::seq::index;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn angle(w: &[f64]) -> f64 {
    w[1].atan2(w[0]).rem_euclid(TAU)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Asymptotic two-sample Kolmogorov–Smirnov p-value.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

fn weak_dataset(set: &TrajectorySet, truth: &[f64], n: usize, seed: u64) -> Vec<(Query, Response)> {
    let model = ResponseModel::default();
    let mut human = SimulatedHuman::new(Weights::normalized(truth.to_vec()).unwrap(), model, seed).unwrap();
    let mut rng = rng_from(seed + 1);
    (0..n)
        .map(|_| {
            let q = Query::new(
                QueryKind::WeakComparison,
                index::sample(&mut rng, set.len(), 2).into_vec(),
            )
            .unwrap();
            let r = human.simulate_response(&q, set).unwrap();
            (q, r)
        })
        .collect()
}

fn sampler(m: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        num_samples: m,
        seed,
        ..Default::default()
    }
}

/// Thinned hard enough that kept samples are close to independent, which the
/// classical goodness-of-fit tests assume.
fn iid_sampler(m: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        thinning: 50,
        ..sampler(m, seed)
    }
}

#[test]
fn uniform_prior_passes_chi_square() {
    let set = SyntheticEnv { dim: 2 }.generate_trajectory_set(10, 0).unwrap();
    let belief = Belief::init_prior(2, &[], &set, &ResponseModel::default(), iid_sampler(1000, 21)).unwrap();
    let mut counts = [0.0f64; 8];
    for s in belief.samples() {
        counts[((angle(s) / TAU * 8.0) as usize).min(7)] += 1.0;
    }
    let expected = 1000.0 / 8.0;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(7.0).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat}, p = {p}");
    assert_eq!(belief.acceptance_rate(), Some(1.0));
}

#[test]
fn optimal_demonstration_tilts_prior() {
    let truth = [1.0, 0.0];
    let mut trajectories: Vec<Trajectory> = SyntheticEnv { dim: 2 }
        .generate_trajectory_set(30, 5)
        .unwrap()
        .trajectories()
        .to_vec();
    trajectories.push(Trajectory::new(30, vec![1.0, 0.0]));
    let set = TrajectorySet::new(trajectories).unwrap();
    let demo = Demonstration {
        trajectory: set.best_under(&truth).clone(),
    };
    assert_eq!(demo.trajectory.id, 30);
    let model = ResponseModel::new(1.0, 1.0, 20.0).unwrap();
    let belief = Belief::init_prior(2, &[demo], &set, &model, sampler(500, 2)).unwrap();
    let c = cosine(&belief.mean_weights().unwrap().values, &truth);
    assert!(c >= 0.7, "cosine {c}");
}

#[test]
fn strong_answers_converge() {
    let truth = [0.0, 1.0];
    // unit circle every 10 degrees; trajectory 9 sits on the true direction
    let set = TrajectorySet::new(
        (0..36)
            .map(|i| {
                let a = (i as f64 * 10.0).to_radians();
                Trajectory::new(i, vec![a.cos(), a.sin()])
            })
            .collect(),
    )
    .unwrap();
    let model = ResponseModel::new(20.0, 1.0, 1.0).unwrap();
    let answers: Vec<(Query, Response)> = (1..=5)
        .flat_map(|k| [9 + k, 9 - k])
        .map(|other| {
            let q = Query::new(QueryKind::Preference, vec![9, other]).unwrap();
            (q, Response::Preference { chosen: 0 })
        })
        .collect();
    let mut belief = Belief::init_prior(2, &[], &set, &model, sampler(200, 9)).unwrap();
    for (q, r) in &answers {
        belief = belief.update(q, r, &model, &set).unwrap();
    }
    let c = cosine(&belief.mean_weights().unwrap().values, &truth);
    assert!(c >= 0.9, "cosine {c}");
    for s in belief.samples() {
        let n: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn uninformative_update_leaves_distribution_unchanged() {
    let set = SyntheticEnv { dim: 2 }.generate_trajectory_set(10, 1).unwrap();
    let flat = ResponseModel::new(1e-12, 1.0, 1.0).unwrap();
    let prior = Belief::init_prior(2, &[], &set, &flat, iid_sampler(1000, 6)).unwrap();
    let q = Query::new(QueryKind::Preference, vec![0, 1]).unwrap();
    let post = prior
        .update(&q, &Response::Preference { chosen: 0 }, &flat, &set)
        .unwrap();
    assert_ne!(prior.samples(), post.samples());
    let p = ks_two_sample(
        prior.samples().iter().map(|s| angle(s)).collect(),
        post.samples().iter().map(|s| angle(s)).collect(),
    );
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn mh_agrees_with_grid_oracle_on_seeded_datasets() {
    let model = ResponseModel::default();
    for seed in 0..5u64 {
        let set = SyntheticEnv { dim: 2 }.generate_trajectory_set(40, 100 + seed).unwrap();
        let answers = weak_dataset(&set, &[0.6, 0.8], 10, 200 + seed);
        let prior = Belief::init_prior(2, &[], &set, &model, sampler(2000, seed)).unwrap();
        let belief = prior.update_many(&answers, &model, &set).unwrap();
        let grid = grid_posterior_oracle(belief.dataset(), &model, &set, 360).unwrap();
        let mut oracle = [0.0; 36];
        for (i, (_, mass)) in grid.iter().enumerate() {
            if i % 10 == 0 {
                oracle[i / 10] += mass / 2.0;
                oracle[(i / 10 + 35) % 36] += mass / 2.0;
            } else {
                oracle[i / 10] += mass;
            }
        }
        let mut mh = [0.0; 36];
        for s in belief.samples() {
            mh[((angle(s) / TAU * 36.0) as usize).min(35)] += 1.0 / 2000.0;
        }
        let tv: f64 = mh.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv <= 0.1, "seed {seed}: TV {tv}");
        let mut mean = [0.0; 2];
        for (w, mass) in &grid {
            mean[0] += mass * w.values[0];
            mean[1] += mass * w.values[1];
        }
        let c = cosine(&belief.mean_weights().unwrap().values, &mean);
        assert!(c >= 0.98, "seed {seed}: cosine {c}");
    }
}

#[test]
fn concentrated_posterior_mean_within_five_degrees() {
    let set = SyntheticEnv { dim: 2 }.generate_trajectory_set(40, 3).unwrap();
    let model = ResponseModel::new(10.0, 0.5, 1.0).unwrap();
    let truth = Weights::normalized(vec![-0.3, 0.7]).unwrap();
    let mut human = SimulatedHuman::new(truth, model, 12).unwrap();
    let mut rng = rng_from(13);
    let answers: Vec<(Query, Response)> = (0..25)
        .map(|_| {
            let q = Query::new(QueryKind::Preference, index::sample(&mut rng, set.len(), 2).into_vec()).unwrap();
            let r = human.simulate_response(&q, &set).unwrap();
            (q, r)
        })
        .collect();
    let belief = Belief::init_prior(2, &[], &set, &model, sampler(1000, 14))
        .unwrap()
        .update_many(&answers, &model, &set)
        .unwrap();
    let grid = grid_posterior_oracle(belief.dataset(), &model, &set, 3600).unwrap();
    let mut mean = [0.0; 2];
    for (w, mass) in &grid {
        mean[0] += mass * w.values[0];
        mean[1] += mass * w.values[1];
    }
    let c = cosine(&belief.mean_weights().unwrap().values, &mean);
    assert!(c.acos().to_degrees() <= 5.0, "{} degrees", c.acos().to_degrees());
}

#[test]
fn three_dimensional_oracle_agreement() {
    let set = SyntheticEnv { dim: 3 }.generate_trajectory_set(40, 31).unwrap();
    let model = ResponseModel::new(3.0, 0.5, 1.0).unwrap();
    let truth = Weights::normalized(vec![0.2, -0.5, 0.8]).unwrap();
    let mut human = SimulatedHuman::new(truth, model, 32).unwrap();
    let mut rng = rng_from(33);
    let answers: Vec<(Query, Response)> = (0..12)
        .map(|_| {
            let q = Query::new(QueryKind::Ranking, index::sample(&mut rng, set.len(), 3).into_vec()).unwrap();
            let r = human.simulate_response(&q, &set).unwrap();
            (q, r)
        })
        .collect();
    let belief = Belief::init_prior(3, &[], &set, &model, sampler(2000, 34))
        .unwrap()
        .update_many(&answers, &model, &set)
        .unwrap();
    let grid = grid_posterior_oracle(belief.dataset(), &model, &set, 20000).unwrap();
    let mut mean = [0.0; 3];
    for (w, mass) in &grid {
        for (m, v) in mean.iter_mut().zip(&w.values) {
            *m += mass * v;
        }
    }
    let c = cosine(&belief.mean_weights().unwrap().values, &mean);
    assert!(c >= 0.98, "cosine {c}");
}

#[test]
fn single_response_oracle_is_proportional_to_likelihood() {
    let set = TrajectorySet::new(vec![
        Trajectory::new(0, vec![1.0, 0.0]),
        Trajectory::new(1, vec![0.0, 1.0]),
    ])
    .unwrap();
    let model = ResponseModel::new(2.0, 1.0, 1.0).unwrap();
    let dataset = vec![Evidence::Response {
        query: Query::new(QueryKind::Preference, vec![0, 1]).unwrap(),
        response: Response::Preference { chosen: 0 },
    }];
    let grid = grid_posterior_oracle(&dataset, &model, &set, 72).unwrap();
    let lik: Vec<f64> = grid
        .iter()
        .map(|(w, _)| log_posterior(&dataset, w, &model, &set).unwrap().exp())
        .collect();
    let z: f64 = lik.iter().sum();
    for ((_, mass), l) in grid.iter().zip(&lik) {
        assert!((mass - l / z).abs() < 1e-14);
    }
}

#[test]
fn log_posterior_ignores_dataset_order() {
    let set = SyntheticEnv { dim: 3 }.generate_trajectory_set(20, 41).unwrap();
    let model = ResponseModel::new(2.0, 0.7, 5.0).unwrap();
    let mut dataset: Vec<Evidence> = weak_dataset(&set, &[0.0, 0.6, 0.8], 8, 42)
        .into_iter()
        .map(|(query, response)| Evidence::Response { query, response })
        .collect();
    dataset.push(Evidence::Demonstration(Demonstration {
        trajectory: set.trajectories()[3].clone(),
    }));
    let mut rng = rng_from(43);
    for _ in 0..20 {
        let w = Weights::new(preflearn::envs::sample_unit_sphere(3, &mut rng));
        let a = log_posterior(&dataset, &w, &model, &set).unwrap();
        let mut shuffled = dataset.clone();
        shuffled.reverse();
        shuffled.rotate_left(3);
        let b = log_posterior(&shuffled, &w, &model, &set).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
