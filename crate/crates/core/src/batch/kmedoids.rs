use rand::seq::index;

use crate::domain::l2_norm;
use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Medoid point indices, ascending.
    pub medoids: Vec<usize>,
    /// Position in `medoids` for every point.
    pub assignment: Vec<usize>,
    /// Total distance to assigned medoids after each assignment step.
    pub objective_trace: Vec<f64>,
}

pub(crate) fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let diff: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
            let v = l2_norm(&diff);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

fn assign(dist: &[Vec<f64>], medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let assignment = (0..dist.len())
        .map(|p| {
            if let Some(own) = medoids.iter().position(|&m| m == p) {
                return own;
            }
            let mut best = 0;
            for (c, &m) in medoids.iter().enumerate().skip(1) {
                if dist[p][m] < dist[p][medoids[best]] {
                    best = c;
                }
            }
            total += dist[p][medoids[best]];
            best
        })
        .collect();
    (assignment, total)
}

/// Alternating k-medoids: assign every point to its nearest medoid, then
/// move each medoid to the cluster member with the smallest summed distance
/// to the rest of its cluster, until a fixpoint or `iters` updates.
pub fn kmedoids(points: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> Result<Clustering> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::param("b", format!("need 1 ≤ b ≤ {n} points, got {k}")));
    }
    let dist = distance_matrix(points);
    let mut rng = rng_from(seed);
    let mut medoids = index::sample(&mut rng, n, k).into_vec();
    medoids.sort_unstable();

    let (mut assignment, obj) = assign(&dist, &medoids);
    let mut objective_trace = vec![obj];
    for _ in 0..iters {
        let mut updated: Vec<usize> = (0..k)
            .map(|c| {
                let members: Vec<usize> = (0..n).filter(|&p| assignment[p] == c).collect();
                let mut best = (f64::INFINITY, medoids[c]);
                for &cand in &members {
                    let cost: f64 = members.iter().map(|&o| dist[cand][o]).sum();
                    if cost < best.0 {
                        best = (cost, cand);
                    }
                }
                best.1
            })
            .collect();
        updated.sort_unstable();
        if updated == medoids {
            break;
        }
        medoids = updated;
        let (a, obj) = assign(&dist, &medoids);
        assignment = a;
        objective_trace.push(obj);
    }
    Ok(Clustering {
        medoids,
        assignment,
        objective_trace,
    })
}
