//! Shared domain types: reward weights, trajectories, queries and responses.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a weight vector lies on the unit sphere.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Reward weights over trajectory features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub values: Vec<f64>,
}

impl Weights {
    pub fn new(values: Vec<f64>) -> Self {
        Weights { values }
    }

    /// Projects `values` onto the unit sphere. Fails on the zero vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::param("weights", "cannot normalize a zero or non-finite vector"));
        }
        Ok(Weights {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// One step of a renderable trajectory: grid position plus the action taken there.
/// The final record of a rollout carries no action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRecord {
    pub x: i32,
    pub y: i32,
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<Vec<RenderRecord>>,
}

impl Trajectory {
    pub fn new(id: usize, features: Vec<f64>) -> Self {
        Trajectory {
            id,
            features,
            render: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Reward of a trajectory under `weights`: the dot product of weights and features.
pub fn trajectory_reward(weights: &Weights, traj: &Trajectory) -> Result<f64> {
    if weights.dim() != traj.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.dim(),
            actual: traj.dim(),
        });
    }
    Ok(dot(&weights.values, &traj.features))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectorySetRepr {
    trajectories: Vec<Trajectory>,
    #[serde(default)]
    feature_bounds: Option<Vec<(f64, f64)>>,
}

/// A validated, non-empty pool of trajectories sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectorySetRepr", into = "TrajectorySetRepr")]
pub struct TrajectorySet {
    trajectories: Vec<Trajectory>,
    feature_bounds: Vec<(f64, f64)>,
    index: HashMap<usize, usize>,
}

impl TryFrom<TrajectorySetRepr> for TrajectorySet {
    type Error = Error;

    fn try_from(repr: TrajectorySetRepr) -> Result<Self> {
        // bounds are always recomputed from the features
        TrajectorySet::new(repr.trajectories)
    }
}

impl From<TrajectorySet> for TrajectorySetRepr {
    fn from(set: TrajectorySet) -> Self {
        TrajectorySetRepr {
            trajectories: set.trajectories,
            feature_bounds: Some(set.feature_bounds),
        }
    }
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::param("trajectories", "set must be non-empty"))?;
        let d = first.dim();
        if d == 0 {
            return Err(Error::param("features", "dimension must be at least 1"));
        }
        let mut index = HashMap::with_capacity(trajectories.len());
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for (pos, t) in trajectories.iter().enumerate() {
            if t.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: t.dim(),
                });
            }
            if let Some(bad) = t.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature {bad} of trajectory {}", t.id)));
            }
            if index.insert(t.id, pos).is_some() {
                return Err(Error::DuplicateId(t.id));
            }
            for (b, &v) in bounds.iter_mut().zip(&t.features) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Ok(TrajectorySet {
            trajectories,
            feature_bounds: bounds,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_bounds.len()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn feature_bounds(&self) -> &[(f64, f64)] {
        &self.feature_bounds
    }

    pub fn get(&self, id: usize) -> Option<&Trajectory> {
        self.index.get(&id).map(|&pos| &self.trajectories[pos])
    }

    pub fn contains(&self, id: usize) -> bool {
        self.index.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.trajectories.iter().map(|t| t.id)
    }

    /// Feature vectors of the query's trajectories, in query order.
    pub fn query_features(&self, query: &Query) -> Result<Vec<&[f64]>> {
        query
            .items
            .iter()
            .map(|&id| self.get(id).map(|t| t.features.as_slice()).ok_or(Error::UnknownId(id)))
            .collect()
    }

    /// Rewards of every trajectory in set order.
    pub fn rewards(&self, weights: &[f64]) -> Vec<f64> {
        self.trajectories.iter().map(|t| dot(weights, &t.features)).collect()
    }

    /// Trajectory with the highest reward under `weights`; ties go to the lowest id.
    pub fn best_under(&self, weights: &[f64]) -> &Trajectory {
        self.best_excluding(weights, None)
    }

    /// Like [`best_under`](Self::best_under) but skipping `exclude`. Falls back to
    /// `best_under` when the set has a single trajectory.
    pub fn best_excluding(&self, weights: &[f64], exclude: Option<usize>) -> &Trajectory {
        let mut best: Option<(&Trajectory, f64)> = None;
        for t in &self.trajectories {
            if Some(t.id) == exclude {
                continue;
            }
            let r = dot(weights, &t.features);
            best = match best {
                Some((b, br)) if br > r || (br == r && b.id < t.id) => Some((b, br)),
                _ => Some((t, r)),
            };
        }
        best.map(|(t, _)| t).unwrap_or(&self.trajectories[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Preference,
    WeakComparison,
    Ranking,
}

impl QueryKind {
    pub const ALL: [QueryKind; 3] = [QueryKind::Preference, QueryKind::WeakComparison, QueryKind::Ranking];

    pub fn name(self) -> &'static str {
        match self {
            QueryKind::Preference => "preference",
            QueryKind::WeakComparison => "weak_comparison",
            QueryKind::Ranking => "ranking",
        }
    }
}

impl std::fmt::Display for QueryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownName {
                what: "query kind",
                name: s.to_string(),
                valid: QueryKind::ALL.map(|k| k.name()).join(", "),
            })
    }
}

/// An ordered set of distinct trajectory ids to show the human.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "QueryRepr")]
pub struct Query {
    pub kind: QueryKind,
    pub items: Vec<usize>,
}

#[derive(Deserialize)]
struct QueryRepr {
    kind: QueryKind,
    items: Vec<usize>,
}

impl TryFrom<QueryRepr> for Query {
    type Error = Error;

    fn try_from(r: QueryRepr) -> Result<Self> {
        Query::new(r.kind, r.items)
    }
}

impl Query {
    /// Structural validation only; use [`make_query`] to also check ids against a set.
    pub fn new(kind: QueryKind, items: Vec<usize>) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::Arity(format!(
                "a query needs at least 2 trajectories, got {}",
                items.len()
            )));
        }
        if kind == QueryKind::WeakComparison && items.len() != 2 {
            return Err(Error::Arity(format!(
                "weak comparison queries hold exactly 2 trajectories, got {}",
                items.len()
            )));
        }
        for (i, id) in items.iter().enumerate() {
            if items[..i].contains(id) {
                return Err(Error::DuplicateId(*id));
            }
        }
        Ok(Query { kind, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Every admissible response, in a fixed order. Ranking permutations are
    /// listed in lexicographic order.
    pub fn response_space(&self) -> Vec<Response> {
        let k = self.len();
        match self.kind {
            QueryKind::Preference => (0..k).map(|chosen| Response::Preference { chosen }).collect(),
            QueryKind::WeakComparison => vec![
                Response::WeakComparison {
                    choice: WeakChoice::First,
                },
                Response::WeakComparison {
                    choice: WeakChoice::Second,
                },
                Response::WeakComparison {
                    choice: WeakChoice::Equal,
                },
            ],
            QueryKind::Ranking => permutations(k)
                .into_iter()
                .map(|order| Response::Ranking { order })
                .collect(),
        }
    }
}

/// Builds a query after checking that every id exists in `set`.
pub fn make_query(kind: QueryKind, ids: &[usize], set: &TrajectorySet) -> Result<Query> {
    let query = Query::new(kind, ids.to_vec())?;
    if let Some(&missing) = ids.iter().find(|id| !set.contains(**id)) {
        return Err(Error::UnknownId(missing));
    }
    Ok(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakChoice {
    First,
    Second,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    Preference {
        chosen: usize,
    },
    WeakComparison {
        choice: WeakChoice,
    },
    /// Positions into the query's items, best first.
    Ranking {
        order: Vec<usize>,
    },
}

impl Response {
    pub fn kind(&self) -> QueryKind {
        match self {
            Response::Preference { .. } => QueryKind::Preference,
            Response::WeakComparison { .. } => QueryKind::WeakComparison,
            Response::Ranking { .. } => QueryKind::Ranking,
        }
    }
}

pub fn validate_response(query: &Query, response: &Response) -> Result<()> {
    let k = query.len();
    match (query.kind, response) {
        (QueryKind::Preference, Response::Preference { chosen }) => {
            if *chosen >= k {
                return Err(Error::InvalidResponse(format!(
                    "chosen index {chosen} out of range for {k} items"
                )));
            }
        }
        (QueryKind::WeakComparison, Response::WeakComparison { .. }) => {}
        (QueryKind::Ranking, Response::Ranking { order }) => {
            if !is_permutation(order, k) {
                return Err(Error::InvalidResponse(format!(
                    "{order:?} is not a permutation of 0..{k}"
                )));
            }
        }
        (
            _,
            Response::WeakComparison {
                choice: WeakChoice::Equal,
            },
        ) => {
            return Err(Error::InvalidResponse(format!(
                "\"equal\" is only allowed for weak comparisons, query is {}",
                query.kind
            )));
        }
        (kind, r) => {
            return Err(Error::InvalidResponse(format!(
                "{} response to a {kind} query",
                r.kind()
            )));
        }
    }
    Ok(())
}

pub fn is_permutation(order: &[usize], k: usize) -> bool {
    if order.len() != k {
        return false;
    }
    let mut seen = vec![false; k];
    for &i in order {
        if i >= k || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..k).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub trajectory: Trajectory,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_of(n: usize) -> TrajectorySet {
        TrajectorySet::new((0..n).map(|i| Trajectory::new(i, vec![i as f64, 1.0])).collect()).unwrap()
    }

    #[test]
    fn reward_examples() {
        let t = Trajectory::new(0, vec![5.0, -2.0, 7.0]);
        assert_eq!(trajectory_reward(&Weights::new(vec![0.0; 3]), &t).unwrap(), 0.0);
        let t = Trajectory::new(0, vec![3.0, 9.0]);
        assert_eq!(trajectory_reward(&Weights::new(vec![1.0, 0.0]), &t).unwrap(), 3.0);
        let t = Trajectory::new(0, vec![1.0, 1.0]);
        let r = trajectory_reward(&Weights::new(vec![0.6, 0.8]), &t).unwrap();
        assert!((r - 1.4).abs() < 1e-12);
    }

    #[test]
    fn reward_dimension_mismatch_names_both() {
        let t = Trajectory::new(0, vec![1.0, 2.0, 3.0]);
        let err = trajectory_reward(&Weights::new(vec![1.0, 0.0]), &t).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, actual: 3 });
        assert!(err.to_string().contains('2') && err.to_string().contains('3'));
    }

    #[test]
    fn make_query_examples() {
        let set = set_of(3);
        let q = make_query(QueryKind::Preference, &[0, 1], &set).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(
            make_query(QueryKind::Preference, &[0, 0], &set).unwrap_err(),
            Error::DuplicateId(0)
        );
        assert!(matches!(
            make_query(QueryKind::WeakComparison, &[0, 1, 2], &set),
            Err(Error::Arity(_))
        ));
        assert!(matches!(
            make_query(QueryKind::Ranking, &[0], &set),
            Err(Error::Arity(_))
        ));
        assert_eq!(
            make_query(QueryKind::Preference, &[0, 7], &set).unwrap_err(),
            Error::UnknownId(7)
        );
    }

    #[test]
    fn validate_response_examples() {
        let pref = Query::new(QueryKind::Preference, vec![0, 1]).unwrap();
        assert!(validate_response(&pref, &Response::Preference { chosen: 1 }).is_ok());
        assert!(validate_response(&pref, &Response::Preference { chosen: 2 }).is_err());
        let eq = Response::WeakComparison {
            choice: WeakChoice::Equal,
        };
        let err = validate_response(&pref, &eq).unwrap_err();
        assert!(err.to_string().contains("equal"));

        let rank = Query::new(QueryKind::Ranking, vec![0, 1, 2]).unwrap();
        assert!(validate_response(&rank, &Response::Ranking { order: vec![2, 0, 1] }).is_ok());
        assert!(validate_response(&rank, &Response::Ranking { order: vec![0, 0, 1] }).is_err());
        assert!(validate_response(&rank, &Response::Ranking { order: vec![0, 1] }).is_err());
    }

    #[test]
    fn permutations_are_lexicographic() {
        assert_eq!(
            permutations(3),
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn set_rejects_duplicates_and_mixed_dims() {
        let dup = vec![Trajectory::new(1, vec![0.0]), Trajectory::new(1, vec![1.0])];
        assert_eq!(TrajectorySet::new(dup).unwrap_err(), Error::DuplicateId(1));
        let mixed = vec![Trajectory::new(0, vec![0.0]), Trajectory::new(1, vec![1.0, 2.0])];
        assert!(matches!(
            TrajectorySet::new(mixed),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(TrajectorySet::new(vec![]).is_err());
        let nan = vec![Trajectory::new(0, vec![f64::NAN])];
        assert!(matches!(TrajectorySet::new(nan), Err(Error::NonFinite(_))));
    }

    #[test]
    fn set_bounds_and_best() {
        let set = TrajectorySet::new(vec![
            Trajectory::new(4, vec![1.0, -1.0]),
            Trajectory::new(2, vec![1.0, -1.0]),
            Trajectory::new(9, vec![0.0, 3.0]),
        ])
        .unwrap();
        assert_eq!(set.feature_bounds(), &[(0.0, 1.0), (-1.0, 3.0)]);
        // tie between ids 4 and 2 goes to the lower id
        assert_eq!(set.best_under(&[1.0, 0.0]).id, 2);
        assert_eq!(set.best_excluding(&[1.0, 0.0], Some(2)).id, 4);
        assert_eq!(set.best_under(&[0.0, 1.0]).id, 9);
    }

    #[test]
    fn json_field_names() {
        let q = Query::new(QueryKind::WeakComparison, vec![3, 5]).unwrap();
        let v = serde_json::to_value(&q).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "weak_comparison", "items": [3, 5]}));
        let r: Response = serde_json::from_str(r#"{"kind":"ranking","order":[1,0]}"#).unwrap();
        assert_eq!(r, Response::Ranking { order: vec![1, 0] });
        let bad: std::result::Result<Query, _> = serde_json::from_str(r#"{"kind":"preference","items":[1,1]}"#);
        assert!(bad.is_err());
        let set = set_of(2);
        let back: TrajectorySet = serde_json::from_str(&serde_json::to_string(&set).unwrap()).unwrap();
        assert_eq!(back, set);
        let w = serde_json::to_value(Weights::new(vec![1.0])).unwrap();
        assert_eq!(w, serde_json::json!({"values": [1.0]}));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reward_is_linear_in_weights(
                a in -10.0f64..10.0, b in -10.0f64..10.0,
                w1 in prop::collection::vec(-5.0f64..5.0, 4),
                w2 in prop::collection::vec(-5.0f64..5.0, 4),
                phi in prop::collection::vec(-5.0f64..5.0, 4),
            ) {
                let t = Trajectory::new(0, phi);
                let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
                let lhs = trajectory_reward(&Weights::new(combo), &t).unwrap();
                let rhs = a * trajectory_reward(&Weights::new(w1), &t).unwrap()
                    + b * trajectory_reward(&Weights::new(w2), &t).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
            }

            #[test]
            fn valid_queries_admit_a_valid_response(
                k in 2usize..5, kind_idx in 0usize..3,
            ) {
                let kind = QueryKind::ALL[kind_idx];
                let k = if kind == QueryKind::WeakComparison { 2 } else { k };
                let set = set_of(6);
                let ids: Vec<usize> = (0..k).collect();
                let q = make_query(kind, &ids, &set).unwrap();
                let space = q.response_space();
                prop_assert!(!space.is_empty());
                prop_assert!(space.iter().all(|r| validate_response(&q, r).is_ok()));
            }
        }
    }
}
