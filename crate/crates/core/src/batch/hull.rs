use nalgebra::{DMatrix, SymmetricEigen};

/// Projects points onto their top two principal components. One-dimensional
/// inputs get a zero second coordinate.
pub fn pca_2d(points: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return vec![[0.0, 0.0]; n];
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    if d == 1 {
        return (0..n).map(|i| [centered[(i, 0)], 0.0]).collect();
    }
    let cov = centered.transpose() * &centered;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes = [eig.eigenvectors.column(order[0]), eig.eigenvectors.column(order[1])];
    (0..n)
        .map(|i| {
            let row = centered.row(i);
            [row.dot(&axes[0].transpose()), row.dot(&axes[1].transpose())]
        })
        .collect()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Returns indices of strict hull vertices in
/// counter-clockwise order; collinear inputs collapse to their two endpoints
/// and coincident points are represented by their lowest index.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
            .then(a.cmp(&b))
    });
    order.dedup_by(|b, a| points[*a] == points[*b]);
    if order.len() <= 2 {
        return order;
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale * scale;

    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let seq: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in seq {
            while hull.len() >= start + 2
                && cross(points[hull[hull.len() - 2]], points[hull[hull.len() - 1]], points[i]) <= eps
            {
                hull.pop();
            }
            hull.push(i);
        }
        // the last point of each chain starts the other one
        hull.pop();
    }
    if hull.len() < 2 {
        // all points collinear: both chains collapsed to one endpoint each
        return vec![order[0], *order.last().unwrap()];
    }
    hull
}
