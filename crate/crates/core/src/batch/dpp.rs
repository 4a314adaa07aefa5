use nalgebra::DMatrix;

/// Diagonal jitter guarding Cholesky against numerical loss of definiteness.
pub const DIAG_JITTER: f64 = 1e-10;

/// Quality-weighted Gaussian kernel
/// `L_ij = q_i q_j exp(−d_ij² / (2σ²))` with `q_i = exp(γ (s_i − max s))`.
///
/// Shifting scores by their maximum rescales every same-size minor by the
/// same factor, so the greedy mode is unaffected.
pub fn build_kernel(dist: &[Vec<f64>], scores: &[f64], sigma: f64, gamma: f64) -> DMatrix<f64> {
    let n = scores.len();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let quality: Vec<f64> = scores.iter().map(|s| (gamma * (s - top)).exp()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let sim = if i == j || dist[i][j] == 0.0 {
            1.0
        } else {
            (-(dist[i][j] * dist[i][j]) / (2.0 * sigma * sigma)).exp()
        };
        quality[i] * quality[j] * sim + if i == j { DIAG_JITTER } else { 0.0 }
    })
}

/// Log-determinant of the principal submatrix on `items`; `-inf` if it is
/// not numerically positive definite.
pub fn log_det(kernel: &DMatrix<f64>, items: &[usize]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let sub = DMatrix::from_fn(items.len(), items.len(), |a, b| kernel[(items[a], items[b])]);
    match sub.cholesky() {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => f64::NEG_INFINITY,
    }
}

/// Greedy MAP for a k-DPP: add the item with the largest log-det of the
/// grown selection until `k` are chosen. Ties go to the lowest position.
pub fn greedy_map(kernel: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let n = kernel.nrows();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    while selected.len() < k.min(n) {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..n).filter(|i| !selected.contains(i)) {
            let mut trial = selected.clone();
            trial.push(i);
            let v = log_det(kernel, &trial);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, i));
            }
        }
        selected.push(best.expect("an unselected item remains").1);
    }
    selected
}

/// Median of the strictly upper-triangular distances, or `None` for fewer
/// than two points.
pub fn median_distance(dist: &[Vec<f64>]) -> Option<f64> {
    let mut all: Vec<f64> = (0..dist.len())
        .flat_map(|i| (i + 1..dist.len()).map(move |j| (i, j)))
        .map(|(i, j)| dist[i][j])
        .collect();
    if all.is_empty() {
        return None;
    }
    all.sort_by(f64::total_cmp);
    let mid = all.len() / 2;
    Some(if all.len().is_multiple_of(2) {
        (all[mid - 1] + all[mid]) / 2.0
    } else {
        all[mid]
    })
}
