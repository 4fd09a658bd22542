//! K-Means on normal frames; the anomaly score is the distance to the
//! nearest centroid.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AadError, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 8, max_iter: 300, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
    /// Inertia after every assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
    /// Fewer distinct points than clusters; some centroids are duplicates.
    pub degenerate: bool,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }
    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }
}

#[inline]
pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid (ties → lowest index).
fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding. Returns the initial centroids and whether the data
/// had fewer distinct points than `k`.
pub fn kmeans_pp_init(x: &Array2<f64>, k: usize, rng: &mut impl Rng) -> (Array2<f64>, bool) {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();
    let mut degenerate = false;
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            // guard against round-off landing on a zero-weight tail
            while d2[idx] == 0.0 && idx > 0 {
                idx -= 1;
            }
            idx
        } else {
            degenerate = true;
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, x.row(pick)));
        }
    }
    (centroids, degenerate)
}

/// Lloyd iterations from the given centroids.
pub fn lloyd(
    x: &Array2<f64>,
    mut centroids: Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> (Array2<f64>, Vec<usize>, Vec<f64>, usize) {
    let (n, d) = x.dim();
    let k = centroids.nrows();
    let mut history = Vec::new();
    let mut iterations = 0;
    let assign = |centroids: &Array2<f64>| -> (Vec<usize>, Vec<f64>) {
        x.rows().into_iter().map(|r| nearest(r, centroids)).unzip()
    };
    let (mut labels, mut dists) = assign(&centroids);
    history.push(dists.iter().sum());
    while iterations < max_iter {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(1.0, &x.row(i));
            counts[l] += 1;
        }
        let mut next = centroids.clone();
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                next.row_mut(j).assign(&(&sums.row(j) / counts[j] as f64));
            } else {
                // empty cluster: move it onto the point farthest from its centroid
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                next.row_mut(j).assign(&x.row(far));
            }
        }
        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let (l, dd) = assign(&centroids);
        labels = l;
        dists = dd;
        history.push(dists.iter().sum());
        if shift < tol {
            break;
        }
    }
    (centroids, labels, history, iterations)
}

pub fn kmeans_fit(x: &Array2<f64>, cfg: &KMeansConfig, seed: u64) -> Result<KMeansModel> {
    let n = x.nrows();
    if cfg.k == 0 {
        return Err(AadError::InvalidParameter("k must be >= 1".into()));
    }
    if n < cfg.k {
        return Err(AadError::TooFewSamples { needed: cfg.k, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (init, degenerate) = kmeans_pp_init(x, cfg.k, &mut rng);
    if degenerate {
        log::warn!("kmeans: fewer distinct points than k = {}; duplicating centroids", cfg.k);
    }
    let (centroids, _, history, iterations_run) = lloyd(x, init, cfg.max_iter, cfg.tol);
    Ok(KMeansModel {
        centroids,
        inertia: *history.last().unwrap(),
        iterations_run,
        seed,
        inertia_history: history,
        degenerate,
    })
}

/// Euclidean distance to the nearest centroid, per row.
pub fn kmeans_score(model: &KMeansModel, x: &Array2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.dim() {
        return Err(AadError::DimensionMismatch { expected: model.dim(), got: x.ncols() });
    }
    Ok(par::map_range(x.nrows(), |i| nearest(x.row(i), &model.centroids).1.sqrt()))
}

/// Column means; used by tests and the closed-form k = 1 case.
pub fn column_mean(x: &Array2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty")
}
