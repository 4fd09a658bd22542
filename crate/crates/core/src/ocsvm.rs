//! ν-one-class SVM with an RBF kernel, trained by SMO.
//!
//! Dual problem solved here:
//!
//! ```text
//! minimize   ½ Σᵢ Σⱼ αᵢ αⱼ k(xᵢ, xⱼ)
//! subject to 0 ≤ αᵢ ≤ 1/(ν n),  Σᵢ αᵢ = 1
//! ```
//!
//! Each step updates the maximal violating pair: the index with the smallest
//! gradient among those that may still grow, and the one with the largest
//! gradient among those that may shrink. The decision offset ρ is the mean
//! gradient over margin support vectors; `score(x) = ρ − Σ αⱼ k(xⱼ, x)`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{AadError, Result};
use crate::kmeans::sq_dist;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma {
    /// `1 / (d · var(X))` over all entries of the training matrix.
    Scale,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmConfig {
    pub nu: f64,
    pub gamma: Gamma,
    pub tol: f64,
    /// Upper bound on SMO pair updates.
    pub max_passes: usize,
    /// Kernel cache budget in MiB. The whole Gram matrix is precomputed when
    /// it fits, otherwise rows are computed on demand and LRU-evicted.
    pub cache_mb: usize,
}

impl Default for OcSvmConfig {
    fn default() -> Self {
        Self { nu: 0.1, gamma: Gamma::Scale, tol: 1e-3, max_passes: 10_000_000, cache_mb: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcSvmModel {
    pub support_vectors: Array2<f64>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub nu: f64,
    pub gamma: f64,
}

/// Solver diagnostics that are not part of the persisted model.
#[derive(Debug, Clone, PartialEq)]
pub struct OcSvmFitReport {
    pub iterations: usize,
    pub converged: bool,
    /// `max_{I_low} G − min_{I_up} G` at exit.
    pub max_violation: f64,
    pub objective: f64,
    /// Full dual solution over the training rows.
    pub alpha_full: Vec<f64>,
    pub upper_bound: f64,
}

pub fn resolve_gamma(gamma: Gamma, x: &Array2<f64>) -> f64 {
    match gamma {
        Gamma::Value(g) => g,
        Gamma::Scale => {
            let n = x.len() as f64;
            let mean = x.sum() / n;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (x.ncols() as f64 * var)
            } else {
                1.0
            }
        }
    }
}

#[inline]
pub fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

struct KernelRows<'a> {
    x: &'a Array2<f64>,
    sq_norms: Vec<f64>,
    gamma: f64,
    full: Option<Array2<f64>>,
    cache: HashMap<usize, (Vec<f64>, u64)>,
    max_rows: usize,
    clock: u64,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a Array2<f64>, gamma: f64, cache_mb: usize) -> Self {
        let n = x.nrows();
        let sq_norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
        let budget = cache_mb.saturating_mul(1 << 20);
        let row_bytes = n * std::mem::size_of::<f64>();
        let full = if n.saturating_mul(row_bytes) <= budget {
            let mut g = x.dot(&x.t());
            for i in 0..n {
                for j in 0..n {
                    let d2 = (sq_norms[i] + sq_norms[j] - 2.0 * g[[i, j]]).max(0.0);
                    g[[i, j]] = if i == j { 1.0 } else { (-gamma * d2).exp() };
                }
            }
            Some(g)
        } else {
            None
        };
        let max_rows = (budget / row_bytes.max(1)).max(2);
        Self { x, sq_norms, gamma, full, cache: HashMap::new(), max_rows, clock: 0 }
    }

    fn compute_row(&self, i: usize) -> Vec<f64> {
        let dots = self.x.dot(&self.x.row(i));
        dots.iter()
            .enumerate()
            .map(|(j, &d)| {
                if j == i {
                    1.0
                } else {
                    (-self.gamma * (self.sq_norms[i] + self.sq_norms[j] - 2.0 * d).max(0.0)).exp()
                }
            })
            .collect()
    }

    fn row(&mut self, i: usize) -> &[f64] {
        if let Some(full) = &self.full {
            return full.row(i).to_slice().expect("standard layout");
        }
        self.clock += 1;
        let now = self.clock;
        if !self.cache.contains_key(&i) {
            if self.cache.len() >= self.max_rows {
                let oldest = *self.cache.iter().min_by_key(|(_, (_, t))| *t).unwrap().0;
                self.cache.remove(&oldest);
            }
            let row = self.compute_row(i);
            self.cache.insert(i, (row, now));
        }
        let entry = self.cache.get_mut(&i).unwrap();
        entry.1 = now;
        &entry.0
    }
}

pub fn ocsvm_fit(x: &Array2<f64>, cfg: &OcSvmConfig) -> Result<(OcSvmModel, OcSvmFitReport)> {
    let n = x.nrows();
    if n == 0 {
        return Err(AadError::EmptyInput);
    }
    if !(cfg.nu > 0.0 && cfg.nu <= 1.0) {
        return Err(AadError::InvalidParameter(format!("nu = {} not in (0, 1]", cfg.nu)));
    }
    let product = cfg.nu * n as f64;
    if product < 1.0 {
        return Err(AadError::InfeasibleNu { product });
    }
    let gamma = resolve_gamma(cfg.gamma, x);
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(AadError::InvalidParameter(format!("gamma = {gamma} must be positive")));
    }
    let c = 1.0 / product;
    let mut kernel = KernelRows::new(x, gamma, cfg.cache_mb);

    // feasible start: the first ⌊νn⌋ coefficients at the bound, remainder on the next
    let mut alpha = vec![0.0; n];
    let full_count = (product.floor() as usize).min(n);
    for a in alpha.iter_mut().take(full_count) {
        *a = c;
    }
    if full_count < n {
        alpha[full_count] = (1.0 - full_count as f64 * c).max(0.0);
    }
    let mut grad = vec![0.0; n];
    for j in 0..n {
        if alpha[j] > 0.0 {
            let a = alpha[j];
            let row = kernel.row(j);
            for (g, &k) in grad.iter_mut().zip(row) {
                *g += a * k;
            }
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut violation;
    loop {
        let (mut up, mut up_g) = (usize::MAX, f64::INFINITY);
        let (mut low, mut low_g) = (usize::MAX, f64::NEG_INFINITY);
        for t in 0..n {
            if alpha[t] < c && grad[t] < up_g {
                up = t;
                up_g = grad[t];
            }
            if alpha[t] > 0.0 && grad[t] > low_g {
                low = t;
                low_g = grad[t];
            }
        }
        violation = if up == usize::MAX || low == usize::MAX { 0.0 } else { low_g - up_g };
        if violation < cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_passes {
            break;
        }
        iterations += 1;

        let k_up_low = kernel.row(up)[low];
        let eta = (2.0 - 2.0 * k_up_low).max(1e-12);
        let room_up = c - alpha[up];
        let room_low = alpha[low];
        let mut step = violation / eta;
        if step >= room_up || step >= room_low {
            step = room_up.min(room_low);
        }
        if step == room_up {
            alpha[up] = c;
        } else {
            alpha[up] += step;
        }
        if step == room_low {
            alpha[low] = 0.0;
        } else {
            alpha[low] -= step;
        }
        let row_up = kernel.row(up).to_vec();
        let row_low = kernel.row(low);
        for ((g, &ku), &kl) in grad.iter_mut().zip(&row_up).zip(row_low) {
            *g += step * (ku - kl);
        }
    }
    if !converged {
        log::warn!(
            "ocsvm: no convergence after {iterations} pair updates (max KKT violation {violation:.3e})"
        );
    }

    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let rho = if !free.is_empty() {
        free.iter().map(|&t| grad[t]).sum::<f64>() / free.len() as f64
    } else {
        let at_bound = (0..n).filter(|&t| alpha[t] >= c).map(|t| grad[t]).fold(f64::NEG_INFINITY, f64::max);
        let at_zero = (0..n).filter(|&t| alpha[t] <= 0.0).map(|t| grad[t]).fold(f64::INFINITY, f64::min);
        match (at_bound.is_finite(), at_zero.is_finite()) {
            (true, true) => 0.5 * (at_bound + at_zero),
            (true, false) => at_bound,
            (false, true) => at_zero,
            (false, false) => 0.0,
        }
    };
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let model = OcSvmModel {
        support_vectors: x.select(ndarray::Axis(0), &sv),
        alphas: sv.iter().map(|&t| alpha[t]).collect(),
        rho,
        nu: cfg.nu,
        gamma,
    };
    let report = OcSvmFitReport {
        iterations,
        converged,
        max_violation: violation,
        objective,
        alpha_full: alpha,
        upper_bound: c,
    };
    Ok((model, report))
}

impl OcSvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `g(x) = Σ αⱼ k(svⱼ, x)`.
    pub fn decision_sum(&self, x: ArrayView1<f64>) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.alphas)
            .map(|(sv, &a)| a * rbf(sv, x, self.gamma))
            .sum()
    }
}

/// `ρ − g(x)` per row; positive means outside the learned region.
pub fn ocsvm_score(model: &OcSvmModel, x: &Array2<f64>) -> Result<Vec<f64>> {
    if x.ncols() != model.dim() {
        return Err(AadError::DimensionMismatch { expected: model.dim(), got: x.ncols() });
    }
    Ok(par::map_range(x.nrows(), |i| model.rho - model.decision_sum(x.row(i))))
}
