//! Independent reference implementations used as test oracles.
//!
//! Everything here is deliberately naive: plain loops, no shared helpers
//! from the library, so a bug in the optimized path cannot hide in both.

#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// One-sided DFT of a windowed segment as (re, im) pairs, O(N²).
pub fn naive_dft(segment: &[f64], window: &[f64]) -> Vec<(f64, f64)> {
    let n = segment.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, (&x, &w)) in segment.iter().zip(window).enumerate() {
                // reduce the phase index first so large k·t keep full precision
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += x * w * ang.cos();
                im += x * w * ang.sin();
            }
            (re, im)
        })
        .collect()
}

/// `mel(f) = 2595 log10(1 + f / 700)`.
pub fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Linear-interpolation percentile via order statistics found by counting,
/// without sorting the input.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let n = values.len();
    let kth = |k: usize| -> f64 {
        // the value with exactly k smaller-ranked elements (ties share ranks)
        for &v in values {
            let below = values.iter().filter(|&&u| u < v).count();
            let equal = values.iter().filter(|&&u| u == v).count();
            if below <= k && k < below + equal {
                return v;
            }
        }
        unreachable!("rank {k} out of range")
    };
    let pos = p / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = if lo + 1 < n { lo + 1 } else { lo };
    let (a, b) = (kth(lo), kth(hi));
    a + (pos - lo as f64) * (b - a)
}

/// Orthonormal DCT-II by direct summation.
pub fn dct_ii(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * scale
        })
        .collect()
}

/// Probability a positive outscores a negative over all pairs, ties halved.
pub fn pairwise_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if li == 0 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// F1 of `score > threshold` predictions; 0 when undefined.
pub fn f1_at(labels: &[u8], scores: &[f64], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&l, &s) in labels.iter().zip(scores) {
        match (s > threshold, l != 0) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// Plain Lloyd from given centroids until assignments stop changing.
/// Returns (centroids, labels).
pub fn lloyd(x: &Array2<f64>, init: &Array2<f64>, max_iter: usize) -> (Array2<f64>, Vec<usize>) {
    let (n, d) = x.dim();
    let k = init.nrows();
    let mut c = init.clone();
    let assign = |c: &Array2<f64>| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = (0, f64::INFINITY);
                for j in 0..k {
                    let mut s = 0.0;
                    for t in 0..d {
                        s += (x[[i, t]] - c[[j, t]]).powi(2);
                    }
                    if s < best.1 {
                        best = (j, s);
                    }
                }
                best.0
            })
            .collect()
    };
    let mut labels = assign(&c);
    for _ in 0..max_iter {
        for j in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == j).collect();
            if members.is_empty() {
                continue;
            }
            for t in 0..d {
                c[[j, t]] = members.iter().map(|&i| x[[i, t]]).sum::<f64>() / members.len() as f64;
            }
        }
        let next = assign(&c);
        if next == labels {
            break;
        }
        labels = next;
    }
    (c, labels)
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

pub fn gram(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| rbf(&rows[i], &rows[j], gamma))
}

pub fn dual_objective(k: &Array2<f64>, alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += alpha[i] * alpha[j] * k[[i, j]];
        }
    }
    0.5 * s
}

/// Euclidean projection onto `{0 ≤ a ≤ c, Σ a = 1}` by bisection on the shift.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let total = |tau: f64| v.iter().map(|&x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - tau).clamp(0.0, c)).collect()
}

/// Accelerated projected gradient on the one-class dual. Returns the
/// minimizer found and its objective.
pub fn projected_gradient_dual(k: &Array2<f64>, c: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = k.nrows();
    // Gershgorin bound on the largest eigenvalue
    let lip = (0..n).map(|i| k.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lip;
    let mut a = project(&vec![1.0 / n as f64; n], c);
    let mut y = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[[i, j]] * y[j]).sum()).collect();
        let v: Vec<f64> = y.iter().zip(&grad).map(|(yi, g)| yi - step * g).collect();
        let next = project(&v, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next.iter().zip(&a).map(|(n, o)| n + (t - 1.0) / t_next * (n - o)).collect();
        a = next;
        t = t_next;
    }
    let obj = dual_objective(k, &a);
    (a, obj)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gate weights in `[x; h]` layout: `w[gate][unit][input]`, gates i, f, o, g.
pub struct ScalarCell {
    pub w: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
}

impl ScalarCell {
    pub fn random(n_in: usize, hidden: usize, r: &mut impl Rng) -> Self {
        let w = (0..4)
            .map(|_| (0..hidden).map(|_| (0..n_in + hidden).map(|_| r.random_range(-0.8..0.8)).collect()).collect())
            .collect();
        let b = (0..4).map(|_| (0..hidden).map(|_| r.random_range(-0.5..0.5)).collect()).collect();
        Self { w, b }
    }

    /// One step; returns (h', c').
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hidden = h.len();
        let mut h_next = vec![0.0; hidden];
        let mut c_next = vec![0.0; hidden];
        for u in 0..hidden {
            let z = |g: usize| -> f64 {
                let mut s = self.b[g][u];
                for (j, &v) in x.iter().chain(h.iter()).enumerate() {
                    s += self.w[g][u][j] * v;
                }
                s
            };
            let (i, f, o, gg) = (sigmoid(z(0)), sigmoid(z(1)), sigmoid(z(2)), z(3).tanh());
            c_next[u] = f * c[u] + i * gg;
            h_next[u] = o * c_next[u].tanh();
        }
        (h_next, c_next)
    }

    pub fn gate_blocks(&self) -> (Vec<Array2<f64>>, Vec<ndarray::Array1<f64>>) {
        let hidden = self.b[0].len();
        let width = self.w[0][0].len();
        let mats = (0..4)
            .map(|g| Array2::from_shape_fn((hidden, width), |(u, j)| self.w[g][u][j]))
            .collect();
        let biases = (0..4).map(|g| ndarray::Array1::from(self.b[g].clone())).collect();
        (mats, biases)
    }
}

/// Encoder over the columns of `frame` (`[n_mels][T]`), decoder fed the
/// final encoder state at every step, linear projection out. Returns the
/// reconstruction as `[T][n_mels]`.
pub fn scalar_autoencoder(
    enc: &ScalarCell,
    dec: &ScalarCell,
    proj_w: &[Vec<f64>],
    proj_b: &[f64],
    frame: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let hidden = enc.b[0].len();
    let steps = frame[0].len();
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    for t in 0..steps {
        let x: Vec<f64> = frame.iter().map(|row| row[t]).collect();
        (h, c) = enc.step(&x, &h, &c);
    }
    let latent = h;
    let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
    let mut out = Vec::new();
    for _ in 0..steps {
        (h, c) = dec.step(&latent, &h, &c);
        out.push(
            proj_w
                .iter()
                .zip(proj_b)
                .map(|(row, &b)| b + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>())
                .collect(),
        );
    }
    out
}

/// Energy in `[lo, hi)` Hz of an amplitude spectrum.
pub fn band_energy(freqs: &[f64], amps: &[f64], lo: f64, hi: f64) -> f64 {
    freqs.iter().zip(amps).filter(|(f, _)| **f >= lo && **f < hi).map(|(_, a)| a * a).sum()
}

/// Energy of `samples` above `cutoff` Hz by naive DFT over one window.
pub fn windowed_high_band_energy(samples: &[f64], sample_rate: f64, cutoff: f64) -> f64 {
    let n = samples.len();
    let ones = vec![1.0; n];
    naive_dft(samples, &ones)
        .into_iter()
        .enumerate()
        .filter(|(k, _)| *k as f64 * sample_rate / n as f64 >= cutoff)
        .map(|(_, (re, im))| re * re + im * im)
        .sum()
}
