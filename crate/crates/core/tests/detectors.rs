mod common;

use aad_core::features::FrameTensor;
use aad_core::kmeans::{kmeans_fit, kmeans_pp_init, kmeans_score, KMeansConfig};
use aad_core::lstm_ae::{lstm_ae_forward, lstm_ae_init, lstm_ae_score, lstm_ae_train, LstmAeModel, LstmConfig};
use aad_core::ocsvm::{ocsvm_fit, ocsvm_score, Gamma, OcSvmConfig};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut r = common::rng(seed);
    Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut r))
}

fn blobs(seed: u64) -> Array2<f64> {
    let centers = [(0.0, 0.0), (10.0, 10.0), (-10.0, 10.0)];
    let mut r = common::rng(seed);
    Array2::from_shape_fn((60, 2), |(i, j)| {
        let c = centers[i / 20];
        let noise: f64 = StandardNormal.sample(&mut r);
        (if j == 0 { c.0 } else { c.1 }) + 0.5 * noise
    })
}

fn frames_from(values: Array3<f32>) -> FrameTensor {
    let n = values.dim().0;
    FrameTensor::from_parts(values, 1, (0..n).collect(), 16000, 512).unwrap()
}

#[test]
fn kmeans_inertia_never_increases() {
    for seed in 0..100 {
        let x = gaussian(80, 3, 500 + seed);
        let m = kmeans_fit(&x, &KMeansConfig { k: 5, max_iter: 300, tol: 1e-4 }, seed).unwrap();
        for w in m.inertia_history.windows(2) {
            assert!(w[1] <= w[0], "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn kmeans_three_blobs_match_lloyd_oracle_from_same_seeding() {
    let x = blobs(3);
    let seed = 17;
    let init = kmeans_pp_init(&x, 3, &mut ChaCha8Rng::seed_from_u64(seed)).0;
    let (oracle_c, oracle_labels) = common::lloyd(&x, &init, 300);
    let m = kmeans_fit(&x, &KMeansConfig { k: 3, max_iter: 300, tol: 1e-9 }, seed).unwrap();
    let labels: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|r| {
            (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = r.iter().zip(m.centroids.row(a)).map(|(p, c)| (p - c).powi(2)).sum();
                    let db: f64 = r.iter().zip(m.centroids.row(b)).map(|(p, c)| (p - c).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap()
        })
        .collect();
    assert_eq!(labels, oracle_labels);
    for (a, b) in m.centroids.iter().zip(oracle_c.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    // and the partition is the true one
    for blob in 0..3 {
        let l = labels[blob * 20];
        assert!(labels[blob * 20..(blob + 1) * 20].iter().all(|&v| v == l));
    }
}

#[test]
fn kmeans_seed_determinism() {
    let x = gaussian(200, 4, 1);
    let cfg = KMeansConfig::default();
    assert_eq!(kmeans_fit(&x, &cfg, 9).unwrap(), kmeans_fit(&x, &cfg, 9).unwrap());
}

#[test]
fn kmeans_scores_match_brute_force_nearest_centroid() {
    let m = kmeans_fit(&gaussian(100, 3, 2), &KMeansConfig::default(), 4).unwrap();
    let q = gaussian(50, 3, 3);
    let s = kmeans_score(&m, &q).unwrap();
    for (i, row) in q.rows().into_iter().enumerate() {
        let best = m
            .centroids
            .rows()
            .into_iter()
            .map(|c| c.iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!((s[i] - best).abs() < 1e-12);
    }
}

fn kkt_gap(k: &Array2<f64>, alpha: &[f64], c: f64) -> f64 {
    let n = alpha.len();
    let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[[i, j]] * alpha[j]).sum()).collect();
    // may grow: α < C; may shrink: α > 0
    let up = (0..n).filter(|&i| alpha[i] < c).map(|i| grad[i]).fold(f64::INFINITY, f64::min);
    let low = (0..n).filter(|&i| alpha[i] > 0.0).map(|i| grad[i]).fold(f64::NEG_INFINITY, f64::max);
    low - up
}

#[test]
fn ocsvm_matches_projected_gradient_oracle() {
    let x = gaussian(200, 2, 21);
    let cfg = OcSvmConfig { nu: 0.1, gamma: Gamma::Value(0.5), ..OcSvmConfig::default() };
    let (_, report) = ocsvm_fit(&x, &cfg).unwrap();
    assert!(report.converged);
    let k = common::gram(&x, 0.5);
    let c = 1.0 / (0.1 * 200.0);
    let own = common::dual_objective(&k, &report.alpha_full);
    assert!((own - report.objective).abs() < 1e-10);
    let sum: f64 = report.alpha_full.iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(report.alpha_full.iter().all(|&a| (0.0..=c + 1e-12).contains(&a)));
    let (_, oracle) = common::projected_gradient_dual(&k, c, 20_000);
    assert!((own - oracle).abs() <= 1e-4, "smo {own} vs oracle {oracle}");
    let gap = kkt_gap(&k, &report.alpha_full, c);
    assert!(gap <= 1e-3, "KKT gap {gap}");
    assert!(report.max_violation <= 1e-3);
}

/// Margin support vectors sit on the boundary only up to the solver
/// tolerance, so a point counts as outside when its score exceeds `tol`.
#[test]
fn ocsvm_nu_property() {
    let x = gaussian(500, 3, 33);
    let n = 500.0;
    for nu in [0.05, 0.1, 0.2] {
        let cfg = OcSvmConfig { nu, ..OcSvmConfig::default() };
        let (m, report) = ocsvm_fit(&x, &cfg).unwrap();
        assert!(report.converged);
        let s = ocsvm_score(&m, &x).unwrap();
        let c = report.upper_bound;
        for (i, &v) in s.iter().enumerate() {
            let a = report.alpha_full[i];
            // only bounded multipliers may lie outside
            if v > cfg.tol {
                assert_eq!(a, c, "nu {nu}: point {i} outside with alpha {a}");
            }
        }
        let outliers = s.iter().filter(|&&v| v > cfg.tol).count() as f64 / n;
        let svs = report.alpha_full.iter().filter(|&&a| a > 0.0).count() as f64 / n;
        assert!(outliers <= nu + 1.0 / n, "nu {nu}: outlier fraction {outliers}");
        assert!(svs >= nu - 1.0 / n, "nu {nu}: SV fraction {svs}");
    }
}

#[test]
fn ocsvm_scores_match_kernel_sum() {
    let x = gaussian(150, 4, 40);
    let (m, _) = ocsvm_fit(&x, &OcSvmConfig::default()).unwrap();
    let q = gaussian(40, 4, 41);
    let s = ocsvm_score(&m, &q).unwrap();
    for (i, row) in q.rows().into_iter().enumerate() {
        let row = row.to_vec();
        let sum: f64 = m
            .support_vectors
            .rows()
            .into_iter()
            .zip(&m.alphas)
            .map(|(sv, a)| a * common::rbf(&sv.to_vec(), &row, m.gamma))
            .sum();
        assert!((s[i] - (m.rho - sum)).abs() < 1e-10);
    }
}

#[test]
fn ocsvm_is_deterministic() {
    let x = gaussian(120, 2, 50);
    assert_eq!(ocsvm_fit(&x, &OcSvmConfig::default()).unwrap(), ocsvm_fit(&x, &OcSvmConfig::default()).unwrap());
}

struct ScalarModel {
    enc: common::ScalarCell,
    dec: common::ScalarCell,
    proj_w: Vec<Vec<f64>>,
    proj_b: Vec<f64>,
}

fn scalar_model(n_mels: usize, hidden: usize, seed: u64) -> (ScalarModel, LstmAeModel) {
    let mut r = common::rng(seed);
    let enc = common::ScalarCell::random(n_mels, hidden, &mut r);
    let dec = common::ScalarCell::random(hidden, hidden, &mut r);
    let proj_w: Vec<Vec<f64>> =
        (0..n_mels).map(|_| (0..hidden).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let proj_b: Vec<f64> = (0..n_mels).map(|_| r.random_range(-0.2..0.2)).collect();
    let (em, eb) = enc.gate_blocks();
    let (dm, db) = dec.gate_blocks();
    let model = LstmAeModel::from_gate_blocks(
        n_mels,
        hidden,
        (&em, &eb),
        (&dm, &db),
        Array2::from_shape_fn((n_mels, hidden), |(m, u)| proj_w[m][u]),
        Array1::from(proj_b.clone()),
    );
    (ScalarModel { enc, dec, proj_w, proj_b }, model)
}

fn random_frames(n: usize, n_mels: usize, t: usize, seed: u64) -> FrameTensor {
    let mut r = common::rng(seed);
    frames_from(Array3::from_shape_fn((n, n_mels, t), |_| r.random_range(0.0f32..1.0)))
}

#[test]
fn lstm_forward_matches_scalar_oracle() {
    let (oracle, model) = scalar_model(5, 3, 60);
    let frames = random_frames(6, 5, 4, 61);
    let out = lstm_ae_forward(&model, &frames).unwrap();
    for b in 0..6 {
        let frame: Vec<Vec<f64>> =
            (0..5).map(|m| (0..4).map(|t| frames.frames()[[b, m, t]] as f64).collect()).collect();
        let rec = common::scalar_autoencoder(&oracle.enc, &oracle.dec, &oracle.proj_w, &oracle.proj_b, &frame);
        let mut mse = 0.0;
        for t in 0..4 {
            for m in 0..5 {
                assert!((out.reconstructions[[b, t, m]] - rec[t][m]).abs() < 1e-10);
                mse += (rec[t][m] - frame[m][t]).powi(2);
            }
        }
        assert!((out.mse[b] - mse / 20.0).abs() < 1e-10);
    }
}

#[test]
fn lstm_gradients_match_central_differences() {
    let (_, mut model) = scalar_model(5, 3, 70);
    let frames = random_frames(3, 5, 4, 71);
    let (_, grad) = model.loss_and_flat_grad(&frames).unwrap();
    let base = model.flat_params();
    assert_eq!(grad.len(), model.param_count());
    let step = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        model.set_flat_params(&p);
        let up = model.loss_and_flat_grad(&frames).unwrap().0;
        p[i] = base[i] - step;
        model.set_flat_params(&p);
        let down = model.loss_and_flat_grad(&frames).unwrap().0;
        let numeric = (up - down) / (2.0 * step);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-4, "max relative gradient error {worst:e}");
}

/// One frame repeated 16 times, batch size 1: 16 optimizer steps per epoch.
#[test]
fn lstm_memorizes_a_single_frame() {
    let mut r = common::rng(80);
    let cfg = LstmConfig { hidden: 16, epochs: 200, batch: 1, lr: 1e-3 };
    for _ in 0..3 {
        let one = Array3::from_shape_fn((1, 8, 6), |_| r.random_range(0.0f32..1.0));
        let frames = frames_from(Array3::from_shape_fn((16, 8, 6), |(_, m, t)| one[[0, m, t]]));
        let trained = lstm_ae_train(&lstm_ae_init(8, 16, 1).unwrap(), &frames, &cfg, 2).unwrap();
        let mse = lstm_ae_score(&trained, &frames).unwrap()[0];
        assert!(mse < 1e-3, "mse after 200 epochs: {mse}");
        assert_eq!(trained.training.as_ref().unwrap().loss_history.len(), 200);
    }
}

#[test]
fn lstm_training_is_bit_deterministic() {
    let frames = random_frames(40, 6, 5, 90);
    let model = lstm_ae_init(6, 8, 3).unwrap();
    let cfg = LstmConfig { hidden: 8, epochs: 3, batch: 16, lr: 1e-3 };
    let a = lstm_ae_train(&model, &frames, &cfg, 7).unwrap();
    let b = lstm_ae_train(&model, &frames, &cfg, 7).unwrap();
    assert_eq!(a.flat_params(), b.flat_params());
    assert_eq!(a.training, b.training);
}

#[test]
fn lstm_epoch_zero_loss_is_untrained_mse_with_one_batch() {
    let frames = random_frames(20, 4, 3, 95);
    let model = lstm_ae_init(4, 5, 4).unwrap();
    let untrained: f64 = lstm_ae_score(&model, &frames).unwrap().iter().sum::<f64>() / 20.0;
    let cfg = LstmConfig { hidden: 5, epochs: 1, batch: 20, lr: 1e-3 };
    let t = lstm_ae_train(&model, &frames, &cfg, 0).unwrap();
    assert!((t.training.unwrap().loss_history[0] - untrained).abs() < 1e-12);
}

#[test]
fn lstm_zero_input_reconstruction_is_bias_driven() {
    let model = lstm_ae_init(4, 5, 8).unwrap();
    let zeros = frames_from(Array3::zeros((2, 4, 3)));
    let out = lstm_ae_forward(&model, &zeros).unwrap();
    let mean_sq = out.reconstructions.slice(ndarray::s![0, .., ..]).iter().map(|v| v * v).sum::<f64>() / 12.0;
    assert!((out.mse[0] - mean_sq).abs() < 1e-15);
    assert_eq!(out.mse[0], out.mse[1]);
}

#[test]
fn lstm_batched_scores_equal_single_frame_scores() {
    let (_, model) = scalar_model(5, 3, 100);
    let frames = random_frames(130, 5, 4, 101);
    let batched = lstm_ae_score(&model, &frames).unwrap();
    for i in [0, 63, 64, 129] {
        let single = lstm_ae_score(&model, &frames.select(&[i])).unwrap()[0];
        assert!((batched[i] - single).abs() < 1e-12);
    }
}
