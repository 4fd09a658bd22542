mod common;

use aad_core::audio_io::{write_wav_pcm16, AudioClip};
use aad_core::calibration::read_report_threshold;
use aad_core::detector::fit;
use aad_core::features::{fft_amplitude_spectrum, mel_filterbank, read_frames};
use aad_core::metrics::roc_auc;
use aad_core::pipeline::{
    calibrate, frame_labels_path, frames_path, inspect, read_frame_labels, read_matrix, read_scores, run_bench,
    write_bench_artifacts, write_features, write_synth_dataset, CalibMode, Split,
};
use aad_core::synthgen::{
    frame_labels, gen_normal, inject_knocks, parse_labels, labels_text, AnomalyInterval, SynthConfig,
};
use aad_core::{AadError, DetectorKind, ErrorClass, FrameTensor, RunConfig};
use ndarray::Array3;
use rand::Rng;

#[test]
fn normal_audio_stays_below_2khz() {
    for seed in 0..5 {
        let clip = gen_normal(10.0, 16000, seed).unwrap();
        assert_eq!(clip.len(), 160_000);
        let (f, a) = fft_amplitude_spectrum(&clip);
        let ratio = common::band_energy(&f, &a, 2000.0, f64::INFINITY) / common::band_energy(&f, &a, 0.0, f64::INFINITY);
        assert!(ratio < 0.05, "seed {seed}: high-band ratio {ratio}");
    }
}

#[test]
fn generation_is_deterministic() {
    let a = inject_knocks(&gen_normal(30.0, 16000, 4).unwrap(), 12.0, 5).unwrap();
    let b = inject_knocks(&gen_normal(30.0, 16000, 4).unwrap(), 12.0, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn knock_counts_follow_the_poisson_band() {
    let base = gen_normal(60.0, 16000, 0).unwrap();
    let inside = (0..100)
        .filter(|&seed| {
            let l = inject_knocks(&base, 12.0, seed).unwrap();
            assert!(l.intervals.iter().all(|iv| iv.start_s >= 0.0 && iv.end_s <= 60.0 && iv.start_s < iv.end_s));
            (4..=22).contains(&l.intervals.len())
        })
        .count();
    assert!(inside >= 95, "{inside}/100 seeds inside [4, 22]");
}

#[test]
fn knock_windows_gain_six_db_above_2khz() {
    let base = gen_normal(60.0, 16000, 7).unwrap();
    let l = inject_knocks(&base, 12.0, 8).unwrap();
    let x = l.clip.samples();
    let mut checked = 0;
    for (i, iv) in l.intervals.iter().enumerate() {
        let (a, b) = ((iv.start_s * 16000.0) as usize, (iv.end_s * 16000.0) as usize);
        let w = b - a;
        // the adjacent window just before the knock must itself be knock-free
        if a < w || (i > 0 && l.intervals[i - 1].end_s * 16000.0 > (a - w) as f64) {
            continue;
        }
        let knock = common::windowed_high_band_energy(&x[a..b], 16000.0, 2000.0);
        let before = common::windowed_high_band_energy(&x[a - w..a], 16000.0, 2000.0);
        let gain = 10.0 * (knock / before).log10();
        assert!(gain >= 6.0, "knock {i}: {gain:.2} dB");
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn frame_labels_match_overlap_oracle() {
    let mut r = common::rng(21);
    let tensor = FrameTensor::from_parts(
        Array3::zeros((200, 1, 16)),
        3,
        (0..200).map(|i| i * 3).collect(),
        16000,
        512,
    )
    .unwrap();
    for _ in 0..50 {
        let mut t = 0.0;
        let mut ivs = Vec::new();
        while t < 20.0 {
            let start = t + r.random_range(0.0..3.0);
            let end = start + r.random_range(0.01..0.5);
            ivs.push(AnomalyInterval { start_s: start, end_s: end, kind: "knock".into() });
            t = end;
        }
        let labels = frame_labels(&ivs, &tensor);
        for (i, &l) in labels.iter().enumerate() {
            let a = (i * 3) as f64 * 512.0 / 16000.0;
            let b = (i * 3 + 16) as f64 * 512.0 / 16000.0;
            let hit = ivs.iter().any(|iv| iv.end_s > a && iv.start_s < b);
            assert_eq!(l == 1, hit);
        }
        let back = parse_labels(&labels_text(&ivs)).unwrap();
        assert_eq!(back.len(), ivs.len());
        assert!(back.iter().zip(&ivs).all(|(x, y)| (x.start_s - y.start_s).abs() < 1e-6));
    }
}

#[test]
fn split_durations_follow_configured_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let sc = SynthConfig { normal_s: 80.0, anomalous_s: 20.0, ..SynthConfig::knock_benchmark() };
    let m = write_synth_dataset(dir.path(), &sc, 3).unwrap();
    let expect = [70.0, 10.0, 10.0, 10.0];
    let frame_s = 0.512;
    for (split, want) in Split::ALL.into_iter().zip(expect) {
        let rec = m.split(split).next().unwrap();
        let clip = aad_core::audio_io::load_wav(&rec.wav).unwrap();
        assert!((clip.duration_s() - want).abs() <= frame_s, "{}: {}", split.name(), clip.duration_s());
        assert_eq!(rec.labels.is_some(), matches!(split, Split::Calib | Split::Test));
    }
}

#[test]
fn inspect_of_normal_clip_keeps_energy_below_2khz_rows() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("n.wav");
    write_wav_pcm16(&wav, &gen_normal(10.0, 16000, 11).unwrap()).unwrap();
    let cfg = RunConfig::default();
    let [mel_path, mfcc_path, fft_path] = inspect(&wav, dir.path(), &cfg).unwrap();
    let mel_db = read_matrix(&mel_path).unwrap();
    let fb = mel_filterbank(16000, cfg.features.n_fft, cfg.features.n_mels, 0.0, None).unwrap();
    let (mut low, mut total) = (0.0, 0.0);
    for (m, row) in mel_db.rows().into_iter().enumerate() {
        let e: f64 = row.iter().map(|db| 10f64.powf(db / 10.0)).sum();
        total += e;
        if fb.center_hz(m) < 2000.0 {
            low += e;
        }
    }
    assert!(low / total > 0.95, "low-band share {}", low / total);
    assert_eq!(read_matrix(&mfcc_path).unwrap().ncols(), mel_db.ncols());
    assert!(read_matrix(&fft_path).unwrap().nrows() > 0);
}

#[test]
fn silent_wav_fails_as_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("zero.wav");
    write_wav_pcm16(&wav, &AudioClip::new(vec![0.0; 16000], 16000).unwrap()).unwrap();
    let err = inspect(&wav, dir.path(), &RunConfig::default()).unwrap_err();
    assert!(matches!(err.root(), AadError::AllZeroSpectrogram));
    assert_eq!(err.class(), ErrorClass::Numeric);
}

/// Bench on a short dataset equals running the stages one by one through
/// the persisted intermediates, and its AUC matches the score files.
#[test]
fn bench_equals_chained_stages() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let sc = SynthConfig { normal_s: 96.0, anomalous_s: 60.0, ..SynthConfig::knock_benchmark() };
    let manifest = write_synth_dataset(&data, &sc, 42).unwrap();
    let mut cfg = RunConfig::default();
    cfg.lstm.hidden = 8;
    cfg.lstm.epochs = 2;

    let bench = run_bench(&manifest, &cfg, &DetectorKind::ALL).unwrap();
    let out = dir.path().join("bench");
    write_bench_artifacts(&out, &bench, &cfg).unwrap();

    let feats = dir.path().join("features");
    write_features(&manifest, &cfg, &feats).unwrap();
    let (train, _) = read_frames(frames_path(&feats, Split::Train)).unwrap();
    let (val, _) = read_frames(frames_path(&feats, Split::Val)).unwrap();
    let (calib, _) = read_frames(frames_path(&feats, Split::Calib)).unwrap();
    let calib_labels = read_frame_labels(&frame_labels_path(&feats, Split::Calib)).unwrap();
    let (test, _) = read_frames(frames_path(&feats, Split::Test)).unwrap();
    let test_labels = read_frame_labels(&frame_labels_path(&feats, Split::Test)).unwrap();
    assert_eq!(test_labels, bench.test_labels);
    assert_eq!(read_frame_labels(&out.join("test.frame_labels")).unwrap(), bench.test_labels);

    for run in &bench.runs {
        let kind = run.model.kind();
        let model = fit(kind, &train, &cfg).unwrap();
        let scores = model.score(&test).unwrap().scores;
        assert_eq!(scores, run.test_scores, "{}", kind.id());
        let res = calibrate(
            &model.score(&val).unwrap().scores,
            Some((&model.score(&calib).unwrap().scores, &calib_labels)),
            &cfg,
            CalibMode::Auto,
            kind.id(),
        )
        .unwrap();
        assert_eq!(res.threshold, run.calibration.threshold);

        let (persisted, inference) = read_scores(&out.join(format!("{}.test.scores", kind.id()))).unwrap();
        assert!(inference.is_some());
        let auc = roc_auc(&bench.test_labels, &persisted).unwrap();
        assert!((auc - run.report.roc_auc).abs() < 1e-12);
        let (detector, thr) = read_report_threshold(out.join(format!("{}.calibration.txt", kind.id()))).unwrap();
        assert_eq!(detector, kind.id());
        assert_eq!(thr, run.calibration.threshold);
    }
    let json = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert_eq!(aad_core::metrics::reports_from_json(&json).unwrap().len(), 3);
}
