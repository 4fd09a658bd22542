//! Dataset-level orchestration: manifests, per-split feature extraction,
//! persisted intermediates (frames, scores, matrices) and the benchmark.
//!
//! Each stage can run on its own from files written by the previous one;
//! `run_bench` chains the same functions in memory, so both routes produce
//! identical numbers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::audio_io::{load_wav, write_wav_pcm16};
use crate::calibration::{select_by_f1, select_default, sweep_thresholds, write_report, CalibrationResult};
use crate::config::{hex, RunConfig};
use crate::detector::{fit, DetectorKind, DetectorModel};
use crate::error::{AadError, Result, StageExt};
use crate::features::{extract_frames, fft_amplitude_spectrum, mel_db, mfcc, write_frames, FrameTensor};
use crate::metrics::{confusion_text, reports_to_json, reports_to_table, timed, EvalReport};
use crate::synthgen::{frame_labels, generate_splits, read_labels, write_labels, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Calib,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Calib, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Calib => "calib",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| AadError::Manifest(format!("unknown split '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub wav: PathBuf,
    pub split: Split,
    pub labels: Option<PathBuf>,
}

/// `path<TAB>split<TAB>labels_path?` lines; `#` comments. Relative paths
/// resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub config_digest: Option<String>,
}

const DIGEST_TAG: &str = "# config_digest = ";

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (n, line) in text.lines().enumerate() {
            if let Some(d) = line.strip_prefix(DIGEST_TAG) {
                m.config_digest = Some(d.trim().to_string());
                continue;
            }
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(AadError::Manifest(format!("line {}: expected path<TAB>split[<TAB>labels]", n + 1)));
            }
            let split = Split::parse(cols[1].trim()).map_err(|e| AadError::Manifest(format!("line {}: {e}", n + 1)))?;
            let labels = cols.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| base.join(s));
            if labels.is_some() && matches!(split, Split::Train | Split::Val) {
                return Err(AadError::Manifest(format!(
                    "line {}: {} records must be normal-only and carry no labels",
                    n + 1,
                    split.name()
                )));
            }
            m.records.push(ManifestRecord { wav: base.join(cols[0].trim()), split, labels });
        }
        if !m.records.iter().any(|r| r.split == Split::Train) {
            return Err(AadError::Manifest("no train records".into()));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AadError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Writes paths relative to `base` when possible.
    pub fn to_text(&self, base: &Path) -> String {
        let mut s = String::from("# path\tsplit\tlabels\n");
        if let Some(d) = &self.config_digest {
            let _ = writeln!(s, "{DIGEST_TAG}{d}");
        }
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        for r in &self.records {
            let _ = write!(s, "{}\t{}", rel(&r.wav), r.split.name());
            if let Some(l) = &r.labels {
                let _ = write!(s, "\t{}", rel(l));
            }
            s.push('\n');
        }
        s
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.split(split).next().is_some()
    }
}

/// Writes the synthetic dataset (WAVs, label files, manifest) into `out`.
pub fn write_synth_dataset(out: &Path, cfg: &SynthConfig, seed: u64) -> Result<Manifest> {
    fs::create_dir_all(out).map_err(|e| AadError::io(out, e))?;
    let splits = generate_splits(cfg, seed).stage("synth")?;
    let mut manifest = Manifest::default();
    for s in splits {
        let wav = out.join(format!("{}.wav", s.name));
        write_wav_pcm16(&wav, &s.clip)?;
        let labels = match &s.intervals {
            Some(iv) => {
                let p = out.join(format!("{}.labels", s.name));
                write_labels(&p, iv)?;
                Some(p)
            }
            None => None,
        };
        manifest.records.push(ManifestRecord { wav, split: Split::parse(s.name)?, labels });
    }
    let mp = out.join("manifest.tsv");
    fs::write(&mp, manifest.to_text(out)).map_err(|e| AadError::io(&mp, e))?;
    Ok(manifest)
}

/// Frames of every record in `split`, concatenated, with per-frame labels.
pub fn split_features(manifest: &Manifest, split: Split, cfg: &RunConfig) -> Result<(FrameTensor, Vec<u8>)> {
    let mut tensors = Vec::new();
    let mut labels = Vec::new();
    for rec in manifest.split(split) {
        let clip = load_wav(&rec.wav).stage("load_wav")?;
        let frames = extract_frames(&clip, &cfg.features)?;
        let intervals = match &rec.labels {
            Some(p) => read_labels(p).stage("labels")?,
            None => Vec::new(),
        };
        labels.extend(frame_labels(&intervals, &frames));
        tensors.push(frames);
    }
    if tensors.is_empty() {
        return Err(AadError::Manifest(format!("no {} records", split.name())));
    }
    Ok((FrameTensor::concat(&tensors)?, labels))
}

pub fn frames_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.frames", split.name()))
}

pub fn frame_labels_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.frame_labels", split.name()))
}

pub fn write_frame_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).map_err(|e| AadError::io(path, e))
}

pub fn read_frame_labels(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| AadError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(AadError::Format { what: "frame labels", detail: format!("'{other}' is not 0/1") }),
        })
        .collect()
}

/// Extracts and persists frames (and labels) for every split present.
pub fn write_features(manifest: &Manifest, cfg: &RunConfig, out: &Path) -> Result<Vec<Split>> {
    fs::create_dir_all(out).map_err(|e| AadError::io(out, e))?;
    let mut done = Vec::new();
    for split in Split::ALL {
        if !manifest.has_split(split) {
            continue;
        }
        let (frames, labels) = split_features(manifest, split, cfg)?;
        write_frames(frames_path(out, split), &frames, cfg.features.n_fft)?;
        write_frame_labels(&frame_labels_path(out, split), &labels)?;
        done.push(split);
    }
    Ok(done)
}

/// Candidate source for the final threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibMode {
    /// F1 on the calib split when it has both classes, else the default percentile.
    Auto,
    F1,
    Default,
}

pub fn calibrate(
    val_scores: &[f64],
    calib: Option<(&[f64], &[u8])>,
    cfg: &RunConfig,
    mode: CalibMode,
    source: &str,
) -> Result<CalibrationResult> {
    let cands = sweep_thresholds(val_scores, &cfg.percentile_grid, source)?;
    let usable = calib.filter(|(_, l)| l.contains(&0) && l.contains(&1));
    match (mode, usable, calib) {
        (CalibMode::Default, _, _) | (CalibMode::Auto, None, _) => select_default(&cands),
        (_, Some((s, l)), _) => select_by_f1(s, l, &cands),
        (CalibMode::F1, None, Some(_)) => Err(AadError::DegenerateLabels),
        (CalibMode::F1, None, None) => Err(AadError::Manifest("F1 calibration needs a labeled calib split".into())),
    }
}

const TIME_TAG: &str = "# inference_time_s = ";

/// `origin<TAB>score` per line; scores printed in round-trip form. The
/// optional header records how long scoring took.
pub fn scores_text(origins: &[usize], scores: &[f64], inference_time_s: Option<f64>) -> String {
    let mut s = String::new();
    if let Some(t) = inference_time_s {
        let _ = writeln!(s, "{TIME_TAG}{t:?}");
    }
    s.push_str("# origin\tscore\n");
    for (o, v) in origins.iter().zip(scores) {
        let _ = writeln!(s, "{o}\t{v:?}");
    }
    s
}

pub fn write_scores(path: &Path, origins: &[usize], scores: &[f64], inference_time_s: Option<f64>) -> Result<()> {
    fs::write(path, scores_text(origins, scores, inference_time_s)).map_err(|e| AadError::io(path, e))
}

/// Scores and the recorded inference time, if any.
pub fn read_scores(path: &Path) -> Result<(Vec<f64>, Option<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| AadError::io(path, e))?;
    let bad = |d: String| AadError::Format { what: "scores", detail: d };
    let time = match text.lines().next().and_then(|l| l.strip_prefix(TIME_TAG)) {
        Some(t) => Some(t.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
        None => None,
    };
    let scores = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let v = l.split('\t').nth(1).ok_or_else(|| bad(format!("'{l}'")))?;
            v.parse::<f64>().map_err(|e| bad(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((scores, time))
}

/// Text matrix: `# aad-matrix <rows> <cols>` then one whitespace-separated
/// row per line. Values use the shortest representation that parses back
/// to the same f64.
pub fn matrix_text(m: &Array2<f64>) -> String {
    let mut s = format!("# aad-matrix {} {}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<Array2<f64>> {
    let bad = |d: &str| AadError::Format { what: "matrix", detail: d.to_string() };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty"))?;
    let dims: Vec<usize> = header
        .strip_prefix("# aad-matrix ")
        .ok_or_else(|| bad("missing header"))?
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| bad("bad dims")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(bad("bad dims"));
    }
    let values: Vec<f64> = lines
        .flat_map(|l| l.split_whitespace())
        .map(|v| v.parse().map_err(|_| bad("bad value")))
        .collect::<Result<_>>()?;
    Array2::from_shape_vec((dims[0], dims[1]), values).map_err(|e| bad(&e.to_string()))
}

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, matrix_text(m)).map_err(|e| AadError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    parse_matrix(&fs::read_to_string(path).map_err(|e| AadError::io(path, e))?)
}

pub const INSPECT_MFCC: usize = 13;

/// Mel-dB, MFCC and FFT amplitude views of one clip as text matrices:
/// `mel_db.txt` `[n_mels × cols]`, `mfcc.txt` `[13 × cols]`, `fft.txt` `[bins × 2]` (Hz, amplitude).
pub fn inspect(wav: &Path, out: &Path, cfg: &RunConfig) -> Result<[PathBuf; 3]> {
    let clip = load_wav(wav).stage("load_wav")?;
    let db = mel_db(&clip, &cfg.features)?;
    let cep = mfcc(&db, INSPECT_MFCC.min(db.n_mels())).stage("mfcc")?;
    let (freqs, amps) = fft_amplitude_spectrum(&clip);
    let fft = Array2::from_shape_fn((freqs.len(), 2), |(i, j)| if j == 0 { freqs[i] } else { amps[i] });
    fs::create_dir_all(out).map_err(|e| AadError::io(out, e))?;
    let paths = [out.join("mel_db.txt"), out.join("mfcc.txt"), out.join("fft.txt")];
    write_matrix(&paths[0], db.values())?;
    write_matrix(&paths[1], &cep)?;
    write_matrix(&paths[2], &fft)?;
    Ok(paths)
}

/// Everything the benchmark produced for one detector.
#[derive(Debug, Clone)]
pub struct DetectorRun {
    pub model: DetectorModel,
    pub calibration: CalibrationResult,
    pub val_scores: Vec<f64>,
    pub test_scores: Vec<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub runs: Vec<DetectorRun>,
    pub test_labels: Vec<u8>,
    pub test_origins: Vec<usize>,
}

impl BenchOutput {
    pub fn reports(&self) -> Vec<EvalReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }
}

/// Fit → calibrate → score test → evaluate, for each detector.
pub fn run_bench(manifest: &Manifest, cfg: &RunConfig, kinds: &[DetectorKind]) -> Result<BenchOutput> {
    let (train, _) = split_features(manifest, Split::Train, cfg).stage("features/train")?;
    let (val, _) = split_features(manifest, Split::Val, cfg).stage("features/val")?;
    let calib = if manifest.has_split(Split::Calib) {
        Some(split_features(manifest, Split::Calib, cfg).stage("features/calib")?)
    } else {
        None
    };
    let (test, test_labels) = split_features(manifest, Split::Test, cfg).stage("features/test")?;
    let mut runs = Vec::new();
    for &kind in kinds {
        log::info!("bench: fitting {}", kind.id());
        let model = fit(kind, &train, cfg).stage("train")?;
        let val_scores = model.score(&val).stage("score/val")?.scores;
        let calib_scores = match &calib {
            Some((f, _)) => Some(model.score(f).stage("score/calib")?.scores),
            None => None,
        };
        let calibration = calibrate(
            &val_scores,
            calib_scores.as_deref().zip(calib.as_ref().map(|(_, l)| l.as_slice())),
            cfg,
            CalibMode::Auto,
            kind.id(),
        )
        .stage("calibrate")?;
        let (scored, secs) = timed(|| model.score(&test));
        let test_scores = scored.stage("score/test")?.scores;
        let report = EvalReport::evaluate(
            kind.display(),
            &test_labels,
            &test_scores,
            calibration.threshold,
            model.meta.train_time_s,
            secs,
        )
        .stage("eval")?;
        log::info!("bench: {} auc {:.4} f1 {:.4}", kind.id(), report.roc_auc, report.f1);
        runs.push(DetectorRun { model, calibration, val_scores, test_scores, report });
    }
    Ok(BenchOutput { runs, test_labels, test_origins: test.origin_columns().to_vec() })
}

/// Writes models, scores, calibration reports and the report files.
pub fn write_bench_artifacts(out: &Path, bench: &BenchOutput, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| AadError::io(out, e))?;
    let mut confusion = String::new();
    for run in &bench.runs {
        let id = run.model.kind().id();
        run.model.persist(out.join(format!("{id}.model")))?;
        write_scores(
            &out.join(format!("{id}.test.scores")),
            &bench.test_origins,
            &run.test_scores,
            Some(run.report.inference_time_s),
        )?;
        write_report(out.join(format!("{id}.calibration.txt")), &run.calibration, id)?;
        confusion.push_str(&confusion_text(run.report.method.as_str(), &run.report.confusion));
        confusion.push('\n');
    }
    write_frame_labels(&out.join("test.frame_labels"), &bench.test_labels)?;
    let reports = bench.reports();
    let put = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| AadError::io(&p, e))
    };
    put("report.json", reports_to_json(&reports))?;
    put("report.txt", reports_to_table(&reports))?;
    put("confusion.txt", confusion)?;
    put("config.txt", format!("# config_digest = {}\n{}", hex(&cfg.digest()), cfg.to_text()))?;
    Ok(())
}
