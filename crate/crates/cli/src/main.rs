use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aad_core::calibration::{read_report_threshold, write_report};
use aad_core::config::{hex, RunConfig};
use aad_core::detector::{fit, read_model_header, DetectorKind, DetectorModel};
use aad_core::error::{AadError, ErrorClass};
use aad_core::features::read_frames;
use aad_core::metrics::{confusion_text, reports_to_json, reports_to_table, timed, EvalReport};
use aad_core::par;
use aad_core::pipeline::{
    calibrate, frame_labels_path, frames_path, inspect, read_frame_labels, read_scores, run_bench,
    write_bench_artifacts, write_features, write_scores, write_synth_dataset, CalibMode, Manifest, Split,
};
use aad_core::synthgen::SynthConfig;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aad", version, about = "Acoustic anomaly detection on Mel-spectrogram frames")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    /// Knock bursts in calib and test.
    Knock,
    /// One broadband transient in test, no calib split.
    Rare,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    F1,
    Default,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset and its manifest.
    Synth {
        #[arg(long, value_enum, default_value = "knock")]
        variant: Variant,
        /// Minutes of normal audio (train + val).
        #[arg(long)]
        normal_min: Option<f64>,
        /// Minutes of anomalous audio (calib + test).
        #[arg(long)]
        anomalous_min: Option<f64>,
        /// Knocks per minute.
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Extract and persist frames for every split of a manifest.
    Features {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Fit a detector on persisted train frames.
    Train {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        detector: String,
    },
    /// Choose a threshold from validation (and optional calib) frames.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        /// Directory written by `features`.
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
    },
    /// Score persisted frames with a model.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
    },
    /// Evaluate a score file against frame labels and a calibration report.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        /// Model whose recorded train time goes into the report.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit, calibrate and evaluate every detector on a manifest.
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated subset of kmeans,ocsvm,lstm_ae.
        #[arg(long, default_value = "kmeans,ocsvm,lstm_ae")]
        detectors: String,
    },
    /// Write Mel-dB, MFCC and FFT amplitude matrices for one WAV file.
    Inspect {
        #[arg(long)]
        wav: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "frames".into())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    if common.sequential {
        par::set_mode(par::Mode::Sequential);
    }
    let cfg = load_config(common)?;
    match cli.command {
        Command::Synth { variant, normal_min, anomalous_min, rate } => {
            let mut sc = match variant {
                Variant::Knock => SynthConfig::knock_benchmark(),
                Variant::Rare => SynthConfig::rare_event_benchmark(),
            };
            if let Some(m) = normal_min {
                sc.normal_s = m * 60.0;
            }
            if let Some(m) = anomalous_min {
                sc.anomalous_s = m * 60.0;
            }
            if let Some(r) = rate {
                sc.knock_rate_per_min = r;
            }
            let out = out_dir(common)?;
            let m = write_synth_dataset(&out, &sc, cfg.seed)?;
            println!("wrote {} records and {}", m.records.len(), out.join("manifest.tsv").display());
        }
        Command::Features { manifest } => {
            let m = Manifest::load(&manifest)?;
            let out = out_dir(common)?;
            let splits = write_features(&m, &cfg, &out)?;
            for s in splits {
                println!("{}", frames_path(&out, s).display());
            }
        }
        Command::Train { frames, detector } => {
            let kind = DetectorKind::parse(&detector)?;
            let (tensor, _) = read_frames(&frames)?;
            let model = fit(kind, &tensor, &cfg)?;
            let path = out_dir(common)?.join(format!("{}.model", kind.id()));
            model.persist(&path)?;
            println!("{} trained in {:.3} s -> {}", kind.display(), model.meta.train_time_s, path.display());
        }
        Command::Calibrate { model, frames_dir, mode } => {
            let m = DetectorModel::restore(&model)?;
            let (val, _) = read_frames(frames_path(&frames_dir, Split::Val))?;
            let val_scores = m.score(&val)?.scores;
            let calib_path = frames_path(&frames_dir, Split::Calib);
            let calib = if calib_path.exists() {
                let (f, _) = read_frames(&calib_path)?;
                let labels = read_frame_labels(&frame_labels_path(&frames_dir, Split::Calib))?;
                Some((m.score(&f)?.scores, labels))
            } else {
                None
            };
            let mode = match mode {
                ModeArg::Auto => CalibMode::Auto,
                ModeArg::F1 => CalibMode::F1,
                ModeArg::Default => CalibMode::Default,
            };
            let id = m.kind().id();
            let res = calibrate(&val_scores, calib.as_ref().map(|(s, l)| (s.as_slice(), l.as_slice())), &cfg, mode, id)?;
            let path = out_dir(common)?.join(format!("{id}.calibration.txt"));
            write_report(&path, &res, id)?;
            println!("threshold {:?} at percentile {} -> {}", res.threshold, res.percentile, path.display());
        }
        Command::Score { model, frames } => {
            let m = DetectorModel::restore(&model)?;
            let (tensor, _) = read_frames(&frames)?;
            let (scored, secs) = timed(|| m.score(&tensor));
            let series = scored?;
            let path = out_dir(common)?.join(format!("{}.{}.scores", m.kind().id(), file_stem(&frames)));
            write_scores(&path, &series.origins, &series.scores, Some(secs))?;
            println!("{} scores in {:.3} s -> {}", series.len(), secs, path.display());
        }
        Command::Eval { scores, labels, calibration, model } => {
            let (s, inference) = read_scores(&scores)?;
            let l = read_frame_labels(&labels)?;
            let (detector, threshold) = read_report_threshold(&calibration)?;
            let train_time = match &model {
                Some(p) => DetectorModel::restore(p)?.meta.train_time_s,
                None => 0.0,
            };
            let kind = DetectorKind::parse(&detector)?;
            let r = EvalReport::evaluate(kind.display(), &l, &s, threshold, train_time, inference.unwrap_or(0.0))?;
            let out = out_dir(common)?;
            let reports = [r];
            std::fs::write(out.join(format!("{detector}.report.json")), reports_to_json(&reports))?;
            print!("{}", reports_to_table(&reports));
            print!("{}", confusion_text(&reports[0].method, &reports[0].confusion));
        }
        Command::Bench { manifest, detectors } => {
            let m = Manifest::load(&manifest)?;
            let kinds = detectors
                .split(',')
                .map(|d| DetectorKind::parse(d.trim()))
                .collect::<aad_core::Result<Vec<_>>>()?;
            if kinds.is_empty() {
                bail!(AadError::InvalidParameter("no detectors selected".into()));
            }
            let bench = run_bench(&m, &cfg, &kinds)?;
            let out = out_dir(common)?;
            write_bench_artifacts(&out, &bench, &cfg)?;
            print!("{}", reports_to_table(&bench.reports()));
            for run in &bench.runs {
                let h = read_model_header(out.join(format!("{}.model", run.model.kind().id())))?;
                log::debug!("{}: config digest {}", h.kind.id(), hex(&h.config_digest));
            }
        }
        Command::Inspect { wav } => {
            let out = out_dir(common)?;
            for p in inspect(&wav, &out, &cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<AadError>().map(AadError::class) {
        Some(ErrorClass::Usage) => 2,
        Some(ErrorClass::Numeric) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
