use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AadError>;

/// Broad grouping used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum AadError {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("need at least {needed} spectrogram columns, got {got}")]
    TooFewColumns { needed: usize, got: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("signal has {len} samples, shorter than the FFT size {n_fft}")]
    SignalTooShort { len: usize, n_fft: usize },
    #[error("invalid FFT size {0}: must be a power of two >= 2")]
    InvalidFftSize(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid Mel band range: fmin={fmin} fmax={fmax} (sample rate {sample_rate})")]
    InvalidBandRange { fmin: f64, fmax: f64, sample_rate: u32 },
    #[error("spectrogram has no energy (all cells are zero)")]
    AllZeroSpectrogram,
    #[error("spectrogram has {n_cols} columns, fewer than the frame size {frame_size}")]
    SpectrogramTooShort { n_cols: usize, frame_size: usize },
    #[error("requested {requested} coefficients but only {available} Mel bands exist")]
    TooManyCoefficients { requested: usize, available: usize },
    #[error("standardizer statistics missing; fit on training data first")]
    StandardizerMissing,
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("corrupt frame file: {0}")]
    CorruptFrameFile(String),
    #[error("need at least {needed} training rows, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature dimension mismatch: model expects {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("nu * n = {product} < 1: the one-class SVM box constraint is infeasible")]
    InfeasibleNu { product: f64 },
    #[error("input is empty")]
    EmptyInput,
    #[error("labels contain only one class; F1 selection is undefined")]
    DegenerateLabels,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("ROC AUC needs both positive and negative labels")]
    SingleClassInput,
    #[error("clip of {duration_s:.3} s is too short: {reason}")]
    ClipTooShort { duration_s: f64, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("malformed {what} file: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<AadError>,
    },
}

impl AadError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AadError::Io { path: path.into(), source }
    }

    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        AadError::ShapeMismatch { expected: expected.into(), got: got.into() }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            // keep the innermost tag
            AadError::Stage { .. } => self,
            other => AadError::Stage { stage, source: Box::new(other) },
        }
    }

    /// Innermost error with stage tags removed.
    pub fn root(&self) -> &AadError {
        match self {
            AadError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self.root() {
            AadError::Config(_) | AadError::InvalidParameter(_) | AadError::Manifest(_) => {
                ErrorClass::Usage
            }
            AadError::AllZeroSpectrogram | AadError::InfeasibleNu { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

/// Attach a stage tag to the error side of a result.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
