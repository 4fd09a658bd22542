//! Shared detector contract: fit on normal frames, score frames, persist.
//!
//! K-Means and OC-SVM see each frame as a vector (flattened or pooled over
//! time, optionally standardized with training statistics). The LSTM-AE
//! consumes frames as sequences directly.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! "AADMODEL" | version u32 | kind u32 | config digest [32]
//! seed u64 | train_time_s f64 | pooling u32 | n_mels u64 | frame_size u64
//! has_std u32 [ dim u64 | mean f64 × dim | std f64 × dim ]
//! n_params u64 | params f64 × n_params
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{AadError, Result, StageExt};
use crate::features::FrameTensor;
use crate::kmeans::{kmeans_fit, kmeans_score, KMeansModel};
use crate::lstm_ae::{lstm_ae_init, lstm_ae_score, lstm_ae_train, LstmAeModel, TrainingSummary};
use crate::metrics::timed;
use crate::ocsvm::{ocsvm_fit, ocsvm_score, OcSvmModel};

pub const MODEL_MAGIC: &[u8; 8] = b"AADMODEL";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pooling {
    Flatten,
    MeanPoolTime,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::Flatten => "flatten",
            Pooling::MeanPoolTime => "mean_pool_time",
        }
    }
    fn tag(self) -> u32 {
        match self {
            Pooling::Flatten => 0,
            Pooling::MeanPoolTime => 1,
        }
    }
    fn from_tag(t: u32) -> Option<Self> {
        match t {
            0 => Some(Pooling::Flatten),
            1 => Some(Pooling::MeanPoolTime),
            _ => None,
        }
    }
}

/// Per-column mean and standard deviation of a training matrix.
/// A zero `std` marks a constant column, which standardizes to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(AadError::EmptyInput);
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let std = Array1::from_iter(x.columns().into_iter().zip(mean.iter()).map(|(col, &mu)| {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                0.0
            } else {
                (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / col.len() as f64).sqrt()
            }
        }));
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut Array2<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(AadError::DimensionMismatch { expected: self.dim(), got: x.ncols() });
        }
        for mut row in x.rows_mut() {
            for ((v, &mu), &sd) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = if sd == 0.0 { 0.0 } else { (*v - mu) / sd };
            }
        }
        Ok(())
    }
}

/// Standardization step of [`vectorize`].
#[derive(Debug, Clone, Copy)]
pub enum Standardize<'a> {
    Off,
    /// Fit statistics on these rows, then apply them.
    Fit,
    /// Apply previously fitted statistics.
    Apply(Option<&'a Standardizer>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Array2<f64>,
    pub pooling: Pooling,
    pub standardizer: Option<Standardizer>,
}

/// Raw frame vectors: row-major flattening of `[n_mels × frame_size]`, or
/// the mean over the time axis.
pub fn frame_vectors(frames: &FrameTensor, pooling: Pooling) -> Array2<f64> {
    let f = frames.frames();
    let (n, m, t) = f.dim();
    match pooling {
        Pooling::Flatten => Array2::from_shape_fn((n, m * t), |(i, j)| f[[i, j / t, j % t]] as f64),
        Pooling::MeanPoolTime => Array2::from_shape_fn((n, m), |(i, b)| {
            f.slice(ndarray::s![i, b, ..]).iter().map(|&v| v as f64).sum::<f64>() / t as f64
        }),
    }
}

pub fn vectorize(frames: &FrameTensor, pooling: Pooling, standardize: Standardize<'_>) -> Result<FeatureMatrix> {
    if frames.is_empty() {
        return Err(AadError::EmptyInput);
    }
    let mut rows = frame_vectors(frames, pooling);
    let standardizer = match standardize {
        Standardize::Off => None,
        Standardize::Fit => {
            let s = Standardizer::fit(&rows)?;
            s.apply(&mut rows)?;
            Some(s)
        }
        Standardize::Apply(None) => return Err(AadError::StandardizerMissing),
        Standardize::Apply(Some(s)) => {
            s.apply(&mut rows)?;
            Some(s.clone())
        }
    };
    Ok(FeatureMatrix { rows, pooling, standardizer })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    KMeans,
    OcSvm,
    LstmAe,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [DetectorKind::KMeans, DetectorKind::OcSvm, DetectorKind::LstmAe];

    /// Identifier used in file names and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            DetectorKind::KMeans => "kmeans",
            DetectorKind::OcSvm => "ocsvm",
            DetectorKind::LstmAe => "lstm_ae",
        }
    }

    /// Display name used in report tables.
    pub fn display(self) -> &'static str {
        match self {
            DetectorKind::KMeans => "K-Means",
            DetectorKind::OcSvm => "OC-SVM",
            DetectorKind::LstmAe => "LSTM-AE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(DetectorKind::KMeans),
            "ocsvm" => Ok(DetectorKind::OcSvm),
            "lstm_ae" | "lstm" => Ok(DetectorKind::LstmAe),
            _ => Err(AadError::InvalidParameter(format!("unknown detector '{s}' (kmeans|ocsvm|lstm_ae)"))),
        }
    }

    fn tag(self) -> u32 {
        match self {
            DetectorKind::KMeans => 0,
            DetectorKind::OcSvm => 1,
            DetectorKind::LstmAe => 2,
        }
    }

    fn from_tag(t: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tag() == t)
    }

    /// Whether this kind standardizes its vectors when the config allows it.
    pub fn uses_standardizer(self) -> bool {
        !matches!(self, DetectorKind::LstmAe)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorParams {
    KMeans(KMeansModel),
    OcSvm(OcSvmModel),
    LstmAe(LstmAeModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub config_digest: [u8; 32],
    pub train_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub params: DetectorParams,
    pub pooling: Pooling,
    pub standardizer: Option<Standardizer>,
    /// `(n_mels, frame_size)` of the training frames.
    pub frame_shape: (usize, usize),
    pub meta: TrainingMeta,
}

/// Scores with the frame origins they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyScoreSeries {
    pub scores: Vec<f64>,
    pub origins: Vec<usize>,
}

impl AnomalyScoreSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Fits one detector on normal-only frames. The recorded train time covers
/// vectorization and fitting, not I/O.
pub fn fit(kind: DetectorKind, frames: &FrameTensor, cfg: &RunConfig) -> Result<DetectorModel> {
    if frames.is_empty() {
        return Err(AadError::EmptyInput);
    }
    let (res, secs) = timed(|| -> Result<(DetectorParams, Option<Standardizer>, Pooling)> {
        match kind {
            DetectorKind::KMeans | DetectorKind::OcSvm => {
                let mode = if cfg.standardize { Standardize::Fit } else { Standardize::Off };
                let fm = vectorize(frames, cfg.pooling, mode)?;
                let params = if kind == DetectorKind::KMeans {
                    DetectorParams::KMeans(kmeans_fit(&fm.rows, &cfg.kmeans, cfg.seed)?)
                } else {
                    let (m, report) = ocsvm_fit(&fm.rows, &cfg.ocsvm)?;
                    log::info!(
                        "ocsvm: {} iterations, converged={}, max violation {:.2e}, {} SVs",
                        report.iterations,
                        report.converged,
                        report.max_violation,
                        m.alphas.len()
                    );
                    DetectorParams::OcSvm(m)
                };
                Ok((params, fm.standardizer, cfg.pooling))
            }
            DetectorKind::LstmAe => {
                let init = lstm_ae_init(frames.n_mels(), cfg.lstm.hidden, cfg.seed)?;
                let m = lstm_ae_train(&init, frames, &cfg.lstm, cfg.seed)?;
                Ok((DetectorParams::LstmAe(m), None, Pooling::Flatten))
            }
        }
    });
    let (params, standardizer, pooling) = res.stage(kind.id())?;
    Ok(DetectorModel {
        params,
        pooling,
        standardizer,
        frame_shape: (frames.n_mels(), frames.frame_size()),
        meta: TrainingMeta { seed: cfg.seed, config_digest: cfg.digest(), train_time_s: secs },
    })
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self.params {
            DetectorParams::KMeans(_) => DetectorKind::KMeans,
            DetectorParams::OcSvm(_) => DetectorKind::OcSvm,
            DetectorParams::LstmAe(_) => DetectorKind::LstmAe,
        }
    }

    pub fn score(&self, frames: &FrameTensor) -> Result<AnomalyScoreSeries> {
        let shape = (frames.n_mels(), frames.frame_size());
        if shape != self.frame_shape {
            return Err(AadError::shape(
                format!("frames of {}×{}", self.frame_shape.0, self.frame_shape.1),
                format!("frames of {}×{}", shape.0, shape.1),
            ));
        }
        let scores = match &self.params {
            DetectorParams::KMeans(_) | DetectorParams::OcSvm(_) => {
                let mode = match &self.standardizer {
                    Some(s) => Standardize::Apply(Some(s)),
                    None => Standardize::Off,
                };
                let fm = vectorize(frames, self.pooling, mode)?;
                match &self.params {
                    DetectorParams::KMeans(m) => kmeans_score(m, &fm.rows)?,
                    DetectorParams::OcSvm(m) => ocsvm_score(m, &fm.rows)?,
                    DetectorParams::LstmAe(_) => unreachable!(),
                }
            }
            DetectorParams::LstmAe(m) => lstm_ae_score(m, frames)?,
        };
        Ok(AnomalyScoreSeries { scores, origins: frames.origin_columns().to_vec() })
    }

    fn param_block(&self) -> Vec<f64> {
        let mut p = Vec::new();
        match &self.params {
            DetectorParams::KMeans(m) => {
                p.extend([m.k() as f64, m.dim() as f64]);
                p.extend(m.centroids.iter());
                p.extend([m.inertia, m.iterations_run as f64, m.seed as f64, f64::from(u8::from(m.degenerate))]);
            }
            DetectorParams::OcSvm(m) => {
                p.extend([m.nu, m.gamma, m.rho, m.alphas.len() as f64, m.dim() as f64]);
                p.extend(m.alphas.iter());
                p.extend(m.support_vectors.iter());
            }
            DetectorParams::LstmAe(m) => {
                p.extend([m.n_mels() as f64, m.hidden() as f64]);
                for cell in [&m.encoder, &m.decoder] {
                    for g in 0..4 {
                        p.extend(cell.gate_matrix(g).iter());
                        p.extend(cell.gate_bias(g).iter());
                    }
                }
                p.extend(m.proj_w.t().iter());
                p.extend(m.proj_b.iter());
                let t = m.training.clone().unwrap_or(TrainingSummary {
                    epochs: 0,
                    batch: 0,
                    lr: 0.0,
                    seed: 0,
                    loss_history: Vec::new(),
                    final_loss: f64::NAN,
                    aborted: false,
                });
                p.extend([t.epochs as f64, t.batch as f64, t.lr, t.seed as f64, t.final_loss]);
                p.extend([f64::from(u8::from(t.aborted)), t.loss_history.len() as f64]);
                p.extend(t.loss_history.iter());
            }
        }
        p
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MODEL_MAGIC);
        b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        b.extend_from_slice(&self.kind().tag().to_le_bytes());
        b.extend_from_slice(&self.meta.config_digest);
        b.extend_from_slice(&self.meta.seed.to_le_bytes());
        b.extend_from_slice(&self.meta.train_time_s.to_le_bytes());
        b.extend_from_slice(&self.pooling.tag().to_le_bytes());
        b.extend_from_slice(&(self.frame_shape.0 as u64).to_le_bytes());
        b.extend_from_slice(&(self.frame_shape.1 as u64).to_le_bytes());
        match &self.standardizer {
            None => b.extend_from_slice(&0u32.to_le_bytes()),
            Some(s) => {
                b.extend_from_slice(&1u32.to_le_bytes());
                b.extend_from_slice(&(s.dim() as u64).to_le_bytes());
                for v in s.mean.iter().chain(s.std.iter()) {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let params = self.param_block();
        b.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for v in params {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let mut r = Reader { bytes, pos: HEADER_LEN };
        let seed = r.u64()?;
        let train_time_s = r.f64()?;
        let pooling = Pooling::from_tag(r.u32()?).ok_or_else(|| corrupt("unknown pooling tag"))?;
        let frame_shape = (r.usize()?, r.usize()?);
        let standardizer = match r.u32()? {
            0 => None,
            1 => {
                let dim = r.usize()?;
                let mean = Array1::from(r.f64s(dim)?);
                let std = Array1::from(r.f64s(dim)?);
                Some(Standardizer { mean, std })
            }
            _ => return Err(corrupt("bad standardizer flag")),
        };
        let count = r.usize()?;
        let params = r.f64s(count)?;
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let params = decode_params(header.kind, &params)?;
        Ok(Self {
            params,
            pooling,
            standardizer,
            frame_shape,
            meta: TrainingMeta { seed, config_digest: header.config_digest, train_time_s },
        })
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| AadError::io(path, e))
    }

    pub fn restore(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| AadError::io(path, e))?)
    }
}

fn corrupt(m: &str) -> AadError {
    AadError::CorruptModelFile(m.to_string())
}

/// Fixed-size header readable without decoding the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHeader {
    pub version: u32,
    pub kind: DetectorKind,
    pub config_digest: [u8; 32],
}

fn parse_header(bytes: &[u8]) -> Result<ModelHeader> {
    if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(AadError::VersionMismatch { found: version, expected: MODEL_VERSION });
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("truncated header"));
    }
    let tag = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let kind = DetectorKind::from_tag(tag).ok_or_else(|| corrupt("unknown detector kind"))?;
    Ok(ModelHeader { version, kind, config_digest: bytes[16..48].try_into().unwrap() })
}

pub fn read_model_header(path: impl AsRef<Path>) -> Result<ModelHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN);
    fs::File::open(path)
        .and_then(|f| f.take(HEADER_LEN as u64).read_to_end(&mut buf))
        .map_err(|e| AadError::io(path, e))?;
    parse_header(&buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("size overflow"))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt("size overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Cursor over the flat parameter block.
struct Params<'a> {
    v: &'a [f64],
    pos: usize,
}

impl Params<'_> {
    fn take(&mut self, n: usize) -> Result<&[f64]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.v.len()).ok_or_else(|| corrupt("parameter block too short"))?;
        let s = &self.v[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn one(&mut self) -> Result<f64> {
        Ok(self.take(1)?[0])
    }
    fn dim(&mut self) -> Result<usize> {
        let v = self.one()?;
        if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
            Ok(v as usize)
        } else {
            Err(corrupt("bad dimension"))
        }
    }
    fn matrix(&mut self, r: usize, c: usize) -> Result<Array2<f64>> {
        let n = r.checked_mul(c).ok_or_else(|| corrupt("size overflow"))?;
        Ok(Array2::from_shape_vec((r, c), self.take(n)?.to_vec()).unwrap())
    }
    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.take(n)?.to_vec()))
    }
}

fn decode_params(kind: DetectorKind, v: &[f64]) -> Result<DetectorParams> {
    let mut p = Params { v, pos: 0 };
    let out = match kind {
        DetectorKind::KMeans => {
            let (k, d) = (p.dim()?, p.dim()?);
            let centroids = p.matrix(k, d)?;
            let inertia = p.one()?;
            let iterations_run = p.dim()?;
            let seed = p.one()? as u64;
            let degenerate = p.one()? != 0.0;
            DetectorParams::KMeans(KMeansModel {
                centroids,
                inertia,
                iterations_run,
                seed,
                inertia_history: Vec::new(),
                degenerate,
            })
        }
        DetectorKind::OcSvm => {
            let (nu, gamma, rho) = (p.one()?, p.one()?, p.one()?);
            let (n_sv, d) = (p.dim()?, p.dim()?);
            let alphas = p.take(n_sv)?.to_vec();
            let support_vectors = p.matrix(n_sv, d)?;
            DetectorParams::OcSvm(OcSvmModel { support_vectors, alphas, rho, nu, gamma })
        }
        DetectorKind::LstmAe => {
            let (n_mels, h) = (p.dim()?, p.dim()?);
            let mut cells = Vec::new();
            for n_in in [n_mels, h] {
                let mut mats = Vec::new();
                let mut biases = Vec::new();
                for _ in 0..4 {
                    mats.push(p.matrix(h, n_in + h)?);
                    biases.push(p.vector(h)?);
                }
                cells.push((mats, biases));
            }
            let proj = p.matrix(n_mels, h)?;
            let proj_b = p.vector(n_mels)?;
            let mut m = LstmAeModel::from_gate_blocks(
                n_mels,
                h,
                (&cells[0].0, &cells[0].1),
                (&cells[1].0, &cells[1].1),
                proj,
                proj_b,
            );
            let (epochs, batch, lr, seed, final_loss) = (p.dim()?, p.dim()?, p.one()?, p.one()? as u64, p.one()?);
            let aborted = p.one()? != 0.0;
            let hist_len = p.dim()?;
            let loss_history = p.take(hist_len)?.to_vec();
            if epochs > 0 || !loss_history.is_empty() {
                m.training = Some(TrainingSummary { epochs, batch, lr, seed, loss_history, final_loss, aborted });
            }
            DetectorParams::LstmAe(m)
        }
    };
    if p.pos != v.len() {
        return Err(corrupt("parameter count does not match the model layout"));
    }
    Ok(out)
}
