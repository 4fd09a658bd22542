//! Overlapping frame segmentation and the on-disk frame archive.
//!
//! Frame archive layout (all little-endian):
//!
//! ```text
//! "AADFRAME"  8 bytes
//! version     u32
//! num_frames  u64
//! n_mels      u64
//! frame_size  u64
//! values      f32 × num_frames·n_mels·frame_size, row-major
//! ```
//!
//! A sidecar `<file>.meta` holds `key = value` lines with the framing
//! parameters needed to map frames back to time.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array3, ArrayView2};

use super::{MelSpectrogram, Stage};
use crate::error::{AadError, Result};

pub const FRAME_MAGIC: &[u8; 8] = b"AADFRAME";
pub const FRAME_VERSION: u32 = 1;

/// Stack of spectrogram windows `[num_frames × n_mels × frame_size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    frames: Array3<f32>,
    frame_size: usize,
    hop_size: usize,
    origin_columns: Vec<usize>,
    sample_rate: u32,
    hop_length: usize,
}

impl FrameTensor {
    pub fn from_parts(
        frames: Array3<f32>,
        hop_size: usize,
        origin_columns: Vec<usize>,
        sample_rate: u32,
        hop_length: usize,
    ) -> Result<Self> {
        let (n, _, frame_size) = frames.dim();
        if origin_columns.len() != n {
            return Err(AadError::LengthMismatch { left: n, right: origin_columns.len() });
        }
        if hop_size == 0 || frame_size == 0 {
            return Err(AadError::InvalidParameter("frame and hop size must be >= 1".into()));
        }
        Ok(Self { frames, frame_size, hop_size, origin_columns, sample_rate, hop_length })
    }

    pub fn frames(&self) -> &Array3<f32> {
        &self.frames
    }
    pub fn num_frames(&self) -> usize {
        self.frames.dim().0
    }
    pub fn n_mels(&self) -> usize {
        self.frames.dim().1
    }
    pub fn frame_size(&self) -> usize {
        self.frame_size
    }
    pub fn hop_size(&self) -> usize {
        self.hop_size
    }
    pub fn origin_columns(&self) -> &[usize] {
        &self.origin_columns
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn hop_length(&self) -> usize {
        self.hop_length
    }
    pub fn is_empty(&self) -> bool {
        self.num_frames() == 0
    }

    /// `[n_mels × frame_size]` view of frame `i`.
    pub fn frame(&self, i: usize) -> ArrayView2<'_, f32> {
        self.frames.slice(s![i, .., ..])
    }

    /// Subset of frames in the given order.
    pub fn select(&self, indices: &[usize]) -> FrameTensor {
        let frames = self.frames.select(ndarray::Axis(0), indices);
        let origin_columns = indices.iter().map(|&i| self.origin_columns[i]).collect();
        FrameTensor { frames, origin_columns, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> FrameTensor {
        FrameTensor {
            frames: Array3::zeros((0, self.n_mels(), self.frame_size)),
            frame_size: self.frame_size,
            hop_size: self.hop_size,
            origin_columns: Vec::new(),
            sample_rate: self.sample_rate,
            hop_length: self.hop_length,
        }
    }

    /// Pool several tensors with identical framing into one training set.
    /// Origins of later tensors are shifted so the pooled origins keep
    /// increasing by `hop_size`, as if the clips were laid end to end.
    pub fn concat(parts: &[FrameTensor]) -> Result<FrameTensor> {
        let first = parts.first().ok_or(AadError::EmptyInput)?;
        for p in parts {
            if p.n_mels() != first.n_mels()
                || p.frame_size != first.frame_size
                || p.hop_size != first.hop_size
                || p.sample_rate != first.sample_rate
                || p.hop_length != first.hop_length
            {
                return Err(AadError::shape(
                    format!("{}x{} frames, hop {}", first.n_mels(), first.frame_size, first.hop_size),
                    format!("{}x{} frames, hop {}", p.n_mels(), p.frame_size, p.hop_size),
                ));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| p.frames.view()).collect();
        let frames = ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| AadError::shape("compatible frames", e.to_string()))?;
        let n = frames.dim().0;
        let origin_columns = (0..n).map(|i| i * first.hop_size).collect();
        Ok(FrameTensor { frames, origin_columns, ..first.clone_meta() })
    }

    /// Start time of frame `i` in seconds.
    pub fn start_s(&self, i: usize) -> f64 {
        self.origin_columns[i] as f64 * self.hop_length as f64 / self.sample_rate as f64
    }

    /// End of frame `i`'s labelled time span in seconds.
    pub fn end_s(&self, i: usize) -> f64 {
        (self.origin_columns[i] + self.frame_size) as f64 * self.hop_length as f64
            / self.sample_rate as f64
    }
}

/// `(frame_size, hop_size)` in spectrogram columns for a frame duration and
/// hop ratio.
pub fn default_framing(
    sample_rate: u32,
    hop_length: usize,
    time_per_frame: f64,
    hop_ratio: f64,
) -> (usize, usize) {
    let frame_size = ((time_per_frame * sample_rate as f64 / hop_length as f64).round() as usize).max(1);
    let hop_size = ((hop_ratio * frame_size as f64).round() as usize).max(1);
    (frame_size, hop_size)
}

pub fn num_frames(n_cols: usize, frame_size: usize, hop_size: usize) -> usize {
    if n_cols < frame_size {
        0
    } else {
        (n_cols - frame_size) / hop_size + 1
    }
}

pub fn segment_frames(mel: &MelSpectrogram, frame_size: usize, hop_size: usize) -> Result<FrameTensor> {
    mel.expect_stage(Stage::Normalized)?;
    if frame_size == 0 || hop_size == 0 {
        return Err(AadError::InvalidParameter("frame_size and hop_size must be >= 1".into()));
    }
    let n_cols = mel.n_cols();
    if n_cols < frame_size {
        return Err(AadError::SpectrogramTooShort { n_cols, frame_size });
    }
    let count = num_frames(n_cols, frame_size, hop_size);
    let v = mel.values();
    let frames = Array3::from_shape_fn((count, mel.n_mels(), frame_size), |(i, m, t)| {
        v[[m, i * hop_size + t]] as f32
    });
    let origins = (0..count).map(|i| i * hop_size).collect();
    FrameTensor::from_parts(frames, hop_size, origins, mel.sample_rate(), mel.hop_length())
}

/// Framing metadata stored next to a frame archive.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeta {
    pub sample_rate: u32,
    pub hop_length: usize,
    pub n_fft: usize,
    pub frame_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub num_frames: usize,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn write_frames(path: impl AsRef<Path>, frames: &FrameTensor, n_fft: usize) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| AadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (n, m, f) = frames.frames.dim();
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| AadError::io(path, e));
    write(FRAME_MAGIC)?;
    write(&FRAME_VERSION.to_le_bytes())?;
    for d in [n, m, f] {
        write(&(d as u64).to_le_bytes())?;
    }
    for v in frames.frames.iter() {
        write(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| AadError::io(path, e))?;

    let meta = format!(
        "version = {FRAME_VERSION}\nsample_rate = {}\nhop_length = {}\nn_fft = {n_fft}\nframe_size = {}\nhop_size = {}\nn_mels = {m}\nnum_frames = {n}\n",
        frames.sample_rate, frames.hop_length, frames.frame_size, frames.hop_size
    );
    let mp = meta_path(path);
    fs::write(&mp, meta).map_err(|e| AadError::io(&mp, e))
}

fn parse_meta(text: &str) -> Result<FrameMeta> {
    let kv = crate::config::parse_kv(text)?;
    let get = |k: &str| -> Result<usize> {
        kv.get(k)
            .ok_or_else(|| AadError::CorruptFrameFile(format!("meta missing '{k}'")))?
            .parse::<usize>()
            .map_err(|e| AadError::CorruptFrameFile(format!("meta '{k}': {e}")))
    };
    Ok(FrameMeta {
        sample_rate: get("sample_rate")? as u32,
        hop_length: get("hop_length")?,
        n_fft: get("n_fft")?,
        frame_size: get("frame_size")?,
        hop_size: get("hop_size")?,
        n_mels: get("n_mels")?,
        num_frames: get("num_frames")?,
    })
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<(FrameTensor, FrameMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AadError::io(path, e))?;
    let mp = meta_path(path);
    let meta = parse_meta(&fs::read_to_string(&mp).map_err(|e| AadError::io(&mp, e))?)?;
    let corrupt = |m: &str| AadError::CorruptFrameFile(m.to_string());
    if bytes.len() < 36 || &bytes[..8] != FRAME_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FRAME_VERSION {
        return Err(AadError::VersionMismatch { found: version, expected: FRAME_VERSION });
    }
    let dim = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    let (n, m, f) = (dim(12), dim(20), dim(28));
    let count = n.checked_mul(m).and_then(|x| x.checked_mul(f)).ok_or_else(|| corrupt("dims overflow"))?;
    if bytes.len() != 36 + 4 * count {
        return Err(corrupt("payload length does not match dims"));
    }
    if (n, m, f) != (meta.num_frames, meta.n_mels, meta.frame_size) {
        return Err(corrupt("dims disagree with sidecar metadata"));
    }
    let data: Vec<f32> = bytes[36..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let frames = Array3::from_shape_vec((n, m, f), data).map_err(|e| corrupt(&e.to_string()))?;
    let origins = (0..n).map(|i| i * meta.hop_size).collect();
    let t = FrameTensor::from_parts(frames, meta.hop_size, origins, meta.sample_rate, meta.hop_length)?;
    Ok((t, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn norm_spec(n_mels: usize, n_cols: usize) -> MelSpectrogram {
        let v = Array2::from_shape_fn((n_mels, n_cols), |(m, c)| ((m * 31 + c * 7) % 101) as f64 / 100.0);
        MelSpectrogram::new(v, Stage::Normalized, 16000, 512).unwrap()
    }

    #[test]
    fn frame_count_examples() {
        assert_eq!(segment_frames(&norm_spec(4, 100), 16, 3).unwrap().num_frames(), 29);
        assert_eq!(segment_frames(&norm_spec(4, 16), 16, 3).unwrap().num_frames(), 1);
        assert!(matches!(
            segment_frames(&norm_spec(4, 15), 16, 3),
            Err(AadError::SpectrogramTooShort { n_cols: 15, frame_size: 16 })
        ));
    }

    #[test]
    fn framing_defaults() {
        assert_eq!(default_framing(16000, 512, 0.512, 0.2), (16, 3));
        assert_eq!(default_framing(16000, 512, 0.6, 0.2), (19, 4));
        assert_eq!(default_framing(16000, 512, 0.512, 0.01), (16, 1));
    }

    #[test]
    fn frames_file_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.aadf");
        let t = segment_frames(&norm_spec(5, 40), 8, 3).unwrap();
        write_frames(&p, &t, 1024).unwrap();
        let (back, meta) = read_frames(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(meta.n_fft, 1024);

        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_frames(&p), Err(AadError::CorruptFrameFile(_))));
    }

    #[test]
    fn concat_renumbers_origins() {
        let a = segment_frames(&norm_spec(3, 20), 4, 2).unwrap();
        let b = segment_frames(&norm_spec(3, 12), 4, 2).unwrap();
        let c = FrameTensor::concat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.num_frames(), a.num_frames() + b.num_frames());
        assert!(c.origin_columns().windows(2).all(|w| w[1] == w[0] + 2));
        assert_eq!(c.frame(a.num_frames()), b.frame(0));
    }
}
