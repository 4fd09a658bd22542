//! WAV ingestion and signal-level conditioning.
//!
//! Decoding accepts RIFF/WAVE with 16-bit integer PCM or 32-bit IEEE float
//! samples, mono or stereo. Stereo is collapsed by the per-sample channel
//! mean and the header sample rate is kept as-is (no resampling).
//!
//! The optional noise-reduction stage works on the Mel-dB spectrogram: a
//! per-band floor is estimated as a percentile over time, and cells at or
//! below `floor + margin` are pushed down to the global dB floor.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::percentile;
use crate::error::{AadError, Result};
use crate::features::{MelSpectrogram, Stage, DB_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    source_path: Option<PathBuf>,
}

impl AudioClip {
    /// Build a clip, validating the sample range and rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(AadError::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(AadError::InvalidParameter("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AadError::InvalidParameter(format!(
                "sample {bad} outside [-1, 1]"
            )));
        }
        Ok(Self { samples, sample_rate, source_path: None })
    }

    pub fn with_source(mut self, path: impl Into<PathBuf>) -> Self {
        self.source_path = Some(path.into());
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Sub-clip `[start, end)` in samples.
    pub fn slice(&self, start: usize, end: usize) -> Result<AudioClip> {
        if start >= end || end > self.samples.len() {
            return Err(AadError::InvalidParameter(format!(
                "slice [{start}, {end}) out of range for {} samples",
                self.samples.len()
            )));
        }
        AudioClip::new(self.samples[start..end].to_vec(), self.sample_rate)
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn map_hound(path: &Path, e: hound::Error) -> AadError {
    match e {
        // the file itself opened fine, so read failures mean truncation
        hound::Error::IoError(io) => AadError::CorruptHeader(format!("{}: {io}", path.display())),
        hound::Error::Unsupported => AadError::UnsupportedFormat("unsupported WAV encoding".into()),
        hound::Error::FormatError(msg) => AadError::CorruptHeader(msg.to_string()),
        other => AadError::CorruptHeader(other.to_string()),
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AadError::io(path, e))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AadError::UnsupportedFormat(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(AadError::UnsupportedFormat(format!("{fmt:?} {bits}-bit samples")));
        }
    };
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(AadError::CorruptHeader("non-finite float sample".into()));
    }
    let samples: Vec<f64> = if spec.channels == 2 {
        interleaved.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    } else {
        interleaved
    };
    if samples.is_empty() {
        return Err(AadError::EmptyAudio);
    }
    Ok(AudioClip::new(samples, spec.sample_rate)?.with_source(path))
}

/// Quantize a sample in [-1, 1] to 16-bit PCM (inverse of the decode scaling).
pub fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Write a mono 16-bit PCM WAV.
pub fn write_wav_pcm16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &clip.samples {
        w.write_sample(quantize_i16(s)).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

/// Result of [`rms_normalize`].
#[derive(Debug, Clone)]
pub struct RmsNormalized {
    pub clip: AudioClip,
    pub gain: f64,
    /// Samples hard-clipped to ±1 after applying the gain.
    pub clipped: usize,
    /// Input was silent (RMS < 1e-12) and was returned unchanged.
    pub silent: bool,
}

pub fn rms_normalize(clip: &AudioClip, target_rms: f64) -> Result<RmsNormalized> {
    if !(target_rms > 0.0 && target_rms <= 1.0) {
        return Err(AadError::InvalidParameter(format!("target RMS {target_rms} not in (0, 1]")));
    }
    let current = clip.rms();
    if current < 1e-12 {
        log::warn!("rms_normalize: silent input, leaving clip unchanged");
        return Ok(RmsNormalized { clip: clip.clone(), gain: 1.0, clipped: 0, silent: true });
    }
    let gain = target_rms / current;
    let mut clipped = 0;
    let samples = clip
        .samples
        .iter()
        .map(|&s| {
            let v = s * gain;
            if v.abs() > 1.0 {
                clipped += 1;
                v.clamp(-1.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("rms_normalize: {clipped} samples hard-clipped");
    }
    Ok(RmsNormalized {
        clip: AudioClip { samples, sample_rate: clip.sample_rate, source_path: clip.source_path.clone() },
        gain,
        clipped,
        silent: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub floor_db: Vec<f64>,
    pub margin_db: f64,
}

pub const MIN_PROFILE_COLUMNS: usize = 10;

pub fn estimate_noise_profile(
    mel_db: &MelSpectrogram,
    percentile_p: f64,
    margin_db: f64,
) -> Result<NoiseProfile> {
    mel_db.expect_stage(Stage::Db)?;
    if !(percentile_p > 0.0 && percentile_p < 100.0) {
        return Err(AadError::InvalidParameter(format!("percentile {percentile_p} not in (0, 100)")));
    }
    if !(margin_db >= 0.0 && margin_db.is_finite()) {
        return Err(AadError::InvalidParameter(format!("margin {margin_db} dB must be >= 0")));
    }
    let n_cols = mel_db.n_cols();
    if n_cols < MIN_PROFILE_COLUMNS {
        return Err(AadError::TooFewColumns { needed: MIN_PROFILE_COLUMNS, got: n_cols });
    }
    let floor_db = mel_db
        .values()
        .rows()
        .into_iter()
        .map(|row| percentile(&row.to_vec(), percentile_p))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseProfile { floor_db, margin_db })
}

pub fn spectral_gate(mel_db: &MelSpectrogram, profile: &NoiseProfile) -> Result<MelSpectrogram> {
    mel_db.expect_stage(Stage::Db)?;
    if profile.floor_db.len() != mel_db.n_mels() {
        return Err(AadError::shape(
            format!("{} bands", mel_db.n_mels()),
            format!("profile with {} bands", profile.floor_db.len()),
        ));
    }
    let mut values = mel_db.values().clone();
    for (mut row, &floor) in values.rows_mut().into_iter().zip(&profile.floor_db) {
        let gate = floor + profile.margin_db;
        row.mapv_inplace(|v| if v <= gate { DB_FLOOR } else { v });
    }
    Ok(mel_db.with_values(values, Stage::Db))
}
