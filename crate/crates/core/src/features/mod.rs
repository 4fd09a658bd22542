//! Feature chain: STFT → Mel power → dB (relative to the global max) →
//! min-max normalization → overlapping frames.

mod frames;
mod mel;
mod stft;
mod views;

pub use frames::{
    default_framing, meta_path, num_frames, read_frames, segment_frames, write_frames, FrameMeta,
    FrameTensor, FRAME_MAGIC, FRAME_VERSION,
};
pub use mel::{hz_to_mel, mel_filterbank, mel_power, mel_to_hz, minmax_normalize, power_to_db, MelFilterbank};
pub use stft::{hann_periodic, stft, StftMatrix, WindowKind};
pub use views::{dct_ii_ortho, fft_amplitude_spectrum, mfcc};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio_io::{estimate_noise_profile, rms_normalize, spectral_gate, AudioClip};
use crate::error::{AadError, Result, StageExt};

/// Lower clamp of the dB stage (dynamic range of 80 dB below the max cell).
pub const DB_FLOOR: f64 = -80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Power,
    Db,
    Normalized,
}

/// `[n_mels × n_cols]` matrix tagged with its processing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Array2<f64>,
    stage: Stage,
    sample_rate: u32,
    hop_length: usize,
}

impl MelSpectrogram {
    /// Validates the stage range: Power ≥ 0, Db in [-80, 0], Normalized in [0, 1].
    pub fn new(values: Array2<f64>, stage: Stage, sample_rate: u32, hop_length: usize) -> Result<Self> {
        let ok = |v: f64| match stage {
            Stage::Power => v >= 0.0,
            Stage::Db => (DB_FLOOR..=0.0).contains(&v),
            Stage::Normalized => (0.0..=1.0).contains(&v),
        };
        if let Some(bad) = values.iter().find(|&&v| !v.is_finite() || !ok(v)) {
            return Err(AadError::InvalidParameter(format!("value {bad} invalid for stage {stage:?}")));
        }
        Ok(Self { values, stage, sample_rate, hop_length })
    }

    pub(crate) fn with_values(&self, values: Array2<f64>, stage: Stage) -> Self {
        Self { values, stage, sample_rate: self.sample_rate, hop_length: self.hop_length }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
    pub fn stage(&self) -> Stage {
        self.stage
    }
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    pub fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(AadError::shape(format!("{stage:?} spectrogram"), format!("{:?} spectrogram", self.stage)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub percentile: f64,
    pub margin_db: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { percentile: 20.0, margin_db: 6.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` = Nyquist.
    pub fmax: Option<f64>,
    pub time_per_frame: f64,
    pub hop_ratio: f64,
    /// RMS gain normalization before the STFT; off when `None`.
    pub rms_target: Option<f64>,
    /// Spectral gate in the dB domain; off when `None`.
    pub denoise: Option<DenoiseConfig>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop_length: 512,
            n_mels: 128,
            fmin: 0.0,
            fmax: None,
            time_per_frame: 0.512,
            hop_ratio: 0.2,
            rms_target: None,
            denoise: None,
        }
    }
}

impl FeatureConfig {
    pub fn framing(&self, sample_rate: u32) -> (usize, usize) {
        default_framing(sample_rate, self.hop_length, self.time_per_frame, self.hop_ratio)
    }
}

/// Clip → Mel-dB spectrogram (after the optional RMS and gate stages).
pub fn mel_db(clip: &AudioClip, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    let conditioned;
    let clip = match cfg.rms_target {
        Some(target) => {
            conditioned = rms_normalize(clip, target).stage("rms_normalize")?.clip;
            &conditioned
        }
        None => clip,
    };
    let spec = stft(clip, cfg.n_fft, cfg.hop_length).stage("stft")?;
    let fb = mel_filterbank(clip.sample_rate(), cfg.n_fft, cfg.n_mels, cfg.fmin, cfg.fmax)
        .stage("mel_filterbank")?;
    let power = mel_power(&spec, &fb).stage("mel_power")?;
    let db = power_to_db(&power).stage("power_to_db")?;
    match &cfg.denoise {
        Some(d) => {
            let profile = estimate_noise_profile(&db, d.percentile, d.margin_db).stage("noise_profile")?;
            spectral_gate(&db, &profile).stage("spectral_gate")
        }
        None => Ok(db),
    }
}

/// Clip → normalized Mel spectrogram.
pub fn mel_normalized(clip: &AudioClip, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    let db = mel_db(clip, cfg)?;
    minmax_normalize(&db).stage("minmax_normalize")
}

/// Full per-clip pipeline: clip → FrameTensor.
pub fn extract_frames(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FrameTensor> {
    let norm = mel_normalized(clip, cfg)?;
    let (frame_size, hop_size) = cfg.framing(clip.sample_rate());
    segment_frames(&norm, frame_size, hop_size).stage("segment_frames")
}
