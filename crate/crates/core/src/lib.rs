//! Acoustic anomaly detection on Mel-spectrogram frames.
//!
//! WAV clips become normalized Mel-spectrogram frames ([`features`]), which
//! are scored by one of three detectors fitted on normal audio only
//! ([`kmeans`], [`ocsvm`], [`lstm_ae`]) behind the common contract in
//! [`detector`]. Thresholds come from percentiles of normal validation
//! scores ([`calibration`]) and results are summarized by [`metrics`].
//! [`synthgen`] produces labeled synthetic machine audio and [`pipeline`]
//! chains the stages over a dataset manifest.
//!
//! Data-parallel loops go through [`par`]; build without the default
//! `parallel` feature (or call [`par::set_mode`]) for a sequential run.
//! Both modes give identical results.

pub mod audio_io;
pub mod calibration;
pub mod config;
pub mod detector;
pub mod error;
pub mod features;
pub mod kmeans;
pub mod lstm_ae;
pub mod metrics;
pub mod ocsvm;
pub mod par;
pub mod pipeline;
pub mod synthgen;

pub use config::RunConfig;
pub use detector::{AnomalyScoreSeries, DetectorKind, DetectorModel, Pooling};
pub use error::{AadError, ErrorClass, Result};
pub use features::{FeatureConfig, FrameTensor, MelSpectrogram};
