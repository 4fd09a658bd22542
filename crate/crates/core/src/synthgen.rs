//! Seeded synthetic machine audio with labeled anomalies.
//!
//! The background is a harmonic drone (energy below 2 kHz) with slow
//! amplitude modulation plus low-passed noise. Knocks are short decaying
//! bursts with carriers in 2–6 kHz. The rare-event variant instead inserts
//! one long broadband transient.
//!
//! The low-pass has a zero at Nyquist, so the top Mel bands of any normal
//! clip sit at the −80 dB clamp. Every clip then spans the same dB range and
//! per-clip min-max normalization maps all clips identically.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use sha2::{Digest, Sha256};

use crate::audio_io::AudioClip;
use crate::error::{AadError, Result};
use crate::features::FrameTensor;

pub const SAMPLE_RATE: u32 = 16_000;
/// Upper edge of the background's tonal and filtered-noise content.
pub const BACKGROUND_CUTOFF_HZ: f64 = 2000.0;
pub const KNOCK_BAND_HZ: (f64, f64) = (2000.0, 6000.0);
const KNOCK_DURATION_S: (f64, f64) = (0.030, 0.080);
/// Knock peak as a multiple of the background RMS.
const KNOCK_PEAK_RMS: (f64, f64) = (2.0, 3.0);
const TRANSIENT_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub clip: AudioClip,
    /// Sorted, non-overlapping.
    pub intervals: Vec<AnomalyInterval>,
    pub seed: u64,
    pub config_digest: [u8; 32],
}

/// Second-order Butterworth low-pass (bilinear transform), applied in place.
fn butterworth_lowpass(x: &mut [f64], cutoff_hz: f64, sample_rate: f64) {
    let k = (PI * cutoff_hz / sample_rate).tan();
    let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k * k);
    let b0 = k * k * norm;
    let (b1, b2) = (2.0 * b0, b0);
    let a1 = 2.0 * (k * k - 1.0) * norm;
    let a2 = (1.0 - std::f64::consts::SQRT_2 * k + k * k) * norm;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let y = b0 * *v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = *v;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Normal machine background, peak-normalized to 0.5.
pub fn gen_normal(duration_s: f64, sample_rate: u32, seed: u64) -> Result<AudioClip> {
    if !(duration_s >= 1.0) {
        return Err(AadError::ClipTooShort { duration_s, reason: "background needs at least 1 s".into() });
    }
    let sr = sample_rate as f64;
    let n = (duration_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let f0: f64 = rng.random_range(50.0..=400.0);
    let n_harm: usize = rng.random_range(4..=8);
    let partials: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|h| (h as f64 * f0, 1.0 / h as f64, rng.random_range(0.0..2.0 * PI)))
        .filter(|&(f, _, _)| f < BACKGROUND_CUTOFF_HZ)
        .collect();
    let am_hz: f64 = rng.random_range(0.1..0.9);
    let am_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let am_depth: f64 = rng.random_range(0.1..0.3);

    let mut tonal: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let am = 1.0 + am_depth * (2.0 * PI * am_hz * t + am_phase).sin();
            am * partials.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum::<f64>()
        })
        .collect();
    let tonal_rms = rms(&tonal);

    let mut noise: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    butterworth_lowpass(&mut noise, BACKGROUND_CUTOFF_HZ, sr);
    let noise_gain = 0.3 * tonal_rms / rms(&noise).max(1e-12);
    for (s, nv) in tonal.iter_mut().zip(&noise) {
        *s += noise_gain * nv;
    }
    let peak = tonal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    tonal.iter_mut().for_each(|v| *v *= scale);
    AudioClip::new(tonal, sample_rate)
}

fn digest(parts: &str) -> [u8; 32] {
    Sha256::digest(parts.as_bytes()).into()
}

/// Adds knocks at Poisson arrival times (overlapping draws are rejected).
pub fn inject_knocks(clip: &AudioClip, rate_per_min: f64, seed: u64) -> Result<LabeledClip> {
    let duration = clip.duration_s();
    if !(rate_per_min > 0.0) || rate_per_min * duration / 60.0 < 1.0 {
        return Err(AadError::ClipTooShort {
            duration_s: duration,
            reason: format!("rate {rate_per_min}/min yields fewer than one expected knock"),
        });
    }
    let sr = clip.sample_rate() as f64;
    let bg_rms = clip.rms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Exp::new(rate_per_min / 60.0).expect("positive rate");
    let mut samples = clip.samples().to_vec();
    let mut intervals: Vec<AnomalyInterval> = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        let dur = rng.random_range(KNOCK_DURATION_S.0..=KNOCK_DURATION_S.1);
        let peak = rng.random_range(KNOCK_PEAK_RMS.0..=KNOCK_PEAK_RMS.1) * bg_rms;
        let carriers: Vec<(f64, f64)> = (0..6)
            .map(|_| {
                // keep modulation sidebands inside the band
                (rng.random_range(KNOCK_BAND_HZ.0 + 200.0..KNOCK_BAND_HZ.1 - 200.0), rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        if t + dur > duration {
            break;
        }
        if intervals.last().is_some_and(|prev| t < prev.end_s) {
            continue;
        }
        let start = (t * sr).round() as usize;
        let len = ((dur * sr).round() as usize).min(samples.len() - start);
        let tau = dur / 4.0;
        let attack = 0.001;
        let burst: Vec<f64> = (0..len)
            .map(|i| {
                let u = i as f64 / sr;
                let env = (u / attack).min(1.0) * (-u / tau).exp();
                env * carriers.iter().map(|&(f, ph)| (2.0 * PI * f * u + ph).sin()).sum::<f64>()
            })
            .collect();
        let bpeak = burst.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for (s, b) in samples[start..start + len].iter_mut().zip(&burst) {
            *s += peak / bpeak * b;
        }
        intervals.push(AnomalyInterval {
            start_s: start as f64 / sr,
            end_s: (start + len) as f64 / sr,
            kind: "knock".into(),
        });
    }
    Ok(LabeledClip {
        clip: AudioClip::new(samples, clip.sample_rate())?,
        intervals,
        seed,
        config_digest: digest(&format!("knock rate={rate_per_min:?} seed={seed} duration={duration:?}")),
    })
}

/// Adds one broadband transient of `TRANSIENT_S` seconds at a seeded
/// position. The labeled interval covers the sustained part; a short release
/// tail follows it.
pub fn inject_transient(clip: &AudioClip, seed: u64) -> Result<LabeledClip> {
    let duration = clip.duration_s();
    let release_s = 1.5;
    if duration < TRANSIENT_S + release_s + 2.0 {
        return Err(AadError::ClipTooShort { duration_s: duration, reason: "no room for the transient".into() });
    }
    let sr = clip.sample_rate() as f64;
    let bg_rms = clip.rms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = rng.random_range(1.0..duration - TRANSIENT_S - release_s - 1.0);
    let start = (t0 * sr).round() as usize;
    let body = (TRANSIENT_S * sr).round() as usize;
    let tail = (release_s * sr).round() as usize;
    let mut samples = clip.samples().to_vec();
    for (i, s) in samples[start..start + body + tail].iter_mut().enumerate() {
        let u = i as f64 / sr;
        let env = if i < body { (u / 0.02).min(1.0) } else { (-(u - TRANSIENT_S) / 0.3).exp() };
        *s += bg_rms * env * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(LabeledClip {
        clip: AudioClip::new(samples, clip.sample_rate())?,
        intervals: vec![AnomalyInterval {
            start_s: start as f64 / sr,
            end_s: (start + body) as f64 / sr,
            kind: "transient".into(),
        }],
        seed,
        config_digest: digest(&format!("transient seed={seed} duration={duration:?}")),
    })
}

/// 1 for frames whose span `[start_s, end_s)` overlaps any interval.
pub fn frame_labels(intervals: &[AnomalyInterval], frames: &FrameTensor) -> Vec<u8> {
    (0..frames.num_frames())
        .map(|i| {
            let (a, b) = (frames.start_s(i), frames.end_s(i));
            u8::from(intervals.iter().any(|iv| a.max(iv.start_s) < b.min(iv.end_s)))
        })
        .collect()
}

pub fn labels_text(intervals: &[AnomalyInterval]) -> String {
    let mut s = String::new();
    for iv in intervals {
        let _ = writeln!(s, "{:.6}\t{:.6}\t{}", iv.start_s, iv.end_s, iv.kind);
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Vec<AnomalyInterval>> {
    let bad = |n: usize, d: &str| AadError::Format { what: "labels", detail: format!("line {}: {d}", n + 1) };
    let mut out: Vec<AnomalyInterval> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(n, "expected start<TAB>end<TAB>kind"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(n, &e.to_string()));
        let iv = AnomalyInterval { start_s: num(cols[0])?, end_s: num(cols[1])?, kind: cols[2].to_string() };
        if !(iv.start_s >= 0.0 && iv.start_s < iv.end_s) {
            return Err(bad(n, "need 0 <= start < end"));
        }
        if out.last().is_some_and(|p| iv.start_s < p.end_s) {
            return Err(bad(n, "intervals must be sorted and non-overlapping"));
        }
        out.push(iv);
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, intervals: &[AnomalyInterval]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, labels_text(intervals)).map_err(|e| AadError::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<AnomalyInterval>> {
    let path = path.as_ref();
    parse_labels(&std::fs::read_to_string(path).map_err(|e| AadError::io(path, e))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    Knock,
    Transient,
}

/// Dataset layout. One continuous background is generated and cut, in
/// order, into train | val | calib | test; anomalies go into calib and test.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub normal_s: f64,
    pub anomalous_s: f64,
    /// Share of the normal part used for training; the rest is validation.
    pub train_frac: f64,
    /// Share of the anomalous part used for calibration; 0 = no calib split.
    pub calib_frac: f64,
    pub knock_rate_per_min: f64,
    pub kind: AnomalyKind,
}

impl SynthConfig {
    /// 13 min normal (train:val = 7:1) and 3.5 min knock-injected audio
    /// split evenly into calib and test.
    pub fn knock_benchmark() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            normal_s: 780.0,
            anomalous_s: 210.0,
            train_frac: 0.875,
            calib_frac: 0.5,
            knock_rate_per_min: 12.0,
            kind: AnomalyKind::Knock,
        }
    }

    /// 20 min split 70/10/20 into train/val/test with one transient in test
    /// and no calib split.
    pub fn rare_event_benchmark() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            normal_s: 960.0,
            anomalous_s: 240.0,
            train_frac: 0.875,
            calib_frac: 0.0,
            knock_rate_per_min: 0.0,
            kind: AnomalyKind::Transient,
        }
    }

    /// Durations of train, val, calib, test in seconds.
    pub fn split_durations(&self) -> [f64; 4] {
        let train = self.normal_s * self.train_frac;
        let calib = self.anomalous_s * self.calib_frac;
        [train, self.normal_s - train, calib, self.anomalous_s - calib]
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::knock_benchmark()
    }
}

/// One generated split; `intervals` is `None` for normal-only splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit {
    pub name: &'static str,
    pub clip: AudioClip,
    pub intervals: Option<Vec<AnomalyInterval>>,
}

pub fn generate_splits(cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthSplit>> {
    let durations = cfg.split_durations();
    let sr = cfg.sample_rate as f64;
    let bg = gen_normal(cfg.normal_s + cfg.anomalous_s, cfg.sample_rate, seed)?;
    let mut out = Vec::new();
    let mut pos = 0usize;
    for (i, (name, dur)) in ["train", "val", "calib", "test"].into_iter().zip(durations).enumerate() {
        let len = (dur * sr).round() as usize;
        if len == 0 {
            continue;
        }
        let end = (pos + len).min(bg.len());
        let part = bg.slice(pos, end)?;
        pos = end;
        let split_seed = seed.wrapping_add(1 + i as u64);
        let (clip, intervals) = match (name, cfg.kind) {
            ("train" | "val", _) => (part, None),
            (_, AnomalyKind::Knock) => {
                let l = inject_knocks(&part, cfg.knock_rate_per_min, split_seed)?;
                (l.clip, Some(l.intervals))
            }
            (_, AnomalyKind::Transient) => {
                let l = inject_transient(&part, split_seed)?;
                (l.clip, Some(l.intervals))
            }
        };
        out.push(SynthSplit { name, clip, intervals });
    }
    Ok(out)
}
