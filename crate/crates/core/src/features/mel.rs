//! Triangular Mel filterbank and the power → dB → [0, 1] chain.

use ndarray::Array2;

use super::stft::StftMatrix;
use super::{MelSpectrogram, Stage, DB_FLOOR};
use crate::error::{AadError, Result};
use crate::par;

/// HTK Mel warp.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    /// Per filter: first bin with positive weight and the contiguous weights.
    sparse: Vec<(usize, Vec<f64>)>,
    /// `n_mels + 2` edge frequencies in Hz.
    edges_hz: Vec<f64>,
    sample_rate: u32,
    n_fft: usize,
    fmin: f64,
    fmax: f64,
}

impl MelFilterbank {
    /// `[n_mels × n_bins]`.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }
    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }
    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn n_fft(&self) -> usize {
        self.n_fft
    }
    pub fn fmin(&self) -> f64 {
        self.fmin
    }
    pub fn fmax(&self) -> f64 {
        self.fmax
    }
    /// Peak (center) frequency of filter `m`.
    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }
}

/// Area-normalized triangles with Mel-equispaced peaks between `fmin` and
/// `fmax`. `fmax = None` means Nyquist.
pub fn mel_filterbank(
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: Option<f64>,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    let fmax = fmax.unwrap_or(nyquist);
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(AadError::InvalidBandRange { fmin, fmax, sample_rate });
    }
    if n_mels < 2 {
        return Err(AadError::InvalidParameter(format!("n_mels = {n_mels}, need >= 2")));
    }
    if n_fft < 2 {
        return Err(AadError::InvalidFftSize(n_fft));
    }
    let n_bins = n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let mut edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    // pin the outer edges against round-off in the warp
    edges_hz[0] = fmin;
    edges_hz[n_mels + 1] = fmax;

    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let norm = 2.0 / (right - left);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            let w = rise.min(fall);
            if w > 0.0 {
                weights[[m, k]] = w * norm;
            }
        }
    }
    let sparse = weights
        .rows()
        .into_iter()
        .map(|row| {
            let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
            let last = row.iter().rposition(|&w| w > 0.0).map_or(first, |l| l + 1);
            (first, row.iter().skip(first).take(last - first).copied().collect())
        })
        .collect();
    Ok(MelFilterbank { weights, sparse, edges_hz, sample_rate, n_fft, fmin, fmax })
}

/// `M(m, n) = Σ_k H_m(k) |X(k, n)|²`.
pub fn mel_power(stft: &StftMatrix, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if stft.n_fft() != fb.n_fft() || stft.sample_rate() != fb.sample_rate() {
        return Err(AadError::shape(
            format!("n_fft {} @ {} Hz", fb.n_fft(), fb.sample_rate()),
            format!("n_fft {} @ {} Hz", stft.n_fft(), stft.sample_rate()),
        ));
    }
    let (n_mels, n_cols) = (fb.n_mels(), stft.n_cols());
    let spec = stft.values();
    let cols: Vec<Vec<f64>> = par::map_range(n_cols, |n| {
        let col = spec.column(n);
        fb.sparse
            .iter()
            .map(|(start, w)| {
                w.iter().enumerate().map(|(j, &h)| h * col[start + j].norm_sqr()).sum()
            })
            .collect()
    });
    let flat: Vec<f64> = cols.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((n_cols, n_mels), flat)
        .expect("fixed column length")
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    MelSpectrogram::new(values, Stage::Power, stft.sample_rate(), stft.hop_length())
}

/// `10 log10(M / max M)`, floored at -80 dB.
pub fn power_to_db(mel: &MelSpectrogram) -> Result<MelSpectrogram> {
    mel.expect_stage(Stage::Power)?;
    let max = mel.values().iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(AadError::AllZeroSpectrogram);
    }
    let values = mel.values().mapv(|p| {
        if p <= 0.0 {
            DB_FLOOR
        } else {
            (10.0 * (p / max).log10()).max(DB_FLOOR)
        }
    });
    Ok(mel.with_values(values, Stage::Db))
}

/// Global min-max scaling into [0, 1]; a constant matrix maps to zeros.
pub fn minmax_normalize(mel: &MelSpectrogram) -> Result<MelSpectrogram> {
    mel.expect_stage(Stage::Db)?;
    if mel.values().is_empty() {
        return Err(AadError::EmptyInput);
    }
    let (min, max) = mel
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    let values = if range > 0.0 {
        mel.values().mapv(|v| (v - min) / range)
    } else {
        Array2::zeros(mel.values().raw_dim())
    };
    Ok(mel.with_values(values, Stage::Normalized))
}
