use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio_io::AudioClip;
use crate::error::{AadError, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WindowKind {
    Hann,
}

/// Periodic Hann window of length `n`: `0.5 - 0.5 cos(2πm/n)`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|m| 0.5 - 0.5 * (2.0 * PI * m as f64 / n as f64).cos()).collect()
}

/// Short-time spectrum with only the non-negative frequency bins kept.
///
/// Columns cover full windows only: `n_cols = 1 + (len - n_fft) / hop_length`.
#[derive(Debug, Clone)]
pub struct StftMatrix {
    values: Array2<Complex64>,
    n_fft: usize,
    hop_length: usize,
    sample_rate: u32,
    window_kind: WindowKind,
}

impl StftMatrix {
    pub fn from_parts(
        values: Array2<Complex64>,
        n_fft: usize,
        hop_length: usize,
        sample_rate: u32,
    ) -> Result<Self> {
        if values.nrows() != n_fft / 2 + 1 {
            return Err(AadError::shape(
                format!("{} bins", n_fft / 2 + 1),
                format!("{} rows", values.nrows()),
            ));
        }
        Ok(Self { values, n_fft, hop_length, sample_rate, window_kind: WindowKind::Hann })
    }

    /// `[n_bins × n_cols]`.
    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }
    pub fn n_fft(&self) -> usize {
        self.n_fft
    }
    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
    pub fn hop_length(&self) -> usize {
        self.hop_length
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn window_kind(&self) -> WindowKind {
        self.window_kind
    }

    /// `|X(k, n)|²` as a `[n_bins × n_cols]` matrix.
    pub fn power(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm_sqr())
    }
}

pub fn stft(clip: &AudioClip, n_fft: usize, hop_length: usize) -> Result<StftMatrix> {
    if n_fft < 2 || !n_fft.is_power_of_two() {
        return Err(AadError::InvalidFftSize(n_fft));
    }
    if hop_length == 0 {
        return Err(AadError::InvalidParameter("hop_length must be >= 1".into()));
    }
    let x = clip.samples();
    if x.len() < n_fft {
        return Err(AadError::SignalTooShort { len: x.len(), n_fft });
    }
    let n_cols = 1 + (x.len() - n_fft) / hop_length;
    let n_bins = n_fft / 2 + 1;
    let window = hann_periodic(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let columns: Vec<Vec<Complex64>> = par::map_range(n_cols, |col| {
        let start = col * hop_length;
        let mut buf: Vec<Complex64> = x[start..start + n_fft]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex64::new(s * w, 0.0))
            .collect();
        fft.process(&mut buf);
        buf.truncate(n_bins);
        buf
    });
    let flat: Vec<Complex64> = columns.into_iter().flatten().collect();
    // built as [n_cols × n_bins], viewed as [n_bins × n_cols]
    let values = Array2::from_shape_vec((n_cols, n_bins), flat)
        .expect("column lengths are fixed")
        .reversed_axes();
    StftMatrix::from_parts(values, n_fft, hop_length, clip.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(x: Vec<f64>) -> AudioClip {
        AudioClip::new(x, 16000).unwrap()
    }

    #[test]
    fn column_count_no_padding() {
        let s = stft(&clip(vec![0.0; 5000]), 1024, 512).unwrap();
        assert_eq!(s.n_cols(), 1 + (5000 - 1024) / 512);
        assert_eq!(s.n_bins(), 513);
        assert!(s.values().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_gives_window_magnitude() {
        let mut x = vec![0.0; 64];
        x[5] = 1.0;
        let s = stft(&clip(x), 16, 8).unwrap();
        let w = hann_periodic(16);
        for k in 0..9 {
            assert!((s.values()[[k, 0]].norm() - w[5]).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(stft(&clip(vec![0.0; 100]), 1000, 10), Err(AadError::InvalidFftSize(1000))));
        assert!(matches!(
            stft(&clip(vec![0.0; 100]), 128, 10),
            Err(AadError::SignalTooShort { len: 100, n_fft: 128 })
        ));
    }
}
