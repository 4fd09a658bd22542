//! Exploratory feature views: MFCC and the whole-clip FFT amplitude spectrum.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{MelSpectrogram, Stage};
use crate::audio_io::AudioClip;
use crate::error::{AadError, Result};

/// Orthonormal DCT-II basis, `[n_out × n_in]`.
fn dct_ii_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let n = n_in as f64;
    Array2::from_shape_fn((n_out, n_in), |(k, m)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n)).cos()
    })
}

/// Cepstral coefficients `[n_mfcc × n_cols]` from a Mel-dB spectrogram.
pub fn mfcc(mel_db: &MelSpectrogram, n_mfcc: usize) -> Result<Array2<f64>> {
    mel_db.expect_stage(Stage::Db)?;
    if n_mfcc > mel_db.n_mels() {
        return Err(AadError::TooManyCoefficients { requested: n_mfcc, available: mel_db.n_mels() });
    }
    Ok(dct_ii_matrix(n_mfcc, mel_db.n_mels()).dot(mel_db.values()))
}

/// Same transform on a raw column; exposed for callers holding plain vectors.
pub fn dct_ii_ortho(column: &[f64], n_out: usize) -> Vec<f64> {
    let basis = dct_ii_matrix(n_out, column.len());
    basis.rows().into_iter().map(|r| r.iter().zip(column).map(|(a, b)| a * b).sum()).collect()
}

/// `|DFT(x)| / N` over bins `0..=N/2` and their frequencies in Hz.
pub fn fft_amplitude_spectrum(clip: &AudioClip) -> (Vec<f64>, Vec<f64>) {
    let x = clip.samples();
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2 + 1;
    let sr = clip.sample_rate() as f64;
    let freqs = (0..half).map(|k| k as f64 * sr / n as f64).collect();
    let amps = buf[..half].iter().map(|c| c.norm() / n as f64).collect();
    (freqs, amps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_mfcc() {
        let m = MelSpectrogram::new(Array2::from_elem((128, 2), -1.0), Stage::Db, 16000, 512).unwrap();
        let c = mfcc(&m, 13).unwrap();
        assert!((c[[0, 0]] + 128f64.sqrt()).abs() < 1e-9);
        assert!(c.slice(ndarray::s![1.., ..]).iter().all(|v| v.abs() < 1e-9));
        let one = dct_ii_ortho(&[1.0; 128], 13);
        assert!((one[0] - 11.3137).abs() < 1e-4);

        let z = MelSpectrogram::new(Array2::zeros((8, 3)), Stage::Db, 16000, 512).unwrap();
        assert!(mfcc(&z, 8).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(mfcc(&z, 9), Err(AadError::TooManyCoefficients { .. })));
    }

    #[test]
    fn spectrum_length_and_zero() {
        let clip = AudioClip::new(vec![0.0; 1001], 16000).unwrap();
        let (f, a) = fft_amplitude_spectrum(&clip);
        assert_eq!(a.len(), 501);
        assert_eq!(f.len(), 501);
        assert!(a.iter().all(|&v| v == 0.0));
        assert!(*f.last().unwrap() <= 8000.0);
    }
}
