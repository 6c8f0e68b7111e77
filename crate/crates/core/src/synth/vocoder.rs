//! Griffin-Lim phase reconstruction from log-mel frames.

use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::{hann_window, MelConfig, MelFilterbank, MelSpectrogram};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocoderConfig {
    pub mel: MelConfig,
    pub iterations: usize,
    /// Ridge term of the filterbank pseudo-inverse, relative to the mean
    /// diagonal of `M M^T`.
    pub regularization: f64,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            mel: MelConfig::default(),
            iterations: 60,
            regularization: 1e-3,
        }
    }
}

/// Maps mel energies back to linear magnitudes with `M^T (M M^T + lambda I)^-1`.
pub struct MelInverter {
    /// `n_freq x n_mels`.
    pinv: DMatrix<f64>,
}

impl MelInverter {
    pub fn new(fb: &MelFilterbank, regularization: f64) -> Self {
        let w = &fb.weights;
        let m = DMatrix::from_row_slice(w.rows, w.cols, &w.data);
        let gram = &m * m.transpose();
        let mean_diag = gram.diagonal().mean();
        let lambda = regularization * mean_diag.max(f64::MIN_POSITIVE);
        let reg = gram + DMatrix::identity(w.rows, w.rows) * lambda;
        let inv = reg.cholesky().expect("regularized Gram matrix is positive definite").inverse();
        Self { pinv: m.transpose() * inv }
    }

    /// Non-negative linear magnitude spectrum for one frame of mel energies.
    pub fn magnitudes(&self, mel_energy: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(mel_energy);
        (&self.pinv * v).iter().map(|x| x.max(0.0)).collect()
    }
}

/// Smallest overlap-add normalizer, as a fraction of the largest.
const NORM_FLOOR: f64 = 0.1;

struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    fn new(cfg: &MelConfig) -> Self {
        let mut window = vec![0.0; cfg.n_fft];
        let pad = (cfg.n_fft - cfg.win_length) / 2;
        window[pad..pad + cfg.win_length].copy_from_slice(&hann_window(cfg.win_length));
        let mut planner = FftPlanner::new();
        Self {
            n_fft: cfg.n_fft,
            hop: cfg.hop_length,
            window,
            forward: planner.plan_fft_forward(cfg.n_fft),
            inverse: planner.plan_fft_inverse(cfg.n_fft),
        }
    }

    fn signal_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop + self.n_fft
    }

    /// Half spectra (`n_fft/2 + 1` bins) of each frame.
    fn analyze(&self, x: &[f64], frames: usize) -> Vec<Vec<Complex<f64>>> {
        (0..frames)
            .map(|t| {
                let start = t * self.hop;
                let mut buf: Vec<Complex<f64>> = (0..self.n_fft).map(|i| Complex::new(x[start + i] * self.window[i], 0.0)).collect();
                self.forward.process(&mut buf);
                buf.truncate(self.n_fft / 2 + 1);
                buf
            })
            .collect()
    }

    /// Weighted overlap-add inverse of `analyze`.
    fn synthesize(&self, spectra: &[Vec<Complex<f64>>]) -> Vec<f64> {
        let n = self.signal_len(spectra.len());
        let mut out = vec![0.0; n];
        let mut norm = vec![0.0; n];
        for (t, half) in spectra.iter().enumerate() {
            let mut full = vec![Complex::new(0.0, 0.0); self.n_fft];
            full[..half.len()].copy_from_slice(half);
            for k in 1..self.n_fft - half.len() + 1 {
                full[self.n_fft - k] = half[k].conj();
            }
            self.inverse.process(&mut full);
            let start = t * self.hop;
            for i in 0..self.n_fft {
                let w = self.window[i];
                out[start + i] += full[i].re / self.n_fft as f64 * w;
                norm[start + i] += w * w;
            }
        }
        // Near the ends only a window tail covers a sample; dividing by its
        // tiny squared sum would blow those samples up.
        let floor = NORM_FLOOR * norm.iter().cloned().fold(0.0, f64::max);
        for (o, w) in out.iter_mut().zip(&norm) {
            *o /= w.max(floor);
        }
        out
    }
}

/// Waveform for `mel` by Griffin-Lim, starting from zero phase. The output
/// is trimmed to `frames * hop_length` samples.
pub fn vocode(mel: &MelSpectrogram, cfg: &VocoderConfig) -> Result<Vec<f32>> {
    if mel.n_frames() == 0 {
        return Err(Error::Validation("cannot vocode an empty mel spectrogram".into()));
    }
    cfg.mel.validate()?;
    if mel.n_mels() != cfg.mel.n_mels {
        return Err(Error::Shape(format!("mel has {} bands, vocoder expects {}", mel.n_mels(), cfg.mel.n_mels)));
    }
    let inverter = MelInverter::new(&MelFilterbank::new(&cfg.mel), cfg.regularization);
    let stft = Stft::new(&cfg.mel);
    let frames = mel.n_frames();
    let target: Vec<Vec<f64>> = mel
        .frames()
        .map(|f| inverter.magnitudes(&f.iter().map(|&v| (v as f64).exp()).collect::<Vec<_>>()))
        .collect();
    let mut spectra: Vec<Vec<Complex<f64>>> = target.iter().map(|m| m.iter().map(|&a| Complex::new(a, 0.0)).collect()).collect();
    for _ in 0..cfg.iterations {
        let x = stft.synthesize(&spectra);
        let est = stft.analyze(&x, frames);
        for ((s, e), m) in spectra.iter_mut().zip(&est).zip(&target) {
            for ((sk, ek), &mk) in s.iter_mut().zip(e).zip(m) {
                let n = ek.norm();
                *sk = if n > 1e-12 { ek * (mk / n) } else { Complex::new(mk, 0.0) };
            }
        }
    }
    let x = stft.synthesize(&spectra);
    let len = (frames * cfg.mel.hop_length).min(x.len());
    Ok(x[..len].iter().map(|&v| v as f32).collect())
}
