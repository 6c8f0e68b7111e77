//! Mel cepstral distortion.

use std::f64::consts::{LN_10, PI, SQRT_2};

use crate::corpus::MelSpectrogram;
use crate::error::{Error, Result};

/// `(10 / ln 10) * sqrt(2)`, converting cepstral distance to decibels.
pub const MCD_SCALE: f64 = 10.0 / LN_10 * SQRT_2;

/// First `n_coeffs` orthonormal DCT-II coefficients of a log-mel frame.
pub fn mel_cepstrum(frame: &[f32], n_coeffs: usize) -> Vec<f64> {
    let n = frame.len() as f64;
    (0..n_coeffs)
        .map(|d| {
            let norm = if d == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            norm * frame
                .iter()
                .enumerate()
                .map(|(k, &x)| x as f64 * (PI * d as f64 * (k as f64 + 0.5) / n).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Cepstral distance excluding `c0`.
pub fn cepstral_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .skip(1)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cepstra(mel: &MelSpectrogram, n_coeffs: usize) -> Vec<Vec<f64>> {
    mel.frames().map(|f| mel_cepstrum(f, n_coeffs)).collect()
}

fn check(reference: &MelSpectrogram, synthesized: &MelSpectrogram, n_coeffs: usize) -> Result<()> {
    if reference.n_mels() != synthesized.n_mels() {
        return Err(Error::Shape(format!(
            "mel band counts differ ({} vs {})",
            reference.n_mels(),
            synthesized.n_mels()
        )));
    }
    if reference.n_frames() == 0 || synthesized.n_frames() == 0 {
        return Err(Error::Validation("mel cepstral distortion needs non-empty inputs".into()));
    }
    if n_coeffs < 2 || n_coeffs > reference.n_mels() {
        return Err(Error::Validation(format!(
            "n_coeffs must lie in [2, {}], got {n_coeffs}",
            reference.n_mels()
        )));
    }
    Ok(())
}

/// MCD over cepstral sequences aligned by dynamic time warping.
pub fn mcd_cepstra(reference: &[Vec<f64>], synthesized: &[Vec<f64>]) -> f64 {
    let path = super::dtw::dtw_path(reference.len(), synthesized.len(), |i, j| {
        cepstral_distance(&reference[i], &synthesized[j])
    });
    let total: f64 = path
        .iter()
        .map(|&(i, j)| cepstral_distance(&reference[i], &synthesized[j]))
        .sum();
    MCD_SCALE * total / path.len() as f64
}

/// MCD in dB between two log-mel spectrograms, aligned by dynamic time warping.
pub fn mcd(reference: &MelSpectrogram, synthesized: &MelSpectrogram, n_coeffs: usize) -> Result<f64> {
    check(reference, synthesized, n_coeffs)?;
    Ok(mcd_cepstra(&cepstra(reference, n_coeffs), &cepstra(synthesized, n_coeffs)))
}

/// MCD in dB between equal-length spectrograms, pairing frames by index.
pub fn mcd_frames(reference: &MelSpectrogram, synthesized: &MelSpectrogram, n_coeffs: usize) -> Result<f64> {
    check(reference, synthesized, n_coeffs)?;
    if reference.n_frames() != synthesized.n_frames() {
        return Err(Error::Shape("frame-paired MCD needs equal frame counts".into()));
    }
    let (a, b) = (cepstra(reference, n_coeffs), cepstra(synthesized, n_coeffs));
    let total: f64 = a.iter().zip(&b).map(|(x, y)| cepstral_distance(x, y)).sum();
    Ok(MCD_SCALE * total / a.len() as f64)
}
