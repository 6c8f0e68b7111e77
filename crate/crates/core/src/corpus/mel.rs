//! Log-mel spectrograms: analysis from waveforms and the `MELSPEC1` binary format.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "MELSPEC1" | u32 frames | u32 bands | f64 frame_shift_seconds | frames*bands f32 (row-major by frame)
//! ```

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const MEL_MAGIC: &[u8; 8] = b"MELSPEC1";

/// Analysis settings. Defaults follow common Tacotron 2 practice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Magnitudes below this are clamped before taking the log.
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 1024,
            win_length: 1024,
            hop_length: 256,
            n_mels: 80,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn frame_shift(&self) -> f64 {
        self.hop_length as f64 / self.sample_rate as f64
    }

    pub fn frame_length(&self) -> f64 {
        self.win_length as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.hop_length == 0 || self.n_mels == 0 {
            return Err(Error::Validation("mel config: sample_rate, hop_length and n_mels must be positive".into()));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::Validation("mel config: need 0 < win_length <= n_fft".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= self.sample_rate as f64 / 2.0) {
            return Err(Error::Validation("mel config: need 0 <= f_min < f_max <= sample_rate/2".into()));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::Validation("mel config: log_floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of frames produced for `num_samples` samples (no centre padding).
    pub fn frame_count(&self, num_samples: usize) -> usize {
        if num_samples < self.win_length {
            0
        } else {
            (num_samples - self.win_length) / self.hop_length + 1
        }
    }
}

/// A sequence of equal-dimension log-mel frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    n_frames: usize,
    n_mels: usize,
    data: Vec<f32>,
    pub frame_shift: f64,
    pub frame_length: Option<f64>,
    pub sample_rate: Option<u32>,
}

impl MelSpectrogram {
    pub fn new(n_frames: usize, n_mels: usize, data: Vec<f32>, frame_shift: f64) -> Result<Self> {
        if n_mels == 0 {
            return Err(Error::Shape("mel spectrogram needs at least one band".into()));
        }
        if data.len() != n_frames * n_mels {
            return Err(Error::Shape(format!(
                "mel data has {} values, expected {n_frames} x {n_mels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::numeric("mel spectrogram", format!("value at flat index {pos}")));
        }
        Ok(Self {
            n_frames,
            n_mels,
            data,
            frame_shift,
            frame_length: None,
            sample_rate: None,
        })
    }

    pub fn from_frames<R: AsRef<[f32]>>(frames: &[R], frame_shift: f64) -> Result<Self> {
        let n_mels = frames.first().map(|f| f.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(frames.len() * n_mels);
        for (t, f) in frames.iter().enumerate() {
            if f.as_ref().len() != n_mels {
                return Err(Error::Shape(format!("frame {t} has {} bands, expected {n_mels}", f.as_ref().len())));
            }
            data.extend_from_slice(f.as_ref());
        }
        Self::new(frames.len(), n_mels, data, frame_shift)
    }

    /// Converts a `frames x bands` tensor, rounding to `f32`.
    pub fn from_tensor(t: &Tensor, frame_shift: f64) -> Result<Self> {
        Self::new(t.rows, t.cols, t.data.iter().map(|&x| x as f32).collect(), frame_shift)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.n_frames, self.n_mels, self.data.iter().map(|&x| x as f64).collect())
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks(self.n_mels)
    }

    /// Frames `[start, end)` as a new spectrogram with the same metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_frames {
            return Err(Error::Shape(format!(
                "frame range [{start}, {end}) invalid for {} frames",
                self.n_frames
            )));
        }
        Ok(Self {
            n_frames: end - start,
            n_mels: self.n_mels,
            data: self.data[start * self.n_mels..end * self.n_mels].to_vec(),
            frame_shift: self.frame_shift,
            frame_length: self.frame_length,
            sample_rate: self.sample_rate,
        })
    }

    /// Concatenates spectrograms along time.
    pub fn concat(parts: &[MelSpectrogram]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        for p in parts {
            if p.n_mels != first.n_mels {
                return Err(Error::Shape("band count mismatch in concat".into()));
            }
            data.extend_from_slice(&p.data);
        }
        let mut out = Self::new(data.len() / first.n_mels, first.n_mels, data, first.frame_shift)?;
        out.frame_length = first.frame_length;
        out.sample_rate = first.sample_rate;
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MEL_MAGIC)?;
        w.write_all(&(self.n_frames as u32).to_le_bytes())?;
        w.write_all(&(self.n_mels as u32).to_le_bytes())?;
        w.write_all(&self.frame_shift.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.data.len() * 4);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 24];
        r.read_exact(&mut head)
            .map_err(|e| Error::Format(format!("mel header: {e}")))?;
        if &head[..8] != MEL_MAGIC {
            return Err(Error::Format("bad mel magic (expected MELSPEC1)".into()));
        }
        let frames = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let bands = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        let shift = f64::from_le_bytes(head[16..24].try_into().unwrap());
        let mut raw = vec![0u8; frames * bands * 4];
        r.read_exact(&mut raw)
            .map_err(|e| Error::Format(format!("mel body ({frames} x {bands}): {e}")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(frames, bands, data, shift)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}

/// Slaney-style mel scale (linear below 1 kHz, logarithmic above).
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if mel < min_log_mel {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    }
}

/// Triangular, area-normalized mel filterbank (`n_mels x (n_fft/2 + 1)`).
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub weights: Tensor,
    /// Band edges in Hz (`n_mels + 2` points); band `i` peaks at `edges[i + 1]`.
    pub edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Self {
        let n_freq = cfg.n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut weights = Tensor::zeros(cfg.n_mels, n_freq);
        for b in 0..cfg.n_mels {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            let norm = 2.0 / (r - l);
            for k in 0..n_freq {
                let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
                let w = ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0);
                weights.set(b, k, w * norm);
            }
        }
        Self { weights, edges }
    }

    pub fn center_hz(&self, band: usize) -> f64 {
        self.edges[band + 1]
    }

    pub fn n_mels(&self) -> usize {
        self.weights.rows
    }
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Reusable short-time analysis state.
pub struct MelAnalyzer {
    cfg: MelConfig,
    filterbank: MelFilterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl MelAnalyzer {
    pub fn new(cfg: MelConfig) -> Result<Self> {
        cfg.validate()?;
        let filterbank = MelFilterbank::new(&cfg);
        let mut window = hann_window(cfg.win_length);
        // Centre the window inside the FFT frame when win_length < n_fft.
        let pad = (cfg.n_fft - cfg.win_length) / 2;
        let mut padded = vec![0.0; cfg.n_fft];
        padded[pad..pad + cfg.win_length].copy_from_slice(&window);
        window = padded;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            cfg,
            filterbank,
            window,
            fft,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Magnitude spectrum of the frame starting at `start`.
    pub fn magnitude(&self, samples: &[f32], start: usize) -> Vec<f64> {
        let n_fft = self.cfg.n_fft;
        let offset = (n_fft - self.cfg.win_length) / 2;
        let mut buf: Vec<Complex<f64>> = (0..n_fft)
            .map(|i| {
                let idx = (start + i).checked_sub(offset);
                let x = idx.and_then(|j| samples.get(j)).copied().unwrap_or(0.0) as f64;
                Complex::new(x * self.window[i], 0.0)
            })
            .collect();
        self.fft.process(&mut buf);
        buf[..n_fft / 2 + 1].iter().map(|c| c.norm()).collect()
    }

    pub fn compute(&self, samples: &[f32]) -> Result<MelSpectrogram> {
        let cfg = &self.cfg;
        if samples.is_empty() {
            return Err(Error::Validation("audio is empty".into()));
        }
        let n_frames = cfg.frame_count(samples.len());
        if n_frames == 0 {
            return Err(Error::Validation(format!(
                "audio has {} samples, shorter than one {}-sample frame",
                samples.len(),
                cfg.win_length
            )));
        }
        let fb = &self.filterbank.weights;
        let mut data = Vec::with_capacity(n_frames * cfg.n_mels);
        for t in 0..n_frames {
            let mag = self.magnitude(samples, t * cfg.hop_length);
            for b in 0..cfg.n_mels {
                let e: f64 = fb.row(b).iter().zip(&mag).map(|(w, m)| w * m).sum();
                data.push(e.max(cfg.log_floor).ln() as f32);
            }
        }
        let mut mel = MelSpectrogram::new(n_frames, cfg.n_mels, data, cfg.frame_shift())?;
        mel.frame_length = Some(cfg.frame_length());
        mel.sample_rate = Some(cfg.sample_rate);
        Ok(mel)
    }
}

/// Log-mel analysis of `samples` recorded at `sample_rate`.
pub fn compute_mel(samples: &[f32], sample_rate: u32, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if sample_rate != cfg.sample_rate {
        return Err(Error::Validation(format!(
            "audio sample rate {sample_rate} Hz does not match configured {} Hz",
            cfg.sample_rate
        )));
    }
    MelAnalyzer::new(cfg.clone())?.compute(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_at_22050_gives_83_frames() {
        let cfg = MelConfig::default();
        assert_eq!(cfg.frame_count(22050), 83);
        let audio = vec![0.0f32; 22050];
        let mel = compute_mel(&audio, 22050, &cfg).unwrap();
        assert_eq!(mel.n_frames(), 83);
        assert_eq!(mel.n_mels(), 80);
    }

    #[test]
    fn silence_hits_the_log_floor_everywhere() {
        let cfg = MelConfig::default();
        let mel = compute_mel(&vec![0.0f32; 4096], 22050, &cfg).unwrap();
        let floor = (1e-5f64).ln() as f32;
        assert!(mel.data().iter().all(|&x| x == floor));
    }

    #[test]
    fn short_audio_and_rate_mismatch_are_errors() {
        let cfg = MelConfig::default();
        assert!(compute_mel(&[0.1; 100], 22050, &cfg).is_err());
        assert!(compute_mel(&[], 22050, &cfg).is_err());
        assert!(compute_mel(&[0.1; 4096], 16000, &cfg).is_err());
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 440.0, 999.0, 1000.0, 4000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = MelSpectrogram::from_frames(&[[1.0f32, 2.0]], 0.01).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(MelSpectrogram::read_from(bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(MelSpectrogram::from_frames(&[[1.0f32, f32::NAN]], 0.01).is_err());
    }
}
