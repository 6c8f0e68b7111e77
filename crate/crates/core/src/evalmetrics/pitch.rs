//! Autocorrelation pitch tracking and frame-level F0 error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame F0 (0 where unvoiced) and voicing decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    f0: Vec<f64>,
    voiced: Vec<bool>,
    pub frame_shift: f64,
}

impl PitchTrack {
    /// Builds a track from F0 values; a frame is voiced iff its F0 is positive.
    pub fn from_f0(f0: Vec<f64>, frame_shift: f64) -> Result<Self> {
        if f0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("pitch track: F0 must be finite and non-negative".into()));
        }
        let voiced = f0.iter().map(|&v| v > 0.0).collect();
        Ok(Self { f0, voiced, frame_shift })
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    /// Frames picked by `index`, in order.
    pub fn select(&self, index: &[usize]) -> PitchTrack {
        PitchTrack {
            f0: index.iter().map(|&i| self.f0[i]).collect(),
            voiced: index.iter().map(|&i| self.voiced[i]).collect(),
            frame_shift: self.frame_shift,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Minimum normalized autocorrelation at the chosen lag for a voiced frame.
    pub voicing_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            window: 1024,
            hop: 256,
            f_min: 60.0,
            f_max: 400.0,
            voicing_threshold: 0.5,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.hop == 0 || self.window == 0 {
            return Err(Error::Validation("pitch config: rate, window and hop must be positive".into()));
        }
        if !(self.f_min > 0.0 && self.f_min < self.f_max) {
            return Err(Error::Validation("pitch config: need 0 < f_min < f_max".into()));
        }
        let max_lag = (self.sample_rate as f64 / self.f_min).ceil() as usize + 1;
        if max_lag >= self.window {
            return Err(Error::Validation("pitch config: window too short for f_min".into()));
        }
        Ok(())
    }
}

/// Normalized autocorrelation of `x` at lag `tau`.
fn nacf(x: &[f64], tau: usize) -> f64 {
    let n = x.len() - tau;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (x[i], x[i + tau]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let d = (xx * yy).sqrt();
    if d > 1e-12 {
        xy / d
    } else {
        0.0
    }
}

/// Per-frame F0 by normalized autocorrelation over lags `[sr/f_max, sr/f_min]`.
/// The first local maximum reaching 90% of the best correlation is taken (to
/// avoid period doubling) and refined by parabolic interpolation.
pub fn extract_pitch(samples: &[f32], cfg: &PitchConfig) -> Result<PitchTrack> {
    cfg.validate()?;
    if samples.len() < cfg.window {
        return Err(Error::Validation(format!(
            "audio of {} samples is shorter than the {}-sample analysis window",
            samples.len(),
            cfg.window
        )));
    }
    let sr = cfg.sample_rate as f64;
    let min_lag = (sr / cfg.f_max).floor().max(2.0) as usize;
    let max_lag = (sr / cfg.f_min).ceil() as usize;
    let n_frames = 1 + (samples.len() - cfg.window) / cfg.hop;
    let mut f0 = Vec::with_capacity(n_frames);
    let mut buf = vec![0.0; cfg.window];
    for t in 0..n_frames {
        let start = t * cfg.hop;
        for (b, s) in buf.iter_mut().zip(&samples[start..start + cfg.window]) {
            *b = *s as f64;
        }
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        buf.iter_mut().for_each(|v| *v -= mean);
        let energy: f64 = buf.iter().map(|v| v * v).sum();
        if energy < 1e-10 {
            f0.push(0.0);
            continue;
        }
        // One lag beyond each end so interior peaks can be interpolated.
        let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|tau| nacf(&buf, tau)).collect();
        let best = r[1..r.len() - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if best < cfg.voicing_threshold {
            f0.push(0.0);
            continue;
        }
        let mut pick = None;
        for i in 1..r.len() - 1 {
            if r[i] >= 0.9 * best && r[i] >= r[i - 1] && r[i] >= r[i + 1] {
                pick = Some(i);
                break;
            }
        }
        let i = pick.unwrap_or_else(|| {
            (1..r.len() - 1).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap()
        });
        let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let lag = (min_lag - 1 + i) as f64 + shift;
        let hz = sr / lag;
        f0.push(if hz >= cfg.f_min && hz <= cfg.f_max { hz } else { 0.0 });
    }
    PitchTrack::from_f0(f0, cfg.hop as f64 / sr)
}

/// Frame counts behind the F0 metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct F0Counts {
    pub n_frames: usize,
    /// Frames whose voicing decisions differ.
    pub voicing_errors: usize,
    /// Frames voiced in both tracks.
    pub both_voiced: usize,
    /// Both-voiced frames with relative F0 deviation above the threshold.
    pub pitch_errors: usize,
}

impl F0Counts {
    pub fn vde(&self) -> f64 {
        self.voicing_errors as f64 / self.n_frames as f64
    }

    /// 0 when no frame is voiced in both tracks (see `gpe_defined`).
    pub fn gpe(&self) -> f64 {
        if self.both_voiced == 0 {
            0.0
        } else {
            self.pitch_errors as f64 / self.both_voiced as f64
        }
    }

    pub fn gpe_defined(&self) -> bool {
        self.both_voiced > 0
    }

    pub fn ffe(&self) -> f64 {
        (self.voicing_errors + self.pitch_errors) as f64 / self.n_frames as f64
    }
}

/// Counts voicing and gross pitch errors over equal-length tracks.
pub fn f0_counts(reference: &PitchTrack, synthesized: &PitchTrack, threshold: f64) -> Result<F0Counts> {
    if reference.len() != synthesized.len() {
        return Err(Error::Shape(format!(
            "pitch tracks differ in length ({} vs {}); align them first",
            reference.len(),
            synthesized.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Validation("pitch tracks are empty".into()));
    }
    let mut c = F0Counts {
        n_frames: reference.len(),
        voicing_errors: 0,
        both_voiced: 0,
        pitch_errors: 0,
    };
    for i in 0..reference.len() {
        let (vr, vs) = (reference.voiced[i], synthesized.voiced[i]);
        if vr != vs {
            c.voicing_errors += 1;
        } else if vr {
            c.both_voiced += 1;
            let (fr, fs) = (reference.f0[i], synthesized.f0[i]);
            if (fs - fr).abs() > threshold * fr {
                c.pitch_errors += 1;
            }
        }
    }
    Ok(c)
}

/// Voicing decision error.
pub fn vde(reference: &PitchTrack, synthesized: &PitchTrack) -> Result<f64> {
    f0_counts(reference, synthesized, 0.2).map(|c| c.vde())
}

/// Gross pitch error among frames voiced in both tracks.
pub fn gpe(reference: &PitchTrack, synthesized: &PitchTrack, threshold: f64) -> Result<f64> {
    f0_counts(reference, synthesized, threshold).map(|c| c.gpe())
}

/// F0 frame error: voicing errors plus gross pitch errors over all frames.
pub fn ffe(reference: &PitchTrack, synthesized: &PitchTrack, threshold: f64) -> Result<f64> {
    f0_counts(reference, synthesized, threshold).map(|c| c.ffe())
}

fn track_cost(a: &PitchTrack, i: usize, b: &PitchTrack, j: usize) -> f64 {
    match (a.voiced[i], b.voiced[j]) {
        (true, true) => (a.f0[i].ln() - b.f0[j].ln()).abs(),
        (false, false) => 0.0,
        _ => 1.0,
    }
}

/// Warps two tracks onto a common time axis by dynamic time warping on
/// log-F0 with a unit penalty for voicing disagreement. Both outputs have the
/// length of the warping path.
pub fn align_tracks(reference: &PitchTrack, synthesized: &PitchTrack) -> Result<(PitchTrack, PitchTrack)> {
    if reference.is_empty() || synthesized.is_empty() {
        return Err(Error::Validation("cannot align an empty pitch track".into()));
    }
    let path = super::dtw::dtw_path(reference.len(), synthesized.len(), |i, j| {
        track_cost(reference, i, synthesized, j)
    });
    let (ri, si): (Vec<usize>, Vec<usize>) = path.into_iter().unzip();
    Ok((reference.select(&ri), synthesized.select(&si)))
}
