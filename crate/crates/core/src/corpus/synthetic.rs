//! Factorized synthetic corpus with known content and style factors.
//!
//! Every segment is `template[phone] + contour[style](t) + noise`: the phone
//! fixes a spectral envelope over the mel bands, the style adds the same
//! level `offset + slope * t` to every band of frame `t`, counted from the
//! segment onset.
//! Durations are drawn independently of both factors.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::alignment::AlignmentEntry;
use super::inventory::{PhoneInventory, ARPABET};
use super::mel::MelSpectrogram;
use super::segment::{PhoneSegment, SilenceLabels, Utterance};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_phones: usize,
    pub n_styles: usize,
    pub n_mels: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub noise_std: f64,
    /// Scale of the style contour: the level offset ranges over
    /// `[-A, A]` and the per-frame drift over `[-A/5, A/5]`.
    pub style_amplitude: f64,
    pub frame_shift: f64,
    /// Seeds the phone templates (the "speaker"), not the sampling.
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_phones: 5,
            n_styles: 3,
            n_mels: 20,
            min_frames: 4,
            max_frames: 10,
            noise_std: 0.05,
            style_amplitude: 1.0,
            frame_shift: 256.0 / 22050.0,
            seed: 0,
        }
    }
}

/// The generative model: phone templates plus style contours.
#[derive(Clone, Debug)]
pub struct SyntheticGenerator {
    cfg: SyntheticConfig,
    inventory: PhoneInventory,
    templates: Vec<Vec<f64>>,
    styles: Vec<(f64, f64)>,
}

/// Segments with their hidden factors.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub inventory: PhoneInventory,
    pub segments: Vec<PhoneSegment>,
    pub phone_labels: Vec<usize>,
    /// Hidden style labels; for evaluation only.
    pub style_labels: Vec<usize>,
}

/// An utterance spoken in a single style.
#[derive(Clone, Debug)]
pub struct SyntheticUtterance {
    pub utterance: Utterance,
    pub style: usize,
}

impl SyntheticGenerator {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        if cfg.n_phones < 2 || cfg.n_styles < 2 {
            return Err(Error::Validation("synthetic corpus needs at least 2 phones and 2 styles".into()));
        }
        if cfg.n_phones > ARPABET.len() {
            return Err(Error::Validation(format!("at most {} synthetic phones", ARPABET.len())));
        }
        if cfg.min_frames == 0 || cfg.min_frames > cfg.max_frames || cfg.n_mels < 2 {
            return Err(Error::Validation("synthetic corpus: invalid frame or band counts".into()));
        }
        let inventory = PhoneInventory::new(ARPABET[..cfg.n_phones].iter().copied())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bands = cfg.n_mels as f64;
        let spacing = bands / cfg.n_phones as f64;
        let templates = (0..cfg.n_phones)
            .map(|p| {
                let c1 = (p as f64 + 0.5) * spacing + rng.gen_range(-0.25..0.25) * spacing;
                let w1 = rng.gen_range(1.5..3.0);
                let a1 = rng.gen_range(2.5..3.5);
                let c2 = rng.gen_range(0.0..bands);
                let w2 = rng.gen_range(2.0..5.0);
                let a2 = rng.gen_range(0.5..1.5);
                (0..cfg.n_mels)
                    .map(|b| {
                        let b = b as f64;
                        -5.0 + a1 * (-0.5 * ((b - c1) / w1).powi(2)).exp()
                            + a2 * (-0.5 * ((b - c2) / w2).powi(2)).exp()
                    })
                    .collect()
            })
            .collect();
        let styles = (0..cfg.n_styles)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / cfg.n_styles as f64;
                (cfg.style_amplitude * angle.cos(), 0.2 * cfg.style_amplitude * angle.sin())
            })
            .collect();
        Ok(Self {
            cfg,
            inventory,
            templates,
            styles,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn template(&self, phone: usize) -> &[f64] {
        &self.templates[phone]
    }

    /// Style contour values for a segment of `n_frames` frames: a level
    /// offset at the segment onset followed by a constant per-frame drift.
    pub fn contour(&self, style: usize, n_frames: usize) -> Vec<f64> {
        let (offset, slope) = self.styles[style];
        (0..n_frames).map(|t| offset + slope * t as f64).collect()
    }

    /// Noise-free frames, row-major `n_frames x n_mels`.
    pub fn render(&self, phone: usize, style: usize, n_frames: usize) -> Vec<f64> {
        let contour = self.contour(style, n_frames);
        let mut out = Vec::with_capacity(n_frames * self.cfg.n_mels);
        for c in contour {
            out.extend(self.templates[phone].iter().map(|v| v + c));
        }
        out
    }

    fn render_mel<R: Rng>(&self, phone: usize, style: usize, n_frames: usize, rng: &mut R) -> Result<MelSpectrogram> {
        let clean = self.render(phone, style, n_frames);
        let data = if self.cfg.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.cfg.noise_std).expect("positive std");
            clean.iter().map(|v| (v + normal.sample(rng)) as f32).collect()
        } else {
            clean.iter().map(|&v| v as f32).collect()
        };
        MelSpectrogram::new(n_frames, self.cfg.n_mels, data, self.cfg.frame_shift)
    }

    fn draw_frames<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(self.cfg.min_frames..=self.cfg.max_frames)
    }

    /// Independent segments with uniformly drawn phone and style labels.
    pub fn segments(&self, n_segments: usize, seed: u64) -> Result<SyntheticCorpus> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut segments = Vec::with_capacity(n_segments);
        let mut phone_labels = Vec::with_capacity(n_segments);
        let mut style_labels = Vec::with_capacity(n_segments);
        for i in 0..n_segments {
            let phone = rng.gen_range(0..self.cfg.n_phones);
            let style = rng.gen_range(0..self.cfg.n_styles);
            let n = self.draw_frames(&mut rng);
            segments.push(PhoneSegment {
                utterance_id: format!("syn{i:05}"),
                index_in_utterance: 0,
                phone: self.inventory.label(phone).to_string(),
                start_frame: 0,
                mel: self.render_mel(phone, style, n, &mut rng)?,
            });
            phone_labels.push(phone);
            style_labels.push(style);
        }
        Ok(SyntheticCorpus {
            inventory: self.inventory.clone(),
            segments,
            phone_labels,
            style_labels,
        })
    }

    /// Utterances of `min_phones..=max_phones` phones, each in one style.
    pub fn utterances(&self, n_utts: usize, min_phones: usize, max_phones: usize, seed: u64) -> Result<Vec<SyntheticUtterance>> {
        if min_phones == 0 || min_phones > max_phones {
            return Err(Error::Validation("invalid phone count range".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hop = self.cfg.frame_shift;
        (0..n_utts)
            .map(|u| {
                let style = rng.gen_range(0..self.cfg.n_styles);
                let m = rng.gen_range(min_phones..=max_phones);
                let mut parts = Vec::with_capacity(m);
                let mut alignment = Vec::with_capacity(m);
                let mut phones = Vec::with_capacity(m);
                let mut frame = 0usize;
                for _ in 0..m {
                    let phone = rng.gen_range(0..self.cfg.n_phones);
                    let n = self.draw_frames(&mut rng);
                    parts.push(self.render_mel(phone, style, n, &mut rng)?);
                    let label = self.inventory.label(phone).to_string();
                    alignment.push(AlignmentEntry::new(label.clone(), frame as f64 * hop, (frame + n) as f64 * hop));
                    phones.push(label);
                    frame += n;
                }
                let mel = MelSpectrogram::concat(&parts)?;
                let id = format!("synutt{u:04}");
                let utterance = Utterance::new(id.clone(), format!("{id}.wav"), phones, alignment, mel, &SilenceLabels::default())?;
                Ok(SyntheticUtterance { utterance, style })
            })
            .collect()
    }

    /// Style whose noise-free rendering (for the given phone) is closest to `frames`.
    pub fn nearest_style(&self, frames: &MelSpectrogram, phone: usize) -> usize {
        let n = frames.n_frames();
        (0..self.cfg.n_styles)
            .map(|s| (s, sq_dist(frames, &self.render(phone, s, n))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, _)| s)
            .expect("at least two styles")
    }

    /// Brute-force recovery of `(phone, style)` by nearest noise-free rendering.
    pub fn nearest_factors(&self, frames: &MelSpectrogram) -> (usize, usize) {
        let n = frames.n_frames();
        let mut best = (0, 0, f64::INFINITY);
        for p in 0..self.cfg.n_phones {
            for s in 0..self.cfg.n_styles {
                let d = sq_dist(frames, &self.render(p, s, n));
                if d < best.2 {
                    best = (p, s, d);
                }
            }
        }
        (best.0, best.1)
    }
}

fn sq_dist(mel: &MelSpectrogram, flat: &[f64]) -> f64 {
    mel.data().iter().zip(flat).map(|(a, b)| (*a as f64 - b).powi(2)).sum()
}

/// Segments drawn from a fresh generator seeded by `seed`.
pub fn make_synthetic_corpus(n_phones: usize, n_styles: usize, n_segments: usize, seed: u64) -> Result<SyntheticCorpus> {
    let generator = SyntheticGenerator::new(SyntheticConfig {
        n_phones,
        n_styles,
        seed,
        ..SyntheticConfig::default()
    })?;
    generator.segments(n_segments, seed.wrapping_add(1))
}
