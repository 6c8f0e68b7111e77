//! The seven training objectives, built on the autodiff graph so that the
//! same code serves evaluation, optimization and gradient checking.

use serde::{Deserialize, Serialize};

use super::model::{Group, PlcsdModel, SegmentBatch, SegmentData};
use crate::error::Result;
use crate::nn::{Graph, Tensor, Var};

/// Probabilities are clipped to `[PROB_EPS, 1 - PROB_EPS]` inside logarithms.
pub const PROB_EPS: f64 = 1e-7;

/// Names of the seven losses, in report order.
pub const LOSS_NAMES: [&str; 7] = ["L_auto", "L_c", "L_contra", "L_s_dis", "L_s_gen", "L_seg_dis", "L_seg_gen"];

pub(crate) fn clipped_log(g: &mut Graph, p: Var) -> Var {
    let p = g.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    g.log(p)
}

pub(crate) fn clipped_log_complement(g: &mut Graph, p: Var) -> Var {
    let p = g.clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let q = g.scale(p, -1.0);
    let q = g.add_scalar(q, 1.0);
    g.log(q)
}

/// Summed negative log posterior at the true phones. `posterior` is `B x N_w`.
pub fn nll_loss(g: &mut Graph, posterior: Var, phones: &[usize]) -> Var {
    let (b, n) = g.shape(posterior);
    assert_eq!(b, phones.len(), "one phone per posterior row");
    let mut onehot = Tensor::zeros(b, n);
    for (i, &w) in phones.iter().enumerate() {
        onehot.set(i, w, 1.0);
    }
    let onehot = g.constant(onehot);
    let logp = clipped_log(g, posterior);
    let picked = g.mul(logp, onehot);
    let total = g.sum(picked);
    g.scale(total, -1.0)
}

/// Sum of L2 distances between embedding rows whose phones match (`i < j`).
pub fn contrast_term(g: &mut Graph, embeddings: Var, phones: &[usize]) -> Var {
    let b = phones.len();
    let mut rows = Vec::new();
    for i in 0..b {
        for j in i + 1..b {
            if phones[i] == phones[j] {
                let mut r = vec![0.0; b];
                r[i] = 1.0;
                r[j] = -1.0;
                rows.push(r);
            }
        }
    }
    if rows.is_empty() {
        // Keep the result connected to the embeddings so callers can
        // backpropagate through it uniformly.
        let zero = g.scale(embeddings, 0.0);
        return g.sum(zero);
    }
    let pairs = g.constant(Tensor::from_rows(&rows));
    let diffs = g.matmul(pairs, embeddings);
    let norms = g.row_norm(diffs);
    g.sum(norms)
}

/// `sum_k sum_w |P(w) - 1/N_w|` over the rows of a `B x N_w` posterior.
pub fn uniformity_loss(g: &mut Graph, posterior: Var) -> Var {
    let n = g.shape(posterior).1 as f64;
    let dev = g.add_scalar(posterior, -1.0 / n);
    let dev = g.abs(dev);
    g.sum(dev)
}

/// `-sum [log p_real + log(1 - p_fake)]`.
pub fn discriminator_loss(g: &mut Graph, p_real: Var, p_fake: Var) -> Var {
    let a = clipped_log(g, p_real);
    let b = clipped_log_complement(g, p_fake);
    let s = g.add(a, b);
    let total = g.sum(s);
    g.scale(total, -1.0)
}

/// `-sum log p_fake`.
pub fn generator_loss(g: &mut Graph, p_fake: Var) -> Var {
    let a = clipped_log(g, p_fake);
    let total = g.sum(a);
    g.scale(total, -1.0)
}

/// Spectrogram and gate terms of the reconstruction loss, each averaged over
/// a segment's frames and summed over the batch. The spectrogram term of a
/// frame is the squared L2 norm of its error vector.
pub fn reconstruction_terms(g: &mut Graph, frames: &[Var], gates: &[Var], batch: &SegmentBatch) -> (Var, Var) {
    let mut spec = None;
    let mut gate = None;
    for t in 0..batch.max_len() {
        let w = g.constant(batch.frame_weights(t));
        let target = g.constant(batch.steps[t].clone());
        let d = g.sub(frames[t], target);
        let sq = g.mul(d, d);
        let per_row = g.sum_cols(sq);
        let weighted = g.mul(per_row, w);
        let s = g.sum(weighted);
        spec = Some(match spec {
            Some(acc) => g.add(acc, s),
            None => s,
        });

        let y = batch.gate_targets(t);
        let ny = y.map(|v| 1.0 - v);
        let y = g.constant(y);
        let ny = g.constant(ny);
        let lp = clipped_log(g, gates[t]);
        let lq = clipped_log_complement(g, gates[t]);
        let a = g.mul(lp, y);
        let b = g.mul(lq, ny);
        let ll = g.add(a, b);
        let weighted = g.mul(ll, w);
        let s = g.sum(weighted);
        let s = g.scale(s, -1.0);
        gate = Some(match gate {
            Some(acc) => g.add(acc, s),
            None => s,
        });
    }
    (spec.expect("batch has frames"), gate.expect("batch has frames"))
}

/// The optimization target of one training sub-step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Reconstruction through E_c, E_s and D.
    Auto,
    /// Content-to-phone classification plus the weighted contrast term.
    ContentClass,
    /// Style classifier trained to recover phones from fixed style embeddings.
    StyleDiscriminate,
    /// Style encoder trained to flatten the fixed style classifier's posterior.
    StyleGenerate,
    /// Segment classifier trained on natural versus reconstructed segments.
    SegmentDiscriminate,
    /// Autoencoder trained to make reconstructions look natural.
    SegmentGenerate,
}

impl Objective {
    /// Groups whose parameters receive gradients.
    pub fn trainable(self) -> &'static [Group] {
        use Group::*;
        match self {
            Objective::Auto => &[ContentEncoder, StyleEncoder, Decoder],
            Objective::ContentClass => &[ContentEncoder, ContentClassifier],
            Objective::StyleDiscriminate => &[StyleClassifier],
            Objective::StyleGenerate => &[StyleEncoder],
            Objective::SegmentDiscriminate => &[SegmentClassifier],
            Objective::SegmentGenerate => &[ContentEncoder, StyleEncoder, Decoder],
        }
    }

    /// Groups explicitly held fixed while they take part in the forward pass.
    pub fn fixed(self) -> &'static [Group] {
        use Group::*;
        match self {
            Objective::Auto | Objective::ContentClass => &[],
            Objective::StyleDiscriminate => &[StyleEncoder],
            Objective::StyleGenerate => &[StyleClassifier],
            Objective::SegmentDiscriminate => &[ContentEncoder, StyleEncoder, Decoder],
            Objective::SegmentGenerate => &[SegmentClassifier],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Auto => "auto",
            Objective::ContentClass => "content_class",
            Objective::StyleDiscriminate => "style_adv_dis",
            Objective::StyleGenerate => "style_adv_gen",
            Objective::SegmentDiscriminate => "seg_adv_dis",
            Objective::SegmentGenerate => "seg_adv_gen",
        }
    }
}

/// A built objective: the scalar to differentiate plus the named loss sums.
pub struct BuiltObjective {
    /// Sum-over-batch objective divided by the batch size.
    pub loss: Var,
    /// `(loss name, batch sum)` for each loss the objective evaluates.
    pub parts: Vec<(&'static str, f64)>,
    /// Style embeddings of the batch, for the style objectives.
    pub style_embeddings: Option<Tensor>,
}

/// Builds `objective` on `g`. Groups outside `objective.trainable()` are bound
/// as constants, so gradients reach only the trainable groups.
pub fn build_objective(
    g: &mut Graph,
    model: &PlcsdModel,
    batch: &SegmentBatch,
    objective: Objective,
    contrast_weight: f64,
) -> BuiltObjective {
    let b = batch.size() as f64;
    let trains = |grp: Group| objective.trainable().contains(&grp);
    macro_rules! bind {
        ($grp:expr, $body:expr) => {
            if trains($grp) {
                $body(g)
            } else {
                g.frozen(|g| $body(g))
            }
        };
    }
    let mut style_embeddings = None;
    let (loss, parts) = match objective {
        Objective::Auto => {
            let zc = bind!(Group::ContentEncoder, |g: &mut Graph| model.content_encoder.encode(g, batch));
            let zs = bind!(Group::StyleEncoder, |g: &mut Graph| model.style_encoder.encode(g, batch));
            let dec = bind!(Group::Decoder, |g: &mut Graph| model.decoder.teacher_forced(g, zc, zs, batch));
            let (spec, gate) = reconstruction_terms(g, &dec.frames, &dec.gates, batch);
            let total = g.add(spec, gate);
            (total, vec![("L_auto", g.value(total).item())])
        }
        Objective::ContentClass => {
            let zc = bind!(Group::ContentEncoder, |g: &mut Graph| model.content_encoder.encode(g, batch));
            let post = bind!(Group::ContentClassifier, |g: &mut Graph| model.content_classifier.posterior(g, zc));
            let lc = nll_loss(g, post, &batch.phones);
            let lcon = contrast_term(g, zc, &batch.phones);
            let weighted = g.scale(lcon, contrast_weight);
            let total = g.add(lc, weighted);
            (total, vec![("L_c", g.value(lc).item()), ("L_contra", g.value(lcon).item())])
        }
        Objective::StyleDiscriminate | Objective::StyleGenerate => {
            let zs = bind!(Group::StyleEncoder, |g: &mut Graph| model.style_encoder.encode(g, batch));
            let post = bind!(Group::StyleClassifier, |g: &mut Graph| model.style_classifier.posterior_batch(g, zs));
            style_embeddings = Some(g.value(zs).clone());
            if objective == Objective::StyleDiscriminate {
                let l = nll_loss(g, post, &batch.phones);
                (l, vec![("L_s_dis", g.value(l).item())])
            } else {
                let l = uniformity_loss(g, post);
                (l, vec![("L_s_gen", g.value(l).item())])
            }
        }
        Objective::SegmentDiscriminate | Objective::SegmentGenerate => {
            let zc = bind!(Group::ContentEncoder, |g: &mut Graph| model.content_encoder.encode(g, batch));
            let zs = bind!(Group::StyleEncoder, |g: &mut Graph| model.style_encoder.encode(g, batch));
            let dec = bind!(Group::Decoder, |g: &mut Graph| model.decoder.teacher_forced(g, zc, zs, batch));
            let fake_frames = dec.frames;
            let p_fake = bind!(Group::SegmentClassifier, |g: &mut Graph| {
                model.segment_classifier.probability(g, &fake_frames, &batch.masks)
            });
            if objective == Objective::SegmentDiscriminate {
                let real: Vec<Var> = batch.steps.iter().map(|x| g.constant(x.clone())).collect();
                let p_real = model.segment_classifier.probability(g, &real, &batch.masks);
                let l = discriminator_loss(g, p_real, p_fake);
                (l, vec![("L_seg_dis", g.value(l).item())])
            } else {
                let l = generator_loss(g, p_fake);
                (l, vec![("L_seg_gen", g.value(l).item())])
            }
        }
    };
    let loss = g.scale(loss, 1.0 / b);
    BuiltObjective {
        loss,
        parts,
        style_embeddings,
    }
}

fn evaluate(model: &PlcsdModel, segments: &[&SegmentData], objective: Objective, name: &str) -> Result<f64> {
    let batch = SegmentBatch::new(segments)?;
    let mut g = Graph::new();
    g.set_grad_enabled(false);
    let built = build_objective(&mut g, model, &batch, objective, 1.0);
    Ok(built
        .parts
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .expect("objective reports the requested loss"))
}

/// Reconstruction loss summed over the batch.
pub fn auto_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::Auto, "L_auto")
}

pub fn content_class_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::ContentClass, "L_c")
}

pub fn contrast_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::ContentClass, "L_contra")
}

pub fn style_adv_dis_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::StyleDiscriminate, "L_s_dis")
}

pub fn style_adv_gen_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::StyleGenerate, "L_s_gen")
}

pub fn seg_adv_dis_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::SegmentDiscriminate, "L_seg_dis")
}

pub fn seg_adv_gen_loss(model: &PlcsdModel, batch: &[&SegmentData]) -> Result<f64> {
    evaluate(model, batch, Objective::SegmentGenerate, "L_seg_gen")
}
