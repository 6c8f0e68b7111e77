use crate::acoustic::StyleEmbeddingSequence;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Resamples a style sequence of length `L` to `target_len` (`T`) vectors.
///
/// Output `j` sits at position `p = j (L - 1) / (T - 1)` of the input and
/// blends its two neighbours linearly, so both endpoints are kept exactly.
/// A single output takes the element at `floor((L - 1) / 2)`; a single input
/// is replicated.
pub fn interpolate_style_sequence(seq: &StyleEmbeddingSequence, target_len: usize) -> Result<StyleEmbeddingSequence> {
    let l = seq.len();
    if l == 0 {
        return Err(Error::Validation("cannot interpolate an empty style sequence".into()));
    }
    if target_len == 0 {
        return Err(Error::Validation("interpolation target length must be positive".into()));
    }
    let d = seq.dim();
    let mut out = Tensor::zeros(target_len, d);
    if l == 1 || target_len == 1 {
        let src = if l == 1 { 0 } else { (l - 1) / 2 };
        for j in 0..target_len {
            out.row_mut(j).copy_from_slice(seq.vector(src));
        }
        return Ok(StyleEmbeddingSequence::new(out));
    }
    for j in 0..target_len {
        let p = (j * (l - 1)) as f64 / (target_len - 1) as f64;
        let lo = (p.floor() as usize).min(l - 1);
        let alpha = p - lo as f64;
        if alpha == 0.0 {
            out.row_mut(j).copy_from_slice(seq.vector(lo));
            continue;
        }
        let hi = lo + 1;
        let (a, b) = (seq.vector(lo), seq.vector(hi));
        for (k, o) in out.row_mut(j).iter_mut().enumerate() {
            *o = (1.0 - alpha) * a[k] + alpha * b[k];
        }
    }
    Ok(StyleEmbeddingSequence::new(out))
}
