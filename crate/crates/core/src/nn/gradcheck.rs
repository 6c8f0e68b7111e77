//! Central finite-difference gradient checking.

use super::param::Param;
use super::tensor::Tensor;

/// Outcome of comparing analytic and numeric gradients over one parameter set.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` over all checked entries.
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub entries: usize,
}

/// Perturbs every entry of the parameters returned by `select` by `+-step`
/// and compares the central difference of `loss` against `analytic`
/// (one tensor per selected parameter, same order).
pub fn check_gradients<M>(
    model: &mut M,
    select: fn(&mut M) -> Vec<&mut Param>,
    loss: impl Fn(&M) -> f64,
    analytic: &[Tensor],
    step: f64,
) -> GradCheck {
    let shapes: Vec<usize> = select(model).iter().map(|p| p.numel()).collect();
    assert_eq!(shapes.len(), analytic.len(), "one analytic gradient per parameter");
    let mut diff_sq = 0.0;
    let mut num_sq = 0.0;
    let mut ana_sq = 0.0;
    let mut entries = 0;
    for (pi, &n) in shapes.iter().enumerate() {
        assert_eq!(analytic[pi].len(), n, "analytic gradient shape mismatch");
        for j in 0..n {
            let orig = select(model)[pi].value.data[j];
            select(model)[pi].value.data[j] = orig + step;
            let up = loss(model);
            select(model)[pi].value.data[j] = orig - step;
            let down = loss(model);
            select(model)[pi].value.data[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[pi].data[j];
            diff_sq += (a - numeric).powi(2);
            num_sq += numeric * numeric;
            ana_sq += a * a;
            entries += 1;
        }
    }
    let denom = num_sq.sqrt().max(ana_sq.sqrt());
    GradCheck {
        rel_error: if denom > 1e-12 { diff_sq.sqrt() / denom } else { diff_sq.sqrt() },
        analytic_norm: ana_sq.sqrt(),
        numeric_norm: num_sq.sqrt(),
        entries,
    }
}
