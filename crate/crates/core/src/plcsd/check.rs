//! Finite-difference verification of the objectives' analytic gradients.

use super::losses::{build_objective, Objective};
use super::model::{Group, PlcsdModel, SegmentBatch};
use crate::nn::gradcheck::{check_gradients, GradCheck};
use crate::nn::{Graph, Param, Tensor};

struct Probe {
    model: PlcsdModel,
    group: Group,
}

fn probe_params(p: &mut Probe) -> Vec<&mut Param> {
    let g = p.group;
    p.model.params_of_mut(&[g])
}

/// Compares analytic and central-difference gradients of `objective` for each
/// of its trainable groups.
pub fn check_objective_gradients(
    model: &PlcsdModel,
    batch: &SegmentBatch,
    objective: Objective,
    contrast_weight: f64,
    step: f64,
) -> Vec<(Group, GradCheck)> {
    let mut g = Graph::new();
    let built = build_objective(&mut g, model, batch, objective, contrast_weight);
    let grads = g.backward(built.loss);
    let value = |m: &PlcsdModel| {
        let mut g = Graph::new();
        g.set_grad_enabled(false);
        let built = build_objective(&mut g, m, batch, objective, contrast_weight);
        g.value(built.loss).item()
    };
    objective
        .trainable()
        .iter()
        .map(|&group| {
            let analytic: Vec<Tensor> = model
                .params_of(&[group])
                .into_iter()
                .map(|p| grads.param(p).cloned().unwrap_or_else(|| Tensor::zeros(p.value.rows, p.value.cols)))
                .collect();
            let mut probe = Probe {
                model: model.clone(),
                group,
            };
            let report = check_gradients(&mut probe, probe_params, |p| value(&p.model), &analytic, step);
            (group, report)
        })
        .collect()
}
