use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_gradients;
use super::*;

struct Holder {
    a: Param,
    b: Param,
}

fn holder_params(h: &mut Holder) -> Vec<&mut Param> {
    vec![&mut h.a, &mut h.b]
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Projects `out` onto fixed random weights so every entry matters.
fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Var {
    let (r, c) = g.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(random(r, c, &mut rng));
    let p = g.mul(out, w);
    g.sum(p)
}

fn check_binary(name: &str, sa: (usize, usize), sb: (usize, usize), f: fn(&mut Graph, Var, Var) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut h = Holder {
        a: Param { name: "a".into(), value: random(sa.0, sa.1, &mut rng) },
        b: Param { name: "b".into(), value: random(sb.0, sb.1, &mut rng) },
    };
    let forward = |h: &Holder| {
        let mut g = Graph::new();
        let a = g.param(&h.a);
        let b = g.param(&h.b);
        let out = f(&mut g, a, b);
        let loss = weighted_sum(&mut g, out, 11);
        (g, loss)
    };
    let (g, loss) = forward(&h);
    let grads = g.backward(loss);
    let analytic: Vec<Tensor> = [&h.a, &h.b]
        .iter()
        .map(|p| grads.param(p).cloned().unwrap_or_else(|| Tensor::zeros(p.value.rows, p.value.cols)))
        .collect();
    let report = check_gradients(
        &mut h,
        holder_params,
        |h| {
            let (g, l) = forward(h);
            g.value(l).item()
        },
        &analytic,
        1e-5,
    );
    assert!(report.rel_error < 1e-6, "{name}: {report:?}");
}

#[test]
fn elementwise_and_matrix_ops_have_correct_gradients() {
    check_binary("matmul", (3, 4), (4, 2), |g, a, b| g.matmul(a, b));
    check_binary("add", (3, 4), (3, 4), |g, a, b| g.add(a, b));
    check_binary("sub", (3, 4), (3, 4), |g, a, b| g.sub(a, b));
    check_binary("mul", (3, 4), (3, 4), |g, a, b| g.mul(a, b));
    check_binary("add_row", (3, 4), (1, 4), |g, a, b| g.add_row(a, b));
    check_binary("mul_row", (3, 4), (1, 4), |g, a, b| g.mul_row(a, b));
    check_binary("mul_col", (3, 4), (3, 1), |g, a, b| g.mul_col(a, b));
    check_binary("concat_cols", (3, 4), (3, 2), |g, a, b| g.concat_cols(&[a, b, a]));
    check_binary("concat_rows", (3, 4), (2, 4), |g, a, b| g.concat_rows(&[b, a]));
}

#[test]
fn unary_ops_have_correct_gradients() {
    check_binary("sigmoid", (3, 4), (1, 1), |g, a, _| g.sigmoid(a));
    check_binary("tanh", (3, 4), (1, 1), |g, a, _| g.tanh(a));
    check_binary("exp", (3, 4), (1, 1), |g, a, _| g.exp(a));
    check_binary("log", (3, 4), (1, 1), |g, a, _| {
        let e = g.exp(a);
        g.log(e)
    });
    check_binary("abs", (3, 4), (1, 1), |g, a, _| g.abs(a));
    check_binary("softmax", (3, 4), (1, 1), |g, a, _| g.softmax_rows(a));
    check_binary("slice", (3, 5), (1, 1), |g, a, _| {
        let c = g.slice_cols(a, 1, 3);
        g.slice_rows(c, 1, 2)
    });
    check_binary("transpose", (3, 5), (1, 1), |g, a, _| g.transpose(a));
    check_binary("sum_cols", (3, 5), (1, 1), |g, a, _| g.sum_cols(a));
    check_binary("sum_rows", (3, 5), (1, 1), |g, a, _| g.sum_rows(a));
    check_binary("row_norm", (3, 5), (1, 1), |g, a, _| g.row_norm(a));
    check_binary("shift", (4, 3), (1, 1), |g, a, _| {
        let x = g.shift_rows(a, 1);
        let y = g.shift_rows(a, -2);
        g.add(x, y)
    });
    check_binary("gather", (4, 3), (1, 1), |g, a, _| g.gather_rows(a, &[2, 0, 2, 3]));
    check_binary("layer_norm", (3, 6), (1, 1), |g, a, _| g.layer_norm(a, 1e-5));
    check_binary("scale", (3, 4), (1, 1), |g, a, _| {
        let s = g.scale(a, -2.5);
        g.add_scalar(s, 0.3)
    });
    check_binary("blend", (3, 4), (3, 4), |g, a, b| {
        let mask = Rc::new(Tensor::column(&[1.0, 0.0, 1.0]));
        g.blend(a, b, mask)
    });
}

#[test]
fn frozen_params_receive_no_gradient_but_pass_it_through() {
    let x = Param::new("x", Tensor::row_vector(&[0.5, -1.0]));
    let w = Param::new("w", Tensor::from_vec(2, 1, vec![2.0, 3.0]));
    let mut g = Graph::new();
    let xv = g.param(&x);
    let wv = g.frozen(|g| g.param(&w));
    let y = g.matmul(xv, wv);
    let loss = g.sum(y);
    let grads = g.backward(loss);
    assert!(grads.param(&w).is_none());
    assert_eq!(grads.param(&x).unwrap().data, vec![2.0, 3.0]);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    struct Net {
        cell: LstmCell,
        head: Linear,
    }
    fn all(n: &mut Net) -> Vec<&mut Param> {
        let mut v = n.cell.params_mut();
        v.extend(n.head.params_mut());
        v
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Net {
        cell: LstmCell::new("cell", 3, 4, &mut rng),
        head: Linear::new("head", 4, 2, &mut rng),
    };
    let inputs: Vec<Tensor> = (0..3).map(|_| random(2, 3, &mut rng)).collect();
    let masks = [
        Rc::new(Tensor::column(&[1.0, 1.0])),
        Rc::new(Tensor::column(&[1.0, 1.0])),
        Rc::new(Tensor::column(&[1.0, 0.0])),
    ];
    let forward = |n: &Net| {
        let mut g = Graph::new();
        let mut s = n.cell.zero_state(&mut g, 2);
        for (x, m) in inputs.iter().zip(&masks) {
            let xv = g.constant(x.clone());
            s = n.cell.masked_step(&mut g, xv, s, m);
        }
        let y = n.head.forward(&mut g, s.h);
        let loss = weighted_sum(&mut g, y, 3);
        (g, loss)
    };
    let (g, loss) = forward(&net);
    let grads = g.backward(loss);
    let analytic: Vec<Tensor> = net
        .cell
        .params()
        .into_iter()
        .chain(net.head.params())
        .map(|p| grads.param(p).unwrap().clone())
        .collect();
    let report = check_gradients(&mut net, all, |n| {
        let (g, l) = forward(n);
        g.value(l).item()
    }, &analytic, 1e-5);
    assert!(report.rel_error < 1e-6, "{report:?}");
}
