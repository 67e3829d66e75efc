#![allow(dead_code)]

use uwgnn_core::channel::NetworkInstance;
use uwgnn_core::uwgnn::Uwgnn;

/// Best sum rate over a `points x points` grid of powers in `[0, p_max]^2`,
/// computed straight from the SINR definition.
pub fn grid_max_two_users(inst: &NetworkInstance, points: usize) -> f64 {
    assert_eq!(inst.n_users(), 2);
    let pm = inst.p_max();
    let s2 = inst.sigma2();
    let l = inst.lambda();
    let g = |i: usize, j: usize| inst.h(i, j) * inst.h(i, j);
    let mut best = f64::NEG_INFINITY;
    for a in 0..points {
        for b in 0..points {
            let p0 = pm * a as f64 / (points - 1) as f64;
            let p1 = pm * b as f64 / (points - 1) as f64;
            let r0 = (1.0 + g(0, 0) * p0 / (g(0, 1) * p1 + s2)).log2();
            let r1 = (1.0 + g(1, 1) * p1 / (g(1, 0) * p0 + s2)).log2();
            let r = l[0] * r0 + l[1] * r1;
            if r > best {
                best = r;
            }
        }
    }
    best
}

/// Central-difference check of `m.loss_and_grad` over every parameter.
///
/// Coordinates whose perturbation flips a ReLU sign or a max-pool winner are
/// skipped. Returns the worst relative error and the number of skipped
/// coordinates.
pub fn uwgnn_fd_check(m: &mut Uwgnn, inst: &NetworkInstance, h: f64) -> (f64, usize, usize) {
    let graph = m.graph(inst).unwrap();
    let v0 = vec![inst.p_max().sqrt(); inst.n_users()];
    let mut grads = m.params().zero_gradients();
    m.loss_and_grad(inst, &graph, &v0, &mut grads).unwrap();
    let analytic = grads.flat();
    let sig0 = m.activation_signature(&graph, &v0).unwrap();
    let (mut worst, mut skipped, mut idx) = (0.0f64, 0, 0);
    for t in 0..m.params().len() {
        for k in 0..m.params().tensor(t).len() {
            let orig = m.params().tensor(t).values[k];
            m.params_mut().tensors_mut()[t].values[k] = orig + h;
            let up = m.loss(inst, &graph, &v0).unwrap();
            let sig_up = m.activation_signature(&graph, &v0).unwrap();
            m.params_mut().tensors_mut()[t].values[k] = orig - h;
            let down = m.loss(inst, &graph, &v0).unwrap();
            let sig_down = m.activation_signature(&graph, &v0).unwrap();
            m.params_mut().tensors_mut()[t].values[k] = orig;
            if sig_up != sig0 || sig_down != sig0 {
                skipped += 1;
            } else {
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5);
                worst = worst.max(rel);
            }
            idx += 1;
        }
    }
    (worst, skipped, idx)
}
