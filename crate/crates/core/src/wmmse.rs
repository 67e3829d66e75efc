//! Weighted sum-rate evaluation and the WMMSE block-coordinate-descent solver.
//!
//! The solver works on transmit amplitudes `v_i = sqrt(p_i)` and cycles
//! through three closed-form block updates:
//!
//! ```text
//! u_i = h_ii v_i / (sigma^2 + sum_j h_ij^2 v_j^2)
//! w_i = 1 / (1 - u_i h_ii v_i)
//! v_i = lambda_i u_i h_ii w_i / sum_j lambda_j h_ji^2 u_j^2 w_j     (projected onto [0, sqrt(p_max)])
//! ```
//!
//! Each update exactly minimizes the weighted sum-MSE cost
//! `sum_i lambda_i (w_i e_i - ln w_i)` over its block, so the cost never
//! increases from one round to the next.

use rand::Rng as _;

use crate::channel::NetworkInstance;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Floor applied to the denominators of the three updates.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

fn check_len(what: &'static str, got: usize, n: usize) -> Result<()> {
    if got != n {
        return Err(Error::Shape {
            context: what,
            expected: n.to_string(),
            actual: got.to_string(),
        });
    }
    Ok(())
}

fn check_powers(inst: &NetworkInstance, p: &[f64]) -> Result<()> {
    check_len("power vector", p.len(), inst.n_users())?;
    if let Some((i, bad)) = p.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::invalid(format!("power of user {i} must be finite and nonnegative, got {bad}")));
    }
    Ok(())
}

/// Interference-plus-noise seen by each receiver.
fn interference(inst: &NetworkInstance, p: &[f64]) -> Vec<f64> {
    let n = inst.n_users();
    (0..n)
        .map(|i| {
            let mut acc = inst.sigma2();
            for (j, pj) in p.iter().enumerate() {
                if j != i {
                    let g = inst.h(i, j);
                    acc += g * g * pj;
                }
            }
            acc
        })
        .collect()
}

/// Per-user weighted rates `lambda_i log2(1 + SINR_i)` in bits per channel use.
pub fn user_rates(inst: &NetworkInstance, p: &[f64]) -> Result<Vec<f64>> {
    check_powers(inst, p)?;
    let den = interference(inst, p);
    Ok((0..inst.n_users())
        .map(|i| {
            let g = inst.h(i, i);
            inst.lambda()[i] * (g * g * p[i] / den[i]).ln_1p() / std::f64::consts::LN_2
        })
        .collect())
}

/// Weighted sum rate `sum_i lambda_i log2(1 + SINR_i)`.
pub fn sum_rate(inst: &NetworkInstance, p: &[f64]) -> Result<f64> {
    Ok(user_rates(inst, p)?.iter().sum())
}

/// Gradient of [`sum_rate`] with respect to the power vector.
pub fn sum_rate_grad(inst: &NetworkInstance, p: &[f64]) -> Result<Vec<f64>> {
    check_powers(inst, p)?;
    let n = inst.n_users();
    let noise_int = interference(inst, p);
    let total: Vec<f64> = (0..n)
        .map(|i| {
            let g = inst.h(i, i);
            noise_int[i] + g * g * p[i]
        })
        .collect();
    let lam = inst.lambda();
    let mut grad = vec![0.0; n];
    for (k, gk) in grad.iter_mut().enumerate() {
        let d = inst.h(k, k);
        let mut acc = lam[k] * d * d / total[k];
        for i in 0..n {
            if i != k {
                let g = inst.h(i, k);
                acc += lam[i] * g * g * (1.0 / total[i] - 1.0 / noise_int[i]);
            }
        }
        *gk = acc / std::f64::consts::LN_2;
    }
    Ok(grad)
}

/// Per-user mean squared error
/// `e_i = (1 - u_i h_ii v_i)^2 + sum_{j != i} (u_i h_ij v_j)^2 + sigma^2 u_i^2`.
pub fn mse(inst: &NetworkInstance, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = inst.n_users();
    check_len("receive equalizers", u.len(), n)?;
    check_len("amplitudes", v.len(), n)?;
    Ok((0..n)
        .map(|i| {
            let mut e = (1.0 - u[i] * inst.h(i, i) * v[i]).powi(2) + inst.sigma2() * u[i] * u[i];
            for (j, vj) in v.iter().enumerate() {
                if j != i {
                    e += (u[i] * inst.h(i, j) * vj).powi(2);
                }
            }
            e
        })
        .collect())
}

/// Iterates of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Completed `(u, w, v)` rounds.
    pub iteration: usize,
    /// Weighted sum-MSE cost after each round.
    pub cost_trace: Vec<f64>,
    /// Whether any v-update so far had to be projected onto the power box.
    pub clipped: bool,
}

impl WmmseState {
    pub fn new(inst: &NetworkInstance, v0: &[f64]) -> Result<Self> {
        let n = inst.n_users();
        check_len("initial amplitudes", v0.len(), n)?;
        let v_max = inst.p_max().sqrt();
        if v0.iter().any(|v| !(0.0..=v_max).contains(v)) {
            return Err(Error::invalid(format!("initial amplitudes must lie in [0, {v_max}]")));
        }
        Ok(Self {
            u: vec![0.0; n],
            v: v0.to_vec(),
            w: vec![1.0; n],
            iteration: 0,
            cost_trace: Vec::new(),
            clipped: false,
        })
    }

    /// Transmit powers `p_i = v_i^2`; amplitudes at the upper bound map to `p_max` exactly.
    pub fn powers(&self, p_max: f64) -> Vec<f64> {
        amplitudes_to_powers(&self.v, p_max)
    }
}

pub fn amplitudes_to_powers(v: &[f64], p_max: f64) -> Vec<f64> {
    let v_max = p_max.sqrt();
    v.iter().map(|&x| if x >= v_max { p_max } else { x * x }).collect()
}

/// Receive-equalizer update from the amplitudes in `state.v`.
pub fn update_u(inst: &NetworkInstance, state: &WmmseState) -> Vec<f64> {
    let n = inst.n_users();
    let v = &state.v;
    (0..n)
        .map(|i| {
            let mut den = inst.sigma2();
            for (j, vj) in v.iter().enumerate() {
                let g = inst.h(i, j);
                den += g * g * vj * vj;
            }
            inst.h(i, i) * v[i] / den.max(DENOMINATOR_FLOOR)
        })
        .collect()
}

/// MSE-weight update from `state.u` and the amplitudes `state.v` that produced it.
pub fn update_w(inst: &NetworkInstance, state: &WmmseState) -> Vec<f64> {
    (0..inst.n_users())
        .map(|i| 1.0 / (1.0 - state.u[i] * inst.h(i, i) * state.v[i]).max(DENOMINATOR_FLOOR))
        .collect()
}

/// Unconstrained amplitude update from `state.u` and `state.w`.
pub fn update_v_unclipped(inst: &NetworkInstance, state: &WmmseState) -> Vec<f64> {
    let n = inst.n_users();
    let lam = inst.lambda();
    (0..n)
        .map(|i| {
            let mut den = 0.0;
            for j in 0..n {
                let g = inst.h(j, i);
                den += lam[j] * g * g * state.u[j] * state.u[j] * state.w[j];
            }
            lam[i] * state.u[i] * inst.h(i, i) * state.w[i] / den.max(DENOMINATOR_FLOOR)
        })
        .collect()
}

/// Amplitude update projected onto `[0, sqrt(p_max)]`.
pub fn update_v(inst: &NetworkInstance, state: &WmmseState) -> Vec<f64> {
    let v_max = inst.p_max().sqrt();
    update_v_unclipped(inst, state).into_iter().map(|v| v.clamp(0.0, v_max)).collect()
}

/// Weighted sum-MSE cost `sum_i lambda_i (w_i e_i - ln w_i)` of the current iterates.
pub fn wmmse_cost(inst: &NetworkInstance, state: &WmmseState) -> Result<f64> {
    let e = mse(inst, &state.u, &state.v)?;
    Ok(inst
        .lambda()
        .iter()
        .zip(&state.w)
        .zip(&e)
        .map(|((l, w), e)| l * (w * e - w.ln()))
        .sum())
}

/// Stopping rule for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop once consecutive round costs differ by at most this much.
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-5,
        }
    }
}

/// Runs WMMSE from amplitudes `v0` and returns the powers with the final state.
pub fn solve(inst: &NetworkInstance, opts: &SolveOptions, v0: &[f64]) -> Result<(Vec<f64>, WmmseState)> {
    if opts.max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let mut state = WmmseState::new(inst, v0)?;
    let v_max = inst.p_max().sqrt();
    for k in 1..=opts.max_iter {
        state.u = update_u(inst, &state);
        state.w = update_w(inst, &state);
        let raw = update_v_unclipped(inst, &state);
        state.clipped |= raw.iter().any(|v| *v > v_max || *v < 0.0);
        state.v = raw.into_iter().map(|v| v.clamp(0.0, v_max)).collect();
        state.iteration = k;
        let cost = wmmse_cost(inst, &state)?;
        let finite = |x: &[f64]| x.iter().all(|v| v.is_finite());
        if !(cost.is_finite() && finite(&state.u) && finite(&state.w) && finite(&state.v)) {
            return Err(Error::Solver { iteration: k });
        }
        let converged = state
            .cost_trace
            .last()
            .is_some_and(|prev| (cost - prev).abs() <= opts.tol);
        state.cost_trace.push(cost);
        if converged {
            break;
        }
    }
    Ok((state.powers(inst.p_max()), state))
}

/// The single-run baseline: WMMSE started from full power.
pub fn solve_full_power(inst: &NetworkInstance, opts: &SolveOptions) -> Result<(Vec<f64>, WmmseState)> {
    solve(inst, opts, &vec![inst.p_max().sqrt(); inst.n_users()])
}

/// Best of `restarts` WMMSE runs. Run 0 starts from full power; run `r >= 1`
/// starts from amplitudes drawn uniformly in `[0, sqrt(p_max)]` from stream
/// `r` of `seed`, so adding restarts never lowers the result.
pub fn solve_best_of(inst: &NetworkInstance, restarts: usize, seed: u64, opts: &SolveOptions) -> Result<(Vec<f64>, f64)> {
    if restarts == 0 {
        return Err(Error::invalid("at least one restart is required"));
    }
    let v_max = inst.p_max().sqrt();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..restarts {
        let v0: Vec<f64> = if r == 0 {
            vec![v_max; inst.n_users()]
        } else {
            let mut rng = stream_rng(seed, r as u64);
            (0..inst.n_users()).map(|_| v_max * rng.random::<f64>()).collect()
        };
        let (p, _) = solve(inst, opts, &v0)?;
        let rate = sum_rate(inst, &p)?;
        if best.as_ref().is_none_or(|(_, b)| rate > *b) {
            best = Some((p, rate));
        }
    }
    Ok(best.expect("restarts >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_rayleigh;

    fn single(h: f64, sigma2: f64, lambda: f64) -> NetworkInstance {
        NetworkInstance::new(vec![h], vec![lambda], sigma2, 1.0).unwrap()
    }

    fn pair() -> NetworkInstance {
        NetworkInstance::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]], vec![1.0, 1.0], 0.1, 1.0).unwrap()
    }

    #[test]
    fn sum_rate_examples() {
        assert_eq!(sum_rate(&single(1.0, 1.0, 1.0), &[1.0]).unwrap(), 1.0);
        // SINR = 1 / (0.25 + 0.1)
        let expected = 2.0 * (1.0 + 1.0 / 0.35f64).log2();
        let got = sum_rate(&pair(), &[1.0, 1.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 3.8950).abs() < 1e-4);
        assert_eq!(sum_rate(&pair(), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn negative_power_is_rejected() {
        assert!(sum_rate(&pair(), &[1.0, -0.1]).is_err());
        assert!(sum_rate(&pair(), &[1.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        let inst = generate_rayleigh(4, 0.0, 1.0, 3).unwrap();
        let e = mse(&inst, &[0.0; 4], &[0.3, 0.2, 0.9, 1.0]).unwrap();
        assert!(e.iter().all(|x| *x == 1.0));
        let e = mse(&single(1.0, 1.0, 1.0), &[0.5], &[1.0]).unwrap();
        assert_eq!(e, vec![0.5]);
    }

    #[test]
    fn mmse_identity_at_u_update() {
        let inst = generate_rayleigh(6, 0.0, 1.0, 5).unwrap();
        let mut st = WmmseState::new(&inst, &[0.3, 0.9, 1.0, 0.1, 0.5, 0.7]).unwrap();
        st.u = update_u(&inst, &st);
        let e = mse(&inst, &st.u, &st.v).unwrap();
        for i in 0..6 {
            let identity = 1.0 - st.u[i] * inst.h(i, i) * st.v[i];
            assert!((e[i] - identity).abs() < 1e-12, "{} vs {identity}", e[i]);
        }
    }

    #[test]
    fn single_user_updates_by_hand() {
        let inst = single(1.0, 1.0, 1.0);
        let mut st = WmmseState::new(&inst, &[1.0]).unwrap();
        st.u = update_u(&inst, &st);
        assert_eq!(st.u, vec![0.5]);
        st.w = update_w(&inst, &st);
        assert_eq!(st.w, vec![2.0]);
        assert_eq!(update_v_unclipped(&inst, &st), vec![2.0]);
        assert_eq!(update_v(&inst, &st), vec![1.0]);
    }

    #[test]
    fn zero_power_is_a_guarded_fixed_point() {
        let inst = generate_rayleigh(3, 0.0, 1.0, 1).unwrap();
        let mut st = WmmseState::new(&inst, &[0.0; 3]).unwrap();
        st.u = update_u(&inst, &st);
        assert_eq!(st.u, vec![0.0; 3]);
        st.w = update_w(&inst, &st);
        assert_eq!(st.w, vec![1.0; 3]);
        assert_eq!(update_v_unclipped(&inst, &st), vec![0.0; 3]);
    }

    #[test]
    fn single_user_solves_to_full_power() {
        for seed in 0..20 {
            let inst = generate_rayleigh(1, 0.0, 1.0, seed).unwrap();
            let (p, st) = solve_full_power(&inst, &SolveOptions::default()).unwrap();
            assert_eq!(p, vec![inst.p_max()]);
            assert!(st.iteration >= 2);
        }
    }

    #[test]
    fn iterates_stay_feasible_and_weights_exceed_one() {
        let inst = generate_rayleigh(8, 0.0, 1.0, 12).unwrap();
        let mut st = WmmseState::new(&inst, &[1.0; 8]).unwrap();
        for _ in 0..30 {
            st.u = update_u(&inst, &st);
            st.w = update_w(&inst, &st);
            assert!(st.w.iter().all(|w| *w >= 1.0));
            st.v = update_v(&inst, &st);
            assert!(st.v.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn best_of_one_is_full_power_solve() {
        let inst = generate_rayleigh(5, 0.0, 1.0, 4).unwrap();
        let opts = SolveOptions::default();
        let (p1, rate) = solve_best_of(&inst, 1, 99, &opts).unwrap();
        let (p2, _) = solve_full_power(&inst, &opts).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(rate, sum_rate(&inst, &p2).unwrap());
    }

    #[test]
    fn best_of_is_monotone_in_restarts() {
        let inst = generate_rayleigh(6, 0.0, 1.0, 8).unwrap();
        let opts = SolveOptions::default();
        let mut last = f64::NEG_INFINITY;
        for r in [1, 2, 5, 10, 20] {
            let (_, rate) = solve_best_of(&inst, r, 3, &opts).unwrap();
            assert!(rate >= last);
            last = rate;
        }
    }

    #[test]
    fn common_gain_and_noise_scaling_keeps_solution() {
        // SINR is unchanged when every h and sigma are scaled by c
        let inst = generate_rayleigh(5, 0.0, 1.0, 21).unwrap();
        let opts = SolveOptions::default();
        let (p, _) = solve_full_power(&inst, &opts).unwrap();
        for c in [0.5, 3.0] {
            let scaled = NetworkInstance::new(
                inst.gains().iter().map(|g| g * c).collect(),
                inst.lambda().to_vec(),
                inst.sigma2() * c * c,
                inst.p_max(),
            )
            .unwrap();
            let (q, _) = solve_full_power(&scaled, &opts).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            let r1 = sum_rate(&inst, &p).unwrap();
            let r2 = sum_rate(&scaled, &q).unwrap();
            assert!((r1 - r2).abs() < 1e-9);
        }
    }

    #[test]
    fn rate_gradient_matches_central_differences() {
        let inst = generate_rayleigh(4, 0.0, 1.0, 2)
            .unwrap()
            .with_lambda(vec![0.3, 1.0, 0.7, 0.1])
            .unwrap();
        let p = [0.2, 0.9, 0.5, 0.05];
        let g = sum_rate_grad(&inst, &p).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut a = p;
            let mut b = p;
            a[k] += h;
            b[k] -= h;
            let fd = (sum_rate(&inst, &a).unwrap() - sum_rate(&inst, &b).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn rejects_infeasible_start() {
        let inst = pair();
        assert!(solve(&inst, &SolveOptions::default(), &[1.5, 0.0]).is_err());
        assert!(solve(&inst, &SolveOptions { max_iter: 0, tol: 1e-5 }, &[1.0, 1.0]).is_err());
    }
}
