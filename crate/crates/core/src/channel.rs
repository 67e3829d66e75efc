//! D2D network instances, their graph view, topology masking and mobility.
//!
//! Channel gains are stored as real magnitudes `|h_ij|`: row `i` is receiver
//! `i`, column `j` is transmitter `j`, so `h(i, i)` is the direct link and
//! `h(i, j)` for `j != i` is the interference caused at receiver `i` by
//! transmitter `j`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{stream_rng, Rng};

/// One D2D scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    n: usize,
    h: Vec<f64>,
    lambda: Vec<f64>,
    sigma2: f64,
    p_max: f64,
}

impl NetworkInstance {
    /// Builds an instance from a row-major `n x n` gain matrix, checking every invariant.
    pub fn new(h: Vec<f64>, lambda: Vec<f64>, sigma2: f64, p_max: f64) -> Result<Self> {
        let n = lambda.len();
        if n == 0 {
            return Err(Error::invalid("network needs at least one user"));
        }
        if h.len() != n * n {
            return Err(Error::Shape {
                context: "channel matrix",
                expected: format!("{n}x{n}"),
                actual: format!("{} entries", h.len()),
            });
        }
        if let Some(bad) = h.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::invalid(format!(
                "channel gains must be finite and nonnegative, found {bad}"
            )));
        }
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("rate weights must be finite and nonnegative"));
        }
        if !lambda.iter().any(|l| *l > 0.0) {
            return Err(Error::invalid("at least one rate weight must be positive"));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::invalid(format!("noise power must be positive, got {sigma2}")));
        }
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::invalid(format!("p_max must be positive, got {p_max}")));
        }
        Ok(Self {
            n,
            h,
            lambda,
            sigma2,
            p_max,
        })
    }

    /// Builds an instance from nested rows (`rows[i][j] = h_ij`).
    pub fn from_rows(rows: &[Vec<f64>], lambda: Vec<f64>, sigma2: f64, p_max: f64) -> Result<Self> {
        let n = lambda.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape {
                context: "channel rows",
                expected: format!("{n} rows of {n}"),
                actual: format!("{} rows", rows.len()),
            });
        }
        Self::new(rows.concat(), lambda, sigma2, p_max)
    }

    pub fn n_users(&self) -> usize {
        self.n
    }

    /// Gain from transmitter `j` to receiver `i`.
    #[inline]
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.n + j]
    }

    /// Row-major gain matrix.
    pub fn gains(&self) -> &[f64] {
        &self.h
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.h.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    /// Same channels, different rate weights.
    pub fn with_lambda(&self, lambda: Vec<f64>) -> Result<Self> {
        Self::new(self.h.clone(), lambda, self.sigma2, self.p_max)
    }

    /// Relabels users: user `k` of the result is user `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let n = self.n;
        let mut h = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                h[a * n + b] = self.h(perm[a], perm[b]);
            }
        }
        let lambda = perm.iter().map(|&k| self.lambda[k]).collect();
        Self::new(h, lambda, self.sigma2, self.p_max)
    }

    fn with_gains(&self, h: Vec<f64>) -> Self {
        debug_assert_eq!(h.len(), self.h.len());
        Self { h, ..self.clone() }
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::invalid("permutation length differs from user count"));
    }
    for &k in perm {
        if k >= n || seen[k] {
            return Err(Error::invalid("not a permutation"));
        }
        seen[k] = true;
    }
    Ok(())
}

/// How rate weights are assigned to generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// All weights equal to one.
    #[default]
    Unit,
    /// Independent `U(0, 1)` weights.
    Uniform,
}

/// Parameters of the channel generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Per-component mean of the complex Gaussian (0 gives Rayleigh magnitudes).
    pub mean: f64,
    /// Per-component standard deviation.
    pub std: f64,
    pub sigma2: f64,
    pub p_max: f64,
    pub weights: WeightMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            sigma2: 1.0,
            p_max: 1.0,
            weights: WeightMode::Unit,
        }
    }
}

impl ChannelConfig {
    pub fn rayleigh(std: f64) -> Self {
        Self {
            std,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std.is_finite() && self.std > 0.0) {
            return Err(Error::invalid(format!("channel std must be positive, got {}", self.std)));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("channel mean must be finite"));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0 && self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::invalid("noise power and p_max must be positive"));
        }
        Ok(())
    }

    /// Draws one instance from `rng`.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<NetworkInstance> {
        if n == 0 {
            return Err(Error::invalid("network needs at least one user"));
        }
        self.validate()?;
        let component = Normal::new(self.mean, self.std)
            .map_err(|e| Error::invalid(format!("channel distribution: {e}")))?;
        let h = (0..n * n)
            .map(|_| {
                let re: f64 = component.sample(rng);
                let im: f64 = component.sample(rng);
                re.hypot(im)
            })
            .collect();
        let lambda = match self.weights {
            WeightMode::Unit => vec![1.0; n],
            WeightMode::Uniform => {
                let mut l: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                if l.iter().all(|x| *x == 0.0) {
                    l[0] = f64::MIN_POSITIVE;
                }
                l
            }
        };
        NetworkInstance::new(h, lambda, self.sigma2, self.p_max)
    }

    /// One instance from its own seeded stream.
    pub fn generate(&self, n: usize, seed: u64) -> Result<NetworkInstance> {
        self.sample(n, &mut stream_rng(seed, 0))
    }

    /// `count` instances; instance `k` comes from stream `k` of `seed`.
    pub fn generate_many(&self, n: usize, count: usize, seed: u64) -> Result<Vec<NetworkInstance>> {
        (0..count)
            .into_par_iter()
            .map(|k| self.sample(n, &mut stream_rng(seed, k as u64)))
            .collect()
    }
}

/// Rayleigh/Rician instance with unit weights, `sigma2 = 1` and `p_max = 1`.
pub fn generate_rayleigh(n: usize, mean: f64, std: f64, seed: u64) -> Result<NetworkInstance> {
    ChannelConfig {
        mean,
        std,
        ..ChannelConfig::default()
    }
    .generate(n, seed)
}

/// Directed-graph view of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    /// Node features `[lambda, h_ii, v, u (d_u), w (d_w)]`, one row per user.
    pub z: Matrix,
    /// Edge features: `a[i*n + j] = h_ij` for kept edges, zero on the diagonal.
    pub a: Vec<f64>,
    /// `in_neighbors[i]`: transmitters `j` interfering at receiver `i` (ascending).
    pub in_neighbors: Vec<Vec<usize>>,
    /// `out_neighbors[i]`: receivers `j` that transmitter `i` interferes with (ascending).
    pub out_neighbors: Vec<Vec<usize>>,
    pub d_u: usize,
    pub d_w: usize,
    pub p_max: f64,
}

pub const Z_LAMBDA: usize = 0;
pub const Z_DIRECT: usize = 1;
pub const Z_POWER: usize = 2;

impl GraphSample {
    pub fn n_nodes(&self) -> usize {
        self.z.rows()
    }

    #[inline]
    pub fn edge(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n_nodes() + j]
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.z.get(i, Z_LAMBDA)
    }

    pub fn direct(&self, i: usize) -> f64 {
        self.z.get(i, Z_DIRECT)
    }

    /// Reassembles the channel matrix from the direct-link feature and `A`.
    pub fn channel_matrix(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut h = self.a.clone();
        for i in 0..n {
            h[i * n + i] = self.direct(i);
        }
        h
    }
}

/// Builds the graph view with `v_init` as the power feature and zero `u`, `w`.
pub fn to_graph(inst: &NetworkInstance, d_u: usize, d_w: usize, v_init: &[f64]) -> Result<GraphSample> {
    let n = inst.n_users();
    if v_init.len() != n {
        return Err(Error::Shape {
            context: "initial amplitudes",
            expected: n.to_string(),
            actual: v_init.len().to_string(),
        });
    }
    let v_max = inst.p_max().sqrt();
    if v_init.iter().any(|v| !(0.0..=v_max).contains(v)) {
        return Err(Error::invalid(format!("initial amplitudes must lie in [0, {v_max}]")));
    }
    let d_z = 3 + d_u + d_w;
    let mut z = Matrix::zeros(n, d_z);
    let mut a = vec![0.0; n * n];
    let mut in_neighbors = vec![Vec::new(); n];
    let mut out_neighbors = vec![Vec::new(); n];
    for i in 0..n {
        z.set(i, Z_LAMBDA, inst.lambda()[i]);
        z.set(i, Z_DIRECT, inst.h(i, i));
        z.set(i, Z_POWER, v_init[i]);
        for j in 0..n {
            if j != i {
                a[i * n + j] = inst.h(i, j);
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if j != i && a[i * n + j] != 0.0 {
                in_neighbors[i].push(j);
                out_neighbors[j].push(i);
            }
        }
    }
    Ok(GraphSample {
        z,
        a,
        in_neighbors,
        out_neighbors,
        d_u,
        d_w,
        p_max: inst.p_max(),
    })
}

/// Removes interference edges whose standard-normal score falls below `eta_lc`.
///
/// Scores are drawn for every ordered pair in row-major order (diagonal
/// included, then ignored), so a fixed seed gives the same scores for every
/// threshold.
pub fn mask_topology(inst: &NetworkInstance, eta_lc: f64, seed: u64) -> NetworkInstance {
    let n = inst.n_users();
    let mut rng = stream_rng(seed, 0);
    let mut h = inst.gains().to_vec();
    for i in 0..n {
        for j in 0..n {
            let c: f64 = StandardNormal.sample(&mut rng);
            if i != j && c < eta_lc {
                h[i * n + j] = 0.0;
            }
        }
    }
    inst.with_gains(h)
}

/// Transmitter/receiver coordinates in meters plus the receivers' per-step speed.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryState {
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
    pub speed: f64,
}

pub const AREA_SIDE: f64 = 1000.0;

impl GeometryState {
    /// Transmitters uniform over the square; each receiver at a `U(30, 90)` m
    /// distance from its transmitter, redrawing the bearing until it lands
    /// inside the square.
    pub fn sample(n: usize, speed: f64, rng: &mut Rng) -> Result<Self> {
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(Error::invalid(format!("speed must be nonnegative, got {speed}")));
        }
        let mut tx = Vec::with_capacity(n);
        let mut rx = Vec::with_capacity(n);
        for _ in 0..n {
            let t = [rng.random_range(0.0..=AREA_SIDE), rng.random_range(0.0..=AREA_SIDE)];
            let d = rng.random_range(30.0..=90.0);
            let r = loop {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let r = [t[0] + d * phi.cos(), t[1] + d * phi.sin()];
                if (0.0..=AREA_SIDE).contains(&r[0]) && (0.0..=AREA_SIDE).contains(&r[1]) {
                    break r;
                }
            };
            tx.push(t);
            rx.push(r);
        }
        Ok(Self { tx, rx, speed })
    }

    pub fn n_users(&self) -> usize {
        self.tx.len()
    }

    /// Distance from transmitter `j` to receiver `i`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (r, t) = (self.rx[i], self.tx[j]);
        (r[0] - t[0]).hypot(r[1] - t[1])
    }
}

/// Distance-based gain rescaling used by the mobility model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossModel {
    /// Power pathloss exponent; magnitudes scale with `d^(-alpha/2)`.
    pub alpha: f64,
    /// Links longer than this are cut (gain set to zero).
    pub max_distance: f64,
    /// Distances are floored here before forming ratios.
    pub min_distance: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            max_distance: 1000.0,
            min_distance: 1.0,
        }
    }
}

/// Rescales gains for receivers that moved from `old` to `new`.
pub fn rescale_channels(
    inst: &NetworkInstance,
    old: &GeometryState,
    new: &GeometryState,
    model: &PathlossModel,
) -> Result<NetworkInstance> {
    let n = inst.n_users();
    if old.n_users() != n || new.n_users() != n {
        return Err(Error::Shape {
            context: "geometry",
            expected: n.to_string(),
            actual: format!("{}/{}", old.n_users(), new.n_users()),
        });
    }
    let mut h = inst.gains().to_vec();
    for i in 0..n {
        for j in 0..n {
            let d_new = new.distance(i, j);
            let g = &mut h[i * n + j];
            if d_new > model.max_distance {
                *g = 0.0;
            } else {
                let d_old = old.distance(i, j).max(model.min_distance);
                let ratio = d_old / d_new.max(model.min_distance);
                if ratio != 1.0 {
                    *g *= ratio.powf(model.alpha / 2.0);
                }
            }
        }
    }
    Ok(inst.with_gains(h))
}

/// One mobility step: every receiver moves by an isotropic Gaussian with
/// per-axis standard deviation equal to the speed, then gains are rescaled.
pub fn step_mobility(
    geo: &GeometryState,
    inst: &NetworkInstance,
    seed: u64,
) -> Result<(GeometryState, NetworkInstance)> {
    step_mobility_with(geo, inst, seed, &PathlossModel::default())
}

pub fn step_mobility_with(
    geo: &GeometryState,
    inst: &NetworkInstance,
    seed: u64,
    model: &PathlossModel,
) -> Result<(GeometryState, NetworkInstance)> {
    if !(geo.speed.is_finite() && geo.speed >= 0.0) {
        return Err(Error::invalid(format!("speed must be nonnegative, got {}", geo.speed)));
    }
    if geo.speed == 0.0 {
        return Ok((geo.clone(), inst.clone()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut next = geo.clone();
    for r in &mut next.rx {
        let dx: f64 = StandardNormal.sample(&mut rng);
        let dy: f64 = StandardNormal.sample(&mut rng);
        r[0] += geo.speed * dx;
        r[1] += geo.speed * dy;
    }
    let inst = rescale_channels(inst, geo, &next, model)?;
    Ok((next, inst))
}
