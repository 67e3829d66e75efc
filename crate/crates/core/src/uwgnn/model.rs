use std::path::Path;

use super::UwgnnConfig;
use crate::channel::{to_graph, GraphSample, NetworkInstance};
use crate::error::{Error, Result};
use crate::nn::{
    init_tensors, load_params, max_pool, max_pool_backward, save_params, CheckpointMeta, Gradients, Matrix, Mlp,
    MlpTape, ParamSet, ParamTensor, PoolTape,
};
use crate::rng::stream_rng;
use crate::wmmse::{sum_rate, sum_rate_grad};

/// Node features produced by one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Transmit amplitudes in `[0, sqrt(p_max)]`.
    pub v: Vec<f64>,
    /// `n x d_u`
    pub u: Matrix,
    /// `n x d_w`
    pub w: Matrix,
}

impl NodeState {
    /// Layer-0 state: the given amplitudes with zero `u` and `w`.
    pub fn initial(v0: &[f64], d_u: usize, d_w: usize) -> Self {
        Self {
            v: v0.to_vec(),
            u: Matrix::zeros(v0.len(), d_u),
            w: Matrix::zeros(v0.len(), d_w),
        }
    }
}

/// Recorded intermediates of one layer.
#[derive(Debug, Clone)]
pub struct LayerTape {
    set: usize,
    /// Source node of every stage-1 edge (`j` in `h_ij`), grouped by receiver.
    src_u: Vec<usize>,
    /// Other endpoint of every stage-2 edge (`j` in `h_ji`), grouped by transmitter.
    src_v: Vec<usize>,
    mlp: [MlpTape; 5],
    pool_u: PoolTape,
    pool_v: PoolTape,
    state: NodeState,
}

impl LayerTape {
    pub fn state(&self) -> &NodeState {
        &self.state
    }

    /// Parameter set this layer ran with.
    pub fn param_set(&self) -> usize {
        self.set
    }
}

/// The WMMSE-unrolled graph network.
#[derive(Debug, Clone, PartialEq)]
pub struct Uwgnn {
    cfg: UwgnnConfig,
    params: ParamSet,
    /// `mlps[s][m]`: MLP `m + 1` of parameter set `s`.
    mlps: Vec<[Mlp; 5]>,
}

fn tensor_prefix(set: usize, mlp: usize) -> String {
    format!("set{set}.mlp{}.", mlp + 1)
}

fn layout(cfg: &UwgnnConfig) -> Result<Vec<[Mlp; 5]>> {
    let specs = cfg.mlp_specs()?;
    let mut next = 0;
    (0..cfg.param_sets())
        .map(|_| {
            let mut set = Vec::with_capacity(5);
            for spec in &specs {
                set.push(Mlp::new(spec.clone(), next)?);
                next += 2 * spec.depth();
            }
            Ok(set.try_into().expect("five MLPs"))
        })
        .collect()
}

impl Uwgnn {
    /// Freshly initialized network; MLP `m` of set `s` draws from stream `5 s + m`.
    pub fn new(cfg: UwgnnConfig, seed: u64) -> Result<Self> {
        let mlps = layout(&cfg)?;
        let mut tensors = Vec::new();
        for (s, set) in mlps.iter().enumerate() {
            for (m, mlp) in set.iter().enumerate() {
                let mut rng = stream_rng(seed, (5 * s + m) as u64);
                tensors.extend(init_tensors(&mlp.spec, &tensor_prefix(s, m), &mut rng));
            }
        }
        Ok(Self {
            cfg,
            params: ParamSet::new(tensors)?,
            mlps,
        })
    }

    /// Rebuilds a network from stored tensors, checking names and shapes.
    pub fn from_tensors(cfg: UwgnnConfig, tensors: Vec<ParamTensor>) -> Result<Self> {
        let template = Self::new(cfg, 0)?;
        if tensors.len() != template.params.len() {
            return Err(Error::Shape {
                context: "UWGNN tensors",
                expected: template.params.len().to_string(),
                actual: tensors.len().to_string(),
            });
        }
        for (t, want) in tensors.iter().zip(template.params.tensors()) {
            if t.name != want.name || t.shape != want.shape {
                return Err(Error::Shape {
                    context: "UWGNN tensor",
                    expected: format!("{} {:?}", want.name, want.shape),
                    actual: format!("{} {:?}", t.name, t.shape),
                });
            }
        }
        Ok(Self {
            params: ParamSet::new(tensors)?,
            ..template
        })
    }

    pub fn config(&self) -> &UwgnnConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// The MLPs used by layer `k`.
    pub fn layer_mlps(&self, k: usize) -> &[Mlp; 5] {
        &self.mlps[self.cfg.set_for_layer(k)]
    }

    pub fn graph(&self, inst: &NetworkInstance) -> Result<GraphSample> {
        to_graph(inst, self.cfg.d_u, self.cfg.d_w, &full_power(inst))
    }

    fn check_graph(&self, graph: &GraphSample, v: &[f64]) -> Result<()> {
        let n = graph.n_nodes();
        if graph.d_u != self.cfg.d_u || graph.d_w != self.cfg.d_w {
            return Err(Error::Shape {
                context: "graph feature widths",
                expected: format!("d_u={} d_w={}", self.cfg.d_u, self.cfg.d_w),
                actual: format!("d_u={} d_w={}", graph.d_u, graph.d_w),
            });
        }
        if v.len() != n {
            return Err(Error::Shape {
                context: "amplitudes",
                expected: n.to_string(),
                actual: v.len().to_string(),
            });
        }
        Ok(())
    }

    /// One unrolled layer with parameter set `set`, consuming amplitudes `v`.
    pub fn layer_forward(&self, graph: &GraphSample, v: &[f64], set: usize) -> Result<LayerTape> {
        self.check_graph(graph, v)?;
        if set >= self.mlps.len() {
            return Err(Error::invalid(format!("parameter set {set} does not exist")));
        }
        let mlps = &self.mlps[set];
        let (n, d_u, d_w, d_msg) = (graph.n_nodes(), self.cfg.d_u, self.cfg.d_w, self.cfg.d_msg);
        let params = &self.params;

        // stage 1: alpha_u,i = max_j MLP1(h_ij, v_j) over interferers j of receiver i
        let mut offsets_u = Vec::with_capacity(n + 1);
        let mut src_u = Vec::new();
        offsets_u.push(0);
        for i in 0..n {
            src_u.extend_from_slice(&graph.in_neighbors[i]);
            offsets_u.push(src_u.len());
        }
        let mut x1 = Matrix::zeros(src_u.len(), mlps[0].spec.input_width());
        let mut e = 0;
        for i in 0..n {
            for &j in &graph.in_neighbors[i] {
                let row = x1.row_mut(e);
                row[0] = graph.edge(i, j);
                row[1] = v[j];
                e += 1;
            }
        }
        let (m1, t1) = mlps[0].forward(params, &x1)?;
        let (alpha_u, pool_u) = max_pool(&m1, &offsets_u)?;

        let mut x2 = Matrix::zeros(n, mlps[1].spec.input_width());
        for i in 0..n {
            let row = x2.row_mut(i);
            row[0] = graph.direct(i);
            row[1] = v[i];
            row[2..2 + d_msg].copy_from_slice(alpha_u.row(i));
        }
        let (u, t2) = mlps[1].forward(params, &x2)?;

        let mut x3 = Matrix::zeros(n, mlps[2].spec.input_width());
        for i in 0..n {
            let row = x3.row_mut(i);
            row[0] = graph.direct(i);
            row[1] = v[i];
            row[2..2 + d_u].copy_from_slice(u.row(i));
        }
        let (w, t3) = mlps[2].forward(params, &x3)?;

        // stage 2: alpha_v,i = max_j MLP4(h_ji, u_j, w_j) over receivers j hit by transmitter i
        let mut offsets_v = Vec::with_capacity(n + 1);
        let mut src_v = Vec::new();
        offsets_v.push(0);
        for i in 0..n {
            src_v.extend_from_slice(&graph.out_neighbors[i]);
            offsets_v.push(src_v.len());
        }
        let mut x4 = Matrix::zeros(src_v.len(), mlps[3].spec.input_width());
        let mut e = 0;
        for i in 0..n {
            for &j in &graph.out_neighbors[i] {
                let row = x4.row_mut(e);
                row[0] = graph.edge(j, i);
                row[1..1 + d_u].copy_from_slice(u.row(j));
                row[1 + d_u..1 + d_u + d_w].copy_from_slice(w.row(j));
                e += 1;
            }
        }
        let (m4, t4) = mlps[3].forward(params, &x4)?;
        let (alpha_v, pool_v) = max_pool(&m4, &offsets_v)?;

        let mut x5 = Matrix::zeros(n, mlps[4].spec.input_width());
        for i in 0..n {
            let row = x5.row_mut(i);
            row[0] = graph.lambda(i);
            row[1] = graph.direct(i);
            row[2..2 + d_u].copy_from_slice(u.row(i));
            row[2 + d_u..2 + d_u + d_w].copy_from_slice(w.row(i));
            row[2 + d_u + d_w..2 + d_u + d_w + d_msg].copy_from_slice(alpha_v.row(i));
        }
        let (s, t5) = mlps[4].forward(params, &x5)?;
        let v_max = graph.p_max.sqrt();
        let v_out = s.data().iter().map(|x| v_max * x).collect();

        Ok(LayerTape {
            set,
            src_u,
            src_v,
            mlp: [t1, t2, t3, t4, t5],
            pool_u,
            pool_v,
            state: NodeState { v: v_out, u, w },
        })
    }

    /// Reverse pass of one layer: adds parameter gradients and returns the
    /// gradient with respect to the layer's input amplitudes.
    fn layer_backward(&self, graph: &GraphSample, tape: &LayerTape, dv_out: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        let mlps = &self.mlps[tape.set];
        let (n, d_u, d_w, d_msg) = (graph.n_nodes(), self.cfg.d_u, self.cfg.d_w, self.cfg.d_msg);
        let params = &self.params;
        let v_max = graph.p_max.sqrt();
        let mut dv_in = vec![0.0; n];

        let ds = Matrix::from_vec(n, 1, dv_out.iter().map(|d| d * v_max).collect())?;
        let dx5 = mlps[4].backward(params, &tape.mlp[4], &ds, grads)?;
        let mut du = Matrix::zeros(n, d_u);
        let mut dw = Matrix::zeros(n, d_w);
        let mut dalpha_v = Matrix::zeros(n, d_msg);
        for i in 0..n {
            let row = dx5.row(i);
            du.row_mut(i).copy_from_slice(&row[2..2 + d_u]);
            dw.row_mut(i).copy_from_slice(&row[2 + d_u..2 + d_u + d_w]);
            dalpha_v.row_mut(i).copy_from_slice(&row[2 + d_u + d_w..2 + d_u + d_w + d_msg]);
        }

        let dm4 = max_pool_backward(&tape.pool_v, &dalpha_v)?;
        let dx4 = mlps[3].backward(params, &tape.mlp[3], &dm4, grads)?;
        for (e, &j) in tape.src_v.iter().enumerate() {
            let row = dx4.row(e);
            for (a, b) in du.row_mut(j).iter_mut().zip(&row[1..1 + d_u]) {
                *a += b;
            }
            for (a, b) in dw.row_mut(j).iter_mut().zip(&row[1 + d_u..1 + d_u + d_w]) {
                *a += b;
            }
        }

        let dx3 = mlps[2].backward(params, &tape.mlp[2], &dw, grads)?;
        for i in 0..n {
            let row = dx3.row(i);
            dv_in[i] += row[1];
            for (a, b) in du.row_mut(i).iter_mut().zip(&row[2..2 + d_u]) {
                *a += b;
            }
        }

        let dx2 = mlps[1].backward(params, &tape.mlp[1], &du, grads)?;
        let mut dalpha_u = Matrix::zeros(n, d_msg);
        for i in 0..n {
            let row = dx2.row(i);
            dv_in[i] += row[1];
            dalpha_u.row_mut(i).copy_from_slice(&row[2..2 + d_msg]);
        }

        let dm1 = max_pool_backward(&tape.pool_u, &dalpha_u)?;
        let dx1 = mlps[0].backward(params, &tape.mlp[0], &dm1, grads)?;
        for (e, &j) in tape.src_u.iter().enumerate() {
            dv_in[j] += dx1.get(e, 1);
        }
        Ok(dv_in)
    }

    fn run(&self, graph: &GraphSample, v0: &[f64]) -> Result<Vec<LayerTape>> {
        self.check_graph(graph, v0)?;
        let v_max = graph.p_max.sqrt();
        if v0.iter().any(|v| !(0.0..=v_max).contains(v)) {
            return Err(Error::invalid(format!("initial amplitudes must lie in [0, {v_max}]")));
        }
        let mut tapes: Vec<LayerTape> = Vec::with_capacity(self.cfg.layers);
        for k in 0..self.cfg.layers {
            let v = tapes.last().map_or(v0, |t| t.state.v.as_slice());
            let tape = self.layer_forward(graph, v, self.cfg.set_for_layer(k))?;
            tapes.push(tape);
        }
        Ok(tapes)
    }

    /// Runs all layers from amplitudes `v0`; returns powers `p_i = v_i^2`
    /// of the last layer and the state after every layer.
    pub fn forward(&self, graph: &GraphSample, v0: &[f64]) -> Result<(Vec<f64>, Vec<NodeState>)> {
        let tapes = self.run(graph, v0)?;
        let v = tapes.last().map_or(v0, |t| t.state.v.as_slice());
        let p = powers(v, graph.p_max);
        Ok((p, tapes.into_iter().map(|t| t.state).collect()))
    }

    /// Forward pass keeping the per-layer tapes.
    pub fn forward_with_tapes(&self, graph: &GraphSample, v0: &[f64]) -> Result<Vec<LayerTape>> {
        self.run(graph, v0)
    }

    /// Power allocation for `inst`, starting from full power.
    pub fn allocate(&self, inst: &NetworkInstance) -> Result<Vec<f64>> {
        let graph = self.graph(inst)?;
        Ok(self.forward(&graph, &full_power(inst))?.0)
    }

    /// Negative weighted sum rate of the network's allocation.
    pub fn loss(&self, inst: &NetworkInstance, graph: &GraphSample, v0: &[f64]) -> Result<f64> {
        let (p, _) = self.forward(graph, v0)?;
        loss(inst, &p)
    }

    /// Loss plus its gradient with respect to every parameter (added into `grads`).
    pub fn loss_and_grad(&self, inst: &NetworkInstance, graph: &GraphSample, v0: &[f64], grads: &mut Gradients) -> Result<f64> {
        let tapes = self.run(graph, v0)?;
        let v = tapes.last().map_or(v0, |t| t.state.v.as_slice());
        let p = powers(v, graph.p_max);
        let value = loss(inst, &p)?;
        let dp = loss_grad(inst, &p)?;
        let mut dv: Vec<f64> = dp.iter().zip(v).map(|(g, x)| 2.0 * x * g).collect();
        for tape in tapes.iter().rev() {
            dv = self.layer_backward(graph, tape, &dv, grads)?;
        }
        Ok(value)
    }

    /// ReLU sign patterns and max-pool winners of a forward pass; the
    /// network is smooth in the parameters wherever this stays constant.
    pub fn activation_signature(&self, graph: &GraphSample, v0: &[f64]) -> Result<Vec<usize>> {
        let mut sig = Vec::new();
        for tape in self.run(graph, v0)? {
            for t in &tape.mlp {
                sig.extend(t.relu_pattern().into_iter().map(usize::from));
            }
            for pool in [&tape.pool_u, &tape.pool_v] {
                sig.extend(pool.winners().iter().map(|w| w.map_or(0, |r| r + 1)));
            }
        }
        Ok(sig)
    }

    pub fn save(&self, path: &Path, mut meta: CheckpointMeta) -> Result<()> {
        meta.model = Some(serde_json::to_value(&self.cfg).map_err(|e| Error::invalid(e.to_string()))?);
        save_params(self.params.tensors(), &meta, path)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let (tensors, meta) = load_params(path)?;
        let model = Self::from_checkpoint(tensors, &meta)?;
        Ok((model, meta))
    }

    pub fn from_checkpoint(tensors: Vec<ParamTensor>, meta: &CheckpointMeta) -> Result<Self> {
        let cfg: UwgnnConfig = match &meta.model {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Parse {
                line: 1,
                message: format!("model config: {e}"),
            })?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "checkpoint has no model config".into(),
                })
            }
        };
        Self::from_tensors(cfg, tensors)
    }
}

fn powers(v: &[f64], p_max: f64) -> Vec<f64> {
    v.iter().map(|x| (x * x).min(p_max)).collect()
}

pub(crate) fn full_power(inst: &NetworkInstance) -> Vec<f64> {
    vec![inst.p_max().sqrt(); inst.n_users()]
}

/// Unsupervised loss: the negative weighted sum rate.
pub fn loss(inst: &NetworkInstance, p: &[f64]) -> Result<f64> {
    Ok(-sum_rate(inst, p)?)
}

/// Gradient of [`loss`] with respect to the powers.
pub fn loss_grad(inst: &NetworkInstance, p: &[f64]) -> Result<Vec<f64>> {
    Ok(sum_rate_grad(inst, p)?.into_iter().map(|g| -g).collect())
}
