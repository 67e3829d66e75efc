use serde::{Deserialize, Serialize};

use super::{sigmoid, Gradients, Matrix, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// `max(z, 0.01 z)`
    LeakyRelu,
    Tanh,
    None,
}

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    None,
    Sigmoid,
}

/// Layer widths and activations of a fully connected network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub final_activation: FinalActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, final_activation: FinalActivation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation,
            final_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output sizes"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::invalid("MLP layer sizes must be positive"));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// An MLP whose weights live in a [`ParamSet`], starting at tensor `first`
/// (`weight0, bias0, weight1, bias1, ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub first: usize,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    generation: u64,
    first: usize,
    /// Input of every affine layer; `inputs[0]` is the network input.
    inputs: Vec<Matrix>,
    /// Pre-activations of every affine layer.
    pre: Vec<Matrix>,
    output: Matrix,
}

impl MlpTape {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// Sign pattern of every hidden ReLU; identical patterns mean the
    /// network is smooth between two parameter points.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|m| m.data().iter().map(|z| *z > 0.0))
            .collect()
    }
}

impl Mlp {
    pub fn new(spec: MlpSpec, first: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, first })
    }

    fn check_params(&self, params: &ParamSet) -> Result<()> {
        for (l, w) in self.spec.layer_sizes.windows(2).enumerate() {
            let idx = self.first + 2 * l;
            if idx + 1 >= params.len() {
                return Err(Error::Shape {
                    context: "MLP parameters",
                    expected: format!("tensor {}", idx + 1),
                    actual: format!("{} tensors", params.len()),
                });
            }
            let (wt, bt) = (params.tensor(idx), params.tensor(idx + 1));
            if wt.shape != [w[0], w[1]] || bt.shape != [w[1]] {
                return Err(Error::Shape {
                    context: "MLP parameters",
                    expected: format!("[{}, {}] and [{}]", w[0], w[1], w[1]),
                    actual: format!("{:?} and {:?}", wt.shape, bt.shape),
                });
            }
        }
        Ok(())
    }

    fn hidden_act(&self, z: f64) -> f64 {
        match self.spec.activation {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => z.max(LEAKY_SLOPE * z),
            Activation::Tanh => z.tanh(),
            Activation::None => z,
        }
    }

    /// Batched forward pass; row `r` of the output depends on row `r` of `x` only.
    pub fn forward(&self, params: &ParamSet, x: &Matrix) -> Result<(Matrix, MlpTape)> {
        if x.cols() != self.spec.input_width() {
            return Err(Error::Shape {
                context: "MLP input",
                expected: self.spec.input_width().to_string(),
                actual: x.cols().to_string(),
            });
        }
        self.check_params(params)?;
        let depth = self.spec.depth();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut cur = x.clone();
        for l in 0..depth {
            let w = &params.tensor(self.first + 2 * l).values;
            let b = &params.tensor(self.first + 2 * l + 1).values;
            let (d_in, d_out) = (self.spec.layer_sizes[l], self.spec.layer_sizes[l + 1]);
            let mut z = Matrix::zeros(cur.rows(), d_out);
            for r in 0..cur.rows() {
                let out = z.row_mut(r);
                out.copy_from_slice(b);
                for (k, &xk) in cur.row(r).iter().enumerate() {
                    if xk == 0.0 {
                        continue;
                    }
                    let wk = &w[k * d_out..(k + 1) * d_out];
                    for (o, wv) in out.iter_mut().zip(wk) {
                        *o += xk * wv;
                    }
                }
            }
            debug_assert_eq!(d_in, cur.cols());
            let last = l + 1 == depth;
            let mut a = z.clone();
            for v in a.data_mut() {
                *v = if last {
                    match self.spec.final_activation {
                        FinalActivation::None => *v,
                        FinalActivation::Sigmoid => sigmoid(*v),
                    }
                } else {
                    self.hidden_act(*v)
                };
            }
            inputs.push(cur);
            pre.push(z);
            cur = a;
        }
        let tape = MlpTape {
            generation: params.generation(),
            first: self.first,
            inputs,
            pre,
            output: cur.clone(),
        };
        Ok((cur, tape))
    }

    /// Reverse pass: adds parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, params: &ParamSet, tape: &MlpTape, upstream: &Matrix, grads: &mut Gradients) -> Result<Matrix> {
        if tape.generation != params.generation() || tape.first != self.first {
            return Err(Error::StaleTape {
                recorded: tape.generation,
                current: params.generation(),
            });
        }
        if upstream.rows() != tape.output.rows() || upstream.cols() != tape.output.cols() {
            return Err(Error::Shape {
                context: "MLP upstream gradient",
                expected: format!("{}x{}", tape.output.rows(), tape.output.cols()),
                actual: format!("{}x{}", upstream.rows(), upstream.cols()),
            });
        }
        let depth = self.spec.depth();
        let mut delta = upstream.clone();
        for l in (0..depth).rev() {
            let (d_in, d_out) = (self.spec.layer_sizes[l], self.spec.layer_sizes[l + 1]);
            let z = &tape.pre[l];
            let last = l + 1 == depth;
            // delta <- dL/dz
            for (dv, (&zv, &yv)) in delta
                .data_mut()
                .iter_mut()
                .zip(z.data().iter().zip(if last { tape.output.data() } else { z.data() }))
            {
                if last {
                    if self.spec.final_activation == FinalActivation::Sigmoid {
                        *dv *= yv * (1.0 - yv);
                    }
                } else {
                    match self.spec.activation {
                        Activation::Relu if zv <= 0.0 => *dv = 0.0,
                        Activation::LeakyRelu if zv <= 0.0 => *dv *= LEAKY_SLOPE,
                        Activation::Tanh => *dv *= 1.0 - zv.tanh().powi(2),
                        _ => {}
                    }
                }
            }
            let x = &tape.inputs[l];
            let w_idx = self.first + 2 * l;
            {
                let (gw, rest) = grads.values[w_idx..].split_at_mut(1);
                let gw = &mut gw[0];
                let gb = &mut rest[0];
                for r in 0..x.rows() {
                    let dr = delta.row(r);
                    if dr.iter().all(|d| *d == 0.0) {
                        continue;
                    }
                    for (k, &xk) in x.row(r).iter().enumerate() {
                        if xk == 0.0 {
                            continue;
                        }
                        let g = &mut gw[k * d_out..(k + 1) * d_out];
                        for (gv, dv) in g.iter_mut().zip(dr) {
                            *gv += xk * dv;
                        }
                    }
                    for (gv, dv) in gb.iter_mut().zip(dr) {
                        *gv += dv;
                    }
                }
            }
            let w = &params.tensor(w_idx).values;
            let mut dx = Matrix::zeros(x.rows(), d_in);
            for r in 0..x.rows() {
                let dr = delta.row(r);
                let out = dx.row_mut(r);
                for (k, o) in out.iter_mut().enumerate() {
                    let wk = &w[k * d_out..(k + 1) * d_out];
                    *o = wk.iter().zip(dr).map(|(a, b)| a * b).sum();
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

/// Forward pass of a standalone MLP whose tensors start at index 0.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamSet, x: &Matrix) -> Result<(Matrix, MlpTape)> {
    Mlp::new(spec.clone(), 0)?.forward(params, x)
}

/// Reverse pass of a standalone MLP: parameter gradients and input gradient.
pub fn backward(spec: &MlpSpec, params: &ParamSet, tape: &MlpTape, upstream: &Matrix) -> Result<(Gradients, Matrix)> {
    let mut grads = params.zero_gradients();
    let dx = Mlp::new(spec.clone(), 0)?.backward(params, tape, upstream, &mut grads)?;
    Ok((grads, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ParamTensor};

    fn relu_spec(sizes: &[usize]) -> MlpSpec {
        MlpSpec::new(sizes.to_vec(), Activation::Relu, FinalActivation::None).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], Activation::Relu, FinalActivation::None).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Relu, FinalActivation::None).is_err());
        assert_eq!(relu_spec(&[2, 8, 16]).param_count(), 2 * 8 + 8 + 8 * 16 + 16);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = relu_spec(&[3, 5, 2]);
        let params = ParamSet::new(
            crate::nn::init_params(&spec, 1)
                .unwrap()
                .into_tensors()
                .into_iter()
                .map(|t| ParamTensor::zeros(t.name, t.shape))
                .collect(),
        )
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let (y, _) = mlp_forward(&spec, &params, &x).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![3, 3], Activation::None, FinalActivation::None).unwrap();
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let params = ParamSet::new(vec![
            ParamTensor::new("w", vec![3, 3], w).unwrap(),
            ParamTensor::zeros("b", vec![3]),
        ])
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        let (y, _) = mlp_forward(&spec, &params, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn input_width_mismatch_is_rejected() {
        let spec = relu_spec(&[3, 4, 1]);
        let params = init_params(&spec, 0).unwrap();
        let x = Matrix::zeros(2, 2);
        assert!(matches!(mlp_forward(&spec, &params, &x), Err(Error::Shape { .. })));
    }

    #[test]
    fn batch_equals_stacked_rows() {
        let spec = MlpSpec::new(vec![4, 6, 5, 3], Activation::Relu, FinalActivation::Sigmoid).unwrap();
        let params = init_params(&spec, 9).unwrap();
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|r| (0..4).map(|c| ((r * 4 + c) as f64 * 0.37).sin()).collect())
            .collect();
        let batch = Matrix::from_rows(&rows).unwrap();
        let (y, _) = mlp_forward(&spec, &params, &batch).unwrap();
        for (r, row) in rows.iter().enumerate() {
            let single = Matrix::from_rows(std::slice::from_ref(row)).unwrap();
            let (yr, _) = mlp_forward(&spec, &params, &single).unwrap();
            assert_eq!(yr.row(0), y.row(r));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = relu_spec(&[3, 4, 2]);
        let params = init_params(&spec, 2).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let (_, tape) = mlp_forward(&spec, &params, &x).unwrap();
        let (g, dx) = backward(&spec, &params, &tape, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
        assert!(dx.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sigmoid_chain_by_hand() {
        // y = sigmoid(w * x) with zero bias
        let spec = MlpSpec::new(vec![1, 1], Activation::None, FinalActivation::Sigmoid).unwrap();
        let make = |w: f64| {
            ParamSet::new(vec![
                ParamTensor::new("w", vec![1, 1], vec![w]).unwrap(),
                ParamTensor::zeros("b", vec![1]),
            ])
            .unwrap()
        };
        let params = make(0.0);
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let zero = Matrix::from_rows(&[vec![0.0]]).unwrap();

        let (_, tape) = mlp_forward(&spec, &params, &zero).unwrap();
        let (g, dx) = backward(&spec, &params, &tape, &one).unwrap();
        assert_eq!(g.values[0][0], 0.0);
        assert_eq!(dx.get(0, 0), 0.0);

        let (_, tape) = mlp_forward(&spec, &params, &one).unwrap();
        let (g, _) = backward(&spec, &params, &tape, &one).unwrap();
        assert_eq!(g.values[0][0], 0.25);
        assert_eq!(g.values[1][0], 0.25);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let spec = relu_spec(&[2, 3, 1]);
        let mut params = init_params(&spec, 5).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let (_, tape) = mlp_forward(&spec, &params, &x).unwrap();
        params.tensors_mut()[0].values[0] += 1.0;
        let err = backward(&spec, &params, &tape, &Matrix::zeros(1, 1)).unwrap_err();
        assert!(matches!(err, Error::StaleTape { .. }));
    }
}
