use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mlp::MlpSpec;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng};

/// A named trainable tensor stored flat in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let t = Self {
            name: name.into(),
            shape,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let expected: usize = self.shape.iter().product();
        if expected != self.values.len() {
            return Err(Error::Shape {
                context: "parameter tensor",
                expected: format!("{:?} ({expected} values) for {}", self.shape, self.name),
                actual: format!("{} values", self.values.len()),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter tensor {}", self.name)));
        }
        Ok(())
    }
}

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// An ordered collection of parameter tensors.
///
/// Every mutable access stamps the set with a fresh, process-unique
/// generation; tapes remember the generation they were recorded against.
#[derive(Debug, Clone)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
    generation: u64,
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

impl ParamSet {
    pub fn new(tensors: Vec<ParamTensor>) -> Result<Self> {
        for t in &tensors {
            t.validate()?;
        }
        Ok(Self {
            tensors,
            generation: next_generation(),
        })
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn tensor(&self, index: usize) -> &ParamTensor {
        &self.tensors[index]
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor] {
        self.generation = next_generation();
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<ParamTensor> {
        self.tensors
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            values: self.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// Gradient buffers aligned with the tensors of a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        params.zero_gradients()
    }

    /// `self += other`, in index order.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values.iter_mut().flatten() {
            *v *= factor;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.concat()
    }
}

/// Appends weight/bias tensors for `spec`, named `{prefix}layer{l}.weight|bias`.
///
/// Weights are drawn from `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`;
/// biases start at zero.
pub fn init_tensors(spec: &MlpSpec, prefix: &str, rng: &mut Rng) -> Vec<ParamTensor> {
    let mut out = Vec::with_capacity(2 * spec.depth());
    for (l, pair) in spec.layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
        out.push(ParamTensor {
            name: format!("{prefix}layer{l}.weight"),
            shape: vec![fan_in, fan_out],
            values: w,
        });
        out.push(ParamTensor::zeros(format!("{prefix}layer{l}.bias"), vec![fan_out]));
    }
    out
}

/// Fresh parameters for a standalone MLP.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<ParamSet> {
    spec.validate()?;
    ParamSet::new(init_tensors(spec, "", &mut stream_rng(seed, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, FinalActivation};

    #[test]
    fn tensor_shape_is_checked() {
        assert!(ParamTensor::new("w", vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(ParamTensor::new("w", vec![2, 3], vec![0.0; 5]).is_err());
        assert!(ParamTensor::new("w", vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = MlpSpec::new(vec![7, 8, 4], Activation::Relu, FinalActivation::None).unwrap();
        let a = init_params(&spec, 3).unwrap();
        let b = init_params(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&spec, 4).unwrap());
        for t in a.tensors() {
            if t.name.ends_with("weight") {
                let bound = (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt();
                assert!(t.values.iter().all(|v| v.abs() <= bound));
            } else {
                assert!(t.values.iter().all(|v| *v == 0.0));
            }
        }
        assert_eq!(a.scalar_count(), 7 * 8 + 8 + 8 * 4 + 4);
    }

    #[test]
    fn init_variance_matches_uniform() {
        // one 400x250 weight matrix = 10^5 draws, a^2 = 6/650
        let spec = MlpSpec::new(vec![400, 250], Activation::Relu, FinalActivation::None).unwrap();
        let p = init_params(&spec, 17).unwrap();
        let w = &p.tensor(0).values;
        assert_eq!(w.len(), 100_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let a2 = 6.0 / 650.0;
        let target = a2 / 3.0;
        assert!((var / target - 1.0).abs() < 0.05, "var {var} target {target}");
    }

    #[test]
    fn mutation_bumps_generation() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu, FinalActivation::None).unwrap();
        let mut p = init_params(&spec, 1).unwrap();
        let g0 = p.generation();
        p.tensors_mut();
        assert_ne!(p.generation(), g0);
    }
}
