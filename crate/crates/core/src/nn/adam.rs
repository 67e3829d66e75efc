use super::{Gradients, ParamSet};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps taken so far.
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Result<Self> {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid("Adam eps must be positive"));
        }
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    /// One update of `params` along `grads`. Nothing is modified if any
    /// gradient is non-finite or misaligned.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        if grads.values.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape {
                context: "Adam gradients",
                expected: params.len().to_string(),
                actual: grads.values.len().to_string(),
            });
        }
        for (t, g) in params.tensors().iter().zip(&grads.values) {
            if g.len() != t.len() {
                return Err(Error::Shape {
                    context: "Adam gradient tensor",
                    expected: format!("{} values for {}", t.len(), t.name),
                    actual: g.len().to_string(),
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", t.name)));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((tensor, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(&grads.values)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (k, p) in tensor.values.iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamTensor;

    fn params() -> ParamSet {
        ParamSet::new(vec![
            ParamTensor::new("a", vec![3], vec![0.5, -1.0, 2.0]).unwrap(),
            ParamTensor::new("b", vec![1], vec![0.25]).unwrap(),
        ])
        .unwrap()
    }

    fn grads(values: Vec<Vec<f64>>) -> Gradients {
        Gradients { values }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-3).unwrap();
        adam.step(&mut p, &grads(vec![vec![0.0; 3], vec![0.0]])).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-3).unwrap();
        adam.step(&mut p, &grads(vec![vec![3.0, -0.5, 10.0], vec![-2.0]])).unwrap();
        let moved: Vec<f64> = p
            .tensors()
            .iter()
            .zip(before.tensors())
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect::<Vec<_>>())
            .collect();
        let expected = [-1e-3, 1e-3, -1e-3, 1e-3];
        for (m, e) in moved.iter().zip(expected) {
            assert!((m - e).abs() < 1e-9, "{m} vs {e}");
        }
    }

    #[test]
    fn first_step_is_scale_consistent() {
        let g = vec![vec![0.3, -0.7, 1.1], vec![0.05]];
        let mut base = params();
        AdamState::new(&base, 1e-3).unwrap().step(&mut base, &grads(g.clone())).unwrap();
        for c in [1e-2, 0.5, 7.0, 1e3] {
            let mut p = params();
            let scaled = g.iter().map(|t| t.iter().map(|x| x * c).collect()).collect();
            AdamState::new(&p, 1e-3).unwrap().step(&mut p, &grads(scaled)).unwrap();
            for (a, b) in p.tensors().iter().zip(base.tensors()) {
                for (x, y) in a.values.iter().zip(&b.values) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn identical_streams_give_identical_params() {
        let mut p1 = params();
        let mut p2 = params();
        let mut a1 = AdamState::new(&p1, 1e-2).unwrap();
        let mut a2 = AdamState::new(&p2, 1e-2).unwrap();
        for k in 0..20 {
            let g = grads(vec![vec![(k as f64).sin(), 0.1, -0.2], vec![(k as f64).cos()]]);
            a1.step(&mut p1, &g).unwrap();
            a2.step(&mut p2, &g).unwrap();
        }
        assert_eq!(p1, p2);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = params();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 1e-3).unwrap();
        let err = adam.step(&mut p, &grads(vec![vec![0.0; 3], vec![f64::NAN]])).unwrap_err();
        assert!(err.to_string().contains('b'), "{err}");
        assert_eq!(p, before);
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let p = params();
        assert!(AdamState::new(&p, 0.0).is_err());
        assert!(AdamState::with_betas(&p, 1e-3, 1.0, 0.999, 1e-8).is_err());
    }
}
