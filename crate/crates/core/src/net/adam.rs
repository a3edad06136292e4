use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::FusionModel;
use crate::error::{ensure, Error, Result};

/// Bias-corrected Adam moments for every parameter slice of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &FusionModel) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, model: &mut FusionModel, grads: &FusionModel, lr: f64) -> Result<()> {
        let grads = grads.params();
        let mut params = model.params_mut();
        ensure!(
            params.len() == self.first.len()
                && params
                    .iter()
                    .zip(&grads)
                    .zip(&self.first)
                    .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len()),
            Error::DimensionMismatch(format!("gradients or optimizer state do not match the model"))
        );
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(&grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
        drop(params);
        ensure!(model.is_finite(), Error::NonFinite("adam update"));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelSpec;

    fn model() -> FusionModel {
        FusionModel::init(&ModelSpec::new(vec![3, 2], 2), 5).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut m = model();
        let before = m.clone();
        let mut s = AdamState::new(&m);
        s.update(&mut m, &before.zeros_like(), 1e-2).unwrap();
        assert_eq!(m, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut m = model();
        let before = m.clone();
        let mut g = m.zeros_like();
        g.head.bias = vec![2.0, -3.0];
        let mut s = AdamState::new(&m);
        for _ in 0..10 {
            s.update(&mut m, &g, 1e-2).unwrap();
        }
        assert_eq!(s.step, 10);
        assert!(m.head.bias[0] < before.head.bias[0]);
        assert!(m.head.bias[1] > before.head.bias[1]);
        // the first bias-corrected step has magnitude lr
        let mut once = before.clone();
        AdamState::new(&once).update(&mut once, &g, 1e-2).unwrap();
        assert!((once.head.bias[0] + 1e-2).abs() < 1e-9);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut m = model();
        let other = FusionModel::init(&ModelSpec::new(vec![4, 2], 2), 5).unwrap();
        let mut s = AdamState::new(&m);
        assert!(matches!(
            s.update(&mut m, &other, 1e-3),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
