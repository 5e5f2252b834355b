//! Bias-corrected ADAM.

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a single parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    step: u64,
}

impl AdamState {
    pub fn new(like: &Tensor) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to `param` in place.
    pub fn step(&mut self, param: &mut Tensor, grad: &Tensor, p: &AdamParams) -> Result<()> {
        param.check_same_shape(grad, "adam_step")?;
        self.m.check_same_shape(grad, "adam_step")?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - p.beta1.powi(t);
        let bc2 = 1.0 - p.beta2.powi(t);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for (((w, &g), mi), vi) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *mi = p.beta1 * *mi + (1.0 - p.beta1) * g;
            *vi = p.beta2 * *vi + (1.0 - p.beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameter.
pub fn adam_step(
    state: &mut AdamState,
    param: &Tensor,
    grad: &Tensor,
    p: &AdamParams,
) -> Result<Tensor> {
    let mut out = param.clone();
    state.step(&mut out, grad, p)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut w = Tensor::vector(vec![1.5, -2.0]).unwrap();
        let before = w.clone();
        let mut st = AdamState::new(&w);
        let zero = w.zeros_like();
        for _ in 0..100 {
            st.step(&mut w, &zero, &AdamParams::default()).unwrap();
        }
        assert_eq!(w, before);
    }

    #[test]
    fn minimizes_one_dimensional_quadratic() {
        // f(w) = w², grad 2w, lr 0.1, 200 steps
        let mut w = Tensor::scalar(1.0);
        let mut st = AdamState::new(&w);
        for _ in 0..200 {
            let g = w.scale(2.0);
            st.step(&mut w, &g, &AdamParams::with_lr(0.1)).unwrap();
        }
        assert!(w.item().abs() < 1e-3, "w = {}", w.item());
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut w = Tensor::vector(vec![0.3, -0.7, 2.0]).unwrap();
            let mut st = AdamState::new(&w);
            for k in 0..50 {
                let g = w.map(|x| x.sin() + k as f64 * 1e-3);
                st.step(&mut w, &g, &AdamParams::default()).unwrap();
            }
            w
        };
        let (a, b) = (run(), run());
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut w = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let mut st = AdamState::new(&w);
        let g = Tensor::vector(vec![1.0]).unwrap();
        assert!(st.step(&mut w, &g, &AdamParams::default()).is_err());
    }
}
