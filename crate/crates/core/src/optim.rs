//! Adaptive-moment parameter updates with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWParams {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(
                format!("{field}.beta1/beta2"),
                "betas must lie in [0, 1)",
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config(format!("{field}.eps"), "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(
                format!("{field}.weight_decay"),
                "must be nonnegative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(len: usize, params: AdamWParams) -> Self {
        Self {
            m1: vec![0.0; len],
            m2: vec![0.0; len],
            step_count: 0,
            beta1: params.beta1,
            beta2: params.beta2,
            eps: params.eps,
            weight_decay: params.weight_decay,
        }
    }

    pub fn len(&self) -> usize {
        self.m1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m1.is_empty()
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        check_dim("adamw params", self.len(), params.len())?;
        check_dim("adamw grad", self.len(), grad.len())?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("non-finite gradient".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m1[i] = self.beta1 * self.m1[i] + (1.0 - self.beta1) * g;
            self.m2[i] = self.beta2 * self.m2[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m1[i] / bc1;
            let v_hat = self.m2[i] / bc2;
            params[i] -= lr * self.weight_decay * params[i];
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`OptimState::step`]: returns the updated parameters.
pub fn adamw_step(params: &[f64], grad: &[f64], state: &mut OptimState, lr: f64) -> Result<Vec<f64>> {
    let mut out = params.to_vec();
    state.step(&mut out, grad, lr)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamWParams {
        AdamWParams {
            weight_decay: 0.0,
            ..AdamWParams::default()
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut s = OptimState::new(3, no_decay());
        let p = adamw_step(&[1.0, -2.0, 0.5], &[0.0; 3], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2 on step one, so the step is lr * g / (|g| + eps)
        let mut s = OptimState::new(1, no_decay());
        let p = adamw_step(&[0.0], &[1.0], &mut s, 0.001).unwrap();
        let expected = -0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);

        let mut s = OptimState::new(2, no_decay());
        let p = adamw_step(&[0.0, 0.0], &[-40.0, 3e-3], &mut s, 0.01).unwrap();
        assert!((p[0] - 0.01).abs() < 1e-9);
        assert!((p[1] + 0.01).abs() < 1e-7);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut s = OptimState::new(1, AdamWParams::default());
        let p = adamw_step(&[2.0], &[0.0], &mut s, 0.1).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.01 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_from_identical_state() {
        let mut s = OptimState::new(2, AdamWParams::default());
        adamw_step(&[0.3, 0.1], &[0.2, -0.5], &mut s, 0.01).unwrap();
        let mut a = s.clone();
        let mut b = s.clone();
        let pa = adamw_step(&[0.3, 0.1], &[1.0, 2.0], &mut a, 0.01).unwrap();
        let pb = adamw_step(&[0.3, 0.1], &[1.0, 2.0], &mut b, 0.01).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = OptimState::new(2, AdamWParams::default());
        assert!(adamw_step(&[0.0, 0.0], &[f64::NAN, 0.0], &mut s, 0.1).is_err());
        assert!(adamw_step(&[0.0], &[0.0], &mut s, 0.1).is_err());
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = OptimState::new(2, AdamWParams::default());
        let mut p = vec![3.0, -4.0];
        for _ in 0..3000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * (x - 1.0)).collect();
            s.step(&mut p, &g, 0.01).unwrap();
        }
        assert!(p.iter().all(|x| (x - 1.0).abs() < 0.02), "{p:?}");
    }
}
