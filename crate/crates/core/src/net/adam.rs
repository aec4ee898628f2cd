use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub(crate) fn round_f32(&mut self) {
        for x in self.m.iter_mut().chain(self.v.iter_mut()) {
            *x = *x as f32 as f64;
        }
    }
}

/// Bias-corrected Adam update. A non-finite gradient leaves everything untouched.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Shape {
            expected: format!("{} parameters, gradients and moments", params.len()),
            actual: format!("{} gradients, {} moments", grads.len(), state.len()),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_counts() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.01).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_signed_lr() {
        for g in [3.0, -0.02, 1e3] {
            let mut p = vec![0.0];
            let mut s = AdamState::new(1);
            adam_step(&mut p, &[g], &mut s, 0.01).unwrap();
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expect).abs() < 1e-15, "{g}: {}", p[0]);
        }
    }

    #[test]
    fn step_sizes_for_identical_and_shrinking_gradients() {
        // Repeating a gradient keeps m̂/√v̂ = sign(g): the step does not shrink.
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.01).unwrap();
        let first = p[0];
        adam_step(&mut p, &[1.0], &mut s, 0.01).unwrap();
        assert!(((p[0] - first) - first).abs() < 1e-12);

        // g = 1 then 0.1: m = 0.1, v = 0.001009 → m̂ = 0.1/0.19, v̂ = 0.001009/0.001999,
        // step = 0.01 · 0.526316 / 0.710457 ≈ 0.0074081.
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.01).unwrap();
        let before = p[0];
        adam_step(&mut p, &[0.1], &mut s, 0.01).unwrap();
        let step = before - p[0];
        assert!((step - 0.0074081).abs() < 1e-7, "{step}");
    }

    #[test]
    fn non_finite_refused() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        assert!(matches!(adam_step(&mut p, &[f64::NAN], &mut s, 0.01), Err(Error::NonFinite(_))));
        assert_eq!((p[0], s.t), (1.0, 0));
    }
}
