//! Adam optimizer and the shared training hyperparameters.

use crate::error::{CoreError, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Hyperparameters shared by every training loop in the workspace.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 128,
            epochs: 100,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::Empty("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(CoreError::Empty("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// First/second moment estimates, one flat buffer per parameter buffer.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Moments sized to match `param_lens`, the per-buffer lengths of the
    /// parameter set this state will be stepped with.
    pub fn new(param_lens: &[usize]) -> Self {
        Self {
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    pub fn for_params(params: &[&[f64]]) -> Self {
        Self::new(&params.iter().map(|p| p.len()).collect::<Vec<_>>())
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update. `params` and `grads` must mirror the buffer layout the
/// state was created with; the step counter advances exactly once per call.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(CoreError::ShapeMismatch {
            context: "adam_step".into(),
            expected: format!("{} parameter buffers", state.m.len()),
            actual: format!("{} params / {} grads", params.len(), grads.len()),
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != m.len() || g.len() != m.len() {
            return Err(CoreError::ShapeMismatch {
                context: "adam_step buffer".into(),
                expected: format!("{} values", m.len()),
                actual: format!("{} params / {} grads", p.len(), g.len()),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        for k in 0..p.len() {
            let grad = g[k];
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * grad;
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * grad * grad;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut buf = vec![1.5, -2.0, 0.25];
        let grads = vec![0.0; 3];
        let mut state = AdamState::new(&[3]);
        let before = buf.clone();
        adam_step(&mut [&mut buf], &[&grads], &mut state, 0.01).unwrap();
        assert_eq!(buf, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // t = 1: m̂ = g, v̂ = g², update = −lr·g/(|g| + ε) ≈ −lr·sign(g)
        for g in [0.3, -0.7, 123.0] {
            let mut buf = vec![0.0];
            let grads = vec![g];
            let mut state = AdamState::new(&[1]);
            adam_step(&mut [&mut buf], &[&grads], &mut state, 0.001).unwrap();
            let expected = -0.001 * g / (g.abs() + ADAM_EPSILON);
            assert!((buf[0] - expected).abs() < 1e-15);
            assert!((buf[0] + 0.001 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn ten_steps_match_reference_recurrence() {
        // Independently coded sequential Adam on f(x) = (x − 3)², g = 2(x − 3).
        let lr = 0.05;
        let mut x = 0.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut reference = 0.0f64;
        let (mut rm, mut rv) = (0.0f64, 0.0f64);
        let mut state = AdamState::new(&[1]);
        for t in 1..=10 {
            let g = 2.0 * (x - 3.0);
            let mut buf = [x];
            adam_step(&mut [&mut buf], &[&[g]], &mut state, lr).unwrap();
            x = buf[0];

            // reference recurrence, written out independently
            let rg = 2.0 * (reference - 3.0);
            rm = 0.9 * rm + 0.1 * rg;
            rv = 0.999 * rv + 0.001 * rg * rg;
            let mh = rm / (1.0 - 0.9f64.powi(t));
            let vh = rv / (1.0 - 0.999f64.powi(t));
            reference -= lr * mh / (vh.sqrt() + 1e-8);
            let _ = (m, v);
            m = rm;
            v = rv;

            assert!(
                (x - reference).abs() < 1e-12,
                "step {t}: {x} vs {reference}"
            );
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut buf = vec![0.0; 2];
        let grads = vec![0.0; 3];
        let mut state = AdamState::new(&[2]);
        assert!(adam_step(&mut [&mut buf], &[&grads], &mut state, 0.01).is_err());
        assert_eq!(state.step_count(), 0);
    }
}
