//! Layer activations and their derivatives.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    Identity,
    Sigmoid,
    Relu,
    Tanh,
    /// Row-wise softmax; only valid as a final-layer activation.
    Softmax,
}

impl ActivationKind {
    pub fn apply(&self, pre: &Matrix2D) -> Result<Matrix2D> {
        match self {
            ActivationKind::Identity => Ok(pre.clone()),
            ActivationKind::Sigmoid => Ok(pre.map(sigmoid)),
            ActivationKind::Relu => Ok(pre.map(|z| if z > 0.0 { z } else { 0.0 })),
            ActivationKind::Tanh => Ok(pre.map(f64::tanh)),
            ActivationKind::Softmax => softmax_rows(pre),
        }
    }

    /// Elementwise derivative evaluated from the post-activation value.
    /// Softmax has no elementwise derivative; its backward pass goes through
    /// the full per-row Jacobian in `MlpModel::backward`.
    pub fn derivative_from_output(&self, post: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::Sigmoid => post * (1.0 - post),
            ActivationKind::Relu => {
                if post > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => 1.0 - post * post,
            ActivationKind::Softmax => f64::NAN,
        }
    }

    pub fn scalar(&self, z: f64) -> f64 {
        match self {
            ActivationKind::Identity => z,
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Softmax => f64::NAN,
        }
    }

    /// Stable numeric code used by the model file format.
    pub fn code(&self) -> u8 {
        match self {
            ActivationKind::Identity => 0,
            ActivationKind::Sigmoid => 1,
            ActivationKind::Relu => 2,
            ActivationKind::Tanh => 3,
            ActivationKind::Softmax => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => ActivationKind::Identity,
            1 => ActivationKind::Sigmoid,
            2 => ActivationKind::Relu,
            3 => ActivationKind::Tanh,
            4 => ActivationKind::Softmax,
            other => return Err(CoreError::ModelFormat(format!("activation code {other}"))),
        })
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max-shift stabilization. Rejects non-finite logits.
pub fn softmax_rows(logits: &Matrix2D) -> Result<Matrix2D> {
    logits.require_finite("softmax_rows input")?;
    let mut out = logits.clone();
    let cols = out.cols();
    for r in 0..out.rows() {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_logits_give_uniform_distribution() {
        let m = Matrix2D::from_vec(2, 4, vec![0.7; 8]).unwrap();
        let s = softmax_rows(&m).unwrap();
        for v in s.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let m = Matrix2D::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let s = softmax_rows(&m).unwrap();
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|z| z.exp()).sum();
        for (got, z) in s.data().iter().zip([1.0f64, 2.0, 3.0]) {
            assert!((got - z.exp() / denom).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_rows_sum_to_one() {
        let m = Matrix2D::from_vec(2, 3, vec![0.3, -1.2, 2.5, 4.0, 4.0, -0.1]).unwrap();
        let shifted = m.map(|z| z + 123.456);
        let a = softmax_rows(&m).unwrap();
        let b = softmax_rows(&shifted).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        for r in 0..a.rows() {
            let sum: f64 = a.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        let m = Matrix2D::from_vec(1, 2, vec![f64::NAN, 0.0]).unwrap();
        assert!(softmax_rows(&m).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Analytic derivative vs central differences at 100 points per activation.
        let acts = [
            ActivationKind::Identity,
            ActivationKind::Sigmoid,
            ActivationKind::Relu,
            ActivationKind::Tanh,
        ];
        let h = 1e-6;
        for act in acts {
            for i in 0..100 {
                let z = -3.0 + 6.0 * (i as f64 + 0.5) / 100.0;
                if matches!(act, ActivationKind::Relu) && z.abs() < 1e-3 {
                    continue; // kink
                }
                let numeric = (act.scalar(z + h) - act.scalar(z - h)) / (2.0 * h);
                let analytic = act.derivative_from_output(act.scalar(z));
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-6,
                    "{act:?} at z={z}: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }
}
