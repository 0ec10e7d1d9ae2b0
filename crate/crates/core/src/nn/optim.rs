use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamWState<S> {
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamWState<S> {
    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update with decoupled weight decay.
///
/// Gradients are checked before any parameter is touched, so a non-finite
/// gradient leaves both parameters and state unchanged.
pub fn adamw_step<S: Scalar>(
    params: &mut [Param<S>],
    grads: &[Tensor<S>],
    state: &mut AdamWState<S>,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient for `{}` has shape {:?}, parameter has {:?}",
                p.name,
                g.shape(),
                p.value.shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter `{}`",
                p.name
            )));
        }
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![S::zero(); p.value.len()]).collect();
        state.second = state.first.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = S::from_f64(cfg.beta1);
    let b2 = S::from_f64(cfg.beta2);
    let bias1 = S::from_f64(1.0 - cfg.beta1.powi(t));
    let bias2_sqrt = S::from_f64((1.0 - cfg.beta2.powi(t)).sqrt());
    let lr = S::from_f64(cfg.lr);
    let eps = S::from_f64(cfg.eps);
    let decay = S::one() - lr * S::from_f64(cfg.weight_decay);
    let one = S::one();
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        for (((w, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *w = *w * decay;
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / bias1;
            let denom = vi.sqrt() / bias2_sqrt + eps;
            *w = *w - lr * m_hat / denom;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Vec<Param<f64>> {
        vec![Param {
            name: "w".into(),
            value: Tensor::from_vec(&[1], vec![v]).unwrap(),
        }]
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut p = scalar_param(0.7);
        let mut state = AdamWState::default();
        let cfg = AdamWConfig {
            lr: 0.0,
            weight_decay: 0.0,
            ..Default::default()
        };
        for g in [1.0, -3.0, 0.25] {
            adamw_step(&mut p, &[Tensor::from_vec(&[1], vec![g]).unwrap()], &mut state, &cfg).unwrap();
        }
        assert_eq!(p[0].value.data()[0], 0.7);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_learning_rate() {
        let mut p = scalar_param(0.0);
        let mut state = AdamWState::default();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_step(&mut p, &[Tensor::from_vec(&[1], vec![1.0]).unwrap()], &mut state, &cfg).unwrap();
        // m̂ = 1, v̂ = 1 at step one.
        let expected = -cfg.lr * 1.0 / (1.0 + cfg.eps);
        assert!((p[0].value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn weight_decay_with_zero_gradient_shrinks_multiplicatively() {
        let mut p = scalar_param(2.0);
        let mut state = AdamWState::default();
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        adamw_step(&mut p, &[Tensor::from_vec(&[1], vec![0.0]).unwrap()], &mut state, &cfg).unwrap();
        assert!((p[0].value.data()[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = scalar_param(1.0);
        let mut state = AdamWState::default();
        let err = adamw_step(
            &mut p,
            &[Tensor::from_vec(&[1], vec![f64::NAN]).unwrap()],
            &mut state,
            &AdamWConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(p[0].value.data()[0], 1.0);
    }
}
