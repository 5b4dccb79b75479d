//! Adam with bias correction, operating in place on flat parameter tensors.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second-moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn for_params(params: &[Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over aligned `params` and `grads`.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam_step: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "adam_step: param {i} has shape {:?} but grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        for (j, &gj) in g.data().iter().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            pd[j] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // With bias correction, m̂ = g and v̂ = g², so Δ ≈ -lr·sign(g).
        let mut params = vec![Tensor::scalar(1.0)];
        let grads = vec![Tensor::scalar(2.0)];
        let mut state = AdamState::for_params(&params);
        adam_step(
            &mut params,
            &grads,
            &mut state,
            &AdamConfig::with_lr(0.1),
        )
        .unwrap();
        let delta = params[0].data()[0] - 1.0;
        assert!((delta + 0.1).abs() < 1e-7, "delta {delta}");
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::vector(vec![0.5, -0.25])];
        let grads = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut state = AdamState::for_params(&params);
        adam_step(&mut params, &grads, &mut state, &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(params[0].data(), &[0.5, -0.25]);
    }

    #[test]
    fn equal_grads_update_identically() {
        let mut params = vec![Tensor::vector(vec![1.0, 1.0])];
        let grads = vec![Tensor::vector(vec![0.7, 0.7])];
        let mut state = AdamState::for_params(&params);
        for _ in 0..5 {
            adam_step(&mut params, &grads, &mut state, &AdamConfig::with_lr(0.01)).unwrap();
        }
        let d = params[0].data();
        assert_eq!(d[0], d[1]);
    }
}
