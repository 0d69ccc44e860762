use super::params::Parameterized;
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments, one buffer per parameter block.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<P: Parameterized<T>>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Vec<T>> = params
            .param_views()
            .iter()
            .map(|v| vec![T::zero(); v.data.len()])
            .collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One Adam update of `params` with gradient `grads`.
pub fn adam_step<T: Scalar, P: Parameterized<T>>(state: &mut AdamState<T>, params: &mut P, grads: &P) -> Result<()> {
    let gviews = grads.param_views();
    let pslices = params.param_slices_mut();
    if gviews.len() != pslices.len() || state.m.len() != pslices.len() {
        return Err(Error::Shape("Adam state, parameters and gradients disagree".into()));
    }
    state.t += 1;
    let c = state.config;
    let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
    let bc1 = T::lit(1.0 - c.beta1.powf(state.t as f64));
    let bc2 = T::lit(1.0 - c.beta2.powf(state.t as f64));
    let lr = T::lit(c.lr);
    let eps = T::lit(c.eps);
    for (((p, g), m), v) in pslices
        .into_iter()
        .zip(&gviews)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if p.len() != g.data.len() || m.len() != p.len() {
            return Err(Error::Shape(format!("block {} has mismatched sizes", g.name)));
        }
        for i in 0..p.len() {
            let gi = g.data[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};
    use ndarray::array;

    fn layer(w: f64) -> DenseLayer<f64> {
        let mut l = DenseLayer::zeros(2, 1, Activation::Identity);
        l.weights = array![[w, -w]];
        l.bias = array![0.5];
        l
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = layer(1.0);
        let before = p.clone();
        let g = DenseLayer::zeros(2, 1, Activation::Identity);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam_step(&mut s, &mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert!(s.m.iter().flatten().all(|v| *v == 0.0));
        assert!(s.v.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = layer(1.0);
        let mut g = DenseLayer::zeros(2, 1, Activation::Identity);
        g.weights = array![[3.0, -0.2]];
        g.bias = array![1e-3];
        let cfg = AdamConfig {
            eps: 1e-12,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(cfg, &p);
        adam_step(&mut s, &mut p, &g).unwrap();
        assert!((p.weights[[0, 0]] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p.weights[[0, 1]] - (-1.0 + 1e-3)).abs() < 1e-9);
        assert!((p.bias[0] - (0.5 - 1e-3)).abs() < 1e-8);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = layer(0.3);
        let before = p.clone();
        let g = layer(2.0);
        let mut s = AdamState::new(AdamConfig { lr: 0.0, ..AdamConfig::default() }, &p);
        adam_step(&mut s, &mut p, &g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn minimises_a_parabola() {
        // f(theta) = theta^2 with the bias as theta.
        let mut p = DenseLayer::<f64>::zeros(0, 1, Activation::Identity);
        p.bias[0] = 1.0;
        let mut s = AdamState::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &p);
        let mut g = p.clone();
        for _ in 0..200 {
            g.bias[0] = 2.0 * p.bias[0];
            adam_step(&mut s, &mut p, &g).unwrap();
        }
        assert!(p.bias[0].abs() < 0.05, "theta = {}", p.bias[0]);
    }
}
