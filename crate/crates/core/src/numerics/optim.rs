use serde::{Deserialize, Serialize};

use super::tensor::{Dtype, Tensor};
use crate::error::{Error, Result};

/// Gradients aligned by name and shape with a model's parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct GradState {
    pub names: Vec<String>,
    pub grads: Vec<Tensor>,
}

impl GradState {
    pub fn new(names: Vec<String>, grads: Vec<Tensor>) -> Result<Self> {
        if names.len() != grads.len() {
            return Err(Error::Dimension(format!(
                "{} names for {} gradients",
                names.len(),
                grads.len()
            )));
        }
        Ok(GradState { names, grads })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.grads[i])
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
            .unzip();
        AdamState {
            config: AdamConfig::default(),
            m,
            v,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &GradState,
    state: &mut AdamState,
    lr: f64,
    dtype: Dtype,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Usage(format!("learning rate {lr} must be positive")));
    }
    if params.len() != grads.grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), name) in params.iter().zip(&grads.grads).zip(&grads.names) {
        p.expect_same_shape(g)?;
        if !g.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for {name}")));
        }
    }

    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads.grads[k].data();
        let m = state.m[k].data_mut();
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = state.v[k].data_mut();
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let m = state.m[k].data();
        let v = state.v[k].data();
        for ((x, &mi), &vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            *x = dtype.round(*x - lr * m_hat / (v_hat.sqrt() + eps));
        }
    }
    Ok(())
}

pub fn global_norm(grads: &GradState) -> f64 {
    grads
        .grads
        .iter()
        .map(Tensor::sum_squares)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients together when their joint ℓ2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut GradState, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Usage(format!("max_norm {max_norm} must be positive")));
    }
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in &mut grads.grads {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    Ok(norm)
}
