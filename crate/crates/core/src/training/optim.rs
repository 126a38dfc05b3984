use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{check_dim, Error, Result};
use crate::hyp_nn::{ParamKind, ParamMut};
use crate::manifold::{norm_sq, PoincareBall, TangentVector};

/// Learning rate `base · γ^⌊step / step_size⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub step_size: usize,
    pub gamma: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        StepDecay {
            step_size: 500,
            gamma: 0.5,
        }
    }
}

impl StepDecay {
    pub fn factor(&self, step: usize) -> f64 {
        if self.step_size == 0 {
            return 1.0;
        }
        self.gamma.powi((step / self.step_size) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl AdamState {
    pub fn new(shape: [usize; 2]) -> Self {
        AdamState {
            m: Tensor::zeros(shape[0], shape[1]),
            v: Tensor::zeros(shape[0], shape[1]),
            t: 0,
        }
    }
}

/// One Adam update with decoupled weight decay.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    check_dim(param.len(), grad.len())?;
    check_dim(param.len(), state.m.len())?;
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);
    let p = param.data_mut();
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for i in 0..p.len() {
        let g = grad.data()[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / b1t;
        let vh = v[i] / b2t;
        p[i] -= lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * p[i]);
    }
    Ok(())
}

/// Riemannian SGD step for one ball point: rescale the Euclidean gradient
/// by `1/λ_x²`, step along `−lr` times it with the exponential map, and
/// re-project.
pub fn riemannian_step(ball: &PoincareBall, x: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    check_dim(ball.dim(), grad.len())?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("riemannian gradient".into()));
    }
    let p = ball.project(x)?;
    let c = ball.curvature().kappa();
    let s = (1.0 - c * norm_sq(p.coords())) / 2.0;
    let scale = -lr * s * s;
    let v: Vec<f64> = grad.iter().map(|g| scale * g).collect();
    if v.iter().all(|&x| x == 0.0) {
        return Ok(p.into_vec());
    }
    let tv = TangentVector::new(p, v)?;
    Ok(ball.exp_map(&tv)?.into_vec())
}

/// Adam for Euclidean tensors and Riemannian SGD for ball-valued rows.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub states: Vec<AdamState>,
    pub lr: f64,
    pub lr_manifold: f64,
    pub schedule: StepDecay,
    pub adam: AdamConfig,
    /// Update manifold tensors with Adam in ambient coordinates, then project.
    pub naive_manifold: bool,
    pub step: usize,
    pub skipped: usize,
}

impl Optimizer {
    pub fn new(params: &[crate::hyp_nn::ParamRef<'_>], lr: f64, lr_manifold: f64, schedule: StepDecay) -> Self {
        Optimizer {
            states: params.iter().map(|p| AdamState::new(p.value.shape())).collect(),
            lr,
            lr_manifold,
            schedule,
            adam: AdamConfig::default(),
            naive_manifold: false,
            step: 0,
            skipped: 0,
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.lr * self.schedule.factor(self.step)
    }

    /// Applies one update to every parameter and advances the schedule.
    /// Tensors with non-finite gradients are left unchanged and counted in
    /// `skipped`.
    pub fn apply(&mut self, params: Vec<ParamMut<'_>>, grads: &[Tensor], ball: &PoincareBall) -> Result<()> {
        check_dim(self.states.len(), params.len())?;
        check_dim(params.len(), grads.len())?;
        let f = self.schedule.factor(self.step);
        let (lr, lr_m) = (self.lr * f, self.lr_manifold * f);
        for ((p, g), st) in params.into_iter().zip(grads).zip(&mut self.states) {
            if !g.is_finite() {
                self.skipped += 1;
                continue;
            }
            match (p.kind, self.naive_manifold) {
                (ParamKind::Euclidean, _) => adam_step(p.value, g, st, lr, &self.adam)?,
                (ParamKind::Manifold, true) => {
                    adam_step(p.value, g, st, lr, &self.adam)?;
                    for i in 0..p.value.rows() {
                        let q = ball.project(p.value.row(i))?;
                        p.value.row_mut(i).copy_from_slice(q.coords());
                    }
                }
                (ParamKind::Manifold, false) => {
                    for i in 0..p.value.rows() {
                        let q = riemannian_step(ball, p.value.row(i), g.row(i), lr_m)?;
                        p.value.row_mut(i).copy_from_slice(&q);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}
