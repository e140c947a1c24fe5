//! AdamW with decoupled weight decay and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Optimizer, schedule, and loss-weight settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial learning rate η₀.
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    /// Floor of the cosine schedule η_min.
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    /// Total training epochs.
    pub t_max: usize,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Evolution-regularization weight λ_er; zero disables the term.
    #[serde(default = "default_lambda_er")]
    pub lambda_er: f64,
    /// Total-variation scale τ below which the regularizer activates.
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub determinism: bool,
}

fn default_eta0() -> f64 {
    5e-3
}
fn default_eta_min() -> f64 {
    1e-5
}
fn default_weight_decay() -> f64 {
    1e-5
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_lambda_er() -> f64 {
    0.01
}
fn default_tau() -> f64 {
    0.002
}
fn default_true() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min > 0.0 && self.eta_min <= self.eta0) {
            return Err(Error::InvalidConfig(format!(
                "learning rates must satisfy 0 < eta_min <= eta0, got {} and {}",
                self.eta_min, self.eta0
            )));
        }
        if self.lambda_er < 0.0 {
            return Err(Error::InvalidConfig("lambda_er must be nonnegative".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig("tau must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("momentum parameters must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// η(T_cur) = η_min + ½(η₀ − η_min)(1 + cos(π·T_cur/T_max)).
pub fn cosine_lr(t_cur: usize, config: &TrainConfig) -> Result<f64> {
    if t_cur > config.t_max || config.t_max == 0 {
        return Err(Error::ScheduleOutOfRange { t_cur, t_max: config.t_max });
    }
    let phase = std::f64::consts::PI * t_cur as f64 / config.t_max as f64;
    Ok(config.eta_min + 0.5 * (config.eta0 - config.eta_min) * (1.0 + phase.cos()))
}

/// First and second moment accumulators, shaped like the parameter store.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let shapes: Vec<usize> = (0..params.n_groups()).map(|g| params.group_data(g).len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One decoupled-weight-decay update: θ ← θ(1 − lr·λ) first, then the
/// bias-corrected adaptive-moment step.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for group in 0..params.n_groups() {
        let data = params.group_data_mut(group);
        let g = grads.group(group);
        let m = &mut state.m[group];
        let v = &mut state.v[group];
        for i in 0..data.len() {
            data[i] -= lr * config.weight_decay * data[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}
