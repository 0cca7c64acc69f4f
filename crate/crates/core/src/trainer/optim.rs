use crate::error::{Error, Result};
use crate::model::{ParamGrads, ParamRegistry, TrainableSet};
use crate::numerics::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Tensor,
    pub v: Tensor,
}

impl Moments {
    pub fn zeros_like(t: &Tensor) -> Self {
        Self {
            m: Tensor::zeros(t.shape()),
            v: Tensor::zeros(t.shape()),
        }
    }
}

/// One Adam update of `param` at step `t` (1-based). Weight decay is
/// decoupled: `param *= 1 - eta * lambda` before the moment step.
pub fn adam_update(
    param: &mut Tensor,
    grad: &Tensor,
    moments: &mut Moments,
    t: u64,
    eta: f64,
    lambda: f64,
) {
    debug_assert_eq!(param.shape(), grad.shape());
    let decay = 1.0 - eta * lambda;
    let c1 = 1.0 - BETA1.powi(t as i32);
    let c2 = 1.0 - BETA2.powi(t as i32);
    let p = param.data_mut();
    let m = moments.m.data_mut();
    let v = moments.v.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] = p[i] * decay - eta * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// Optimizer state over the trainable part of a registry.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    params: Vec<Option<Moments>>,
    prompt: Option<Moments>,
}

impl AdamState {
    pub fn new(reg: &ParamRegistry, trainable: &TrainableSet) -> Self {
        let params = reg
            .entries()
            .iter()
            .zip(&trainable.params)
            .map(|(p, &t)| t.then(|| Moments::zeros_like(&p.value)))
            .collect();
        let prompt = match (reg.prompt(), trainable.prompt) {
            (Some(p), true) => Some(Moments::zeros_like(p.values())),
            _ => None,
        };
        Self {
            step: 0,
            params,
            prompt,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

fn check_grad(name: &str, param: &Tensor, grad: &Tensor) -> Result<()> {
    if param.shape() != grad.shape() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: param.shape().to_vec(),
            rhs: grad.shape().to_vec(),
        });
    }
    if grad.data().iter().any(|g| g.is_nan()) {
        return Err(Error::NanGradient(name.to_owned()));
    }
    Ok(())
}

/// Applies one step to every parameter that has both a gradient and optimizer
/// state. Gradients are validated up front so a NaN leaves the registry
/// untouched.
pub fn adam_step(
    reg: &mut ParamRegistry,
    grads: &ParamGrads,
    state: &mut AdamState,
    eta: f64,
    lambda: f64,
) -> Result<()> {
    if grads.params.len() != reg.len() || state.params.len() != reg.len() {
        return Err(Error::InvalidArgument(format!(
            "registry has {} entries, gradients {} and optimizer state {}",
            reg.len(),
            grads.params.len(),
            state.params.len()
        )));
    }
    for (p, g) in reg.entries().iter().zip(&grads.params) {
        if let Some(g) = g {
            check_grad(&p.name, &p.value, g)?;
        }
    }
    if let (Some(p), Some(g)) = (reg.prompt(), &grads.prompt) {
        check_grad(crate::model::checkpoint::PROMPT_NAME, p.values(), g)?;
    }
    state.step += 1;
    let t = state.step;
    for ((p, g), m) in reg
        .entries_mut()
        .iter_mut()
        .zip(&grads.params)
        .zip(&mut state.params)
    {
        if let (Some(g), Some(m)) = (g, m) {
            adam_update(&mut p.value, g, m, t, eta, lambda);
        }
    }
    if let (Some(p), Some(g), Some(m)) = (reg.prompt_mut(), &grads.prompt, &mut state.prompt) {
        adam_update(p.values_mut(), g, m, t, eta, lambda);
    }
    Ok(())
}
