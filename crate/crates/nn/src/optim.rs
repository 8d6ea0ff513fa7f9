//! First-order optimizers. Both keep one moment buffer per parameter tensor,
//! allocated as zeros on the first step.

use serde::{Deserialize, Serialize};

use crate::network::Param;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsPropParams {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl RmsPropParams {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, rho: 0.9, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// One bias-corrected Adam update over flat parameter/gradient slices.
pub fn step_adam(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, hp: &AdamParams) {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
            v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            p[j] -= hp.lr * mh / (vh.sqrt() + hp.eps);
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RmsPropState {
    pub v: Vec<Vec<f64>>,
}

/// Plain (uncentered, momentum-free) RMSProp: `θ -= lr · g / sqrt(v + ε)`.
pub fn step_rmsprop(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut RmsPropState, hp: &RmsPropParams) {
    if state.v.is_empty() {
        state.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let v = &mut state.v[i];
        for j in 0..p.len() {
            v[j] = hp.rho * v[j] + (1.0 - hp.rho) * g[j] * g[j];
            p[j] -= hp.lr * g[j] / (v[j] + hp.eps).sqrt();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::Rmsprop),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::Rmsprop => "rmsprop",
        })
    }
}

/// Optimizer bound to a network's parameter list. Moments are kept in `f64`
/// regardless of the parameter type.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam(AdamParams, AdamState),
    RmsProp(RmsPropParams, RmsPropState),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Self::Adam(AdamParams::with_lr(lr), AdamState::default()),
            OptimizerKind::Rmsprop => Self::RmsProp(RmsPropParams::with_lr(lr), RmsPropState::default()),
        }
    }

    pub fn step<T: Real>(&mut self, params: &mut [Param<T>]) {
        let mut values: Vec<Vec<f64>> =
            params.iter().map(|p| p.value.data().iter().map(|v| v.as_f64()).collect()).collect();
        let grads: Vec<Vec<f64>> = params.iter().map(|p| p.grad.data().iter().map(|v| v.as_f64()).collect()).collect();
        {
            let mut views: Vec<&mut [f64]> = values.iter_mut().map(|v| v.as_mut_slice()).collect();
            let gviews: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
            match self {
                Self::Adam(hp, st) => step_adam(&mut views, &gviews, st, hp),
                Self::RmsProp(hp, st) => step_rmsprop(&mut views, &gviews, st, hp),
            }
        }
        for (p, v) in params.iter_mut().zip(values) {
            for (dst, src) in p.value.data_mut().iter_mut().zip(v) {
                *dst = T::from_f64_lossy(src);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Scalar Adam written out longhand.
    fn adam_reference(theta: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut th) = (0.0, 0.0, theta);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            th -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        th
    }

    #[test]
    fn adam_first_step() {
        let mut p = vec![0.0];
        let mut st = AdamState::default();
        step_adam(&mut [p.as_mut_slice()], &[&[1.0]], &mut st, &AdamParams::with_lr(1e-4));
        assert!((p[0] - adam_reference(0.0, &[1.0], 1e-4)).abs() < 1e-18);
        assert!((p[0] + 9.99999e-5).abs() < 1e-10);
    }

    #[test]
    fn adam_matches_reference_over_steps() {
        let grads = [1.0, -0.5, 0.25, 2.0, -1.0];
        let mut p = vec![0.3];
        let mut st = AdamState::default();
        for &g in &grads {
            step_adam(&mut [p.as_mut_slice()], &[&[g]], &mut st, &AdamParams::with_lr(1e-3));
        }
        assert!((p[0] - adam_reference(0.3, &grads, 1e-3)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.7, -0.2];
        let mut st = AdamState::default();
        step_adam(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], &mut st, &AdamParams::with_lr(1e-2));
        assert_eq!(p, vec![0.7, -0.2]);
        let mut rs = RmsPropState::default();
        step_rmsprop(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], &mut rs, &RmsPropParams::with_lr(1e-2));
        assert_eq!(p, vec![0.7, -0.2]);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut p = vec![0.0];
        let mut st = RmsPropState::default();
        step_rmsprop(&mut [p.as_mut_slice()], &[&[1.0]], &mut st, &RmsPropParams::with_lr(1e-4));
        let want = -1e-4 / (0.1f64 + 1e-8).sqrt();
        assert!((p[0] - want).abs() < 1e-18);
        assert!((p[0] + 3.1623e-4).abs() < 1e-8);
    }

    #[test]
    fn rmsprop_decreases_convex_quadratic() {
        // f(θ) = Σ a_i (θ_i - c_i)², optimum at c.
        let a = [1.0, 3.0, 0.5];
        let c = [2.0, -1.0, 0.5];
        let f = |p: &[f64]| (0..3).map(|i| a[i] * (p[i] - c[i]).powi(2)).sum::<f64>();
        let mut p = vec![0.0; 3];
        let mut st = RmsPropState::default();
        let hp = RmsPropParams::with_lr(1e-2);
        let mut last = f(&p);
        for _ in 0..50 {
            let g: Vec<f64> = (0..3).map(|i| 2.0 * a[i] * (p[i] - c[i])).collect();
            step_rmsprop(&mut [p.as_mut_slice()], &[g.as_slice()], &mut st, &hp);
            let now = f(&p);
            assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = vec![0.1, 0.2];
            let mut st = AdamState::default();
            for k in 0..10 {
                let g = [(k as f64).sin(), (k as f64).cos()];
                step_adam(&mut [p.as_mut_slice()], &[&g], &mut st, &AdamParams::with_lr(1e-3));
            }
            p
        };
        assert_eq!(run(), run());
    }
}
