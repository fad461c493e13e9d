use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, ParamGroup, MAX_LOG_TAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Learning rate per parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub encoder: f64,
    pub head: f64,
}

impl GroupRates {
    pub fn of(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Head => self.head,
        }
    }
}

/// First and second moments mirror the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

fn check_shapes(what: &str, a: &ModelParams, b: &ModelParams) -> Result<()> {
    for (x, y) in a.tensors().iter().zip(b.tensors().iter()) {
        if x.shape != y.shape {
            return Err(Error::Shape {
                what: format!("{what} tensor {}", x.name),
                expected: format!("{:?}", x.shape),
                got: format!("{:?}", y.shape),
            });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update. `log_tau` is clamped afterwards so the
/// temperature never exceeds 100.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    rates: &GroupRates,
    config: &AdamConfig,
) -> Result<()> {
    check_shapes("gradient", params, grads)?;
    check_shapes("first moment", params, &state.m)?;
    check_shapes("second moment", params, &state.v)?;
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    let (b1, b2) = (config.beta1, config.beta2);
    let g = grads.tensors();
    let m = state.m.tensors_mut();
    let v = state.v.tensors_mut();
    for (((p, g), m), v) in params.tensors_mut().into_iter().zip(g).zip(m).zip(v) {
        let lr = rates.of(p.group);
        for k in 0..p.data.len() {
            let gk = g.data[k];
            m.data[k] = b1 * m.data[k] + (1.0 - b1) * gk;
            v.data[k] = b2 * v.data[k] + (1.0 - b2) * gk * gk;
            let m_hat = m.data[k] / bc1;
            let v_hat = v.data[k] / bc2;
            p.data[k] -= lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    params.log_tau = params.log_tau.min(MAX_LOG_TAU);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;

    fn params() -> ModelParams {
        ModelParams::init(&ModelConfig::default(), 5, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
    }

    const RATES: GroupRates = GroupRates { encoder: 1e-5, head: 1e-3 };

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.log_tau = 0.5;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &RATES, &AdamConfig::default()).unwrap();
        let expected = -1e-3 * (0.5 / (0.5 + 1e-8));
        assert!((p.log_tau - before.log_tau - expected).abs() < 1e-15);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = params();
        let before = p.clone();
        let g = p.zeros_like();
        let mut s = AdamState::new(&p);
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut s, &RATES, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.t, 3);
    }

    #[test]
    fn groups_get_their_own_rates() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        for t in g.tensors_mut() {
            t.data.fill(0.25);
        }
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &RATES, &AdamConfig::default()).unwrap();
        let enc = before.text_mlp.hidden.weight[[0, 0]] - p.text_mlp.hidden.weight[[0, 0]];
        let head = before.proj_audio.shrink.weight[[0, 0]] - p.proj_audio.shrink.weight[[0, 0]];
        assert!((head / enc - 100.0).abs() < 1e-6, "ratio {}", head / enc);
    }

    #[test]
    fn temperature_is_clamped() {
        let mut p = params();
        p.log_tau = MAX_LOG_TAU;
        let mut g = p.zeros_like();
        g.log_tau = -1.0;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &RATES, &AdamConfig::default()).unwrap();
        assert_eq!(p.log_tau, MAX_LOG_TAU);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = params();
        let g = ModelParams::init(&ModelConfig::default(), 6, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        let mut s = AdamState::new(&p);
        assert!(matches!(
            adam_step(&mut p, &g, &mut s, &RATES, &AdamConfig::default()),
            Err(Error::Shape { .. })
        ));
    }
}
