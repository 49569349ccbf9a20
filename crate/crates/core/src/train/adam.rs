//! Adam with bias-corrected moments.
//!
//! ```text
//! t ← t + 1
//! m ← β₁·m + (1 − β₁)·g
//! v ← β₂·v + (1 − β₂)·g²
//! θ ← θ − α·m̂ / (√v̂ + ε)      m̂ = m / (1 − β₁ᵗ),  v̂ = v / (1 − β₂ᵗ)
//! ```

use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::tensor::Tensor;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ModelParams) -> Self {
        let mut zeros = ModelParams::new();
        for (name, t) in params.iter() {
            zeros.insert(name, Tensor::zeros(t.shape()));
        }
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// Applies one update in place. Gradients are validated before anything is
/// modified; a non-finite entry aborts with the parameter's name.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads.get(name)?;
        if g.shape() != p.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::Diverged {
                what: format!("non-finite gradient for `{name}`"),
                partial: None,
            });
        }
    }

    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bias1 = 1.0 - b1.powf(state.t as f64);
    let bias2 = 1.0 - b2.powf(state.t as f64);
    for (name, p) in params.iter_mut() {
        let g = grads.get(name)?.data();
        let m = state.m.get_mut(name)?.data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
        }
        let v = state.v.get_mut(name)?.data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        }
        let (m, v) = (state.m.get(name)?.data(), state.v.get(name)?.data());
        for ((theta, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(v: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("w", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let cfg = TrainConfig::default();
        let mut params = scalar_params(0.25);
        let mut state = AdamState::new(&params);
        state.m.get_mut("w").unwrap().data_mut()[0] = 0.0;
        adam_step(&mut params, &scalar_params(0.0), &mut state, &cfg).unwrap();
        assert_eq!(params.get("w").unwrap().data(), &[0.25]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let cfg = TrainConfig::default();
        let mut params = scalar_params(1.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &scalar_params(2.0), &mut state, &cfg).unwrap();
        let (m1, v1) = (
            state.m.get("w").unwrap().data()[0],
            state.v.get("w").unwrap().data()[0],
        );
        let before = params.clone();
        // Moments are non-zero now, so a zero gradient still moves θ; only
        // the moment decay is checked here.
        adam_step(&mut params, &scalar_params(0.0), &mut state, &cfg).unwrap();
        assert_eq!(state.m.get("w").unwrap().data()[0], 0.9 * m1);
        assert_eq!(state.v.get("w").unwrap().data()[0], 0.999 * v1);
        assert_ne!(params, before);
    }

    #[test]
    fn first_unit_step_is_learning_rate() {
        let cfg = TrainConfig::default();
        let mut params = scalar_params(0.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &scalar_params(1.0), &mut state, &cfg).unwrap();
        let update = params.get("w").unwrap().data()[0];
        assert!((update - (-0.001 / (1.0 + 1e-8))).abs() < 1e-12, "{update}");
    }

    #[test]
    fn second_constant_step_stays_near_learning_rate() {
        let cfg = TrainConfig::default();
        let mut params = scalar_params(0.0);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &scalar_params(1.0), &mut state, &cfg).unwrap();
        let after_one = params.get("w").unwrap().data()[0];
        adam_step(&mut params, &scalar_params(1.0), &mut state, &cfg).unwrap();
        let step2 = (params.get("w").unwrap().data()[0] - after_one).abs();
        assert!(step2 > 0.0009 && step2 < 0.0011, "{step2}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let cfg = TrainConfig::default();
        let mut params = scalar_params(0.0);
        let mut state = AdamState::new(&params);
        let err = adam_step(&mut params, &scalar_params(f64::NAN), &mut state, &cfg).unwrap_err();
        assert!(
            matches!(&err, Error::Diverged { what, .. } if what.contains("`w`")),
            "{err}"
        );
        assert_eq!(state.t, 0);
    }
}
