use crate::error::{Error, Result};
use crate::model::{param_specs, ActParams, ParamSpec};
use crate::numerics::{Scalar, Tensor};

use super::TrainConfig;

/// Adam moments for every parameter tensor, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<F> {
    pub first: Vec<Tensor<F>>,
    pub second: Vec<Tensor<F>>,
    pub step: u64,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(params: &ActParams<F>) -> Self {
        let zeros: Vec<Tensor<F>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update.
///
/// Weight matrices are first shrunk by `1 − lr · wd`; biases, gains, the
/// class token and positional embeddings are never decayed.
pub fn adamw_step<F: Scalar>(
    params: &mut ActParams<F>,
    grads: &[Tensor<F>],
    state: &mut OptimizerState<F>,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    let specs: Vec<ParamSpec> = param_specs(&params.config);
    if grads.len() != specs.len() || state.first.len() != specs.len() {
        return Err(Error::Config(format!(
            "expected {} gradient tensors, got {}",
            specs.len(),
            grads.len()
        )));
    }
    for (spec, g) in specs.iter().zip(grads) {
        if g.shape() != spec.shape.as_slice() {
            return Err(Error::Shape {
                op: "adamw_step",
                lhs: spec.shape.clone(),
                rhs: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {} is not finite", spec.name)));
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (config.beta1, config.beta2);
    let correction1 = 1.0 - b1.powf(t);
    let correction2 = 1.0 - b2.powf(t);
    let (fb1, fb2) = (F::of(b1), F::of(b2));
    let (one_b1, one_b2) = (F::of(1.0 - b1), F::of(1.0 - b2));
    let step_size = F::of(lr / correction1);
    let inv_sqrt_c2 = F::of(1.0 / correction2.sqrt());
    let eps = F::of(config.adam_eps);
    let shrink = F::of(1.0 - lr * config.weight_decay);

    for (i, (p, spec)) in params.tensors_mut().into_iter().zip(&specs).enumerate() {
        let decay = spec.kind.decays() && config.weight_decay != 0.0;
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
            if decay {
                *w *= shrink;
            }
            *m = fb1 * *m + one_b1 * g;
            *v = fb2 * *v + one_b2 * g * g;
            *w -= step_size * *m / ((*v).sqrt() * inv_sqrt_c2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParamKind, Preset};

    fn setup() -> (ActParams<f64>, Vec<Tensor<f64>>, OptimizerState<f64>) {
        let cfg = ModelConfig::preset_with(Preset::Micro, 8, 3);
        let params = ActParams::<f64>::init(&cfg, 1).unwrap();
        let grads = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let state = OptimizerState::new(&params);
        (params, grads, state)
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let (mut params, grads, mut state) = setup();
        let before = params.clone();
        let config = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        adamw_step(&mut params, &grads, &mut state, 0.01, &config).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn decay_shrinks_weights_only() {
        let (mut params, grads, mut state) = setup();
        let before = params.clone();
        adamw_step(&mut params, &grads, &mut state, 0.01, &TrainConfig::default()).unwrap();
        let specs = param_specs(&params.config);
        for ((spec, a), b) in specs.iter().zip(params.tensors()).zip(before.tensors()) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                if spec.kind == ParamKind::Weight {
                    assert_eq!(x, y * (1.0 - 1e-6), "{}", spec.name);
                } else {
                    assert_eq!(x, y, "{}", spec.name);
                }
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let (mut params, mut grads, mut state) = setup();
        grads[5].data_mut()[0] = f64::NAN;
        let err = adamw_step(&mut params, &grads, &mut state, 0.01, &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("layers.0.query.bias"), "{err}");
    }
}
