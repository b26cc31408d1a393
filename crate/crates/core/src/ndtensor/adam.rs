use super::{GradientSet, ParamStore, Tensor};
use crate::error::{Result, SaniError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(SaniError::ShapeMismatch {
            op: "adam_step",
            detail: format!(
                "{} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    for i in 0..params.len() {
        let p = params.get(i);
        if !p.same_shape(grads.get(i)) || !p.same_shape(&state.m[i]) || !p.same_shape(&state.v[i])
        {
            return Err(SaniError::ShapeMismatch {
                op: "adam_step",
                detail: format!("parameter {}", params.name(i)),
            });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - ADAM_BETA1.powf(t);
    let c2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..params.len() {
        let g = grads.get(i).data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.get_mut(i).data_mut();
        for j in 0..p.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            p[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("w", Tensor::scalar(value));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_moments() {
        let mut p = ParamStore::new();
        p.push("a", Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = GradientSet::zeros_like(&p);
        for _ in 0..10 {
            adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        }
        assert_eq!(p, before);
        assert!(st.m[0].data().iter().all(|&x| x == 0.0));
        assert!(st.v[0].data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        // With bias correction m̂ = g and v̂ = g² exactly, so each step is
        // lr · |g| / (|g| + eps).
        let lr = 1e-3;
        let g = 0.37;
        let mut p = single(0.0);
        let mut st = AdamState::new(&p);
        let grads = GradientSet::from_parts(vec!["w".into()], vec![Tensor::scalar(g)]);
        let mut prev = 0.0;
        for step in 0..500 {
            adam_step(&mut p, &grads, &mut st, lr).unwrap();
            let now = p.get(0).data()[0];
            let expected = lr * g / (g + ADAM_EPS);
            assert!(((prev - now) - expected).abs() < 1e-12, "step {step}");
            prev = now;
        }
        assert!((prev + 500.0 * lr).abs() < 1e-6);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut p = single(1.0);
        let mut st = AdamState::new(&p);
        let other = {
            let mut s = ParamStore::new();
            s.push("w", Tensor::zeros(&[2]));
            s
        };
        let g = GradientSet::zeros_like(&other);
        assert!(adam_step(&mut p, &g, &mut st, 0.1).is_err());
    }
}
