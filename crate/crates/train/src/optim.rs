//! AdamW with decoupled weight decay and global-norm gradient clipping.

use std::collections::BTreeMap;

use candle_core::Tensor;
use cxr_model::ParamStore;

use crate::Result;

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns `(pre_clip, post_clip)` norms, the latter measured after scaling.
pub fn clip_grad_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> Result<(f64, f64)> {
    let norm = global_norm(grads)?;
    if norm <= max_norm {
        return Ok((norm, norm));
    }
    let scale = max_norm / (norm + 1e-6);
    for g in grads.values_mut() {
        *g = g.affine(scale, 0.0)?;
    }
    Ok((norm, global_norm(grads)?))
}

fn global_norm(grads: &BTreeMap<String, Tensor>) -> Result<f64> {
    let mut sq = 0.0;
    for g in grads.values() {
        sq += g
            .sqr()?
            .sum_all()?
            .to_dtype(candle_core::DType::F64)?
            .to_scalar::<f64>()?;
    }
    Ok(sq.sqrt())
}

struct Moments {
    m: Tensor,
    v: Tensor,
    t: i32,
}

pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            state: BTreeMap::new(),
        }
    }

    /// One update of every parameter that has a gradient. Weight decay
    /// applies to matrices only, not to biases, norms or scalars.
    pub fn step(&mut self, params: &ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        for (name, g) in grads {
            let var = params
                .var(name)
                .ok_or_else(|| cxr_model::ModelError::UnknownParam(name.clone()))?;
            let g = g.detach();
            let st = match self.state.get_mut(name) {
                Some(st) => st,
                None => self.state.entry(name.clone()).or_insert(Moments {
                    m: g.zeros_like()?,
                    v: g.zeros_like()?,
                    t: 0,
                }),
            };
            st.t += 1;
            st.m = ((&st.m * self.beta1)? + (&g * (1.0 - self.beta1))?)?;
            st.v = ((&st.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&st.m / (1.0 - self.beta1.powi(st.t)))?;
            let v_hat = (&st.v / (1.0 - self.beta2.powi(st.t)))?;
            let mut update = m_hat.broadcast_div(&(v_hat.sqrt()? + self.eps)?)?;
            let p = var.as_tensor().detach();
            if p.rank() >= 2 && self.weight_decay > 0.0 {
                update = (update + (&p * self.weight_decay)?)?;
            }
            var.set(&(p - (update * lr)?)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};
    use cxr_model::{Component, Model, ModelConfig};

    #[test]
    fn clipping_bounds_norm() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), Tensor::new(&[3.0f32, 4.0], &Device::Cpu).unwrap());
        let (pre, post) = clip_grad_norm(&mut g, 1.0).unwrap();
        assert!((pre - 5.0).abs() < 1e-6);
        assert!(post <= 1.0 && post > 0.999);
        let (pre, post) = clip_grad_norm(&mut g, 2.0).unwrap();
        assert_eq!(pre, post);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // With bias correction the first Adam step is lr * sign(g) (up to eps).
        let mut m = Model::new(ModelConfig::tiny(), 0, DType::F64).unwrap();
        m.set_trainable(&[Component::Head].into());
        let before_t = m.params().values_f32("head.log_temperature").unwrap()[0] as f64;
        let before_w = m.params().var("projector.fc1.weight").unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mut grads = BTreeMap::new();
        grads.insert("head.log_temperature".to_string(), Tensor::new(&[0.5f64], &Device::Cpu).unwrap());
        let gw = Tensor::ones((8, 8), DType::F64, &Device::Cpu).unwrap().affine(-2.0, 0.0).unwrap();
        grads.insert("projector.fc1.weight".to_string(), gw);
        let mut opt = AdamW::new((0.9, 0.98), 1e-6, 0.1);
        opt.step(m.params(), &grads, 0.01).unwrap();
        let after_t = m.params().values_f32("head.log_temperature").unwrap()[0] as f64;
        // Scalars skip decay: delta = -lr * g / (|g| + eps).
        assert!((after_t - (before_t - 0.01 * 0.5 / (0.5 + 1e-6))).abs() < 1e-6);
        let after_w = m.params().var("projector.fc1.weight").unwrap().as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (a, b) in after_w.iter().zip(&before_w) {
            let want = b - 0.01 * (-2.0 / (2.0 + 1e-6) + 0.1 * b);
            assert!((a - want).abs() < 1e-12);
        }
    }
}
