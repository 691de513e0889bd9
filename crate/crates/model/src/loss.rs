//! Training objectives.

use candle_core::{Tensor, D};

use crate::layers::log_softmax;
use crate::{ModelError, Result};

/// Pairwise sigmoid contrastive loss for unit-norm embeddings `(N, d)`.
///
/// Logits are `exp(log_temperature) * <x_i, y_j> + bias`; pair `(i, i)` is
/// positive and every other pair negative. The result is the summed
/// log-sigmoid over all `N^2` pairs divided by `-N`.
pub fn siglip_loss(
    img: &Tensor,
    txt: &Tensor,
    log_temperature: &Tensor,
    bias: &Tensor,
) -> Result<Tensor> {
    let (n, _) = img.dims2()?;
    if n == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let sims = img.matmul(&txt.t()?)?;
    let logits = sims
        .broadcast_mul(&log_temperature.exp()?)?
        .broadcast_add(bias)?;
    let signs: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 1.0 } else { -1.0 })
        .collect();
    let signs = Tensor::from_vec(signs, (n, n), img.device())?.to_dtype(img.dtype())?;
    let u = (logits * signs)?;
    // log sigmoid(u) = min(u, 0) - log(1 + exp(-|u|)), stable for large |u|.
    let min0 = (&u - u.relu()?)?;
    let log_sig = (min0 - (u.abs()?.neg()?.exp()? + 1.0)?.log()?)?;
    Ok((log_sig.sum_all()? / -(n as f64))?)
}

/// Mean negative log-likelihood of `targets` under `logits`, over the
/// positions where `mask` is 1. Shapes: logits `(B, T, V)`, targets and
/// mask `(B, T)`.
pub fn lm_loss(logits: &Tensor, targets: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let count = mask.sum_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    if count <= 0.0 {
        return Err(ModelError::EmptyMask);
    }
    let logp = log_softmax(logits)?;
    let picked = logp
        .gather(&targets.unsqueeze(D::Minus1)?.contiguous()?, D::Minus1)?
        .squeeze(D::Minus1)?;
    Ok(((picked * mask)?.sum_all()? / -count)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn t(v: Vec<f64>, shape: &[usize]) -> Tensor {
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn siglip_single_pair_zero_logit_is_ln2() {
        let x = t(vec![1.0, 0.0], &[1, 2]);
        let y = t(vec![0.0, 1.0], &[1, 2]);
        let loss = siglip_loss(&x, &y, &t(vec![0.0], &[1]), &t(vec![0.0], &[1])).unwrap();
        let v = loss.to_scalar::<f64>().unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn siglip_initial_head_on_matched_pair() {
        // Identical unit vectors, t = 10, b = -10: logit 0 for the lone positive.
        let x = t(vec![0.6, 0.8], &[1, 2]);
        let loss = siglip_loss(&x, &x, &t(vec![10f64.ln()], &[1]), &t(vec![-10.0], &[1])).unwrap();
        assert!((loss.to_scalar::<f64>().unwrap() - 2f64.ln()).abs() < 1e-12);
        // Orthogonal pair: logit -10, loss = log(1 + e^10).
        let y = t(vec![0.8, -0.6], &[1, 2]);
        let loss = siglip_loss(&x, &y, &t(vec![10f64.ln()], &[1]), &t(vec![-10.0], &[1])).unwrap();
        let want = (1.0 + 10f64.exp()).ln();
        assert!((loss.to_scalar::<f64>().unwrap() - want).abs() < 1e-9);
        assert!((want - 10.0000454).abs() < 1e-6);
    }

    #[test]
    fn siglip_extreme_logits_stay_finite() {
        let x = t(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]);
        // Diagonal logits +e^8/2, off-diagonal -e^8/2.
        let loss = siglip_loss(&x, &x, &t(vec![8.0], &[1]), &t(vec![-(8f64.exp()) / 2.0], &[1])).unwrap();
        let v = loss.to_scalar::<f64>().unwrap();
        assert!(v.is_finite() && v < 1e-6);
    }

    #[test]
    fn lm_uniform_two_way_is_ln2() {
        let logits = t(vec![0.0, 0.0, 3.0, 1.0], &[1, 2, 2]);
        let targets = Tensor::from_vec(vec![1u32, 0], (1, 2), &Device::Cpu).unwrap();
        let mask = t(vec![1.0, 0.0], &[1, 2]);
        let v = lm_loss(&logits, &targets, &mask).unwrap().to_scalar::<f64>().unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lm_empty_mask_errors() {
        let logits = Tensor::zeros((1, 2, 3), DType::F64, &Device::Cpu).unwrap();
        let targets = Tensor::zeros((1, 2), DType::U32, &Device::Cpu).unwrap();
        let mask = Tensor::zeros((1, 2), DType::F64, &Device::Cpu).unwrap();
        assert!(matches!(lm_loss(&logits, &targets, &mask), Err(ModelError::EmptyMask)));
    }
}
