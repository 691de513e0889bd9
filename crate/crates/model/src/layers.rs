//! Transformer building blocks written against candle primitives.

use candle_core::{DType, Device, Tensor, D};

use crate::params::{Init, ParamStore};
use crate::Result;

/// Large negative additive mask value; exp() of it underflows to zero.
pub(crate) const NEG_INF: f64 = -1e9;

pub(crate) fn add_linear(p: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Result<()> {
    let std = (fan_in as f64).sqrt().recip();
    p.insert(&format!("{name}.weight"), &[fan_out, fan_in], init.normal(fan_in * fan_out, std))?;
    p.insert(&format!("{name}.bias"), &[fan_out], vec![0.0; fan_out])
}

pub(crate) fn add_layer_norm(p: &mut ParamStore, name: &str, dim: usize) -> Result<()> {
    p.insert(&format!("{name}.gain"), &[dim], vec![1.0; dim])?;
    p.insert(&format!("{name}.shift"), &[dim], vec![0.0; dim])
}

pub(crate) fn add_block(p: &mut ParamStore, init: &mut Init, name: &str, dim: usize) -> Result<()> {
    add_layer_norm(p, &format!("{name}.ln1"), dim)?;
    add_linear(p, init, &format!("{name}.attn.qkv"), dim, 3 * dim)?;
    add_linear(p, init, &format!("{name}.attn.out"), dim, dim)?;
    add_layer_norm(p, &format!("{name}.ln2"), dim)?;
    add_linear(p, init, &format!("{name}.mlp.fc1"), dim, 4 * dim)?;
    add_linear(p, init, &format!("{name}.mlp.fc2"), 4 * dim, dim)
}

/// `x @ W^T + b` over the last dimension of `x`.
pub(crate) fn linear(p: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    let dims = x.dims().to_vec();
    let (fan_out, fan_in) = w.dims2()?;
    let lead: usize = dims[..dims.len() - 1].iter().product();
    let y = x
        .reshape((lead, fan_in))?
        .matmul(&w.t()?)?
        .broadcast_add(&b)?;
    let mut out_dims = dims;
    *out_dims.last_mut().expect("non-scalar input") = fan_out;
    Ok(y.reshape(out_dims)?)
}

pub(crate) fn layer_norm(p: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let gain = p.get(&format!("{name}.gain"))?;
    let shift = p.get(&format!("{name}.shift"))?;
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&var.affine(1.0, 1e-5)?.sqrt()?)?;
    Ok(normed.broadcast_mul(&gain)?.broadcast_add(&shift)?)
}

/// Softmax over the last dimension. The max shift is detached; it cancels in
/// the result so its gradient is zero anyway.
pub(crate) fn softmax(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub(crate) fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Multi-head self-attention. `mask` is additive and broadcastable to
/// `(batch, heads, T, T)`.
pub(crate) fn attention(p: &ParamStore, name: &str, x: &Tensor, heads: usize, mask: Option<&Tensor>) -> Result<Tensor> {
    let (b, t, d) = x.dims3()?;
    let hd = d / heads;
    let qkv = linear(p, &format!("{name}.qkv"), x)?;
    let split = |i: usize| -> Result<Tensor> {
        Ok(qkv
            .narrow(2, i * d, d)?
            .reshape((b, t, heads, hd))?
            .transpose(1, 2)?
            .contiguous()?)
    };
    let (q, k, v) = (split(0)?, split(1)?, split(2)?);
    let mut scores = q.matmul(&k.t()?.contiguous()?)?.affine((hd as f64).sqrt().recip(), 0.0)?;
    if let Some(m) = mask {
        scores = scores.broadcast_add(m)?;
    }
    let out = softmax(&scores)?
        .matmul(&v)?
        .transpose(1, 2)?
        .contiguous()?
        .reshape((b, t, d))?;
    linear(p, &format!("{name}.out"), &out)
}

/// Pre-norm transformer block.
pub(crate) fn block(p: &ParamStore, name: &str, x: &Tensor, heads: usize, mask: Option<&Tensor>) -> Result<Tensor> {
    let h = layer_norm(p, &format!("{name}.ln1"), x)?;
    let x = (x + attention(p, &format!("{name}.attn"), &h, heads, mask)?)?;
    let h = layer_norm(p, &format!("{name}.ln2"), &x)?;
    let h = linear(p, &format!("{name}.mlp.fc1"), &h)?.gelu_erf()?;
    let h = linear(p, &format!("{name}.mlp.fc2"), &h)?;
    Ok((x + h)?)
}

/// `(T, T)` additive mask letting position i see positions j <= i.
pub(crate) fn causal_mask(t: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let v: Vec<f64> = (0..t)
        .flat_map(|i| (0..t).map(move |j| if j <= i { 0.0 } else { NEG_INF }))
        .collect();
    Ok(Tensor::from_vec(v, (t, t), device)?.to_dtype(dtype)?)
}

/// Rows scaled to unit L2 norm.
pub(crate) fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(D::Minus1)?.affine(1.0, 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}
