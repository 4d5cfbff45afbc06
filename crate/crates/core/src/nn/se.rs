//! Squeeze-and-excitation channel attention for 1-D feature maps.
//!
//! squeeze: per-channel mean over the length axis, `z[b,c] = mean_i u[b,c,i]`.
//! excite:  `s = sigmoid(W2 · relu(W1 · z))`, no biases.
//! scale:   `out[b,c,i] = s[b,c] · u[b,c,i]`.

use std::collections::BTreeMap;

use super::activation::sigmoid_scalar;
use super::{matmul_ab_acc, matmul_abt_acc, matmul_atb_acc, shape_err, GradBundle, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SeParams {
    /// `C/r × C`
    pub w1: Tensor,
    /// `C × C/r`
    pub w2: Tensor,
    pub reduction: usize,
}

impl SeParams {
    pub fn new(w1: Tensor, w2: Tensor, reduction: usize) -> Result<Self, NnError> {
        let (hidden, channels) = w1
            .dims2()
            .ok_or_else(|| shape_err("se", "w1 must be rank 2"))?;
        if reduction == 0 || channels % reduction != 0 || channels / reduction != hidden {
            return Err(NnError::Config(format!(
                "w1 is {hidden}×{channels}, inconsistent with reduction ratio {reduction}"
            )));
        }
        if w2.shape() != [channels, hidden] {
            return Err(shape_err(
                "se",
                format!("w2 shape {:?}, expected {:?}", w2.shape(), [channels, hidden]),
            ));
        }
        Ok(Self { w1, w2, reduction })
    }

    pub fn channels(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }
}

pub fn se_squeeze(u: &Tensor) -> Result<Tensor, NnError> {
    let (b, c, len) = u
        .dims3()
        .ok_or_else(|| shape_err("se_squeeze", format!("input must be rank 3, got {:?}", u.shape())))?;
    let z = u
        .data()
        .chunks_exact(len)
        .map(|ch| ch.iter().sum::<f64>() / len as f64)
        .collect();
    Ok(Tensor::new(&[b, c], z)?)
}

/// Spreads `grad_z / L` uniformly over each channel.
pub fn se_squeeze_backward(input_shape: &[usize], grad_z: &Tensor) -> Result<Tensor, NnError> {
    let [b, c, len] = input_shape[..] else {
        return Err(shape_err("se_squeeze_backward", "input shape must be rank 3"));
    };
    if grad_z.shape() != [b, c] {
        return Err(shape_err(
            "se_squeeze_backward",
            format!("grad shape {:?}, expected {:?}", grad_z.shape(), [b, c]),
        ));
    }
    let inv = 1.0 / len as f64;
    let data = grad_z
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * inv, len))
        .collect();
    Ok(Tensor::new(input_shape, data)?)
}

/// Intermediate values of the excitation needed by its backward pass.
#[derive(Debug, Clone)]
pub struct ExciteCache {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    pub s: Tensor,
}

fn check_z(z: &Tensor, p: &SeParams) -> Result<usize, NnError> {
    match z.dims2() {
        Some((b, c)) if c == p.channels() => Ok(b),
        _ => Err(shape_err(
            "se_excite",
            format!("z shape {:?} does not match {} channels", z.shape(), p.channels()),
        )),
    }
}

/// Returns `s` (every entry in `(0, 1)`) and the cache for backward.
pub fn se_excite(z: &Tensor, p: &SeParams) -> Result<ExciteCache, NnError> {
    let batch = check_z(z, p)?;
    let (c, h) = (p.channels(), p.hidden());
    let mut hidden_pre = vec![0.0; batch * h];
    matmul_abt_acc(z.data(), p.w1.data(), c, &mut hidden_pre);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let mut logits = vec![0.0; batch * c];
    matmul_abt_acc(&hidden, p.w2.data(), h, &mut logits);
    let s = logits.into_iter().map(sigmoid_scalar).collect();
    Ok(ExciteCache {
        hidden_pre,
        hidden,
        s: Tensor::new(&[batch, c], s)?,
    })
}

/// Gradients named `w1` and `w2`; `input_grad` is with respect to `z`.
pub fn se_excite_backward(
    z: &Tensor,
    p: &SeParams,
    cache: &ExciteCache,
    grad_s: &Tensor,
) -> Result<GradBundle, NnError> {
    let batch = check_z(z, p)?;
    let (c, h) = (p.channels(), p.hidden());
    if grad_s.shape() != [batch, c] {
        return Err(shape_err("se_excite_backward", "grad_s shape mismatch"));
    }
    let d_logits: Vec<f64> = cache
        .s
        .data()
        .iter()
        .zip(grad_s.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    let mut dw2 = vec![0.0; c * h];
    matmul_atb_acc(&d_logits, &cache.hidden, c, h, &mut dw2);
    let mut d_hidden = vec![0.0; batch * h];
    matmul_ab_acc(&d_logits, p.w2.data(), c, h, &mut d_hidden);
    for (d, &pre) in d_hidden.iter_mut().zip(&cache.hidden_pre) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    let mut dw1 = vec![0.0; h * c];
    matmul_atb_acc(&d_hidden, z.data(), h, c, &mut dw1);
    let mut dz = vec![0.0; batch * c];
    matmul_ab_acc(&d_hidden, p.w1.data(), h, c, &mut dz);

    let mut param_grads = BTreeMap::new();
    param_grads.insert("w1".to_string(), Tensor::new(&[h, c], dw1)?);
    param_grads.insert("w2".to_string(), Tensor::new(&[c, h], dw2)?);
    Ok(GradBundle {
        input_grad: Tensor::new(&[batch, c], dz)?,
        param_grads,
    })
}

fn check_scale(u: &Tensor, s: &Tensor) -> Result<(usize, usize, usize), NnError> {
    match (u.dims3(), s.dims2()) {
        (Some((b, c, l)), Some((sb, sc))) if b == sb && c == sc => Ok((b, c, l)),
        _ => Err(shape_err(
            "se_scale",
            format!("u {:?} incompatible with s {:?}", u.shape(), s.shape()),
        )),
    }
}

pub fn se_scale(u: &Tensor, s: &Tensor) -> Result<Tensor, NnError> {
    let (_, _, len) = check_scale(u, s)?;
    let data = u
        .data()
        .chunks_exact(len)
        .zip(s.data())
        .flat_map(|(ch, &sc)| ch.iter().map(move |&v| v * sc))
        .collect();
    Ok(Tensor::new(u.shape(), data)?)
}

/// Returns `(grad_u, grad_s)`.
pub fn se_scale_backward(u: &Tensor, s: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor), NnError> {
    let (b, c, len) = check_scale(u, s)?;
    if grad_out.shape() != u.shape() {
        return Err(shape_err("se_scale_backward", "grad_out shape mismatch"));
    }
    let du = se_scale(grad_out, s)?;
    let ds = u
        .data()
        .chunks_exact(len)
        .zip(grad_out.data().chunks_exact(len))
        .map(|(uc, gc)| uc.iter().zip(gc).map(|(a, g)| a * g).sum())
        .collect();
    Ok((du, Tensor::new(&[b, c], ds)?))
}

#[derive(Debug, Clone)]
pub struct SeBlockCache {
    z: Tensor,
    excite: ExciteCache,
}

impl SeBlockCache {
    /// Channel weights `s` computed on the forward pass.
    pub fn scales(&self) -> &Tensor {
        &self.excite.s
    }
}

/// squeeze → excite → scale. Output shape equals input shape.
pub fn se_block_forward(u: &Tensor, p: &SeParams) -> Result<(Tensor, SeBlockCache), NnError> {
    let z = se_squeeze(u)?;
    let excite = se_excite(&z, p)?;
    let out = se_scale(u, &excite.s)?;
    Ok((out, SeBlockCache { z, excite }))
}

pub fn se_block_backward(
    u: &Tensor,
    p: &SeParams,
    cache: &SeBlockCache,
    grad_out: &Tensor,
) -> Result<GradBundle, NnError> {
    let (mut du, ds) = se_scale_backward(u, &cache.excite.s, grad_out)?;
    let excite = se_excite_backward(&cache.z, p, &cache.excite, &ds)?;
    du.add_assign(&se_squeeze_backward(u.shape(), &excite.input_grad)?);
    Ok(GradBundle {
        input_grad: du,
        param_grads: excite.param_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(c: usize, r: usize) -> SeParams {
        SeParams::new(Tensor::zeros(&[c / r, c]), Tensor::zeros(&[c, c / r]), r).unwrap()
    }

    #[test]
    fn squeeze_means() {
        let u = Tensor::new(&[1, 3, 4], [vec![7.0; 4], vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]].concat()).unwrap();
        assert_eq!(se_squeeze(&u).unwrap().data(), &[7.0, 2.5, 0.0]);
    }

    #[test]
    fn zero_weights_excite_to_half() {
        let z = Tensor::new(&[2, 4], vec![1.0, -2.0, 3.0, 9.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let cache = se_excite(&z, &zero_params(4, 2)).unwrap();
        assert!(cache.s.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn hand_excitation() {
        let p = SeParams::new(
            Tensor::new(&[1, 2], vec![1.0, 0.0]).unwrap(),
            Tensor::new(&[2, 1], vec![1.0, 0.0]).unwrap(),
            2,
        )
        .unwrap();
        let z = Tensor::new(&[1, 2], vec![1.0, 5.0]).unwrap();
        let s = se_excite(&z, &p).unwrap().s;
        assert!((s.data()[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(s.data()[1], 0.5);
    }

    #[test]
    fn scale_cases() {
        let u = Tensor::new(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        let half = Tensor::new(&[1, 1], vec![0.5]).unwrap();
        assert_eq!(se_scale(&u, &half).unwrap().data(), &[0.5, 1.0]);
        let ones = Tensor::full(&[1, 1], 1.0);
        assert_eq!(se_scale(&u, &ones).unwrap(), u);
        let zeros = Tensor::zeros(&[1, 1]);
        assert!(se_scale(&u, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn block_halves_with_zero_weights() {
        let u = Tensor::new(&[1, 2, 3], vec![2.0, 2.0, 2.0, -4.0, -4.0, -4.0]).unwrap();
        let (out, _) = se_block_forward(&u, &zero_params(2, 2)).unwrap();
        assert_eq!(out.shape(), u.shape());
        assert_eq!(out.data(), &[1.0, 1.0, 1.0, -2.0, -2.0, -2.0]);
    }

    #[test]
    fn reduction_must_divide_channels() {
        let err = SeParams::new(Tensor::zeros(&[1, 3]), Tensor::zeros(&[3, 1]), 2).unwrap_err();
        assert!(matches!(err, NnError::Config(_)));
    }

    #[test]
    fn excite_rejects_channel_mismatch() {
        let z = Tensor::zeros(&[1, 3]);
        assert!(se_excite(&z, &zero_params(4, 2)).is_err());
    }
}
