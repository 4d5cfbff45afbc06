//! 1-D convolution (cross-correlation, no kernel flip).

use std::collections::BTreeMap;

use super::{shape_err, GradBundle, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output length equals the input length. Odd kernels
    /// pad symmetrically; even kernels put the extra zero on the right.
    Same,
    Valid,
}

impl Padding {
    fn left(self, kernel_len: usize) -> usize {
        match self {
            Padding::Same => (kernel_len - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn output_len(self, len: usize, kernel_len: usize) -> Option<usize> {
        match self {
            Padding::Same => Some(len),
            Padding::Valid => len.checked_sub(kernel_len).map(|d| d + 1),
        }
    }
}

/// Weights are `out_channels × in_channels × kernel_len`; bias is
/// `out_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self, NnError> {
        let (out_c, _, _) = weights
            .dims3()
            .ok_or_else(|| shape_err("conv1d", "weights must be rank 3"))?;
        if bias.shape() != [out_c] {
            return Err(shape_err(
                "conv1d",
                format!("bias shape {:?}, expected [{out_c}]", bias.shape()),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_len(&self) -> usize {
        self.weights.shape()[2]
    }
}

fn check_input(x: &Tensor, p: &ConvParams, padding: Padding) -> Result<(usize, usize, usize, usize), NnError> {
    let (b, cin, len) = x
        .dims3()
        .ok_or_else(|| shape_err("conv1d", format!("input must be rank 3, got {:?}", x.shape())))?;
    if cin != p.in_channels() {
        return Err(NnError::ChannelMismatch {
            expected: p.in_channels(),
            actual: cin,
        });
    }
    let out_len = padding
        .output_len(len, p.kernel_len())
        .ok_or(NnError::TooShort {
            len,
            window: p.kernel_len(),
        })?;
    Ok((b, cin, len, out_len))
}

/// Range of output positions `i` for which input index `i + k − pad` is
/// inside `0..len`.
fn valid_range(k: usize, pad: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (len + pad).saturating_sub(k).min(out_len);
    (lo, hi.max(lo))
}

pub fn conv1d_forward(x: &Tensor, p: &ConvParams, padding: Padding) -> Result<Tensor, NnError> {
    let (batch, cin, len, out_len) = check_input(x, p, padding)?;
    let cout = p.out_channels();
    let klen = p.kernel_len();
    let pad = padding.left(klen);
    let w = p.weights.data();
    let mut out = vec![0.0; batch * cout * out_len];

    for b in 0..batch {
        let xb = x.batch_row(b);
        for o in 0..cout {
            let row = &mut out[(b * cout + o) * out_len..(b * cout + o + 1) * out_len];
            row.fill(p.bias.data()[o]);
            for c in 0..cin {
                let xr = &xb[c * len..(c + 1) * len];
                let wk = &w[(o * cin + c) * klen..(o * cin + c + 1) * klen];
                for (k, &wv) in wk.iter().enumerate() {
                    let (lo, hi) = valid_range(k, pad, len, out_len);
                    let src = &xr[lo + k - pad..hi + k - pad];
                    for (dst, &xv) in row[lo..hi].iter_mut().zip(src) {
                        *dst += wv * xv;
                    }
                }
            }
        }
    }
    Ok(Tensor::new(&[batch, cout, out_len], out)?)
}

/// Gradients named `weight` and `bias`.
pub fn conv1d_backward(
    x: &Tensor,
    p: &ConvParams,
    padding: Padding,
    grad_out: &Tensor,
) -> Result<GradBundle, NnError> {
    let (batch, cin, len, out_len) = check_input(x, p, padding)?;
    let cout = p.out_channels();
    if grad_out.shape() != [batch, cout, out_len] {
        return Err(shape_err(
            "conv1d_backward",
            format!(
                "grad_out shape {:?}, expected {:?}",
                grad_out.shape(),
                [batch, cout, out_len]
            ),
        ));
    }
    let klen = p.kernel_len();
    let pad = padding.left(klen);
    let w = p.weights.data();
    let mut dx = vec![0.0; batch * cin * len];
    let mut dw = vec![0.0; cout * cin * klen];
    let mut db = vec![0.0; cout];

    for b in 0..batch {
        let xb = x.batch_row(b);
        let gb = grad_out.batch_row(b);
        for o in 0..cout {
            let g = &gb[o * out_len..(o + 1) * out_len];
            db[o] += g.iter().sum::<f64>();
            for c in 0..cin {
                let xr = &xb[c * len..(c + 1) * len];
                let dxr = &mut dx[(b * cin + c) * len..(b * cin + c + 1) * len];
                let base = (o * cin + c) * klen;
                for k in 0..klen {
                    let (lo, hi) = valid_range(k, pad, len, out_len);
                    let wv = w[base + k];
                    let mut acc = 0.0;
                    for (i, &gv) in g[lo..hi].iter().enumerate() {
                        let j = lo + i + k - pad;
                        acc += gv * xr[j];
                        dxr[j] += gv * wv;
                    }
                    dw[base + k] += acc;
                }
            }
        }
    }

    let mut param_grads = BTreeMap::new();
    param_grads.insert(
        "weight".to_string(),
        Tensor::new(p.weights.shape(), dw)?,
    );
    param_grads.insert("bias".to_string(), Tensor::new(&[cout], db)?);
    Ok(GradBundle {
        input_grad: Tensor::new(x.shape(), dx)?,
        param_grads,
    })
}
