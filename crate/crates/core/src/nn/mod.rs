//! Layer kernels with hand-written forward and backward passes.
//!
//! Every kernel takes its parameters explicitly and returns plain tensors;
//! backward passes return a [`GradBundle`] holding the gradient with respect
//! to the layer input plus one gradient per named parameter.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::tensor::{ShapeError, Tensor};

pub mod activation;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod pool;
pub mod se;
pub mod shape;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_scalar};
pub use conv::{conv1d_backward, conv1d_forward, ConvParams, Padding};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub use gradcheck::{grad_check, relative_error};
pub use loss::{cross_entropy, softmax};
pub use lstm::{lstm_backward, lstm_forward, LstmOutput, LstmParams};
pub use pool::{maxpool1d, maxpool1d_backward};
pub use se::{
    se_block_backward, se_block_forward, se_excite, se_excite_backward, se_scale,
    se_scale_backward, se_squeeze, se_squeeze_backward, SeBlockCache, SeParams,
};
pub use shape::LayerSpec;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("channel mismatch: layer expects {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("sequence of length {len} is shorter than window {window}")]
    TooShort { len: usize, window: usize },
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] ShapeError),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::Shape {
        op,
        detail: detail.into(),
    }
}

/// Gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct GradBundle {
    pub input_grad: Tensor,
    pub param_grads: BTreeMap<String, Tensor>,
}

impl GradBundle {
    pub fn input_only(input_grad: Tensor) -> Self {
        Self {
            input_grad,
            param_grads: BTreeMap::new(),
        }
    }

    pub fn param(&self, name: &str) -> &Tensor {
        self.param_grads
            .get(name)
            .unwrap_or_else(|| panic!("no gradient named {name}"))
    }
}

/// `out[r, m] += Σ_n a[r, n] · b[m, n]` for row-major `a` (`rows × n`) and
/// `b` (`cols × n`).
pub(crate) fn matmul_abt_acc(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    let cols = b.len() / n;
    for (a_row, out_row) in a.chunks_exact(n).zip(out.chunks_exact_mut(cols)) {
        for (o, b_row) in out_row.iter_mut().zip(b.chunks_exact(n)) {
            *o += a_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[m, n] += Σ_r g[r, m] · a[r, n]`: the weight gradient of an affine map.
pub(crate) fn matmul_atb_acc(g: &[f64], a: &[f64], m: usize, n: usize, out: &mut [f64]) {
    for (g_row, a_row) in g.chunks_exact(m).zip(a.chunks_exact(n)) {
        for (&gv, out_row) in g_row.iter().zip(out.chunks_exact_mut(n)) {
            if gv == 0.0 {
                continue;
            }
            for (o, &av) in out_row.iter_mut().zip(a_row) {
                *o += gv * av;
            }
        }
    }
}

/// `out[r, n] += Σ_m g[r, m] · w[m, n]`: the input gradient of an affine map.
pub(crate) fn matmul_ab_acc(g: &[f64], w: &[f64], m: usize, n: usize, out: &mut [f64]) {
    for (g_row, out_row) in g.chunks_exact(m).zip(out.chunks_exact_mut(n)) {
        for (&gv, w_row) in g_row.iter().zip(w.chunks_exact(n)) {
            if gv == 0.0 {
                continue;
            }
            for (o, &wv) in out_row.iter_mut().zip(w_row) {
                *o += gv * wv;
            }
        }
    }
}
