//! Declarative layer descriptions and static shape inference.

use std::fmt;

use super::{conv::Padding, shape_err, NnError};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        padding: Padding,
    },
    Relu,
    SeBlock {
        channels: usize,
        reduction: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    /// Consumes `B × C × L` and emits the final hidden state `B × H`.
    Lstm {
        input_size: usize,
        hidden: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Softmax,
}

impl LayerSpec {
    /// Output shape for a given input shape, without executing the layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = |what: &str| shape_err("shape_inference", format!("{self}: {what}, input {input:?}"));
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel_len,
                padding,
            } => match input {
                &[b, c, l] if c == in_channels => {
                    let out = padding
                        .output_len(l, kernel_len)
                        .ok_or(NnError::TooShort { len: l, window: kernel_len })?;
                    Ok(vec![b, out_channels, out])
                }
                _ => Err(bad("expected B×Cin×L")),
            },
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
            LayerSpec::SeBlock { channels, .. } => match input {
                &[_, c, _] if c == channels => Ok(input.to_vec()),
                _ => Err(bad("expected B×C×L")),
            },
            LayerSpec::MaxPool { window, stride } => match input {
                &[b, c, l] => {
                    if l < window {
                        return Err(NnError::TooShort { len: l, window });
                    }
                    Ok(vec![b, c, (l - window) / stride + 1])
                }
                _ => Err(bad("expected B×C×L")),
            },
            LayerSpec::Lstm { input_size, hidden } => match input {
                &[b, c, _] if c == input_size => Ok(vec![b, hidden]),
                _ => Err(bad("expected B×C×L")),
            },
            LayerSpec::Dense {
                in_features,
                out_features,
            } => match input {
                &[b, n] if n == in_features => Ok(vec![b, out_features]),
                _ => Err(bad("expected B×N")),
            },
        }
    }

    /// Closed-form count of trainable scalars.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel_len,
                ..
            } => out_channels * in_channels * kernel_len + out_channels,
            LayerSpec::SeBlock { channels, reduction } => 2 * channels * (channels / reduction),
            LayerSpec::Lstm { input_size, hidden } => 4 * hidden * (input_size + hidden + 1),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => out_features * in_features + out_features,
            LayerSpec::Relu | LayerSpec::MaxPool { .. } | LayerSpec::Softmax => 0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::SeBlock { .. } => "se",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel_len,
                ..
            } => write!(f, "conv({in_channels}->{out_channels}, k={kernel_len})"),
            LayerSpec::SeBlock { channels, reduction } => write!(f, "se(C={channels}, r={reduction})"),
            LayerSpec::MaxPool { window, stride } => write!(f, "maxpool(w={window}, s={stride})"),
            LayerSpec::Lstm { input_size, hidden } => write!(f, "lstm({input_size}->{hidden})"),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => write!(f, "dense({in_features}->{out_features})"),
            other => f.write_str(other.kind()),
        }
    }
}
