use super::{shape_err, NnError};
use crate::tensor::Tensor;

/// Max pooling along the length axis of a `B × C × L` tensor.
///
/// Returns the pooled tensor and, for each output element, the flat index of
/// the input element that produced it (the first maximum on ties).
pub fn maxpool1d(x: &Tensor, window: usize, stride: usize) -> Result<(Tensor, Vec<usize>), NnError> {
    if window == 0 || stride == 0 {
        return Err(NnError::Config("pool window and stride must be positive".into()));
    }
    let (b, c, len) = x
        .dims3()
        .ok_or_else(|| shape_err("maxpool1d", format!("input must be rank 3, got {:?}", x.shape())))?;
    if len < window {
        return Err(NnError::TooShort { len, window });
    }
    let out_len = (len - window) / stride + 1;
    let data = x.data();
    let mut out = Vec::with_capacity(b * c * out_len);
    let mut indices = Vec::with_capacity(b * c * out_len);
    for row in 0..b * c {
        let base = row * len;
        for i in 0..out_len {
            let start = base + i * stride;
            let mut best = start;
            for j in start + 1..start + window {
                if data[j] > data[best] {
                    best = j;
                }
            }
            out.push(data[best]);
            indices.push(best);
        }
    }
    Ok((Tensor::new(&[b, c, out_len], out)?, indices))
}

/// Routes each output gradient to the input position that won the max.
pub fn maxpool1d_backward(
    input_shape: &[usize],
    indices: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor, NnError> {
    if indices.len() != grad_out.len() {
        return Err(shape_err(
            "maxpool1d_backward",
            format!("{} indices for {} gradients", indices.len(), grad_out.len()),
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in indices.iter().zip(grad_out.data()) {
        *d.get_mut(idx)
            .ok_or_else(|| shape_err("maxpool1d_backward", "argmax index out of range"))? += g;
    }
    Ok(dx)
}
