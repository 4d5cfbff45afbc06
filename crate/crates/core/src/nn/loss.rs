use super::{shape_err, NnError};
use crate::tensor::Tensor;

/// Row-wise softmax of a `B × K` tensor, stabilised by subtracting the row
/// maximum.
pub fn softmax(x: &Tensor) -> Result<Tensor, NnError> {
    let (_, k) = x
        .dims2()
        .ok_or_else(|| shape_err("softmax", format!("input must be rank 2, got {:?}", x.shape())))?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    Ok(Tensor::new(x.shape(), out)?)
}

/// Mean negative log-likelihood of `labels` under `probs`, and its gradient
/// with respect to the pre-softmax logits, `(probs − onehot) / B`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let (batch, k) = probs
        .dims2()
        .ok_or_else(|| shape_err("cross_entropy", "probabilities must be rank 2"))?;
    if labels.len() != batch {
        return Err(shape_err(
            "cross_entropy",
            format!("{} labels for batch of {batch}", labels.len()),
        ));
    }
    let mut grad = probs.data().to_vec();
    let mut loss = 0.0;
    let inv = 1.0 / batch as f64;
    for (b, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(NnError::LabelOutOfRange { label, classes: k });
        }
        let p = probs.data()[b * k + label];
        loss -= p.max(f64::MIN_POSITIVE).ln();
        grad[b * k + label] -= 1.0;
    }
    for g in &mut grad {
        *g *= inv;
    }
    loss *= inv;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("cross-entropy loss"));
    }
    Ok((loss, Tensor::new(probs.shape(), grad)?))
}
