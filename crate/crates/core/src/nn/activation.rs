use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Masks `grad_out` wherever `x ≤ 0`.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    x.zip_map(grad_out, |v, g| if v > 0.0 { g } else { 0.0 })
}

/// Logistic function evaluated without overflow for large `|x|`.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Backward through a sigmoid given its output `s`.
pub fn sigmoid_backward(s: &Tensor, grad_out: &Tensor) -> Tensor {
    s.zip_map(grad_out, |s, g| g * s * (1.0 - s))
}
