use std::collections::BTreeMap;

use super::{matmul_ab_acc, matmul_abt_acc, matmul_atb_acc, shape_err, GradBundle, NnError};
use crate::tensor::Tensor;

/// Fully connected layer: `weights` is `out × in`, `bias` is `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self, NnError> {
        let (m, _) = weights
            .dims2()
            .ok_or_else(|| shape_err("dense", "weights must be rank 2"))?;
        if bias.shape() != [m] {
            return Err(shape_err("dense", format!("bias shape {:?}, expected [{m}]", bias.shape())));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }
}

fn check(x: &Tensor, p: &DenseParams) -> Result<usize, NnError> {
    match x.dims2() {
        Some((b, n)) if n == p.in_features() => Ok(b),
        _ => Err(shape_err(
            "dense",
            format!("input {:?} does not match weights {:?}", x.shape(), p.weights.shape()),
        )),
    }
}

/// `x · Wᵀ + b` for `x` of shape `B × N`.
pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<Tensor, NnError> {
    let batch = check(x, p)?;
    let m = p.out_features();
    let mut out: Vec<f64> = (0..batch).flat_map(|_| p.bias.data().iter().copied()).collect();
    matmul_abt_acc(x.data(), p.weights.data(), p.in_features(), &mut out);
    Ok(Tensor::new(&[batch, m], out)?)
}

pub fn dense_backward(x: &Tensor, p: &DenseParams, grad_out: &Tensor) -> Result<GradBundle, NnError> {
    let batch = check(x, p)?;
    let (m, n) = (p.out_features(), p.in_features());
    if grad_out.shape() != [batch, m] {
        return Err(shape_err(
            "dense_backward",
            format!("grad_out {:?}, expected {:?}", grad_out.shape(), [batch, m]),
        ));
    }
    let g = grad_out.data();
    let mut dx = vec![0.0; batch * n];
    matmul_ab_acc(g, p.weights.data(), m, n, &mut dx);
    let mut dw = vec![0.0; m * n];
    matmul_atb_acc(g, x.data(), m, n, &mut dw);
    let mut db = vec![0.0; m];
    for row in g.chunks_exact(m) {
        for (d, &v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    let mut param_grads = BTreeMap::new();
    param_grads.insert("weight".to_string(), Tensor::new(&[m, n], dw)?);
    param_grads.insert("bias".to_string(), Tensor::new(&[m], db)?);
    Ok(GradBundle {
        input_grad: Tensor::new(&[batch, n], dx)?,
        param_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let p = DenseParams::new(
            Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[2]),
        )
        .unwrap();
        let x = Tensor::new(&[1, 2], vec![-3.0, 4.5]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn hand_affine() {
        let p = DenseParams::new(
            Tensor::new(&[2, 2], vec![1.0, 1.0, 0.0, 1.0]).unwrap(),
            Tensor::vector(vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let x = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn mismatch() {
        let p = DenseParams::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])).unwrap();
        let x = Tensor::zeros(&[1, 2]);
        assert!(matches!(dense_forward(&x, &p), Err(NnError::Shape { .. })));
    }
}
