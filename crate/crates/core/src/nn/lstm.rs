//! Single-layer LSTM over the length axis of a `B × C × L` feature map.
//!
//! Each of the `L` positions is one timestep with `C` input features. Gate
//! rows in the weight matrices are stacked in the order input, forget,
//! cell candidate, output. Initial hidden and cell states are zero.

use std::collections::BTreeMap;

use super::activation::sigmoid_scalar;
use super::{matmul_ab_acc, matmul_abt_acc, matmul_atb_acc, shape_err, GradBundle, NnError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4H × C`
    pub input_weights: Tensor,
    /// `4H × H`
    pub recurrent_weights: Tensor,
    /// `4H`
    pub bias: Tensor,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(input_weights: Tensor, recurrent_weights: Tensor, bias: Tensor) -> Result<Self, NnError> {
        let (rows, _) = input_weights
            .dims2()
            .ok_or_else(|| shape_err("lstm", "input weights must be rank 2"))?;
        if rows % 4 != 0 {
            return Err(shape_err("lstm", format!("{rows} gate rows is not a multiple of 4")));
        }
        let hidden = rows / 4;
        if recurrent_weights.shape() != [rows, hidden] || bias.shape() != [rows] {
            return Err(shape_err(
                "lstm",
                format!(
                    "recurrent {:?} / bias {:?} inconsistent with hidden size {hidden}",
                    recurrent_weights.shape(),
                    bias.shape()
                ),
            ));
        }
        Ok(Self {
            input_weights,
            recurrent_weights,
            bias,
            hidden,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.shape()[1]
    }
}

/// Forward results plus everything the backward pass reuses.
#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// Hidden state at every step, `B × H × L`.
    pub hidden_seq: Tensor,
    /// `h_L`, `B × H`.
    pub final_hidden: Tensor,
    steps: usize,
    batch: usize,
    /// Per step, activated gates `B × 4H`.
    gates: Vec<Vec<f64>>,
    /// Per step, cell state after the update, `B × H`.
    cells: Vec<Vec<f64>>,
    /// Per step, hidden state after the update, `B × H`.
    hiddens: Vec<Vec<f64>>,
}

fn check(x: &Tensor, p: &LstmParams) -> Result<(usize, usize, usize), NnError> {
    match x.dims3() {
        Some((b, c, l)) if c == p.input_size() => Ok((b, c, l)),
        _ => Err(shape_err(
            "lstm",
            format!("input {:?} does not match {} input features", x.shape(), p.input_size()),
        )),
    }
}

/// Gathers timestep `t` of `x` into a dense `B × C` buffer.
fn step_input(x: &Tensor, t: usize, out: &mut [f64]) {
    let (b, c, l) = x.dims3().unwrap();
    let d = x.data();
    for bi in 0..b {
        for ci in 0..c {
            out[bi * c + ci] = d[(bi * c + ci) * l + t];
        }
    }
}

pub fn lstm_forward(x: &Tensor, p: &LstmParams) -> Result<LstmOutput, NnError> {
    let (batch, c, steps) = check(x, p)?;
    let h = p.hidden;
    let mut xt = vec![0.0; batch * c];
    let mut h_prev = vec![0.0; batch * h];
    let mut c_prev = vec![0.0; batch * h];
    let mut gates_all = Vec::with_capacity(steps);
    let mut cells = Vec::with_capacity(steps);
    let mut hiddens = Vec::with_capacity(steps);

    for t in 0..steps {
        step_input(x, t, &mut xt);
        let mut gates: Vec<f64> = (0..batch).flat_map(|_| p.bias.data().iter().copied()).collect();
        matmul_abt_acc(&xt, p.input_weights.data(), c, &mut gates);
        matmul_abt_acc(&h_prev, p.recurrent_weights.data(), h, &mut gates);

        let mut c_t = vec![0.0; batch * h];
        let mut h_t = vec![0.0; batch * h];
        for b in 0..batch {
            let g = &mut gates[b * 4 * h..(b + 1) * 4 * h];
            for j in 0..h {
                let i_gate = sigmoid_scalar(g[j]);
                let f_gate = sigmoid_scalar(g[h + j]);
                let cand = g[2 * h + j].tanh();
                let o_gate = sigmoid_scalar(g[3 * h + j]);
                g[j] = i_gate;
                g[h + j] = f_gate;
                g[2 * h + j] = cand;
                g[3 * h + j] = o_gate;
                let cell = f_gate * c_prev[b * h + j] + i_gate * cand;
                c_t[b * h + j] = cell;
                h_t[b * h + j] = o_gate * cell.tanh();
            }
        }
        gates_all.push(gates);
        cells.push(c_t.clone());
        hiddens.push(h_t.clone());
        h_prev = h_t;
        c_prev = c_t;
    }

    let mut seq = vec![0.0; batch * h * steps];
    for (t, ht) in hiddens.iter().enumerate() {
        for b in 0..batch {
            for j in 0..h {
                seq[(b * h + j) * steps + t] = ht[b * h + j];
            }
        }
    }
    Ok(LstmOutput {
        hidden_seq: Tensor::new(&[batch, h, steps], seq)?,
        final_hidden: Tensor::new(&[batch, h], h_prev)?,
        steps,
        batch,
        gates: gates_all,
        cells,
        hiddens,
    })
}

/// Backpropagation through time.
///
/// `grad_final` is the gradient with respect to `h_L`; `grad_seq`, when
/// present, adds a gradient for every step's hidden state (`B × H × L`).
/// Parameter gradients are named `input_weights`, `recurrent_weights` and
/// `bias`.
pub fn lstm_backward(
    x: &Tensor,
    p: &LstmParams,
    out: &LstmOutput,
    grad_final: &Tensor,
    grad_seq: Option<&Tensor>,
) -> Result<GradBundle, NnError> {
    let (batch, c, steps) = check(x, p)?;
    let h = p.hidden;
    if out.steps != steps || out.batch != batch {
        return Err(shape_err("lstm_backward", "forward cache does not match input"));
    }
    if grad_final.shape() != [batch, h] {
        return Err(shape_err(
            "lstm_backward",
            format!("grad_final {:?}, expected {:?}", grad_final.shape(), [batch, h]),
        ));
    }
    if let Some(gs) = grad_seq {
        if gs.shape() != [batch, h, steps] {
            return Err(shape_err("lstm_backward", "grad_seq shape mismatch"));
        }
    }

    let mut dw_ih = vec![0.0; 4 * h * c];
    let mut dw_hh = vec![0.0; 4 * h * h];
    let mut db = vec![0.0; 4 * h];
    let mut dx = vec![0.0; batch * c * steps];

    let mut dh_carry = grad_final.data().to_vec();
    let mut dc_carry = vec![0.0; batch * h];
    let mut xt = vec![0.0; batch * c];
    let zeros = vec![0.0; batch * h];

    for t in (0..steps).rev() {
        if let Some(gs) = grad_seq {
            let d = gs.data();
            for b in 0..batch {
                for j in 0..h {
                    dh_carry[b * h + j] += d[(b * h + j) * steps + t];
                }
            }
        }
        let gates = &out.gates[t];
        let c_t = &out.cells[t];
        let c_prev = if t > 0 { &out.cells[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &out.hiddens[t - 1] } else { &zeros };

        let mut da = vec![0.0; batch * 4 * h];
        for b in 0..batch {
            let g = &gates[b * 4 * h..(b + 1) * 4 * h];
            let d = &mut da[b * 4 * h..(b + 1) * 4 * h];
            for j in 0..h {
                let k = b * h + j;
                let (ig, fg, cand, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = c_t[k].tanh();
                let dh = dh_carry[k];
                let dc = dc_carry[k] + dh * og * (1.0 - tc * tc);
                d[j] = dc * cand * ig * (1.0 - ig);
                d[h + j] = dc * c_prev[k] * fg * (1.0 - fg);
                d[2 * h + j] = dc * ig * (1.0 - cand * cand);
                d[3 * h + j] = dh * tc * og * (1.0 - og);
                dc_carry[k] = dc * fg;
            }
        }

        step_input(x, t, &mut xt);
        matmul_atb_acc(&da, &xt, 4 * h, c, &mut dw_ih);
        matmul_atb_acc(&da, h_prev, 4 * h, h, &mut dw_hh);
        for row in da.chunks_exact(4 * h) {
            for (acc, &v) in db.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut dxt = vec![0.0; batch * c];
        matmul_ab_acc(&da, p.input_weights.data(), 4 * h, c, &mut dxt);
        for b in 0..batch {
            for ci in 0..c {
                dx[(b * c + ci) * steps + t] = dxt[b * c + ci];
            }
        }
        dh_carry.fill(0.0);
        matmul_ab_acc(&da, p.recurrent_weights.data(), 4 * h, h, &mut dh_carry);
    }

    let mut param_grads = BTreeMap::new();
    param_grads.insert("input_weights".to_string(), Tensor::new(&[4 * h, c], dw_ih)?);
    param_grads.insert("recurrent_weights".to_string(), Tensor::new(&[4 * h, h], dw_hh)?);
    param_grads.insert("bias".to_string(), Tensor::new(&[4 * h], db)?);
    Ok(GradBundle {
        input_grad: Tensor::new(x.shape(), dx)?,
        param_grads,
    })
}
