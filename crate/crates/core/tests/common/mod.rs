#![allow(dead_code)]

use ecgnet::ingest::{compute_norm_stats, normalize};
use ecgnet::model::{ModelConfig, ModelGraph};
use ecgnet::nn::{self, grad_check, relative_error, ConvParams, DenseParams, LstmParams, NnError, Padding, SeParams};
use ecgnet::synth::SynthSpec;
use ecgnet::training::Dataset;
use ecgnet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LINEAR_TOL: f64 = 1e-7;
pub const NONLINEAR_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;
pub const SEEDS: u64 = 20;

const EPS: f64 = 1e-6;
/// Step for maps that are exactly linear in each perturbed coordinate: the
/// central difference has no truncation error there, so a wider step only
/// shrinks roundoff. Stays below the 0.1 margin kept around ReLU kinks.
const LINEAR_EPS: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(-scale..scale))
}

/// Entries bounded away from zero, so ReLU kinks stay out of reach of the
/// finite-difference step.
pub fn away_from_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = r.random_range(0.1..1.0);
        if r.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

pub struct LayerCheck {
    pub name: &'static str,
    pub linear: bool,
    pub check: fn(u64) -> Result<f64, NnError>,
}

impl LayerCheck {
    pub fn tolerance(&self) -> f64 {
        if self.linear {
            LINEAR_TOL
        } else {
            NONLINEAR_TOL
        }
    }

    /// Worst relative error over `seeds` seeds.
    pub fn worst(&self, seeds: u64) -> f64 {
        (0..seeds)
            .map(|s| (self.check)(s).unwrap_or_else(|e| panic!("{} seed {s}: {e}", self.name)))
            .fold(0.0, f64::max)
    }
}

fn conv_check(seed: u64, padding: Padding) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, cin, cout, k) = (2, r.random_range(1..4), r.random_range(1..4), [1, 3, 5][r.random_range(0..3)]);
    let len = r.random_range(k.max(2)..12);
    let x = uniform(&mut r, &[b, cin, len], 1.0);
    let w = uniform(&mut r, &[cout, cin, k], 1.0);
    let bias = uniform(&mut r, &[cout], 1.0);
    let out_len = padding.output_len(len, k).unwrap();
    let proj = uniform(&mut r, &[b, cout, out_len], 1.0);
    let p = ConvParams::new(w.clone(), bias.clone())?;
    let g = nn::conv1d_backward(&x, &p, padding, &proj)?;
    grad_check(
        &[x, w, bias],
        &[g.input_grad.clone(), g.param("weight").clone(), g.param("bias").clone()],
        LINEAR_EPS,
        |pt| {
            let p = ConvParams::new(pt[1].clone(), pt[2].clone())?;
            Ok(nn::conv1d_forward(&pt[0], &p, padding)?.dot(&proj))
        },
    )
}

fn conv_same(seed: u64) -> Result<f64, NnError> {
    conv_check(seed, Padding::Same)
}

fn conv_valid(seed: u64) -> Result<f64, NnError> {
    conv_check(seed, Padding::Valid)
}

fn maxpool(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, c) = (2, r.random_range(1..4));
    let window = r.random_range(2..4);
    let stride = r.random_range(1..=window);
    let len = r.random_range(window..14);
    let x = uniform(&mut r, &[b, c, len], 1.0);
    let (out, idx) = nn::maxpool1d(&x, window, stride)?;
    let proj = uniform(&mut r, out.shape(), 1.0);
    let gx = nn::maxpool1d_backward(x.shape(), &idx, &proj)?;
    grad_check(&[x], &[gx], EPS, |pt| Ok(nn::maxpool1d(&pt[0], window, stride)?.0.dot(&proj)))
}

fn relu(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let x = away_from_zero(&mut r, &[2, 3, 7]);
    let proj = uniform(&mut r, &[2, 3, 7], 1.0);
    let gx = nn::relu_backward(&x, &proj);
    grad_check(&[x], &[gx], LINEAR_EPS, |pt| Ok(nn::relu(&pt[0]).dot(&proj)))
}

fn dense(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, n, m) = (r.random_range(1..4), r.random_range(1..7), r.random_range(1..7));
    let x = uniform(&mut r, &[b, n], 1.0);
    let w = uniform(&mut r, &[m, n], 1.0);
    let bias = uniform(&mut r, &[m], 1.0);
    let proj = uniform(&mut r, &[b, m], 1.0);
    let p = DenseParams::new(w.clone(), bias.clone())?;
    let g = nn::dense_backward(&x, &p, &proj)?;
    grad_check(
        &[x, w, bias],
        &[g.input_grad.clone(), g.param("weight").clone(), g.param("bias").clone()],
        LINEAR_EPS,
        |pt| {
            let p = DenseParams::new(pt[1].clone(), pt[2].clone())?;
            Ok(nn::dense_forward(&pt[0], &p)?.dot(&proj))
        },
    )
}

fn se_dims(r: &mut ChaCha8Rng) -> (usize, usize, usize, usize) {
    let reduction = r.random_range(1..4);
    let channels = reduction * r.random_range(1..4);
    (2, channels, r.random_range(2..9), reduction)
}

fn se_params(r: &mut ChaCha8Rng, c: usize, red: usize) -> SeParams {
    let h = c / red;
    SeParams::new(uniform(r, &[h, c], 1.0), uniform(r, &[c, h], 1.0), red).unwrap()
}

fn se_squeeze(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, c, len, _) = se_dims(&mut r);
    let u = uniform(&mut r, &[b, c, len], 1.0);
    let proj = uniform(&mut r, &[b, c], 1.0);
    let gu = nn::se_squeeze_backward(u.shape(), &proj)?;
    grad_check(&[u], &[gu], LINEAR_EPS, |pt| Ok(nn::se_squeeze(&pt[0])?.dot(&proj)))
}

fn se_excite(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, c, _, red) = se_dims(&mut r);
    let z = uniform(&mut r, &[b, c], 1.0);
    let p = se_params(&mut r, c, red);
    let proj = uniform(&mut r, &[b, c], 1.0);
    let cache = nn::se_excite(&z, &p)?;
    let g = nn::se_excite_backward(&z, &p, &cache, &proj)?;
    grad_check(
        &[z, p.w1.clone(), p.w2.clone()],
        &[g.input_grad.clone(), g.param("w1").clone(), g.param("w2").clone()],
        EPS,
        |pt| {
            let p = SeParams::new(pt[1].clone(), pt[2].clone(), red)?;
            Ok(nn::se_excite(&pt[0], &p)?.s.dot(&proj))
        },
    )
}

fn se_scale(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, c, len, _) = se_dims(&mut r);
    let u = uniform(&mut r, &[b, c, len], 1.0);
    let s = Tensor::from_fn(&[b, c], |_| r.random_range(0.05..0.95));
    let proj = uniform(&mut r, &[b, c, len], 1.0);
    let (du, ds) = nn::se_scale_backward(&u, &s, &proj)?;
    grad_check(&[u, s], &[du, ds], LINEAR_EPS, |pt| Ok(nn::se_scale(&pt[0], &pt[1])?.dot(&proj)))
}

fn se_block(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, c, len, red) = se_dims(&mut r);
    let u = uniform(&mut r, &[b, c, len], 1.0);
    let p = se_params(&mut r, c, red);
    let proj = uniform(&mut r, &[b, c, len], 1.0);
    let (_, cache) = nn::se_block_forward(&u, &p)?;
    let g = nn::se_block_backward(&u, &p, &cache, &proj)?;
    grad_check(
        &[u, p.w1.clone(), p.w2.clone()],
        &[g.input_grad.clone(), g.param("w1").clone(), g.param("w2").clone()],
        EPS,
        |pt| {
            let p = SeParams::new(pt[1].clone(), pt[2].clone(), red)?;
            Ok(nn::se_block_forward(&pt[0], &p)?.0.dot(&proj))
        },
    )
}

fn lstm(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, c, h, steps) = (2, r.random_range(1..4), r.random_range(1..4), r.random_range(1..7));
    let x = uniform(&mut r, &[b, c, steps], 1.0);
    let wi = uniform(&mut r, &[4 * h, c], 0.8);
    let wr = uniform(&mut r, &[4 * h, h], 0.8);
    let bias = uniform(&mut r, &[4 * h], 0.5);
    let proj_final = uniform(&mut r, &[b, h], 1.0);
    let proj_seq = uniform(&mut r, &[b, h, steps], 1.0);
    let p = LstmParams::new(wi.clone(), wr.clone(), bias.clone())?;
    let out = nn::lstm_forward(&x, &p)?;
    let g = nn::lstm_backward(&x, &p, &out, &proj_final, Some(&proj_seq))?;
    grad_check(
        &[x, wi, wr, bias],
        &[
            g.input_grad.clone(),
            g.param("input_weights").clone(),
            g.param("recurrent_weights").clone(),
            g.param("bias").clone(),
        ],
        EPS,
        |pt| {
            let p = LstmParams::new(pt[1].clone(), pt[2].clone(), pt[3].clone())?;
            let out = nn::lstm_forward(&pt[0], &p)?;
            Ok(out.final_hidden.dot(&proj_final) + out.hidden_seq.dot(&proj_seq))
        },
    )
}

fn softmax_ce(seed: u64) -> Result<f64, NnError> {
    let mut r = rng(seed);
    let (b, k) = (r.random_range(1..5), r.random_range(2..7));
    let z = uniform(&mut r, &[b, k], 3.0);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
    let (_, g) = nn::cross_entropy(&nn::softmax(&z)?, &labels)?;
    grad_check(&[z], &[g], EPS, |pt| Ok(nn::cross_entropy(&nn::softmax(&pt[0])?, &labels)?.0))
}

pub fn layer_checks() -> Vec<LayerCheck> {
    vec![
        LayerCheck { name: "conv1d (same)", linear: true, check: conv_same },
        LayerCheck { name: "conv1d (valid)", linear: true, check: conv_valid },
        LayerCheck { name: "maxpool routing", linear: true, check: maxpool },
        LayerCheck { name: "relu", linear: true, check: relu },
        LayerCheck { name: "dense", linear: true, check: dense },
        LayerCheck { name: "se_squeeze", linear: true, check: se_squeeze },
        LayerCheck { name: "se_excite", linear: false, check: se_excite },
        LayerCheck { name: "se_scale", linear: true, check: se_scale },
        LayerCheck { name: "se_block", linear: false, check: se_block },
        LayerCheck { name: "lstm (BPTT)", linear: false, check: lstm },
        LayerCheck { name: "softmax + cross-entropy", linear: false, check: softmax_ce },
    ]
}

/// Checks the whole tiny network: at least 1% of every parameter tensor,
/// chosen at random, against central differences of the batch loss.
/// Returns the worst relative error and how many parameters were probed.
pub fn end_to_end(seed: u64) -> (f64, usize) {
    let mut r = rng(seed);
    let cfg = ModelConfig::tiny(32, 3);
    let mut model = ModelGraph::build(&cfg, seed).unwrap();
    let x = uniform(&mut r, &[2, 1, 32], 1.5);
    let labels = [r.random_range(0..3), r.random_range(0..3)];
    let (_, grads, _) = model.loss_and_grads(&x, &labels).unwrap();
    let picks: Vec<(usize, usize)> = grads
        .iter()
        .enumerate()
        .flat_map(|(t, g)| {
            let n = g.len().div_ceil(100);
            rand::seq::index::sample(&mut r, g.len(), n)
                .into_iter()
                .map(move |i| (t, i))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut worst = 0.0f64;
    for &(t, i) in &picks {
        let orig = model.params_mut()[t].data()[i];
        model.params_mut()[t].data_mut()[i] = orig + EPS;
        let plus = model.loss_and_grads(&x, &labels).unwrap().0;
        model.params_mut()[t].data_mut()[i] = orig - EPS;
        let minus = model.loss_and_grads(&x, &labels).unwrap().0;
        model.params_mut()[t].data_mut()[i] = orig;
        worst = worst.max(relative_error(grads[t].data()[i], (plus - minus) / (2.0 * EPS)));
    }
    (worst, picks.len())
}

/// Deliberately wrong backward passes; each must be caught by grad_check.
/// Returns `(fault, reported error)`.
pub fn corrupted_backwards() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut r = rng(99);

    // conv weight gradient with the kernel taps reversed
    let x = uniform(&mut r, &[2, 2, 9], 1.0);
    let w = uniform(&mut r, &[3, 2, 3], 1.0);
    let bias = uniform(&mut r, &[3], 1.0);
    let proj = uniform(&mut r, &[2, 3, 9], 1.0);
    let p = ConvParams::new(w.clone(), bias.clone()).unwrap();
    let g = nn::conv1d_backward(&x, &p, Padding::Same, &proj).unwrap();
    let gw = g.param("weight");
    let flipped = Tensor::from_fn(gw.shape(), |i| gw.data()[i - i % 3 + (2 - i % 3)]);
    let err = grad_check(&[w], &[flipped], EPS, |pt| {
        let p = ConvParams::new(pt[0].clone(), bias.clone())?;
        Ok(nn::conv1d_forward(&x, &p, Padding::Same)?.dot(&proj))
    })
    .unwrap();
    out.push(("conv1d kernel flipped", err));

    // SE block input gradient missing the squeeze path
    let u = uniform(&mut r, &[2, 4, 6], 1.0);
    let sp = se_params(&mut r, 4, 2);
    let proj = uniform(&mut r, &[2, 4, 6], 1.0);
    let (_, cache) = nn::se_block_forward(&u, &sp).unwrap();
    let (du_scale_only, _) = nn::se_scale_backward(&u, cache.scales(), &proj).unwrap();
    let err = grad_check(&[u], &[du_scale_only], EPS, |pt| Ok(nn::se_block_forward(&pt[0], &sp)?.0.dot(&proj))).unwrap();
    out.push(("se_block without squeeze path", err));

    // LSTM truncated to a single step of backpropagation
    let x = uniform(&mut r, &[1, 2, 5], 1.0);
    let lp = LstmParams::new(uniform(&mut r, &[8, 2], 0.8), uniform(&mut r, &[8, 2], 0.8), uniform(&mut r, &[8], 0.5)).unwrap();
    let proj = uniform(&mut r, &[1, 2], 1.0);
    let lo = nn::lstm_forward(&x, &lp).unwrap();
    let g = nn::lstm_backward(&x, &lp, &lo, &proj, None).unwrap();
    let mut truncated = g.input_grad.clone();
    for (i, v) in truncated.data_mut().iter_mut().enumerate() {
        if i % 5 != 4 {
            *v = 0.0;
        }
    }
    let err = grad_check(std::slice::from_ref(&x), &[truncated], EPS, |pt| Ok(nn::lstm_forward(&pt[0], &lp)?.final_hidden.dot(&proj))).unwrap();
    out.push(("lstm truncated to one step", err));

    // dense bias gradient taken from the first batch row only
    let x = uniform(&mut r, &[3, 4], 1.0);
    let w = uniform(&mut r, &[2, 4], 1.0);
    let bias = uniform(&mut r, &[2], 1.0);
    let proj = uniform(&mut r, &[3, 2], 1.0);
    let first_row = Tensor::new(&[2], proj.batch_row(0).to_vec()).unwrap();
    let err = grad_check(&[bias], &[first_row], EPS, |pt| {
        let p = DenseParams::new(w.clone(), pt[0].clone())?;
        Ok(nn::dense_forward(&x, &p)?.dot(&proj))
    })
    .unwrap();
    out.push(("dense bias without batch sum", err));

    // softmax + cross-entropy gradient missing the 1/B factor
    let z = uniform(&mut r, &[4, 3], 2.0);
    let labels = [0, 2, 1, 1];
    let (_, g) = nn::cross_entropy(&nn::softmax(&z).unwrap(), &labels).unwrap();
    let unscaled = g.map(|v| v * 4.0);
    let err = grad_check(&[z], &[unscaled], EPS, |pt| Ok(nn::cross_entropy(&nn::softmax(&pt[0])?, &labels)?.0)).unwrap();
    out.push(("cross-entropy without 1/B", err));

    out
}

/// `per_class` noisy segments per class from the synthetic generator,
/// normalized with their pooled statistics.
pub fn synthetic(classes: usize, per_class: usize, len: usize, seed: u64) -> Dataset {
    let spec = SynthSpec { classes, per_class, len, noise: 0.05, seed };
    let raw = spec.generate();
    let stats = compute_norm_stats(&raw).unwrap();
    let segs = raw.iter().map(|s| normalize(s, &stats).unwrap()).collect();
    Dataset::new(segs, spec.scheme()).unwrap()
}
