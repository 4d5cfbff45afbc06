use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::ModelError;
use crate::nn::{self, ConvParams, DenseParams, LayerSpec, LstmParams, NnError, Padding, SeParams};
use crate::tensor::Tensor;

const POOL_WINDOW: usize = 2;
const POOL_STRIDE: usize = 2;

/// A layer together with its learned parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvParams),
    Relu,
    Se(SeParams),
    MaxPool { window: usize, stride: usize },
    Lstm(LstmParams),
    Dense(DenseParams),
    Softmax,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(p) => LayerSpec::Conv {
                in_channels: p.in_channels(),
                out_channels: p.out_channels(),
                kernel_len: p.kernel_len(),
                padding: Padding::Same,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Se(p) => LayerSpec::SeBlock {
                channels: p.channels(),
                reduction: p.reduction,
            },
            &Layer::MaxPool { window, stride } => LayerSpec::MaxPool { window, stride },
            Layer::Lstm(p) => LayerSpec::Lstm {
                input_size: p.input_size(),
                hidden: p.hidden,
            },
            Layer::Dense(p) => LayerSpec::Dense {
                in_features: p.in_features(),
                out_features: p.out_features(),
            },
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    /// Parameter tensors with their local names, in canonical order.
    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::Conv(p) => vec![("weight", &p.weights), ("bias", &p.bias)],
            Layer::Se(p) => vec![("w1", &p.w1), ("w2", &p.w2)],
            Layer::Lstm(p) => vec![
                ("input_weights", &p.input_weights),
                ("recurrent_weights", &p.recurrent_weights),
                ("bias", &p.bias),
            ],
            Layer::Dense(p) => vec![("weight", &p.weights), ("bias", &p.bias)],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv(p) => vec![&mut p.weights, &mut p.bias],
            Layer::Se(p) => vec![&mut p.w1, &mut p.w2],
            Layer::Lstm(p) => vec![&mut p.input_weights, &mut p.recurrent_weights, &mut p.bias],
            Layer::Dense(p) => vec![&mut p.weights, &mut p.bias],
            _ => Vec::new(),
        }
    }
}

/// Per-layer state saved on the forward pass.
enum Cache {
    Input(Tensor),
    Se(Tensor, nn::SeBlockCache),
    Pool(Vec<usize>, Vec<usize>),
    Lstm(Tensor, nn::LstmOutput),
    None,
}

/// Forward pass results retained for [`ModelGraph::backward`].
pub struct ForwardPass {
    pub logits: Tensor,
    pub probs: Tensor,
    caches: Vec<Cache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    config: ModelConfig,
    layers: Vec<Layer>,
    names: Vec<String>,
    /// Output shape of every layer for a batch of one.
    shape_trace: Vec<Vec<usize>>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

impl ModelGraph {
    /// Builds the network with seeded parameter initialization:
    /// He-uniform for conv and hidden dense layers, `±1/√fan_in` for the SE
    /// gates, the output layer and the LSTM (forget-gate bias set to 1).
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut names = Vec::new();
        let k = config.kernel_len;
        let mut in_c = 1;
        let (mut conv_i, mut se_i) = (0, 0);

        for (part_idx, part) in config.conv_parts.iter().enumerate() {
            for _ in 0..part.layers {
                conv_i += 1;
                let fan_in = (in_c * k) as f64;
                let w = uniform(&mut rng, &[part.channels, in_c, k], (6.0 / fan_in).sqrt());
                layers.push(Layer::Conv(ConvParams::new(w, Tensor::zeros(&[part.channels]))?));
                names.push(format!("conv{conv_i}"));
                layers.push(Layer::Relu);
                names.push(format!("relu_c{conv_i}"));
                in_c = part.channels;
            }
            if config.se_positions.contains(&(part_idx + 1)) {
                se_i += 1;
                let hidden = in_c / config.se_reduction;
                let w1 = uniform(&mut rng, &[hidden, in_c], (1.0 / in_c as f64).sqrt());
                let w2 = uniform(&mut rng, &[in_c, hidden], (1.0 / hidden as f64).sqrt());
                layers.push(Layer::Se(SeParams::new(w1, w2, config.se_reduction)?));
                names.push(format!("se{se_i}"));
            }
            layers.push(Layer::MaxPool {
                window: POOL_WINDOW,
                stride: POOL_STRIDE,
            });
            names.push(format!("pool{}", part_idx + 1));
        }

        let h = config.lstm_hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let w_ih = uniform(&mut rng, &[4 * h, in_c], bound);
        let w_hh = uniform(&mut rng, &[4 * h, h], bound);
        let bias = Tensor::from_fn(&[4 * h], |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 });
        layers.push(Layer::Lstm(LstmParams::new(w_ih, w_hh, bias)?));
        names.push("lstm".into());

        let mut in_f = h;
        for (i, &out_f) in config.fc_sizes.iter().enumerate() {
            let last = i + 1 == config.fc_sizes.len();
            let gain = if last { 1.0 } else { 6.0 };
            let w = uniform(&mut rng, &[out_f, in_f], (gain / in_f as f64).sqrt());
            layers.push(Layer::Dense(DenseParams::new(w, Tensor::zeros(&[out_f]))?));
            names.push(format!("fc{}", i + 1));
            if !last {
                layers.push(Layer::Relu);
                names.push(format!("relu_f{}", i + 1));
            }
            in_f = out_f;
        }
        layers.push(Layer::Softmax);
        names.push("softmax".into());

        let mut graph = Self::from_parts(config.clone(), layers, names)?;
        graph.round_params_to_f32();
        Ok(graph)
    }

    /// Assembles a graph from explicit layers, checking shape compatibility.
    pub(crate) fn from_parts(config: ModelConfig, layers: Vec<Layer>, names: Vec<String>) -> Result<Self, ModelError> {
        let mut shape = vec![1, 1, config.input_len];
        let mut shape_trace = Vec::with_capacity(layers.len());
        for layer in &layers {
            shape = layer.spec().output_shape(&shape)?;
            shape_trace.push(shape.clone());
        }
        if shape != [1, config.num_classes] {
            return Err(ModelError::Config(format!(
                "network ends in shape {shape:?}, expected [1, {}]",
                config.num_classes
            )));
        }
        Ok(Self {
            config,
            layers,
            names,
            shape_trace,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    pub fn shape_trace(&self) -> &[Vec<usize>] {
        &self.shape_trace
    }

    /// Number of layers of the given kind (`"conv"`, `"maxpool"`, ...).
    pub fn count_kind(&self, kind: &str) -> usize {
        self.layers.iter().filter(|l| l.spec().kind() == kind).count()
    }

    /// Sequence length entering the LSTM.
    pub fn lstm_input_len(&self) -> usize {
        let idx = self
            .layers
            .iter()
            .position(|l| matches!(l, Layer::Lstm(_)))
            .expect("graph has an LSTM layer");
        self.shape_trace[idx - 1][2]
    }

    /// Fully qualified parameter names and tensors, in canonical order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .zip(&self.names)
            .flat_map(|(l, n)| l.params().into_iter().map(move |(p, t)| (format!("{n}.{p}"), t)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().into_iter().map(|(_, t)| t.shape().to_vec()).collect()
    }

    pub fn count_parameters(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rounds every parameter to the nearest `f32`. Parameters are stored at
    /// single precision so checkpoints reproduce them exactly.
    pub fn round_params_to_f32(&mut self) {
        for t in self.params_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn check_input(&self, batch: &Tensor) -> Result<(), ModelError> {
        match batch.dims3() {
            Some((_, 1, l)) if l == self.config.input_len => Ok(()),
            _ => Err(ModelError::InputShape {
                expected: self.config.input_len,
                actual: batch.shape().to_vec(),
            }),
        }
    }

    /// Class probabilities for a `B × 1 × input_len` batch.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        Ok(self.forward_train(batch)?.probs)
    }

    /// Forward pass that keeps every intermediate needed for backward.
    pub fn forward_train(&self, batch: &Tensor) -> Result<ForwardPass, ModelError> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut logits = None;
        for layer in &self.layers {
            let (y, cache) = match layer {
                Layer::Conv(p) => (nn::conv1d_forward(&x, p, Padding::Same)?, Cache::Input(x)),
                Layer::Relu => (nn::relu(&x), Cache::Input(x)),
                Layer::Se(p) => {
                    let (y, c) = nn::se_block_forward(&x, p)?;
                    (y, Cache::Se(x, c))
                }
                &Layer::MaxPool { window, stride } => {
                    let (y, idx) = nn::maxpool1d(&x, window, stride)?;
                    (y, Cache::Pool(x.shape().to_vec(), idx))
                }
                Layer::Lstm(p) => {
                    let out = nn::lstm_forward(&x, p)?;
                    (out.final_hidden.clone(), Cache::Lstm(x, out))
                }
                Layer::Dense(p) => (nn::dense_forward(&x, p)?, Cache::Input(x)),
                Layer::Softmax => {
                    let y = nn::softmax(&x)?;
                    logits = Some(x);
                    (y, Cache::None)
                }
            };
            caches.push(cache);
            x = y;
        }
        Ok(ForwardPass {
            logits: logits.expect("graph ends in softmax"),
            probs: x,
            caches,
        })
    }

    /// Backpropagates a gradient with respect to the pre-softmax logits.
    /// Returns one gradient per parameter, in [`ModelGraph::params`] order.
    pub fn backward(&self, pass: &ForwardPass, grad_logits: &Tensor) -> Result<Vec<Tensor>, ModelError> {
        let mut grad = grad_logits.clone();
        let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        // the trailing softmax is folded into the loss gradient
        for (i, (layer, cache)) in self.layers.iter().zip(&pass.caches).enumerate().rev() {
            grad = match (layer, cache) {
                (Layer::Softmax, _) => grad,
                (Layer::Conv(p), Cache::Input(x)) => {
                    let mut g = nn::conv1d_backward(x, p, Padding::Same, &grad)?;
                    per_layer[i] = vec![take(&mut g, "weight"), take(&mut g, "bias")];
                    g.input_grad
                }
                (Layer::Relu, Cache::Input(x)) => nn::relu_backward(x, &grad),
                (Layer::Se(p), Cache::Se(x, c)) => {
                    let mut g = nn::se_block_backward(x, p, c, &grad)?;
                    per_layer[i] = vec![take(&mut g, "w1"), take(&mut g, "w2")];
                    g.input_grad
                }
                (Layer::MaxPool { .. }, Cache::Pool(shape, idx)) => nn::maxpool1d_backward(shape, idx, &grad)?,
                (Layer::Lstm(p), Cache::Lstm(x, out)) => {
                    let mut g = nn::lstm_backward(x, p, out, &grad, None)?;
                    per_layer[i] = vec![
                        take(&mut g, "input_weights"),
                        take(&mut g, "recurrent_weights"),
                        take(&mut g, "bias"),
                    ];
                    g.input_grad
                }
                (Layer::Dense(p), Cache::Input(x)) => {
                    let mut g = nn::dense_backward(x, p, &grad)?;
                    per_layer[i] = vec![take(&mut g, "weight"), take(&mut g, "bias")];
                    g.input_grad
                }
                _ => unreachable!("cache kind always matches its layer"),
            };
        }
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Mean cross-entropy of a labelled batch and the parameter gradients.
    pub fn loss_and_grads(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Vec<Tensor>, Tensor), ModelError> {
        let pass = self.forward_train(batch)?;
        let (loss, grad_logits) = nn::cross_entropy(&pass.probs, labels)?;
        let grads = self.backward(&pass, &grad_logits)?;
        Ok((loss, grads, pass.probs))
    }

    /// Arg-max class per row of a batch.
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>, ModelError> {
        Ok(argmax_rows(&self.forward(batch)?))
    }
}

fn take(bundle: &mut nn::GradBundle, name: &str) -> Tensor {
    bundle.param_grads.remove(name).expect("backward returns every named gradient")
}

/// Index of the largest entry in each row (first on ties).
pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    let k = probs.shape()[probs.rank() - 1];
    probs
        .data()
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

impl From<NnError> for ModelError {
    fn from(e: NnError) -> Self {
        ModelError::Layer(e)
    }
}
