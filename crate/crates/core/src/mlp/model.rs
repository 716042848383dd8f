use serde::{Deserialize, Serialize};

use crate::numerics::{gemm, Matrix, RandomSource};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Cos,
    Quadratic,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Cos => z.cos(),
            Activation::Quadratic => z * z,
        }
    }

    /// Derivative; ReLU at exactly 0 is taken as 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Cos => -z.sin(),
            Activation::Quadratic => 2.0 * z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Cos => "cos",
            Activation::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// PyTorch `nn.Linear` default: weights and biases uniform on `±1/sqrt(fan_in)`.
    Default,
    /// Standard-normal weights, zero biases, layer outputs scaled by `sqrt(2 / fan_out)`.
    NtkScaled,
}

/// Fully connected layer computing `scale * (W a) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub scale: f64,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Feedforward network; activation after every layer but the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub activation: Activation,
    pub init: InitScheme,
    pub seed: u64,
}

/// Per-layer gradients, laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Matrix::zeros(l.out_dim(), l.in_dim())).collect(),
            biases: model.layers.iter().map(|l| l.bias.as_ref().map(|b| vec![0.0; b.len()])).collect(),
        }
    }

    /// Flat views in [`MlpModel::params_mut`] order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice());
            if let Some(b) = b {
                out.push(b.as_slice());
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if let (Some(a), Some(b)) = (a, b) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        (0..self.weights.len()).find(|&l| {
            !self.weights[l].is_finite() || self.biases[l].as_ref().is_some_and(|b| b.iter().any(|v| !v.is_finite()))
        })
    }
}

/// Intermediate values kept by [`MlpModel::forward_batch`] for backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer (`inputs[0]` is the batch itself).
    pub(crate) inputs: Vec<Matrix>,
    /// Pre-activations of each hidden layer.
    pub(crate) pre: Vec<Matrix>,
    /// Index of the first layer that was run.
    pub(crate) start: usize,
}

impl MlpModel {
    /// `dims = [in, hidden..., out]`; at least one layer.
    pub fn new(dims: &[usize], activation: Activation, init: InitScheme, use_bias: bool, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer dimensions {dims:?}")));
        }
        let mut rng = RandomSource::new(seed, "mlp-init");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let mut weight = Matrix::zeros(fan_out, fan_in);
                match init {
                    InitScheme::Default => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        weight.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-bound, bound));
                        let bias = use_bias.then(|| (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect());
                        Dense { weight, bias, scale: 1.0 }
                    }
                    InitScheme::NtkScaled => {
                        weight.as_mut_slice().iter_mut().for_each(|v| *v = rng.normal());
                        Dense {
                            weight,
                            bias: use_bias.then(|| vec![0.0; fan_out]),
                            scale: (2.0 / fan_out as f64).sqrt(),
                        }
                    }
                }
            })
            .collect();
        Ok(Self { layers, activation, init, seed })
    }

    /// Builds a model from explicit layers; used for hand-wired networks.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.as_ref().is_some_and(|b| b.len() != l.out_dim()) {
                return Err(Error::Dimension(format!("layer {i} bias length")));
            }
        }
        Ok(Self { layers, activation, init: InitScheme::Default, seed: 0 })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.as_ref().map_or(0, Vec::len)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite())))
    }

    /// Mutable parameter views: per layer the weights, then the bias if present.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            if let Some(b) = &mut l.bias {
                out.push(b.as_mut_slice());
            }
        }
        out
    }

    /// Row-wise forward pass over a `batch x in` matrix.
    pub fn forward_batch(&self, x: &Matrix) -> Result<(Matrix, Tape)> {
        self.forward_from(0, x)
    }

    /// Runs layers `start..` on `x`, the (already activated) input of layer `start`.
    pub fn forward_from(&self, start: usize, x: &Matrix) -> Result<(Matrix, Tape)> {
        if start >= self.layers.len() {
            return Err(Error::InvalidArgument(format!("no layer {start}")));
        }
        if x.cols() != self.layers[start].in_dim() {
            return Err(Error::Dimension(format!(
                "input width {} but layer {start} expects {}",
                x.cols(),
                self.layers[start].in_dim()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len() - start);
        let mut pre = Vec::with_capacity(self.layers.len() - start);
        let mut cur = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate().skip(start) {
            let mut z = Matrix::zeros(cur.rows(), layer.out_dim());
            gemm(layer.scale, &cur, false, &layer.weight, true, 0.0, &mut z);
            if let Some(b) = &layer.bias {
                for r in 0..z.rows() {
                    z.row_mut(r).iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
                }
            }
            inputs.push(cur);
            if i == last {
                cur = z;
            } else {
                let mut a = z.clone();
                let act = self.activation;
                a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                pre.push(z);
                cur = a;
            }
        }
        Ok((cur, Tape { inputs, pre, start }))
    }

    /// Forward pass without keeping the tape.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_batch(x).map(|(y, _)| y)
    }

    /// Backpropagates `d_out` (`batch x out`); returns parameter gradients and the
    /// gradient with respect to the tape's input. Layers before `tape.start` get zeros.
    pub fn backward(&self, tape: &Tape, d_out: &Matrix) -> (Gradients, Matrix) {
        let mut grads = Gradients::zeros_like(self);
        let mut delta = d_out.clone();
        let start = tape.start;
        for i in (start..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &tape.inputs[i - start];
            gemm(layer.scale, &delta, true, input, false, 0.0, &mut grads.weights[i]);
            if let Some(gb) = &mut grads.biases[i] {
                for r in 0..delta.rows() {
                    gb.iter_mut().zip(delta.row(r)).for_each(|(g, d)| *g += d);
                }
            }
            let mut d_in = Matrix::zeros(delta.rows(), layer.in_dim());
            gemm(layer.scale, &delta, false, &layer.weight, false, 0.0, &mut d_in);
            if i > start {
                let act = self.activation;
                d_in.as_mut_slice()
                    .iter_mut()
                    .zip(tape.pre[i - 1 - start].as_slice())
                    .for_each(|(d, z)| *d *= act.derivative(*z));
            }
            delta = d_in;
        }
        (grads, delta)
    }

    /// Scalar output at a single input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if self.out_dim() != 1 {
            return Err(Error::Dimension(format!("scalar forward on a model with {} outputs", self.out_dim())));
        }
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let y = self.apply(&input)?.get(0, 0);
        if !y.is_finite() {
            return Err(Error::NonFinite("model output".into()));
        }
        Ok(y)
    }
}

/// Gradient of the mean squared error over the batch; returns `(loss, gradients)`.
pub fn grad(model: &MlpModel, inputs: &Matrix, labels: &[f64]) -> Result<(f64, Gradients)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::InvalidArgument("gradient of an empty batch".into()));
    }
    if inputs.rows() != n {
        return Err(Error::Dimension(format!("{} inputs for {n} labels", inputs.rows())));
    }
    if model.out_dim() != 1 {
        return Err(Error::Dimension("scalar regression needs one output".into()));
    }
    let (out, tape) = model.forward_batch(inputs)?;
    let mut d_out = Matrix::zeros(n, 1);
    let mut loss = 0.0;
    for i in 0..n {
        let e = out.get(i, 0) - labels[i];
        loss += e * e;
        d_out.set(i, 0, 2.0 * e / n as f64);
    }
    loss /= n as f64;
    let (g, _) = model.backward(&tape, &d_out);
    if let Some(layer) = g.first_non_finite_layer() {
        return Err(Error::NonFinite(format!("gradient in layer {layer}")));
    }
    Ok((loss, g))
}

/// Predictions for every row of `x`. Zero rows give an empty vector.
pub fn predict_batch(model: &MlpModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.in_dim() {
        return Err(Error::Dimension(format!("input width {} but model expects {}", x.cols(), model.in_dim())));
    }
    if x.rows() == 0 {
        return Ok(Vec::new());
    }
    if model.out_dim() != 1 {
        return Err(Error::Dimension("scalar prediction needs one output".into()));
    }
    Ok(model.apply(x)?.into_vec())
}

/// Mean squared error of the model on a dataset.
pub fn mse(model: &MlpModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    let p = predict_batch(model, x)?;
    Ok(p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len().max(1) as f64)
}

impl MlpModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: MlpModel = serde_json::from_str(s)?;
        MlpModel::from_layers(m.layers.clone(), m.activation)?;
        Ok(m)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
