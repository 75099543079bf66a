//! Dense feedforward networks with hand-written reverse-mode gradients and
//! three optimizers: SGD, natural gradient with a damped empirical Fisher
//! matrix, and the component-wise (per-layer block) natural gradient.
//!
//! Batches are row-major: an `m × d` matrix holds `m` samples, and a layer
//! computes `Z = X Wᵀ + 1 bᵀ`, `A = σ(Z)` with `W` stored `out × in`.
//! Parameters flatten layer by layer as `vec(W)` (row-major) followed by `b`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::models::{sample_with, UnivariateGaussian};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]` inside the loss.
pub const PROB_CLAMP: f64 = 1e-12;
/// Full-batch loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
    Sigmoid,
    /// Row-wise softmax; only valid on the last layer.
    SoftmaxFinal,
}

impl Activation {
    fn apply(self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
            Activation::Sigmoid => z.map(sigmoid),
            Activation::SoftmaxFinal => {
                let mut out = z.clone();
                for mut row in out.row_iter_mut() {
                    let max = row.max();
                    row.apply(|v| *v = (*v - max).exp());
                    let total = row.sum();
                    row /= total;
                }
                out
            }
        }
    }

    /// `∂L/∂Z` from `∂L/∂A`.
    fn backprop(self, z: &DMatrix<f64>, a: &DMatrix<f64>, da: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            // Heaviside with relu'(0) = 0.
            Activation::Relu => da.zip_map(z, |g, v| if v > 0.0 { g } else { 0.0 }),
            Activation::Identity => da.clone(),
            Activation::Sigmoid => da.zip_map(a, |g, s| g * s * (1.0 - s)),
            Activation::SoftmaxFinal => {
                let mut dz = da.component_mul(a);
                for (mut row, arow) in dz.row_iter_mut().zip(a.row_iter()) {
                    let total = row.sum();
                    for (v, p) in row.iter_mut().zip(arow.iter()) {
                        *v -= p * total;
                    }
                }
                dz
            }
        }
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::InvalidArgument(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "layer parameters must be finite".into(),
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "a network needs at least one layer".into(),
            ));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    l + 1,
                    pair[1].inputs()
                )));
            }
        }
        if let Some(l) = layers[..layers.len() - 1]
            .iter()
            .position(|l| l.activation == Activation::SoftmaxFinal)
        {
            return Err(Error::InvalidArgument(format!(
                "softmax on hidden layer {l}"
            )));
        }
        Ok(Self { layers })
    }

    /// Gaussian weights with variance `2/in` on the weight stream, zero biases.
    /// Hidden layers use `hidden`; the last uses `output`.
    pub fn init(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {sizes:?} need ≥ 2 positive entries"
            )));
        }
        let mut rng = rng::stream(seed, rng::STREAM_WEIGHTS);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (l, w) in sizes.windows(2).enumerate() {
            let scale = UnivariateGaussian::new(0.0, (2.0 / w[0] as f64).sqrt())?;
            let values = sample_with(&scale, w[0] * w[1], &mut rng, None);
            let act = if l + 2 == sizes.len() { output } else { hidden };
            layers.push(DenseLayer::new(
                DMatrix::from_row_slice(w[1], w[0], &values),
                DVector::zeros(w[1]),
                act,
            )?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend(layer.weight.transpose().iter());
            out.extend(layer.bias.iter());
        }
        DVector::from_vec(out)
    }

    /// Same architecture with parameters read from `flat`.
    pub fn with_flat(&self, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters for a network with {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (o, i) = layer.weight.shape();
            let weight = DMatrix::from_row_slice(o, i, &flat.as_slice()[offset..offset + o * i]);
            offset += o * i;
            let bias = DVector::from_column_slice(&flat.as_slice()[offset..offset + o]);
            offset += o;
            layers.push(DenseLayer::new(weight, bias, layer.activation)?);
        }
        Ok(Self { layers })
    }

    pub fn params(&self) -> Vec<LayerParams> {
        self.layers
            .iter()
            .map(|l| LayerParams {
                weight: l
                    .weight
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
                bias: l.bias.iter().copied().collect(),
                activation: l.activation,
            })
            .collect()
    }
}

/// Plain-data view of a layer for serialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Inputs, pre-activations and activations of every layer.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: DMatrix<f64>,
    pub pre: Vec<DMatrix<f64>>,
    pub post: Vec<DMatrix<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("non-empty network")
    }

    fn layer_input(&self, l: usize) -> &DMatrix<f64> {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }
}

pub fn forward(net: &Network, x: &DMatrix<f64>) -> Result<ForwardTrace> {
    if x.ncols() != net.input_dim() {
        return Err(Error::InvalidArgument(format!(
            "batch has {} features but the network expects {}",
            x.ncols(),
            net.input_dim()
        )));
    }
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut post: Vec<DMatrix<f64>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let input = post.last().unwrap_or(x);
        let mut z = input * layer.weight.transpose();
        for mut row in z.row_iter_mut() {
            row += layer.bias.transpose();
        }
        post.push(layer.activation.apply(&z));
        pre.push(z);
    }
    Ok(ForwardTrace {
        input: x.clone(),
        pre,
        post,
    })
}

fn check_labels(probs: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    if probs.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    let classes = if probs.ncols() == 1 { 2 } else { probs.ncols() };
    if let Some(y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {y} out of range for {classes} classes"
        )));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean negative log-likelihood. One output column is read as `P(y = 1)`;
/// several columns as class probabilities.
pub fn cross_entropy_loss(probs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let total: f64 = if probs.ncols() == 1 {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let a = clamp(probs[(i, 0)]);
                if y == 1 {
                    -a.ln()
                } else {
                    -(1.0 - a).ln()
                }
            })
            .sum()
    } else {
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -clamp(probs[(i, y)]).ln())
            .sum()
    };
    Ok(total / labels.len() as f64)
}

/// `∂ℓᵢ/∂A` for each sample's own loss (not divided by the batch size).
fn loss_output_gradient(probs: &DMatrix<f64>, labels: &[usize]) -> DMatrix<f64> {
    let mut da = DMatrix::zeros(probs.nrows(), probs.ncols());
    for (i, &y) in labels.iter().enumerate() {
        if probs.ncols() == 1 {
            let p = probs[(i, 0)];
            let a = clamp(p);
            let inside = p == a;
            da[(i, 0)] = match (inside, y) {
                (false, _) => 0.0,
                (true, 1) => -1.0 / a,
                (true, _) => 1.0 / (1.0 - a),
            };
        } else {
            let p = probs[(i, y)];
            if p == clamp(p) {
                da[(i, y)] = -1.0 / p;
            }
        }
    }
    da
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl GradientBundle {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| DMatrix::zeros(l.outputs(), l.inputs()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|l| DVector::zeros(l.outputs()))
                .collect(),
        }
    }

    /// Layout matches [`Network::flatten`].
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.transpose().iter());
            out.extend(b.iter());
        }
        DVector::from_vec(out)
    }

    pub fn unflatten(net: &Network, flat: &DVector<f64>) -> Result<Self> {
        let shaped = net.with_flat(flat)?;
        Ok(Self {
            weights: shaped.layers.iter().map(|l| l.weight.clone()).collect(),
            biases: shaped.layers.iter().map(|l| l.bias.clone()).collect(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.norm_squared())
            .chain(self.biases.iter().map(|b| b.norm_squared()))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales to global norm `max_norm` when larger; returns the norm before clipping.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let norm = self.norm();
        if norm > max_norm {
            let s = max_norm / norm;
            self.weights.iter_mut().for_each(|w| *w *= s);
            self.biases.iter_mut().for_each(|b| *b *= s);
        }
        norm
    }
}

/// `∂ℓᵢ/∂Z_l` for every layer, per sample (rows).
fn deltas(net: &Network, trace: &ForwardTrace, labels: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    check_labels(trace.output(), labels)?;
    let last = net.layers.len() - 1;
    let mut out = vec![DMatrix::zeros(0, 0); net.layers.len()];
    let mut da = loss_output_gradient(trace.output(), labels);
    for l in (0..=last).rev() {
        let layer = &net.layers[l];
        let dz = layer
            .activation
            .backprop(&trace.pre[l], &trace.post[l], &da);
        if l > 0 {
            da = &dz * &layer.weight;
        }
        out[l] = dz;
    }
    Ok(out)
}

/// Gradient of [`cross_entropy_loss`] with respect to every parameter.
pub fn backward(net: &Network, trace: &ForwardTrace, labels: &[usize]) -> Result<GradientBundle> {
    let dz = deltas(net, trace, labels)?;
    let m = labels.len() as f64;
    let mut grads = GradientBundle::zeros_like(net);
    for (l, d) in dz.iter().enumerate() {
        grads.weights[l] = d.transpose() * trace.layer_input(l) / m;
        grads.biases[l] = d.row_sum().transpose() / m;
    }
    Ok(grads)
}

/// `m × P` matrix whose rows are the flattened gradients of each sample's own loss.
pub fn per_sample_gradients(
    net: &Network,
    trace: &ForwardTrace,
    labels: &[usize],
) -> Result<DMatrix<f64>> {
    let dz = deltas(net, trace, labels)?;
    let m = labels.len();
    let mut scores = DMatrix::zeros(m, net.num_params());
    for i in 0..m {
        let mut col = 0;
        for (l, d) in dz.iter().enumerate() {
            let input = trace.layer_input(l);
            for o in 0..d.ncols() {
                for j in 0..input.ncols() {
                    scores[(i, col)] = d[(i, o)] * input[(i, j)];
                    col += 1;
                }
            }
            for o in 0..d.ncols() {
                scores[(i, col)] = d[(i, o)];
                col += 1;
            }
        }
    }
    Ok(scores)
}

/// Loss and gradient at `x`.
pub fn loss_and_gradient(
    net: &Network,
    x: &DMatrix<f64>,
    labels: &[usize],
) -> Result<(f64, GradientBundle)> {
    let trace = forward(net, x)?;
    let loss = cross_entropy_loss(trace.output(), labels)?;
    Ok((loss, backward(net, &trace, labels)?))
}

/// `L = c‖θ − θ*‖²` over all parameters, with gradient `2c(θ − θ*)`.
pub fn quadratic_loss(net: &Network, target: &Network, c: f64) -> Result<(f64, GradientBundle)> {
    let diff = net.flatten() - target.flatten();
    if diff.len() != target.num_params() {
        return Err(Error::InvalidArgument(
            "target has a different architecture".into(),
        ));
    }
    let grad = GradientBundle::unflatten(net, &(&diff * (2.0 * c)))?;
    Ok((c * diff.norm_squared(), grad))
}

fn check_shapes(net: &Network, grads: &GradientBundle) -> Result<()> {
    let ok = grads.weights.len() == net.layers.len()
        && grads.biases.len() == net.layers.len()
        && net
            .layers
            .iter()
            .zip(grads.weights.iter().zip(&grads.biases))
            .all(|(l, (w, b))| w.shape() == l.weight.shape() && b.len() == l.bias.len());
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "gradient shapes do not match the network".into(),
        ))
    }
}

pub fn sgd_step(net: &Network, grads: &GradientBundle, lr: f64) -> Result<Network> {
    check_shapes(net, grads)?;
    let mut next = net.clone();
    for (layer, (w, b)) in next
        .layers
        .iter_mut()
        .zip(grads.weights.iter().zip(&grads.biases))
    {
        layer.weight -= w * lr;
        layer.bias -= b * lr;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgdMode {
    Full,
    Blockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgdConfig {
    pub lr: f64,
    pub damping: f64,
    pub mode: NgdMode,
}

impl Default for NgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            damping: 0.1,
            mode: NgdMode::Full,
        }
    }
}

impl NgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.damping >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lr > 0 and damping ≥ 0, got lr {} and damping {}",
                self.lr, self.damping
            )));
        }
        Ok(())
    }
}

/// Curvature used by [`natural_gradient_step`].
#[derive(Debug, Clone, Copy)]
pub enum FisherEstimate<'a> {
    /// `G = SᵀS/m` from an `m × P` matrix of per-sample gradients.
    FromScores(&'a DMatrix<f64>),
    /// A caller-supplied `P × P` matrix.
    Explicit(&'a DMatrix<f64>),
    /// No preconditioning at all; the step is exactly `sgd_step`.
    Identity,
}

/// Solves `(A + γI) x = b` through a Cholesky factor, refusing near-singular systems.
fn damped_solve(
    a: &DMatrix<f64>,
    gamma: f64,
    b: &DMatrix<f64>,
    what: &str,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let sys = a + DMatrix::identity(n, n) * gamma;
    let fail = || {
        Error::SolveFailed(format!(
            "{what}: damped Fisher matrix is not positive definite; set damping > 0"
        ))
    };
    let chol = sys.clone().cholesky().ok_or_else(fail)?;
    let diag = chol.l_dirty().diagonal();
    let scale = sys.diagonal().amax().max(f64::MIN_POSITIVE);
    if diag.iter().any(|d| d * d <= 1e-13 * scale) {
        return Err(fail());
    }
    Ok(chol.solve(b))
}

/// `θ ← θ − α (G + γI)⁻¹ ∇L` over the flattened parameter vector.
pub fn natural_gradient_step(
    net: &Network,
    grads: &GradientBundle,
    fisher: FisherEstimate<'_>,
    cfg: &NgdConfig,
) -> Result<Network> {
    cfg.validate()?;
    check_shapes(net, grads)?;
    let p = net.num_params();
    let g = match fisher {
        FisherEstimate::Identity => return sgd_step(net, grads, cfg.lr),
        FisherEstimate::FromScores(s) => {
            if s.ncols() != p || s.nrows() == 0 {
                return Err(Error::InvalidArgument(format!(
                    "score matrix is {}×{}, need m×{p}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            s.transpose() * s / s.nrows() as f64
        }
        FisherEstimate::Explicit(g) => {
            if g.shape() != (p, p) {
                return Err(Error::InvalidArgument(format!(
                    "Fisher matrix is {:?}, need {p}×{p}",
                    g.shape()
                )));
            }
            g.clone()
        }
    };
    let rhs = DMatrix::from_column_slice(p, 1, grads.flatten().as_slice());
    let dir = damped_solve(&g, cfg.damping, &rhs, "full Fisher")?;
    let theta = net.flatten() - DVector::from_column_slice(dir.as_slice()) * cfg.lr;
    net.with_flat(&theta)
}

/// Per layer: `F = DᵀD`, `W ← W − α D (F + γI)⁻¹` with `D` the layer's weight
/// gradient; biases take a plain SGD step.
pub fn componentwise_ngd_step(
    net: &Network,
    grads: &GradientBundle,
    cfg: &NgdConfig,
) -> Result<Network> {
    cfg.validate()?;
    check_shapes(net, grads)?;
    let mut next = net.clone();
    for (l, (layer, (d, b))) in next
        .layers
        .iter_mut()
        .zip(grads.weights.iter().zip(&grads.biases))
        .enumerate()
    {
        let f = d.transpose() * d;
        // U = D (F + γI)⁻¹, i.e. Uᵀ = (F + γI)⁻¹ Dᵀ since F is symmetric.
        let ut = damped_solve(&f, cfg.damping, &d.transpose(), &format!("layer {l}"))?;
        layer.weight -= ut.transpose() * cfg.lr;
        layer.bias -= b * cfg.lr;
    }
    Ok(next)
}

/// Two labelled Gaussian clouds in the plane.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Class 0 around `(−s, −s)` and class 1 around `(s, s)`, unit spread, interleaved.
    pub fn blobs(n_per_class: usize, separation: f64, seed: u64) -> Result<Self> {
        if n_per_class == 0 {
            return Err(Error::InvalidArgument(
                "need at least one point per class".into(),
            ));
        }
        let mut rng = rng::stream(seed, rng::STREAM_SAMPLE);
        let mut rows = Vec::with_capacity(4 * n_per_class);
        let mut labels = Vec::with_capacity(2 * n_per_class);
        let centres = [
            UnivariateGaussian::new(-separation, 1.0)?,
            UnivariateGaussian::new(separation, 1.0)?,
        ];
        for _ in 0..n_per_class {
            for (class, c) in centres.iter().enumerate() {
                rows.extend(sample_with(c, 2, &mut rng, None));
                labels.push(class);
            }
        }
        Ok(Self {
            x: DMatrix::from_row_slice(labels.len(), 2, &rows),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
        (
            self.x.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    Ngd,
    CwNgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub damping: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            lr: 0.01,
            damping: 0.1,
            epochs: 10,
            batch: 32,
            seed: 0,
            clip: Some(0.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Full-dataset loss before the first step and after every step.
    pub losses: Vec<f64>,
    /// Gradient norm of each step before clipping.
    pub grad_norms: Vec<f64>,
    pub network: Network,
}

/// Minibatch training with a per-epoch shuffle on the shuffle stream.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    if cfg.batch == 0 || data.is_empty() {
        return Err(Error::InvalidArgument(
            "batch size and dataset must be non-empty".into(),
        ));
    }
    if !(cfg.lr >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lr must be ≥ 0, got {}",
            cfg.lr
        )));
    }
    if let Some(c) = cfg.clip {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip must be positive, got {c}"
            )));
        }
    }
    let full_loss = |n: &Network| -> Result<f64> {
        cross_entropy_loss(forward(n, &data.x)?.output(), &data.labels)
    };
    let mut rng: Rng = rng::stream(cfg.seed, rng::STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut current = net.clone();
    let mut losses = vec![full_loss(&current)?];
    let mut grad_norms = Vec::new();
    let ngd = NgdConfig {
        lr: cfg.lr,
        damping: cfg.damping,
        mode: NgdMode::Full,
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch) {
            let (x, y) = data.subset(idx);
            let trace = forward(&current, &x)?;
            let mut grads = backward(&current, &trace, &y)?;
            let norm = match cfg.clip {
                Some(c) => grads.clip(c),
                None => grads.norm(),
            };
            grad_norms.push(norm);
            current = if cfg.lr == 0.0 {
                current
            } else {
                match cfg.optimizer {
                    Optimizer::Sgd => sgd_step(&current, &grads, cfg.lr)?,
                    Optimizer::Ngd => {
                        let scores = per_sample_gradients(&current, &trace, &y)?;
                        natural_gradient_step(
                            &current,
                            &grads,
                            FisherEstimate::FromScores(&scores),
                            &ngd,
                        )?
                    }
                    Optimizer::CwNgd => componentwise_ngd_step(
                        &current,
                        &grads,
                        &NgdConfig {
                            mode: NgdMode::Blockwise,
                            ..ngd
                        },
                    )?,
                }
            };
            let loss = full_loss(&current)?;
            losses.push(loss);
            if !(loss <= DIVERGENCE_LOSS) {
                return Err(Error::Diverged {
                    step: losses.len() - 1,
                    trace: losses,
                });
            }
        }
    }
    Ok(TrainReport {
        losses,
        grad_norms,
        network: current,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbReport {
    pub sigma: f64,
    pub n: usize,
    pub trials: usize,
    /// Sample variance of the mean estimator across trials.
    pub variance: f64,
    /// `σ²/n`, the inverse Fisher information of the mean.
    pub bound: f64,
    pub ratio: f64,
}

/// Monte-Carlo variance of the sample mean of `n` draws from `N(0, σ²)`.
pub fn crlb_check(sigma: f64, n: usize, trials: usize, seed: u64) -> Result<CrlbReport> {
    if trials < 1000 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need n ≥ 1 and trials ≥ 1000, got n={n}, trials={trials}"
        )));
    }
    let model = UnivariateGaussian::new(0.0, sigma)?;
    let mut rng = rng::stream(seed, rng::STREAM_MONTE_CARLO);
    let means: Vec<f64> = (0..trials)
        .map(|_| sample_with(&model, n, &mut rng, None).iter().sum::<f64>() / n as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / trials as f64;
    let variance =
        means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (trials - 1) as f64;
    let bound = sigma * sigma / n as f64;
    Ok(CrlbReport {
        sigma,
        n,
        trials,
        variance,
        bound,
        ratio: variance / bound,
    })
}
