//! Sigmoid feedforward networks trained by stochastic steepest descent with an
//! L1 (LASSO) penalty on the connection weights.
//!
//! Layers are indexed from 0 (input) to `depth - 1` (output). `weights[d]` has
//! shape `layer_sizes[d] x layer_sizes[d + 1]` and `biases[d]` belongs to the
//! receiving layer `d + 1`. Every layer, including the output, applies the
//! logistic sigmoid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NtdError, Result};
use crate::matrix::Mat;

/// Weights with magnitude below this are reported as effectively deleted.
pub const NEAR_ZERO_WEIGHT: f64 = 1e-3;

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Sign with `sgn(0) = 0`.
#[inline]
fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn new(layer_sizes: Vec<usize>, weights: Vec<Mat>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self {
            layer_sizes,
            weights,
            biases,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero network of the given shape.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Mat::zeros(w[0], w[1]))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_layer_sizes(&self.layer_sizes)?;
        let depth = self.layer_sizes.len();
        if self.weights.len() != depth - 1 || self.biases.len() != depth - 1 {
            return Err(NtdError::Invalid(format!(
                "expected {} weight matrices and bias vectors, got {} and {}",
                depth - 1,
                self.weights.len(),
                self.biases.len()
            )));
        }
        for d in 0..depth - 1 {
            let expect = (self.layer_sizes[d], self.layer_sizes[d + 1]);
            if self.weights[d].shape() != expect {
                return Err(NtdError::shape("weights", self.weights[d].shape(), expect));
            }
            if self.biases[d].len() != self.layer_sizes[d + 1] {
                return Err(NtdError::shape(
                    "biases",
                    (1, self.biases[d].len()),
                    (1, self.layer_sizes[d + 1]),
                ));
            }
        }
        if !self.is_finite() {
            return Err(NtdError::Invalid(
                "network parameters contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Sizes of the hidden layers (layers 1..depth-1).
    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }

    pub fn hidden_unit_count(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    pub fn weight_count(&self) -> usize {
        self.weights.iter().map(|w| w.as_slice().len()).sum()
    }

    pub fn near_zero_weights(&self, threshold: f64) -> usize {
        self.weights
            .iter()
            .flat_map(|w| w.as_slice())
            .filter(|v| v.abs() < threshold)
            .count()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Mat::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }

    /// Applies layer `d -> d + 1` to `input`, writing the activations into `out`.
    #[inline]
    pub(crate) fn apply_layer(&self, d: usize, input: &[f64], out: &mut [f64]) {
        let w = &self.weights[d];
        out.fill(0.0);
        for (i, &o) in input.iter().enumerate() {
            for (z, &wij) in out.iter_mut().zip(w.row(i)) {
                *z += wij * o;
            }
        }
        for (z, &b) in out.iter_mut().zip(&self.biases[d]) {
            *z = sigmoid(*z + b);
        }
    }

    /// Full forward pass. The returned trace holds every layer, input included.
    pub fn forward(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(NtdError::shape(
                "forward",
                (1, x.len()),
                (1, self.input_dim()),
            ));
        }
        let mut layers = Vec::with_capacity(self.depth());
        layers.push(x.to_vec());
        for d in 0..self.depth() - 1 {
            let mut next = vec![0.0; self.layer_sizes[d + 1]];
            self.apply_layer(d, &layers[d], &mut next);
            layers.push(next);
        }
        Ok(Trace { layers })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.layers.pop().unwrap())
    }

    /// Propagates the given activations of `layer` through to the output.
    pub fn propagate_from(&self, layer: usize, activations: &[f64]) -> Vec<f64> {
        let mut cur = activations.to_vec();
        for d in layer..self.depth() - 1 {
            let mut next = vec![0.0; self.layer_sizes[d + 1]];
            self.apply_layer(d, &cur, &mut next);
            cur = next;
        }
        cur
    }

    fn to_doc(&self) -> ParamsDoc {
        ParamsDoc {
            schema_version: PARAMS_SCHEMA_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: self.biases.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamsDoc = serde_json::from_str(text)?;
        if doc.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(NtdError::Parse(format!(
                "unsupported network schema_version {}",
                doc.schema_version
            )));
        }
        check_layer_sizes(&doc.layer_sizes)?;
        if doc.weights.len() != doc.layer_sizes.len() - 1 {
            return Err(NtdError::Parse(
                "weight list length does not match layer_sizes".into(),
            ));
        }
        let weights = doc
            .weights
            .into_iter()
            .zip(doc.layer_sizes.windows(2))
            .map(|(w, s)| Mat::from_vec(s[0], s[1], w))
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.layer_sizes, weights, doc.biases)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    schema_version: u32,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

fn check_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(NtdError::Invalid(format!(
            "a network needs at least one hidden layer, got layer sizes {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(NtdError::Invalid(format!(
            "layer sizes must be >= 1: {sizes:?}"
        )));
    }
    Ok(())
}

/// Activations of every layer for one input, `layers[0]` being the input itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().unwrap()
    }

    /// Hidden and output activations, excluding the input layer.
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.layers[1..]
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat,
    pub y: Mat,
}

impl Dataset {
    pub fn new(x: Mat, y: Mat) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(NtdError::shape("dataset", x.shape(), y.shape()));
        }
        if x.rows() == 0 || x.cols() == 0 || y.cols() == 0 {
            return Err(NtdError::Invalid("dataset must be non-empty".into()));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(NtdError::Invalid(
                "dataset contains non-finite values".into(),
            ));
        }
        let outside = y
            .as_slice()
            .iter()
            .filter(|v| !(0.0..=1.0).contains(*v))
            .count();
        if outside > 0 {
            log::warn!(
                "{outside} of {} targets lie outside [0, 1]; a sigmoid output cannot fit them exactly",
                y.as_slice().len()
            );
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.y.cols()
    }

    pub fn sample(&self, n: usize) -> (&[f64], &[f64]) {
        (self.x.row(n), self.y.row(n))
    }

    fn check_against(&self, params: &NetworkParams) -> Result<()> {
        if self.input_dim() != params.input_dim() || self.output_dim() != params.output_dim() {
            return Err(NtdError::shape(
                "dataset vs network",
                (self.input_dim(), self.output_dim()),
                (params.input_dim(), params.output_dim()),
            ));
        }
        Ok(())
    }
}

/// Mean squared Euclidean output error over the dataset.
pub fn training_error(params: &NetworkParams, data: &Dataset) -> Result<f64> {
    data.check_against(params)?;
    let mut scratch = Scratch::new(params);
    let mut total = 0.0;
    for n in 0..data.len() {
        let (x, y) = data.sample(n);
        scratch.forward(params, x);
        total += scratch
            .output()
            .iter()
            .zip(y)
            .map(|(o, t)| (t - o) * (t - o))
            .sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L1 coefficient.
    pub lambda: f64,
    /// Added to the sigmoid derivative in every delta.
    pub epsilon1: f64,
    /// Mean number of visits per sample; total steps = epochs * n.
    pub epochs: usize,
    pub eta0: f64,
    pub seed: u64,
    /// Uniform sampling with replacement when true, in-order sweeps otherwise.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 3e-5,
            epsilon1: 0.001,
            epochs: 200,
            eta0: 0.7,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(NtdError::Invalid("epochs must be >= 1".into()));
        }
        if !(self.eta0 > 0.0) || !self.eta0.is_finite() {
            return Err(NtdError::Invalid(format!(
                "eta0 must be > 0, got {}",
                self.eta0
            )));
        }
        if !(self.lambda >= 0.0) || !(self.epsilon1 >= 0.0) {
            return Err(NtdError::Invalid("lambda and epsilon1 must be >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate at 1-based step `t` for a dataset of `n` samples.
    pub fn eta(&self, t: usize, n: usize) -> f64 {
        let total = (self.epochs * n) as f64;
        self.eta0 * total / (total + 5.0 * t as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_error: f64,
    /// Training error after each epoch.
    pub epoch_errors: Vec<f64>,
    pub test_error: Option<f64>,
    pub near_zero_weights: usize,
    pub total_weights: usize,
    pub steps: usize,
}

/// Reusable per-sample buffers for forward and backward passes.
struct Scratch {
    layers: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(params: &NetworkParams) -> Self {
        let layers = params.layer_sizes.iter().map(|&n| vec![0.0; n]).collect();
        // deltas[d] belongs to layer d + 1
        let deltas = params.layer_sizes[1..]
            .iter()
            .map(|&n| vec![0.0; n])
            .collect();
        Self { layers, deltas }
    }

    fn forward(&mut self, params: &NetworkParams, x: &[f64]) {
        self.layers[0].copy_from_slice(x);
        for d in 0..params.depth() - 1 {
            let (done, rest) = self.layers.split_at_mut(d + 1);
            params.apply_layer(d, &done[d], &mut rest[0]);
        }
    }

    fn output(&self) -> &[f64] {
        self.layers.last().unwrap()
    }

    fn step(
        &mut self,
        params: &mut NetworkParams,
        x: &[f64],
        y: &[f64],
        lambda: f64,
        epsilon1: f64,
        eta: f64,
    ) {
        self.forward(params, x);
        let last = params.depth() - 1;

        let out = &self.layers[last];
        for (j, delta) in self.deltas[last - 1].iter_mut().enumerate() {
            let o = out[j];
            *delta = (o - y[j]) * (o * (1.0 - o) + epsilon1);
        }
        for layer in (1..last).rev() {
            let (lower, upper) = self.deltas.split_at_mut(layer);
            let above = &upper[0];
            let w = &params.weights[layer];
            for (j, delta) in lower[layer - 1].iter_mut().enumerate() {
                let back: f64 = w.row(j).iter().zip(above).map(|(wjk, dk)| wjk * dk).sum();
                let o = self.layers[layer][j];
                *delta = back * (o * (1.0 - o) + epsilon1);
            }
        }

        for d in 0..last {
            let below = &self.layers[d];
            let delta = &self.deltas[d];
            let w = &mut params.weights[d];
            for (i, &o) in below.iter().enumerate() {
                for (wij, &dj) in w.row_mut(i).iter_mut().zip(delta) {
                    *wij -= eta * (dj * o + lambda * sgn(*wij));
                }
            }
            for (b, &dj) in params.biases[d].iter_mut().zip(delta) {
                *b -= eta * dj;
            }
        }
    }
}

/// One stochastic steepest-descent update on a single sample.
pub fn sgd_step(
    params: &mut NetworkParams,
    x: &[f64],
    y: &[f64],
    config: &TrainConfig,
    eta: f64,
) -> Result<()> {
    if x.len() != params.input_dim() || y.len() != params.output_dim() {
        return Err(NtdError::shape(
            "sgd_step",
            (x.len(), y.len()),
            (params.input_dim(), params.output_dim()),
        ));
    }
    if !(eta > 0.0) {
        return Err(NtdError::Invalid(format!("eta must be > 0, got {eta}")));
    }
    Scratch::new(params).step(params, x, y, config.lambda, config.epsilon1, eta);
    Ok(())
}

/// Trains for `epochs * n` single-sample steps with the decaying rate
/// `eta0 * a n / (a n + 5 t)`, recording the training error after each epoch.
pub fn train(
    init: &NetworkParams,
    data: &Dataset,
    config: &TrainConfig,
    test: Option<&Dataset>,
) -> Result<(NetworkParams, TrainReport)> {
    config.validate()?;
    init.validate()?;
    data.check_against(init)?;
    if let Some(t) = test {
        t.check_against(init)?;
    }

    let n = data.len();
    let mut params = init.clone();
    let mut scratch = Scratch::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = TrainReport {
        initial_error: training_error(&params, data)?,
        epoch_errors: Vec::with_capacity(config.epochs),
        test_error: None,
        near_zero_weights: 0,
        total_weights: params.weight_count(),
        steps: 0,
    };

    let mut t = 0usize;
    for epoch in 1..=config.epochs {
        for i in 0..n {
            t += 1;
            let idx = if config.shuffle {
                rng.random_range(0..n)
            } else {
                i
            };
            let (x, y) = data.sample(idx);
            let eta = config.eta(t, n);
            scratch.step(&mut params, x, y, config.lambda, config.epsilon1, eta);
        }
        report.steps = t;
        let err = training_error(&params, data)?;
        if !params.is_finite() || !err.is_finite() {
            report.near_zero_weights = params.near_zero_weights(NEAR_ZERO_WEIGHT);
            return Err(NtdError::Diverged {
                epoch,
                partial: Box::new(report),
            });
        }
        report.epoch_errors.push(err);
        log::debug!("epoch {epoch}: E(w) = {err:.6}");
    }

    report.near_zero_weights = params.near_zero_weights(NEAR_ZERO_WEIGHT);
    if let Some(t) = test {
        report.test_error = Some(training_error(&params, t)?);
    }
    Ok((params, report))
}

/// Gaussian initialization: weights ~ N(0, weight_sigma^2), biases ~ N(0, bias_sigma^2).
pub fn init_params(
    layer_sizes: &[usize],
    seed: u64,
    weight_sigma: f64,
    bias_sigma: f64,
) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(layer_sizes)?;
    let wdist = Normal::new(0.0, weight_sigma)
        .map_err(|e| NtdError::Invalid(format!("weight_sigma: {e}")))?;
    let bdist =
        Normal::new(0.0, bias_sigma).map_err(|e| NtdError::Invalid(format!("bias_sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in 0..params.weights.len() {
        for w in params.weights[d].as_mut_slice() {
            *w = wdist.sample(&mut rng);
        }
        for b in &mut params.biases[d] {
            *b = bdist.sample(&mut rng);
        }
    }
    Ok(params)
}
