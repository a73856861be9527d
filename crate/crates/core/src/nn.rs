// Licensed under the Apache License, Version 2.0 (the "License"); you may
// not use this file except in compliance with the License. You may obtain
// a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
// License for the specific language governing permissions and limitations
// under the License.

//! Single hidden layer autoencoder with Leaky ReLU on both layers, trained
//! by masked mean squared error and plain stochastic gradient descent.
//!
//! A training example is one matrix row: the (partially observed) input row,
//! the full target row and the set of output positions that contribute to
//! the loss. Zero inputs contribute nothing to the encoder, so encoder work
//! scales with the number of observed entries rather than the row length.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::sampling::PartialMatrix;
use crate::seed;

pub const DEFAULT_ALPHA: f64 = 0.01;

#[inline]
fn activate(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        alpha * z
    }
}

#[inline]
fn slope(z: f64, alpha: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        alpha
    }
}

/// Elementwise `z` for `z > 0`, `alpha * z` otherwise.
pub fn leaky_relu(z: &[f64], alpha: f64) -> Vec<f64> {
    z.iter().map(|&v| activate(v, alpha)).collect()
}

/// Mean of squared errors over the masked positions.
pub fn masked_mse(pred: &[f64], target: &[f64], loss_mask: &[bool]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != loss_mask.len() {
        return Err(Error::Dimension {
            expected: pred.len(),
            actual: target.len().min(loss_mask.len()),
        });
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((&p, &t), &m) in pred.iter().zip(target).zip(loss_mask) {
        if m {
            sum += (t - p) * (t - p);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("loss mask selects no positions"));
    }
    Ok(sum / count as f64)
}

/// Encoder `h = σ(Wx + b)`, decoder `x̂ = σ(W'h + b')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    input_dim: usize,
    hidden_dim: usize,
    alpha: f64,
    /// `hidden_dim × input_dim`, row-major.
    encoder_weights: Vec<f64>,
    encoder_bias: Vec<f64>,
    /// `input_dim × hidden_dim`, row-major.
    decoder_weights: Vec<f64>,
    decoder_bias: Vec<f64>,
}

/// Output of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Forward {
    pub output: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Parameter-shaped gradients of the masked loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub encoder_weights: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub decoder_weights: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

impl Gradients {
    fn zeros_like(model: &Autoencoder) -> Self {
        Gradients {
            loss: 0.0,
            encoder_weights: vec![0.0; model.encoder_weights.len()],
            encoder_bias: vec![0.0; model.encoder_bias.len()],
            decoder_weights: vec![0.0; model.decoder_weights.len()],
            decoder_bias: vec![0.0; model.decoder_bias.len()],
        }
    }

    /// Squared Euclidean norm over all parameters.
    pub fn norm_squared(&self) -> f64 {
        [
            &self.encoder_weights,
            &self.encoder_bias,
            &self.decoder_weights,
            &self.decoder_bias,
        ]
        .iter()
        .flat_map(|b| b.iter())
        .map(|g| g * g)
        .sum()
    }
}

/// Scratch buffers reused across rows.
#[derive(Clone, Debug)]
struct Activations {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    output_pre: Vec<f64>,
    output: Vec<f64>,
    output_delta: Vec<f64>,
    hidden_delta: Vec<f64>,
}

impl Activations {
    fn new(model: &Autoencoder) -> Self {
        Activations {
            hidden_pre: vec![0.0; model.hidden_dim],
            hidden: vec![0.0; model.hidden_dim],
            output_pre: vec![0.0; model.input_dim],
            output: vec![0.0; model.input_dim],
            output_delta: vec![0.0; model.input_dim],
            hidden_delta: vec![0.0; model.hidden_dim],
        }
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is not in (0, 1)")))
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(input_dim: usize, hidden_dim: usize, alpha: f64, seed: u64) -> Result<Autoencoder> {
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::param("dims", "input and hidden dimensions must be at least 1"));
    }
    validate_alpha(alpha)?;
    let limit = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
    let mut rng = seed::rng(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
    };
    let encoder_weights = draw(hidden_dim * input_dim);
    let decoder_weights = draw(input_dim * hidden_dim);
    Ok(Autoencoder {
        input_dim,
        hidden_dim,
        alpha,
        encoder_weights,
        encoder_bias: vec![0.0; hidden_dim],
        decoder_weights,
        decoder_bias: vec![0.0; input_dim],
    })
}

impl Autoencoder {
    /// Assembles a model from raw parameters, checking shapes and finiteness.
    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        alpha: f64,
        encoder_weights: Vec<f64>,
        encoder_bias: Vec<f64>,
        decoder_weights: Vec<f64>,
        decoder_bias: Vec<f64>,
    ) -> Result<Self> {
        let model = Autoencoder {
            input_dim,
            hidden_dim,
            alpha,
            encoder_weights,
            encoder_bias,
            decoder_weights,
            decoder_bias,
        };
        model.validate()?;
        Ok(model)
    }

    /// All-zero parameters.
    pub fn zeros(input_dim: usize, hidden_dim: usize, alpha: f64) -> Result<Self> {
        Self::from_parts(
            input_dim,
            hidden_dim,
            alpha,
            vec![0.0; hidden_dim * input_dim],
            vec![0.0; hidden_dim],
            vec![0.0; input_dim * hidden_dim],
            vec![0.0; input_dim],
        )
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::param("dims", "input and hidden dimensions must be at least 1"));
        }
        validate_alpha(self.alpha)?;
        let expect = [
            (self.encoder_weights.len(), self.hidden_dim * self.input_dim),
            (self.encoder_bias.len(), self.hidden_dim),
            (self.decoder_weights.len(), self.input_dim * self.hidden_dim),
            (self.decoder_bias.len(), self.input_dim),
        ];
        for (actual, expected) in expect {
            if actual != expected {
                return Err(Error::Dimension { expected, actual });
            }
        }
        if !self.parameters().all(f64::is_finite) {
            return Err(Error::param("parameters", "non-finite value"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn encoder_weights(&self) -> &[f64] {
        &self.encoder_weights
    }

    pub fn encoder_bias(&self) -> &[f64] {
        &self.encoder_bias
    }

    pub fn decoder_weights(&self) -> &[f64] {
        &self.decoder_weights
    }

    pub fn decoder_bias(&self) -> &[f64] {
        &self.decoder_bias
    }

    /// Every parameter, in a fixed order: W, b, W', b'.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.encoder_weights
            .iter()
            .chain(&self.encoder_bias)
            .chain(&self.decoder_weights)
            .chain(&self.decoder_bias)
            .copied()
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.input_dim * self.hidden_dim + self.input_dim + self.hidden_dim
    }

    /// Mutable access to parameter `index` in [`Self::parameters`] order.
    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        let mut k = index;
        for buf in [
            &mut self.encoder_weights,
            &mut self.encoder_bias,
            &mut self.decoder_weights,
            &mut self.decoder_bias,
        ] {
            if k < buf.len() {
                return &mut buf[k];
            }
            k -= buf.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.input_dim {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.input_dim,
                actual: len,
            })
        }
    }

    fn run(&self, input: SparseView<'_>, act: &mut Activations) {
        let (n, h, alpha) = (self.input_dim, self.hidden_dim, self.alpha);
        for j in 0..h {
            let row = &self.encoder_weights[j * n..(j + 1) * n];
            let mut z = self.encoder_bias[j];
            for (&l, &x) in input.indices.iter().zip(input.values) {
                z += row[l as usize] * x;
            }
            act.hidden_pre[j] = z;
            act.hidden[j] = activate(z, alpha);
        }
        for i in 0..n {
            let row = &self.decoder_weights[i * h..(i + 1) * h];
            let mut z = self.decoder_bias[i];
            for (w, hv) in row.iter().zip(&act.hidden) {
                z += w * hv;
            }
            act.output_pre[i] = z;
            act.output[i] = activate(z, alpha);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        self.check_len(x.len())?;
        let sparse = SparseRow::from_dense(x);
        let mut act = Activations::new(self);
        self.run(sparse.view(), &mut act);
        Ok(Forward {
            output: act.output,
            hidden: act.hidden,
        })
    }

    /// Runs the forward pass and fills the output and hidden deltas of the
    /// masked loss. Returns the loss.
    fn backprop_deltas(&self, row: &TrainingRow, act: &mut Activations) -> f64 {
        let (n, h, alpha) = (self.input_dim, self.hidden_dim, self.alpha);
        self.run(row.input.view(), act);

        let cells = row.loss_cell_count();
        let scale = 2.0 / cells as f64;
        let mut loss = 0.0;
        act.output_delta.iter_mut().for_each(|d| *d = 0.0);
        act.hidden_delta.iter_mut().for_each(|d| *d = 0.0);
        row.for_each_loss_cell(|i| {
            let err = act.output[i] - row.target[i];
            loss += err * err;
            let delta = scale * err * slope(act.output_pre[i], alpha);
            act.output_delta[i] = delta;
            let w = &self.decoder_weights[i * h..(i + 1) * h];
            for (hd, wij) in act.hidden_delta.iter_mut().zip(w) {
                *hd += delta * wij;
            }
        });
        for j in 0..h {
            act.hidden_delta[j] *= slope(act.hidden_pre[j], alpha);
        }
        debug_assert_eq!(act.output.len(), n);
        loss / cells as f64
    }

    /// Adds `weight * ∂loss/∂θ` for one row into `grads`.
    fn accumulate_gradient(&self, row: &TrainingRow, act: &mut Activations, grads: &mut Gradients, weight: f64) {
        let (n, h) = (self.input_dim, self.hidden_dim);
        let loss = self.backprop_deltas(row, act);
        grads.loss += weight * loss;
        row.for_each_loss_cell(|i| {
            let delta = weight * act.output_delta[i];
            grads.decoder_bias[i] += delta;
            let g = &mut grads.decoder_weights[i * h..(i + 1) * h];
            for (gij, hv) in g.iter_mut().zip(&act.hidden) {
                *gij += delta * hv;
            }
        });
        for j in 0..h {
            let delta = weight * act.hidden_delta[j];
            grads.encoder_bias[j] += delta;
            let g = &mut grads.encoder_weights[j * n..(j + 1) * n];
            for (&l, &x) in row.input.indices.iter().zip(&row.input.values) {
                g[l as usize] += delta * x;
            }
        }
    }

    /// One in-place SGD update on a single row; returns the pre-update loss.
    fn sgd_step(&mut self, row: &TrainingRow, lr: f64, act: &mut Activations) -> f64 {
        let (n, h) = (self.input_dim, self.hidden_dim);
        let loss = self.backprop_deltas(row, act);
        let decoder_weights = &mut self.decoder_weights;
        let decoder_bias = &mut self.decoder_bias;
        row.for_each_loss_cell(|i| {
            let delta = act.output_delta[i];
            decoder_bias[i] -= lr * delta;
            let w = &mut decoder_weights[i * h..(i + 1) * h];
            for (wij, hv) in w.iter_mut().zip(&act.hidden) {
                *wij -= lr * delta * hv;
            }
        });
        for j in 0..h {
            let delta = act.hidden_delta[j];
            self.encoder_bias[j] -= lr * delta;
            let w = &mut self.encoder_weights[j * n..(j + 1) * n];
            for (&l, &x) in row.input.indices.iter().zip(&row.input.values) {
                w[l as usize] -= lr * delta * x;
            }
        }
        loss
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (p, g) in self
            .encoder_weights
            .iter_mut()
            .zip(&grads.encoder_weights)
            .chain(self.encoder_bias.iter_mut().zip(&grads.encoder_bias))
            .chain(self.decoder_weights.iter_mut().zip(&grads.decoder_weights))
            .chain(self.decoder_bias.iter_mut().zip(&grads.decoder_bias))
        {
            *p -= lr * g;
        }
    }

    /// Masked loss of one row without touching parameters.
    fn row_loss(&self, row: &TrainingRow, act: &mut Activations) -> f64 {
        self.run(row.input.view(), act);
        let mut loss = 0.0;
        row.for_each_loss_cell(|i| {
            let err = act.output[i] - row.target[i];
            loss += err * err;
        });
        loss / row.loss_cell_count() as f64
    }

    /// Mean per-row masked loss over a corpus.
    pub fn corpus_loss(&self, corpus: &TrainingCorpus) -> Result<f64> {
        self.check_len(corpus.dim)?;
        if corpus.rows.is_empty() {
            return Err(Error::Empty("corpus has no rows"));
        }
        let mut act = Activations::new(self);
        let total: f64 = corpus.rows.iter().map(|r| self.row_loss(r, &mut act)).sum();
        Ok(total / corpus.rows.len() as f64)
    }

    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<()> {
        let container = Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(out, &container)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(input: R) -> Result<Self> {
        let container: Checkpoint = serde_json::from_reader(input)?;
        if container.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", container.format)));
        }
        if container.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", container.version)));
        }
        container.model.validate()?;
        Ok(container.model)
    }
}

const CHECKPOINT_FORMAT: &str = "hopdist-autoencoder";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: Autoencoder,
}

/// Exact gradient of `masked_mse(forward(x).output, target, mask)`.
pub fn gradient(model: &Autoencoder, x: &[f64], target: &[f64], loss_mask: &[bool]) -> Result<Gradients> {
    model.check_len(x.len())?;
    let row = TrainingRow::new(x.to_vec(), target.to_vec(), loss_mask.to_vec())?;
    let mut grads = Gradients::zeros_like(model);
    let mut act = Activations::new(model);
    model.accumulate_gradient(&row, &mut act, &mut grads, 1.0);
    Ok(grads)
}

#[derive(Clone, Debug, PartialEq)]
struct SparseRow {
    indices: Vec<u32>,
    values: Vec<f64>,
}

#[derive(Clone, Copy)]
struct SparseView<'a> {
    indices: &'a [u32],
    values: &'a [f64],
}

impl SparseRow {
    fn from_dense(x: &[f64]) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                indices.push(i as u32);
                values.push(v);
            }
        }
        SparseRow { indices, values }
    }

    fn view(&self) -> SparseView<'_> {
        SparseView {
            indices: &self.indices,
            values: &self.values,
        }
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingRow {
    input: SparseRow,
    target: Vec<f64>,
    /// `None` means every position counts.
    loss_cells: Option<Vec<u32>>,
}

impl TrainingRow {
    pub fn new(input: Vec<f64>, target: Vec<f64>, loss_mask: Vec<bool>) -> Result<Self> {
        if input.len() != target.len() || input.len() != loss_mask.len() {
            return Err(Error::Dimension {
                expected: input.len(),
                actual: target.len().min(loss_mask.len()),
            });
        }
        let cells: Vec<u32> = loss_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i as u32))
            .collect();
        if cells.is_empty() {
            return Err(Error::Empty("loss mask selects no positions"));
        }
        let loss_cells = (cells.len() != loss_mask.len()).then_some(cells);
        Ok(TrainingRow {
            input: SparseRow::from_dense(&input),
            target,
            loss_cells,
        })
    }

    /// Row whose loss covers every position.
    pub fn fully_supervised(input: &[f64], target: Vec<f64>) -> Result<Self> {
        if input.len() != target.len() || target.is_empty() {
            return Err(Error::Dimension {
                expected: input.len(),
                actual: target.len(),
            });
        }
        Ok(TrainingRow {
            input: SparseRow::from_dense(input),
            target,
            loss_cells: None,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn input(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.len()];
        for (&i, &v) in self.input.indices.iter().zip(&self.input.values) {
            dense[i as usize] = v;
        }
        dense
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn loss_mask(&self) -> Vec<bool> {
        match &self.loss_cells {
            None => vec![true; self.len()],
            Some(cells) => {
                let mut mask = vec![false; self.len()];
                cells.iter().for_each(|&i| mask[i as usize] = true);
                mask
            }
        }
    }

    fn loss_cell_count(&self) -> usize {
        self.loss_cells.as_ref().map_or(self.target.len(), Vec::len)
    }

    #[inline]
    fn for_each_loss_cell(&self, mut f: impl FnMut(usize)) {
        match &self.loss_cells {
            None => (0..self.target.len()).for_each(f),
            Some(cells) => cells.iter().for_each(|&i| f(i as usize)),
        }
    }
}

/// Rows of equal length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingCorpus {
    dim: usize,
    rows: Vec<TrainingRow>,
}

impl TrainingCorpus {
    pub fn new(dim: usize) -> Self {
        TrainingCorpus {
            dim,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: TrainingRow) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: TrainingCorpus) -> Result<()> {
        if other.dim != self.dim && !other.rows.is_empty() {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: other.dim,
            });
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[TrainingRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows of a partial matrix: input and target are the observed row and
    /// the loss covers its observed positions. Rows whose mask selects
    /// nothing are skipped.
    pub fn from_partial(p: &PartialMatrix) -> Result<Self> {
        Self::from_partial_with_targets(p, p)
    }

    /// Inputs from `inputs`; targets and loss positions from `targets`.
    pub fn from_partial_with_targets(inputs: &PartialMatrix, targets: &PartialMatrix) -> Result<Self> {
        let n = inputs.n();
        if targets.n() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: targets.n(),
            });
        }
        let mut corpus = TrainingCorpus::new(n);
        for i in 0..n {
            let mask = targets.mask().row(i).to_vec();
            if !mask.iter().any(|&m| m) {
                continue;
            }
            corpus.push(TrainingRow::new(inputs.row(i).to_vec(), targets.row(i).to_vec(), mask)?)?;
        }
        Ok(corpus)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 1,
            max_epochs: 50,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", format!("{}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::param("max_epochs", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Autoencoder,
    /// Mean training loss per epoch, measured during the epoch.
    pub loss_history: Vec<f64>,
    /// Validation loss after each epoch (empty without validation).
    pub validation_history: Vec<f64>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Plain SGD over shuffled rows.
///
/// With a validation corpus, training stops once the validation loss has
/// not improved for `patience` consecutive epochs and the best parameters
/// are returned; otherwise the final parameters are.
pub fn train(
    model: Autoencoder,
    corpus: &TrainingCorpus,
    cfg: &TrainConfig,
    validation: Option<&TrainingCorpus>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus has no rows"));
    }
    model.check_len(corpus.dim)?;
    let validation = validation.filter(|v| !v.is_empty());
    if let Some(v) = validation {
        model.check_len(v.dim)?;
    }

    let mut model = model;
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut act = Activations::new(&model);
    let mut batch_grads = (cfg.batch_size > 1).then(|| Gradients::zeros_like(&model));
    let lr = cfg.learning_rate;

    let mut loss_history = Vec::with_capacity(cfg.max_epochs);
    let mut validation_history = Vec::new();
    let mut best: Option<(f64, usize, Autoencoder)> = None;
    let mut stale = 0usize;
    let mut last_epoch = 0;

    for epoch in 0..cfg.max_epochs {
        last_epoch = epoch;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        match batch_grads.as_mut() {
            None => {
                for &idx in &order {
                    let loss = model.sgd_step(&corpus.rows[idx], lr, &mut act);
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch, loss });
                    }
                    epoch_loss += loss;
                }
            }
            Some(grads) => {
                for batch in order.chunks(cfg.batch_size) {
                    let mut fresh = Gradients::zeros_like(&model);
                    std::mem::swap(grads, &mut fresh);
                    let weight = 1.0 / batch.len() as f64;
                    for &idx in batch {
                        model.accumulate_gradient(&corpus.rows[idx], &mut act, grads, weight);
                    }
                    if !grads.loss.is_finite() {
                        return Err(Error::Diverged { epoch, loss: grads.loss });
                    }
                    epoch_loss += grads.loss * batch.len() as f64;
                    model.apply(grads, lr);
                }
            }
        }
        let mean_loss = epoch_loss / corpus.len() as f64;
        if !model.parameters().all(f64::is_finite) {
            return Err(Error::Diverged { epoch, loss: mean_loss });
        }
        loss_history.push(mean_loss);
        log::trace!("epoch {epoch}: train loss {mean_loss:.6}");

        if let Some(v) = validation {
            let v_loss = model.corpus_loss(v)?;
            if !v_loss.is_finite() {
                return Err(Error::Diverged { epoch, loss: v_loss });
            }
            validation_history.push(v_loss);
            let improved = best.as_ref().is_none_or(|(b, _, _)| v_loss < *b);
            if improved {
                best = Some((v_loss, epoch, model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale > cfg.patience {
                    break;
                }
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, epoch, m)) => (m, epoch),
        None => (model, last_epoch),
    };
    Ok(TrainOutcome {
        model,
        loss_history,
        validation_history,
        best_epoch,
    })
}

/// Feeds every row of `p` through the model and returns `(M + Mᵀ) / 2`.
pub fn predict_matrix(model: &Autoencoder, p: &PartialMatrix) -> Result<DMatrix<f64>> {
    predict_matrix_with(model, p, Execution::default())
}

pub fn predict_matrix_with(model: &Autoencoder, p: &PartialMatrix, exec: Execution) -> Result<DMatrix<f64>> {
    let n = p.n();
    model.check_len(n)?;
    let rows = exec::map_range(exec, n, |i| {
        let sparse = SparseRow::from_dense(p.row(i));
        let mut act = Activations::new(model);
        model.run(sparse.view(), &mut act);
        act.output
    });
    let raw = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(DMatrix::from_fn(n, n, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)])))
}
