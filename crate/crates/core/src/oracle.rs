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


//! Window search over the generator's `m` parameter and the final
//! pre-train / fine-tune / predict step.
//!
//! Stage 0 scans broad windows (`[1,5,10]`, `[10,15,20]`, ...), stage 1
//! scans narrow consecutive windows inside the best broad one and keeps the
//! `top_k` best. Each window is scored by pre-training a fresh autoencoder on
//! synthetic power-law-cluster graphs built with the window's `m` values and
//! predicting held-out observed entries of the target.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::graph::{hop_distance_matrix_with, powerlaw_cluster_graph, GeneratorParams};
use crate::mask::Mask;
use crate::metrics::{evaluate, postprocess};
use crate::nn::{init_model, predict_matrix_with, train, Autoencoder, TrainConfig, TrainingCorpus, TrainingRow};
use crate::sampling::{sample_random_pairs, split_observed, PartialMatrix, SplitMask};
use crate::seed;

/// Strictly increasing list of candidate `m` values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Window(Vec<usize>);

impl Window {
    pub fn new(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("window", "no values"));
        }
        if values[0] == 0 {
            return Err(Error::param("window", "values must be at least 1"));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("window", format!("{values:?} is not strictly increasing")));
        }
        Ok(Window(values))
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn lead(&self) -> usize {
        self.0[0]
    }

    pub fn last(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    fn intersects(&self, other: &Window) -> bool {
        self.0.iter().any(|v| other.0.contains(v))
    }

    fn key(&self) -> u64 {
        seed::label(&self.to_string())
    }
}

impl TryFrom<Vec<usize>> for Window {
    type Error = Error;

    fn try_from(values: Vec<usize>) -> Result<Self> {
        Window::new(values)
    }
}

impl From<Window> for Vec<usize> {
    fn from(w: Window) -> Self {
        w.0
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// Accepts `[5,6,7]` or `5,6,7`.
impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let values = inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::param("window", format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Window::new(values)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Assumed upper bound on the target's average degree.
    pub n_d: usize,
    /// Stage-0 windows stop once their lead exceeds this value.
    pub broad_max: usize,
    pub p_values: Vec<f64>,
    pub networks_per_combo: usize,
    /// Degrade synthetic input rows at the target's sampled fraction.
    pub train_fraction_match: bool,
    pub top_k: usize,
    /// Share of observed pairs held out for window scoring and fine-tuning
    /// early stopping. 0 scores on every observed pair.
    pub validation_share: f64,
    pub stage1_width: usize,
    pub stage1_stride: usize,
    pub hidden_dim: usize,
    pub alpha: f64,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n_d: 10,
            broad_max: 100,
            p_values: (1..=9).map(|k| f64::from(k) / 10.0).collect(),
            networks_per_combo: 1,
            train_fraction_match: true,
            top_k: 3,
            validation_share: 0.2,
            stage1_width: 3,
            stage1_stride: 2,
            hidden_dim: 20,
            alpha: crate::nn::DEFAULT_ALPHA,
            pretrain: TrainConfig::default(),
            finetune: TrainConfig {
                max_epochs: 200,
                ..TrainConfig::default()
            },
            seed: 0,
            exec: Execution::default(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_d < 2 {
            return Err(Error::param("n_d", "must be at least 2"));
        }
        if self.top_k == 0 {
            return Err(Error::param("top_k", "must be at least 1"));
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("p_values", "need at least one value, all in [0, 1]"));
        }
        if self.networks_per_combo == 0 {
            return Err(Error::param("networks_per_combo", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_share) {
            return Err(Error::param("validation_share", "must be in [0, 1)"));
        }
        if self.stage1_width == 0 || self.stage1_stride == 0 {
            return Err(Error::param("stage1_width", "width and stride must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::param("hidden_dim", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must be in (0, 1)"));
        }
        self.pretrain.validate()?;
        self.finetune.validate()
    }

    fn stream(&self, tag: &str, path: &[u64]) -> u64 {
        let mut full = vec![seed::label(tag)];
        full.extend_from_slice(path);
        seed::derive(self.seed, &full)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    /// 0 for broad windows, 1 for narrow ones.
    pub stage: u8,
    pub window: Window,
    pub validation_mean_error: f64,
    pub validation_ahde: f64,
    /// 1-based position within the stage.
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOutcome {
    pub stage0: Vec<WindowReport>,
    pub stage1: Vec<WindowReport>,
    /// Best `top_k` narrow windows, best first.
    pub selected: Vec<Window>,
}

impl OracleOutcome {
    /// Stage 0 then stage 1 reports, each in rank order.
    pub fn reports(&self) -> impl Iterator<Item = &WindowReport> {
        self.stage0.iter().chain(&self.stage1)
    }
}

/// `[1,5,10]`, then `[10k, 10k+5, 10k+10]` while the lead stays within
/// `broad_max`. Empty when `n_d < 10`.
pub fn build_stage0_windows(cfg: &OracleConfig) -> Vec<Window> {
    if cfg.n_d < 10 || cfg.broad_max < 1 {
        return Vec::new();
    }
    let mut out = vec![Window(vec![1, 5, 10])];
    let mut lead = 10;
    while lead + 10 <= cfg.broad_max {
        out.push(Window(vec![lead, lead + 5, lead + 10]));
        lead += 10;
    }
    out
}

/// Narrow windows of width 3 and stride 2 spanning `[min, max + 1]` of
/// the broad window.
pub fn build_stage1_windows(broad: &Window) -> Vec<Window> {
    build_stage1_windows_with(broad, 3, 2)
}

pub fn build_stage1_windows_with(broad: &Window, width: usize, stride: usize) -> Vec<Window> {
    let (lo, hi) = (broad.lead(), broad.last() + 1);
    let make = |s: usize| Window((s..s + width).collect());
    let mut out = Vec::new();
    let mut s = lo;
    while s + width - 1 <= hi {
        out.push(make(s));
        s += stride;
    }
    if out.is_empty() {
        out.push(make(lo));
    }
    out
}

/// Broad window used when stage 0 is skipped.
fn fallback_broad(n_d: usize) -> Window {
    let mut values = vec![1, n_d.div_ceil(2), n_d];
    values.dedup();
    Window(values)
}

/// Rows of synthetic hop-distance matrices, one network per
/// `(m, p, repetition)`, in that nesting order.
pub fn generate_corpus(window: &Window, n: usize, cfg: &OracleConfig, fraction: f64) -> Result<TrainingCorpus> {
    if let Some(&m) = window.values().iter().find(|&&m| m >= n) {
        return Err(Error::param("window", format!("m = {m} is not below n = {n}")));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("fraction", format!("{fraction} is not in (0, 1]")));
    }
    let mut combos = Vec::new();
    for &m in window.values() {
        for (pi, &p) in cfg.p_values.iter().enumerate() {
            for rep in 0..cfg.networks_per_combo {
                combos.push((m, pi, p, rep));
            }
        }
    }
    let networks = exec::map_slice(cfg.exec, &combos, |&(m, pi, p, rep)| -> Result<Vec<TrainingRow>> {
        let path = [m as u64, pi as u64, rep as u64];
        let params = GeneratorParams::new(n, m, p, cfg.stream("graph", &path));
        let h = hop_distance_matrix_with(&powerlaw_cluster_graph(&params)?, Execution::Sequential)?;
        let degraded = if cfg.train_fraction_match && fraction < 1.0 {
            Some(sample_random_pairs(&h, fraction, cfg.stream("mask", &path))?)
        } else {
            None
        };
        (0..n)
            .map(|i| {
                let target: Vec<f64> = h.row(i).iter().map(|&v| f64::from(v)).collect();
                match &degraded {
                    Some(p) => TrainingRow::fully_supervised(p.row(i), target),
                    None => TrainingRow::fully_supervised(&target.clone(), target),
                }
            })
            .collect()
    });
    let mut corpus = TrainingCorpus::new(n);
    for rows in networks {
        for row in rows? {
            corpus.push(row)?;
        }
    }
    Ok(corpus)
}

fn pretrain_config(cfg: &OracleConfig, window: &Window) -> TrainConfig {
    TrainConfig {
        seed: cfg.stream("pretrain", &[cfg.pretrain.seed, window.key()]),
        ..cfg.pretrain.clone()
    }
}

/// Fresh model trained on the window's synthetic corpus.
pub fn pretrain(window: &Window, n: usize, fraction: f64, cfg: &OracleConfig) -> Result<Autoencoder> {
    let corpus = generate_corpus(window, n, cfg, fraction)?;
    let model = init_model(n, cfg.hidden_dim, cfg.alpha, cfg.stream("init", &[]))?;
    Ok(train(model, &corpus, &pretrain_config(cfg, window), None)?.model)
}

/// The split used for scoring; with a zero share every observed pair is
/// both input and score target.
fn oracle_split(p: &PartialMatrix, cfg: &OracleConfig) -> Result<SplitMask> {
    if cfg.validation_share > 0.0 {
        split_observed(p, cfg.validation_share, cfg.stream("split", &[]))
    } else {
        Ok(SplitMask {
            train_mask: p.mask().clone(),
            validation_mask: p.mask().and(&Mask::off_diagonal(p.n())),
        })
    }
}

/// Pre-trains on the window and scores the prediction on the validation
/// entries of `p`, which are zeroed in the model input.
pub fn evaluate_window(window: &Window, p: &PartialMatrix, split: &SplitMask, cfg: &OracleConfig) -> Result<WindowReport> {
    let wrap = |e: Error| Error::Window {
        window: window.to_string(),
        source: Box::new(e),
    };
    let input = p.restrict(&split.train_mask).map_err(wrap)?;
    let model = pretrain(window, p.n(), p.sampled_fraction(), cfg).map_err(wrap)?;
    let pred = postprocess(&predict_matrix_with(&model, &input, Execution::Sequential).map_err(wrap)?);
    let scores = evaluate(&pred, &p.to_matrix(), &split.validation_mask).map_err(wrap)?;
    log::debug!(
        "window {window}: mean error {:.4}, ahde {:.4}",
        scores.mean_error,
        scores.ahde
    );
    Ok(WindowReport {
        stage: 0,
        window: window.clone(),
        validation_mean_error: scores.mean_error,
        validation_ahde: scores.ahde,
        rank: 0,
    })
}

/// Evaluates `windows` (in parallel when configured) and ranks them by
/// mean error, ties to the smaller lead.
fn run_stage(stage: u8, windows: &[Window], p: &PartialMatrix, split: &SplitMask, cfg: &OracleConfig) -> Result<Vec<WindowReport>> {
    let results = exec::map_slice(cfg.exec, windows, |w| evaluate_window(w, p, split, cfg));
    let mut reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| {
        a.validation_mean_error
            .total_cmp(&b.validation_mean_error)
            .then(a.window.lead().cmp(&b.window.lead()))
            .then(a.window.cmp(&b.window))
    });
    for (k, r) in reports.iter_mut().enumerate() {
        r.stage = stage;
        r.rank = k + 1;
    }
    Ok(reports)
}

pub fn run_oracle(p: &PartialMatrix, cfg: &OracleConfig) -> Result<OracleOutcome> {
    cfg.validate()?;
    let n = p.n();
    let fits = |w: &Window| w.last() < n;
    let split = oracle_split(p, cfg)?;

    let broad_windows: Vec<Window> = build_stage0_windows(cfg).into_iter().filter(fits).collect();
    let stage0 = run_stage(0, &broad_windows, p, &split, cfg)?;
    let broad = match stage0.first() {
        Some(best) => best.window.clone(),
        None => fallback_broad(cfg.n_d.min(n - 1).max(1)),
    };
    log::info!("stage 0 picked {broad}");

    let narrow: Vec<Window> = build_stage1_windows_with(&broad, cfg.stage1_width, cfg.stage1_stride)
        .into_iter()
        .filter(fits)
        .collect();
    if narrow.is_empty() {
        return Err(Error::param("window", format!("no narrow window of {broad} fits {n} nodes")));
    }
    let stage1 = run_stage(1, &narrow, p, &split, cfg)?;
    let selected: Vec<Window> = stage1.iter().take(cfg.top_k).map(|r| r.window.clone()).collect();
    log::info!(
        "selected {}",
        selected.iter().map(Window::to_string).collect::<Vec<_>>().join(" ")
    );
    Ok(OracleOutcome {
        stage0,
        stage1,
        selected,
    })
}

/// The leads of exactly three windows that overlap in a chain (so
/// `[5,6,7] [7,8,9] [9,10,11]` gives `[5,7,9]`); otherwise the sorted union.
pub fn covering_list(selected: &[Window]) -> Vec<usize> {
    let mut sorted = selected.to_vec();
    sorted.sort();
    let chained = sorted.len() == 3 && sorted.windows(2).all(|w| w[0].intersects(&w[1]));
    if chained {
        return sorted.iter().map(Window::lead).collect();
    }
    let mut union: Vec<usize> = sorted.iter().flat_map(|w| w.values().iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    union
}

/// Continues training on the observed rows of `p`, with loss restricted to
/// observed cells. A validation share above 0 holds out observed pairs for
/// early stopping.
pub fn fine_tune(model: Autoencoder, p: &PartialMatrix, cfg: &OracleConfig) -> Result<Autoencoder> {
    let train_cfg = TrainConfig {
        seed: cfg.stream("finetune", &[cfg.finetune.seed]),
        ..cfg.finetune.clone()
    };
    if cfg.validation_share > 0.0 && p.observed_pairs() >= 2 {
        let split = split_observed(p, cfg.validation_share, cfg.stream("finetune-split", &[]))?;
        let train_part = p.restrict(&split.train_mask)?;
        let held_out = p.restrict(&split.validation_mask)?;
        let corpus = TrainingCorpus::from_partial(&train_part)?;
        let validation = TrainingCorpus::from_partial_with_targets(&train_part, &held_out)?;
        Ok(train(model, &corpus, &train_cfg, Some(&validation))?.model)
    } else {
        let corpus = TrainingCorpus::from_partial(p)?;
        Ok(train(model, &corpus, &train_cfg, None)?.model)
    }
}

/// Post-processed prediction of the full matrix from every observation.
pub fn predict(model: &Autoencoder, p: &PartialMatrix, exec: Execution) -> Result<DMatrix<f64>> {
    Ok(postprocess(&predict_matrix_with(model, p, exec)?))
}

/// Pre-trains on the covering list of `selected`, optionally fine-tunes on
/// `p`, and predicts.
pub fn stage2_predict(p: &PartialMatrix, selected: &[Window], fine_tune_on_p: bool, cfg: &OracleConfig) -> Result<DMatrix<f64>> {
    let model = stage2_pretrain(p, selected, cfg)?;
    let model = if fine_tune_on_p { fine_tune(model, p, cfg)? } else { model };
    predict(&model, p, cfg.exec)
}

pub fn stage2_pretrain(p: &PartialMatrix, selected: &[Window], cfg: &OracleConfig) -> Result<Autoencoder> {
    if selected.is_empty() {
        return Err(Error::Empty("no window selected"));
    }
    let window = Window::new(covering_list(selected))?;
    log::info!("pre-training on {window}");
    pretrain(&window, p.n(), p.sampled_fraction(), cfg)
}
