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


//! Sweeps over (method, sampling fraction, seed) on one dataset.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::completion::{complete_lowrank, default_params};
use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{hop_distance_matrix_with, HopDistanceMatrix};
use crate::metrics::{evaluate, postprocess, EvalResult};
use crate::nn::init_model;
use crate::oracle::{fine_tune, predict, run_oracle, stage2_pretrain, OracleConfig, OracleOutcome};
use crate::sampling::{sample_random_pairs, unobserved_mask, PartialMatrix};
use crate::seed;
use crate::spectrum::singular_value_profile;

/// Outcome of one grid cell. Exactly one of `result` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub result: Option<EvalResult>,
    pub error: Option<String>,
}

impl CellRecord {
    pub fn is_ok(&self) -> bool {
        self.result.is_some()
    }
}

/// One ranked window from the oracle run of a (fraction, seed) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub fraction: f64,
    pub seed: u64,
    pub stage: u8,
    pub window: String,
    pub mean_error: f64,
    pub ahde: f64,
    pub rank: usize,
    pub selected: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub nodes: usize,
    /// Grid order: methods, then fractions, then seeds, as configured.
    pub cells: Vec<CellRecord>,
    pub oracle: Vec<OracleRecord>,
    /// Singular values of the dataset's hop-distance matrix, if requested.
    pub singular_values: Option<Vec<f64>>,
}

impl ExperimentReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_ok()).count()
    }
}

/// Seed of the sample drawn for `(fraction, seed)`.
pub fn sample_seed(seed: u64, fraction: f64) -> u64 {
    seed::derive(seed, &[seed::label("sample"), fraction.to_bits()])
}

/// Oracle settings for one grid seed.
pub fn oracle_for(cfg: &ExperimentConfig, seed: u64) -> OracleConfig {
    OracleConfig {
        seed: seed::derive(cfg.oracle.seed, &[seed]),
        finetune: cfg.train.clone(),
        exec: cfg.exec,
        ..cfg.oracle.clone()
    }
}

/// Runs every configured cell. Only dataset loading can fail as a whole;
/// per-cell failures are recorded in the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let graph = cfg.dataset.load()?;
    let h = hop_distance_matrix_with(&graph, cfg.exec)?;
    log::info!("dataset {}: {} nodes, {} edges", cfg.dataset, h.n(), graph.edge_count());
    run_on_matrix(cfg, &h)
}

/// As [`run_experiment`] on an already computed hop-distance matrix.
pub fn run_on_matrix(cfg: &ExperimentConfig, h: &HopDistanceMatrix) -> Result<ExperimentReport> {
    let units: Vec<(usize, usize)> = (0..cfg.fractions.len())
        .flat_map(|fi| (0..cfg.seeds.len()).map(move |si| (fi, si)))
        .collect();
    let outcomes = exec::map_slice(cfg.exec, &units, |&(fi, si)| {
        run_unit(cfg, h, cfg.fractions[fi], cfg.seeds[si])
    });

    let mut cells = Vec::new();
    for mi in 0..cfg.methods.len() {
        for fi in 0..cfg.fractions.len() {
            for si in 0..cfg.seeds.len() {
                cells.push(outcomes[fi * cfg.seeds.len() + si].cells[mi].clone());
            }
        }
    }
    let oracle = outcomes.iter().flat_map(|u| u.oracle.iter().cloned()).collect();
    let singular_values = cfg.profile.then(|| singular_value_profile(h));
    let report = ExperimentReport {
        dataset: cfg.dataset.to_string(),
        nodes: h.n(),
        cells,
        oracle,
        singular_values,
    };
    if report.failed_cells() > 0 {
        log::warn!("{} of {} cells failed", report.failed_cells(), report.cells.len());
    }
    Ok(report)
}

struct Unit {
    /// One record per configured method, in config order.
    cells: Vec<CellRecord>,
    oracle: Vec<OracleRecord>,
}

fn oracle_records(outcome: &OracleOutcome, fraction: f64, seed: u64) -> Vec<OracleRecord> {
    outcome
        .reports()
        .map(|r| OracleRecord {
            fraction,
            seed,
            stage: r.stage,
            window: r.window.to_string(),
            mean_error: r.validation_mean_error,
            ahde: r.validation_ahde,
            rank: r.rank,
            selected: r.stage == 1 && outcome.selected.contains(&r.window),
        })
        .collect()
}

fn run_unit(cfg: &ExperimentConfig, h: &HopDistanceMatrix, fraction: f64, seed: u64) -> Unit {
    let record = |method: Method, outcome: Result<EvalResult>| {
        if let Err(e) = &outcome {
            log::warn!("{method} at fraction {fraction}, seed {seed}: {e}");
        }
        CellRecord {
            method,
            fraction,
            seed,
            error: outcome.as_ref().err().map(ToString::to_string),
            result: outcome.ok(),
        }
    };
    let p = match sample_random_pairs(h, fraction, sample_seed(seed, fraction)) {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            let cells = cfg.methods.iter().map(|&m| record(m, Err(Error::Upstream(msg.clone())))).collect();
            return Unit { cells, oracle: Vec::new() };
        }
    };
    let truth = h.to_matrix();
    let eval_mask = unobserved_mask(&p);
    let score = |pred: Result<DMatrix<f64>>| pred.and_then(|m| evaluate(&m, &truth, &eval_mask));
    let ocfg = oracle_for(cfg, seed);

    let mut oracle = Vec::new();
    let pretrained = if cfg.methods.iter().any(|m| m.uses_oracle()) {
        let outcome = run_oracle(&p, &ocfg);
        if let Ok(o) = &outcome {
            oracle = oracle_records(o, fraction, seed);
        }
        Some(outcome.and_then(|o| stage2_pretrain(&p, &o.selected, &ocfg)).map_err(|e| e.to_string()))
    } else {
        None
    };
    let from_pretrained = |tune: bool| -> Result<DMatrix<f64>> {
        let model = match pretrained.as_ref().expect("oracle ran") {
            Ok(m) => m.clone(),
            Err(msg) => return Err(Error::Upstream(format!("oracle: {msg}"))),
        };
        let model = if tune { fine_tune(model, &p, &ocfg)? } else { model };
        predict(&model, &p, ocfg.exec)
    };

    let cells = cfg
        .methods
        .iter()
        .map(|&method| {
            let outcome = match method {
                Method::Osp => score(from_pretrained(true)),
                Method::OspNoFinetune => score(from_pretrained(false)),
                Method::ObservedOnly => score(observed_only(&p, &ocfg)),
                Method::Mc => score(matrix_completion(&p)),
                Method::Trivial0 => score(Ok(constant(p.n(), 0.0))),
                Method::Trivial1 => score(Ok(constant(p.n(), 1.0))),
            };
            record(method, outcome)
        })
        .collect();
    Unit { cells, oracle }
}

/// Autoencoder trained from scratch on the observed entries only.
pub fn observed_only(p: &PartialMatrix, cfg: &OracleConfig) -> Result<DMatrix<f64>> {
    let init_seed = seed::derive(cfg.seed, &[seed::label("observed-init")]);
    let model = init_model(p.n(), cfg.hidden_dim, cfg.alpha, init_seed)?;
    let model = fine_tune(model, p, cfg)?;
    predict(&model, p, cfg.exec)
}

pub fn matrix_completion(p: &PartialMatrix) -> Result<DMatrix<f64>> {
    let out = complete_lowrank(p, &default_params(p)?)?;
    Ok(postprocess(&out.matrix))
}

fn constant(n: usize, value: f64) -> DMatrix<f64> {
    postprocess(&DMatrix::from_element(n, n, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn quick(methods: &str, fractions: &str, seeds: &str) -> ExperimentConfig {
        parse_config(&format!(
            "dataset = powerlaw:40,2,0.5,3\nmethods = {methods}\nfractions = {fractions}\nseeds = {seeds}\n\
             p_values = 0.3,0.7\nhidden_dim = 6\npretrain_epochs = 2\nfinetune_epochs = 3\nn_d = 6\n"
        ))
        .unwrap()
    }

    #[test]
    fn grid_coverage_and_order() {
        let cfg = quick("trivial0,trivial1,mc", "0.1,0.4", "1,2");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.cells.len(), 3 * 2 * 2);
        assert_eq!(report.nodes, 40);
        let keys: Vec<(Method, f64, u64)> = report.cells.iter().map(|c| (c.method, c.fraction, c.seed)).collect();
        assert_eq!(keys[0], (Method::Trivial0, 0.1, 1));
        assert_eq!(keys[1], (Method::Trivial0, 0.1, 2));
        assert_eq!(keys[2], (Method::Trivial0, 0.4, 1));
        assert_eq!(keys[4], (Method::Trivial1, 0.1, 1));
        assert!(report.oracle.is_empty());
        for c in &report.cells {
            let r = c.result.unwrap_or_else(|| panic!("{:?}", c));
            if c.method == Method::Trivial0 {
                assert_eq!(r.mean_error, 1.0);
            }
        }
    }

    #[test]
    fn all_methods_run_and_share_the_oracle() {
        let cfg = quick("osp,osp_no_finetune,observed_only,mc,trivial0,trivial1", "0.2", "5");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.failed_cells(), 0, "{:?}", report.cells);
        assert!(!report.oracle.is_empty());
        assert_eq!(report.oracle.iter().filter(|o| o.selected).count(), 3);
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn failures_stay_in_their_cell() {
        // full sampling leaves nothing to evaluate
        let cfg = quick("trivial1,mc", "1.0,0.3", "1");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert_eq!(report.failed_cells(), 2);
        for c in &report.cells {
            assert_eq!(c.is_ok(), c.fraction != 1.0);
            assert_eq!(c.error.is_some(), !c.is_ok());
        }
    }

    #[test]
    fn profile_is_optional() {
        let mut cfg = quick("trivial0", "0.1", "1");
        assert!(run_experiment(&cfg).unwrap().singular_values.is_none());
        cfg.profile = true;
        let s = run_experiment(&cfg).unwrap().singular_values.unwrap();
        assert_eq!(s.len(), 40);
    }
}
