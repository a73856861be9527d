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


//! Experiment configuration: flat `key = value` lines, `#` comments, lists
//! separated by commas.
//!
//! ```text
//! dataset = powerlaw:500,5,0.5,1
//! fractions = 0.005, 0.01
//! methods = osp, observed_only, mc, trivial1
//! seeds = 1, 2, 3
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::{largest_connected_component, powerlaw_cluster_graph, GeneratorParams, Graph, LabeledGraph};
use crate::nn::TrainConfig;
use crate::oracle::OracleConfig;

pub const DEFAULT_FRACTIONS: [f64; 9] = [0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8];

/// An edge-list file or a generated power-law cluster graph.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    EdgeList(PathBuf),
    Generated(GeneratorParams),
}

impl DatasetSpec {
    /// Loads the graph and reduces it to its largest connected component.
    pub fn load(&self) -> Result<Graph> {
        match self {
            DatasetSpec::EdgeList(path) => {
                let text = std::fs::read_to_string(path)?;
                Ok(LabeledGraph::parse(&text)?.largest_component()?.graph)
            }
            DatasetSpec::Generated(params) => largest_connected_component(&powerlaw_cluster_graph(params)?),
        }
    }

    /// Resolves a relative edge-list path against `base`.
    pub fn relative_to(self, base: &Path) -> Self {
        match self {
            DatasetSpec::EdgeList(p) if p.is_relative() => DatasetSpec::EdgeList(base.join(p)),
            other => other,
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::EdgeList(p) => write!(f, "{}", p.display()),
            DatasetSpec::Generated(params) => write!(f, "{params}"),
        }
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let Some(rest) = s.strip_prefix("powerlaw:") else {
            if s.is_empty() {
                return Err(Error::config("dataset", "empty"));
            }
            return Ok(DatasetSpec::EdgeList(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let bad = |what: &str| Error::config("dataset", format!("{s:?}: {what}; expected powerlaw:N,m,p,seed"));
        if parts.len() != 4 {
            return Err(bad("wrong number of fields"));
        }
        let params = GeneratorParams {
            n: parts[0].parse().map_err(|_| bad("bad N"))?,
            m: parts[1].parse().map_err(|_| bad("bad m"))?,
            p: parts[2].parse().map_err(|_| bad("bad p"))?,
            seed: parts[3].parse().map_err(|_| bad("bad seed"))?,
        };
        params.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(DatasetSpec::Generated(params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Oracle search, pre-training and fine-tuning.
    Osp,
    OspNoFinetune,
    /// Autoencoder trained only on the observed entries.
    ObservedOnly,
    /// Singular value thresholding.
    Mc,
    Trivial0,
    Trivial1,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Osp,
        Method::OspNoFinetune,
        Method::ObservedOnly,
        Method::Mc,
        Method::Trivial0,
        Method::Trivial1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Osp => "osp",
            Method::OspNoFinetune => "osp_no_finetune",
            Method::ObservedOnly => "observed_only",
            Method::Mc => "mc",
            Method::Trivial0 => "trivial0",
            Method::Trivial1 => "trivial1",
        }
    }

    pub fn uses_oracle(self) -> bool {
        matches!(self, Method::Osp | Method::OspNoFinetune)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("methods", format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    /// Window search and pre-training settings.
    pub oracle: OracleConfig,
    /// Training on the target's observed entries (fine-tuning and the
    /// observed-only baseline).
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Include the singular value profile of the dataset in the report.
    pub profile: bool,
    pub exec: Execution,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        let oracle = OracleConfig::default();
        ExperimentConfig {
            dataset,
            fractions: DEFAULT_FRACTIONS.to_vec(),
            methods: Method::ALL.to_vec(),
            train: oracle.finetune.clone(),
            oracle,
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
            profile: false,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() {
            return Err(Error::config("fractions", "at least one fraction is required"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::config("fractions", format!("{f} is not in (0, 1]")));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        self.oracle.validate().map_err(|e| Error::config("oracle", e.to_string()))?;
        self.train.validate().map_err(|e| Error::config("train", e.to_string()))
    }
}

fn list<T>(key: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse(t).ok_or_else(|| Error::config(key, format!("cannot parse {t:?}"))))
        .collect()
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::config(key, format!("{other:?} is not a boolean"))),
    }
}

/// Parses and validates a configuration; every key but `dataset` is
/// optional.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected `key = value`, found {line:?}"),
            });
        };
        let key = key.trim();
        if !seen.insert(key.to_owned()) {
            return Err(Error::config(key, "given more than once"));
        }
        entries.push((key.to_owned(), value.trim().to_owned()));
    }

    let dataset = entries
        .iter()
        .find(|(k, _)| k == "dataset")
        .ok_or_else(|| Error::config("dataset", "missing"))?
        .1
        .parse::<DatasetSpec>()?;
    let mut cfg = ExperimentConfig::new(dataset);

    for (key, value) in &entries {
        let (k, v) = (key.as_str(), value.as_str());
        let o = &mut cfg.oracle;
        match k {
            "dataset" => {}
            "fractions" => cfg.fractions = list(k, v, |t| t.parse().ok())?,
            "methods" => cfg.methods = list(k, v, |t| t.parse().ok())?,
            "seeds" => cfg.seeds = list(k, v, |t| t.parse().ok())?,
            "output_dir" => cfg.output_dir = PathBuf::from(v),
            "profile" => cfg.profile = boolean(k, v)?,
            "exec" => {
                cfg.exec = match v {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(Error::config(k, "expected parallel or sequential")),
                }
            }
            "n_d" => o.n_d = scalar(k, v)?,
            "broad_max" => o.broad_max = scalar(k, v)?,
            "p_values" => o.p_values = list(k, v, |t| t.parse().ok())?,
            "networks_per_combo" => o.networks_per_combo = scalar(k, v)?,
            "train_fraction_match" => o.train_fraction_match = boolean(k, v)?,
            "top_k" => o.top_k = scalar(k, v)?,
            "validation_share" => o.validation_share = scalar(k, v)?,
            "stage1_width" => o.stage1_width = scalar(k, v)?,
            "stage1_stride" => o.stage1_stride = scalar(k, v)?,
            "hidden_dim" => o.hidden_dim = scalar(k, v)?,
            "alpha" => o.alpha = scalar(k, v)?,
            "oracle_seed" => o.seed = scalar(k, v)?,
            "pretrain_epochs" => o.pretrain.max_epochs = scalar(k, v)?,
            "finetune_epochs" => cfg.train.max_epochs = scalar(k, v)?,
            "learning_rate" => {
                let lr = scalar(k, v)?;
                o.pretrain.learning_rate = lr;
                cfg.train.learning_rate = lr;
            }
            "batch_size" => {
                let b = scalar(k, v)?;
                o.pretrain.batch_size = b;
                cfg.train.batch_size = b;
            }
            "patience" => cfg.train.patience = scalar(k, v)?,
            "train_seed" => {
                let s = scalar(k, v)?;
                o.pretrain.seed = s;
                cfg.train.seed = s;
            }
            _ => return Err(Error::config(k, "unknown key")),
        }
    }
    cfg.oracle.finetune = cfg.train.clone();
    cfg.oracle.exec = cfg.exec;

    let mut methods_seen = HashSet::new();
    if let Some(m) = cfg.methods.iter().find(|m| !methods_seen.insert(**m)) {
        return Err(Error::config("methods", format!("{m} listed twice")));
    }
    for (k, bad) in [
        ("learning_rate", !(cfg.train.learning_rate > 0.0)),
        ("batch_size", cfg.train.batch_size == 0),
        ("pretrain_epochs", cfg.oracle.pretrain.max_epochs == 0),
        ("finetune_epochs", cfg.train.max_epochs == 0),
        ("n_d", cfg.oracle.n_d < 2),
        ("top_k", cfg.oracle.top_k == 0),
        ("hidden_dim", cfg.oracle.hidden_dim == 0),
        ("alpha", !(cfg.oracle.alpha > 0.0 && cfg.oracle.alpha < 1.0)),
        ("validation_share", !(0.0..1.0).contains(&cfg.oracle.validation_share)),
        ("networks_per_combo", cfg.oracle.networks_per_combo == 0),
        ("stage1_width", cfg.oracle.stage1_width == 0),
        ("stage1_stride", cfg.oracle.stage1_stride == 0),
    ] {
        if bad {
            return Err(Error::config(k, "out of range"));
        }
    }
    if let Some(p) = cfg.oracle.p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::config("p_values", format!("{p} is not in [0, 1]")));
    }
    cfg.validate()?;
    Ok(cfg)
}
