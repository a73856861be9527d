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

//! Prediction of missing shortest hop-distances in a graph from a small
//! uniform sample of node-pair distances.
//!
//! The main pipeline searches for power-law-cluster generator parameters
//! that resemble the target (the oracle search), pre-trains a single hidden
//! layer autoencoder on synthetic hop-distance matrices built with those
//! parameters, optionally fine-tunes it on the observed sample and then
//! reconstructs the full distance matrix. A singular value thresholding
//! matrix completion baseline and constant-fill baselines are included for
//! comparison, together with an experiment harness that sweeps sampling
//! fractions and emits CSV/JSON reports.
//!
//! Data-parallel loops (BFS rows, synthetic corpus generation, window
//! evaluation, experiment grid cells) run on rayon when the `parallel`
//! feature is enabled and fall back to plain iteration otherwise. Results are
//! identical either way.

pub mod completion;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod report;
pub mod sampling;
pub mod seed;
pub mod spectrum;

pub use completion::{complete_lowrank, default_params, CompletionOutcome, CompletionParams};
pub use config::{parse_config, DatasetSpec, ExperimentConfig, Method};
pub use error::{Error, Result};
pub use exec::Execution;
pub use experiment::{run_experiment, CellRecord, ExperimentReport, OracleRecord};
pub use graph::{
    average_degree, hop_distance_matrix, largest_connected_component, load_edge_list,
    powerlaw_cluster_graph, GeneratorParams, Graph, HopDistanceMatrix, LabeledGraph,
};
pub use mask::Mask;
pub use metrics::{ahde, mean_error, postprocess, trivial_baselines, EvalResult};
pub use nn::{
    init_model, leaky_relu, masked_mse, predict_matrix, train, Autoencoder, TrainConfig,
    TrainingCorpus, TrainingRow,
};
pub use oracle::{
    build_stage0_windows, build_stage1_windows, covering_list, evaluate_window, generate_corpus,
    run_oracle, stage2_predict, OracleConfig, OracleOutcome, Window, WindowReport,
};
pub use report::{emit_report, lowrank_diagnostic, ReportFormat};
pub use sampling::{sample_random_pairs, split_observed, unobserved_mask, PartialMatrix, SplitMask};
pub use spectrum::{singular_value_profile, singular_values};
