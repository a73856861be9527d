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


//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Built with `harness = false`.
//!
//! Set `HOPDIST_DATA_DIR` to a directory holding `virgili_emails.txt` to
//! run the optional real-dataset check.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hopdist::experiment::{oracle_for, sample_seed, ExperimentReport};
use hopdist::graph::Graph;
use hopdist::nn::gradient;
use hopdist::oracle::{evaluate_window, OracleConfig, Window};
use hopdist::report::{write_cells_csv, write_json};
use hopdist::spectrum::{top_k_energy_share, top_k_share};
use hopdist::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1. Analytic gradients against central differences.
fn gradient_check() -> Verdict {
    let eps = 1e-5;
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    for draw in 0..50u64 {
        let n = r.random_range(2..=10usize);
        let h = r.random_range(1..=5usize);
        let model = init_model(n, h, 0.1, draw).unwrap();
        let mut x: Vec<f64> = (0..n)
            .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random_range(-2.0..4.0) })
            .collect();
        x[0] = r.random_range(0.5..4.0);
        let t: Vec<f64> = (0..n).map(|_| r.random_range(0.0..5.0)).collect();
        let mut m: Vec<bool> = (0..n).map(|_| r.random_bool(0.6)).collect();
        m[0] = true;

        let g = gradient(&model, &x, &t, &m).unwrap();
        let analytic: Vec<f64> = g
            .encoder_weights
            .iter()
            .chain(&g.encoder_bias)
            .chain(&g.decoder_weights)
            .chain(&g.decoder_bias)
            .copied()
            .collect();
        let loss = |probe: &Autoencoder| masked_mse(&probe.forward(&x).unwrap().output, &t, &m).unwrap();
        let mut probe = model.clone();
        for (k, a) in analytic.iter().enumerate() {
            let orig = *probe.parameter_mut(k);
            *probe.parameter_mut(k) = orig + eps;
            let up = loss(&probe);
            *probe.parameter_mut(k) = orig - eps;
            let down = loss(&probe);
            *probe.parameter_mut(k) = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} over 50 models"))
}

fn random_connected_graph(r: &mut ChaCha8Rng) -> Graph {
    let n = r.random_range(1..=60usize);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (r.random_range(0..v), v)).collect();
    let extra = r.random_range(0.0..0.15);
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(extra) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

fn floyd_warshall(g: &Graph) -> Vec<u32> {
    let n = g.node_count();
    let inf = u32::MAX / 2;
    let mut d = vec![inf; n * n];
    for i in 0..n {
        d[i * n + i] = 0;
        for &j in g.neighbors(i) {
            d[i * n + j] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    d
}

// 2. BFS distances against Floyd-Warshall.
fn distance_oracle() -> Verdict {
    let mut r = rng(7);
    let mut mismatches = 0;
    for _ in 0..100 {
        let g = random_connected_graph(&mut r);
        if hop_distance_matrix(&g).unwrap().entries() != floyd_warshall(&g).as_slice() {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} of 100 graphs differ"))
}

// 3. Generator edge count, connectivity and degree skew.
fn generator_properties() -> Verdict {
    let (n, m) = (1133, 5);
    let mut problems = Vec::new();
    for p in [0.1, 0.5, 0.9] {
        for seed in 0..20 {
            let g = powerlaw_cluster_graph(&GeneratorParams::new(n, m, p, seed)).unwrap();
            let mut deg = g.degrees();
            deg.sort_unstable();
            let mean = deg.iter().sum::<usize>() as f64 / n as f64;
            let median = deg[n / 2] as f64;
            if g.edge_count() != m * (n - m) || !g.is_connected() || median >= mean {
                problems.push(format!("p={p} seed={seed}"));
            }
        }
    }
    verdict(problems.is_empty(), format!("60 graphs, failing: {problems:?}"))
}

// 4. Metric fixtures and the constant-zero baseline.
fn metric_fixtures() -> Verdict {
    let mut truth = DMatrix::zeros(3, 3);
    let mut pred = DMatrix::zeros(3, 3);
    let mut mask = Mask::new(3);
    for (&(i, j), (t, p)) in [(0, 1), (0, 2), (1, 2)].iter().zip([(2.0, 2.0), (3.0, 4.0), (5.0, 5.0)]) {
        truth[(i, j)] = t;
        pred[(i, j)] = p;
        mask.set(i, j, true);
    }
    let me = mean_error(&pred, &truth, &mask).unwrap();
    let h = ahde(&pred, &truth, &mask).unwrap();
    let fixtures = (me - 0.1).abs() < 1e-12 && (h - 1.0 / 3.0).abs() < 1e-12;

    let mut r = rng(3);
    let mut trivial_ok = true;
    for _ in 0..200 {
        let n = r.random_range(2..=12usize);
        let t = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { f64::from(r.random_range(1u32..9)) });
        let mut mk = Mask::from_fn(n, |i, j| i != j && r.random_bool(0.5));
        mk.set(0, 1, true);
        let (fill0, _) = trivial_baselines(&t, &mk).unwrap();
        trivial_ok &= fill0.mean_error == 1.0;
    }
    verdict(fixtures && trivial_ok, format!("mean error {me}, ahde {h}, trivial0 always 1: {trivial_ok}"))
}

// 5. Low-rank recovery by singular value thresholding.
fn completion_recovery() -> Verdict {
    let n = 60;
    let mut r = rng(5);
    let u: Vec<f64> = (0..n).map(|_| r.random_range(1.0..2.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| r.random_range(1.0..2.0)).collect();
    let truth = DMatrix::from_fn(n, n, |i, j| u[i] * v[j] + v[i] * u[j]);
    let mut mask = Mask::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(0.4) {
                mask.set_pair(i, j, true);
            }
        }
    }
    let p = PartialMatrix::new(n, truth.transpose().as_slice().to_vec(), mask.clone()).unwrap();
    let out = complete_lowrank(&p, &default_params(&p).unwrap()).unwrap();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, j) in Mask::full(n).and_not(&mask).cells() {
        num += (out.matrix[(i, j)] - truth[(i, j)]).powi(2);
        den += truth[(i, j)].powi(2);
    }
    let err = (num / den).sqrt();
    verdict(err < 1e-2, format!("unobserved relative error {err:.2e} after {} iterations", out.iterations))
}

/// Desk-scale settings: stage 0 limited to `[1,5,10]` and `[10,15,20]`.
fn desk_config(dataset: &str, methods: &str, fraction: f64, seed: u64) -> ExperimentConfig {
    parse_config(&format!(
        "dataset = {dataset}\nmethods = {methods}\nfractions = {fraction}\nseeds = {seed}\nbroad_max = 20\n"
    ))
    .unwrap()
}

fn sample(n: usize, seed: u64, fraction: f64) -> PartialMatrix {
    let g = powerlaw_cluster_graph(&GeneratorParams::new(n, 5, 0.5, seed)).unwrap();
    sample_random_pairs(&hop_distance_matrix(&g).unwrap(), fraction, sample_seed(seed, fraction)).unwrap()
}

// 6. The oracle finds the generating m.
fn oracle_self_consistency() -> Verdict {
    let mut hits = 0;
    let mut picks = Vec::new();
    for seed in 1..=5u64 {
        let p = sample(300, seed, 0.01);
        let cfg = desk_config(&format!("powerlaw:300,5,0.5,{seed}"), "osp", 0.01, seed);
        let outcome = run_oracle(&p, &oracle_for(&cfg, seed)).unwrap();
        let hit = outcome.selected.iter().any(|w| w.values().iter().any(|m| (3..=7).contains(m)));
        hits += usize::from(hit);
        picks.push(outcome.selected.iter().map(Window::to_string).collect::<Vec<_>>().join(""));
    }
    verdict(hits >= 4, format!("{hits}/5 seeds select a window meeting [3,7]; {picks:?}"))
}

fn cell(report: &ExperimentReport, method: Method) -> EvalResult {
    let c = report.cells.iter().find(|c| c.method == method).expect("method configured");
    c.result.unwrap_or_else(|| panic!("{method} failed: {:?}", c.error))
}

fn desk_runs(fraction: f64) -> Vec<ExperimentReport> {
    (1..=3u64)
        .map(|seed| {
            let cfg = desk_config(
                &format!("powerlaw:500,5,0.5,{seed}"),
                "osp,observed_only,mc,trivial1",
                fraction,
                seed,
            );
            run_experiment(&cfg).unwrap()
        })
        .collect()
}

// 7. Under one hop of error at 1% sampling.
fn headline(runs: &[ExperimentReport]) -> Verdict {
    let values: Vec<f64> = runs.iter().map(|r| cell(r, Method::Osp).ahde).collect();
    let m = median(values.clone());
    verdict(m < 1.0, format!("median AHDE {m:.3} over seeds {values:.3?}"))
}

// 8. Method ordering at 0.5% and 1% sampling.
fn ordering(by_fraction: &[(f64, &[ExperimentReport])]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (fraction, runs) in by_fraction {
        let med = |m: Method| median(runs.iter().map(|r| cell(r, m).mean_error).collect());
        let (osp, obs, mc, one) = (med(Method::Osp), med(Method::ObservedOnly), med(Method::Mc), med(Method::Trivial1));
        let gain = 1.0 - osp / obs;
        pass &= osp < obs && obs < one && osp < mc && gain >= 0.2;
        parts.push(format!(
            "f={fraction}: osp {osp:.3} < observed {obs:.3} < trivial1 {one:.3}, mc {mc:.3}, gain {:.0}%",
            100.0 * gain
        ));
    }
    verdict(pass, parts.join("; "))
}

// 9. Narrow windows near the degree against wide or higher ones.
fn sensitivity() -> Verdict {
    let names = ["[9,10,11]", "[2,10,18]", "[7,8,9]", "[10,11,12]"];
    let windows: Vec<Window> = names.iter().map(|w| w.parse().unwrap()).collect();
    let mut scores = vec![Vec::new(); windows.len()];
    let mut degree = Vec::new();
    for seed in 1..=5u64 {
        let g = powerlaw_cluster_graph(&GeneratorParams::new(500, 5, 0.5, 40 + seed)).unwrap();
        degree.push(average_degree(&g));
        let h = hop_distance_matrix(&g).unwrap();
        let p = sample_random_pairs(&h, 0.01, sample_seed(seed, 0.01)).unwrap();
        let cfg = OracleConfig {
            seed,
            ..OracleConfig::default()
        };
        let split = split_observed(&p, cfg.validation_share, seed).unwrap();
        for (w, s) in windows.iter().zip(scores.iter_mut()) {
            s.push(evaluate_window(w, &p, &split, &cfg).unwrap().validation_mean_error);
        }
    }
    let med: Vec<f64> = scores.into_iter().map(median).collect();
    let pass = med[0] <= med[1] && med[2] <= med[3];
    verdict(
        pass,
        format!(
            "average degree {:.2}; {} {:.4} vs {} {:.4}; {} {:.4} vs {} {:.4}",
            median(degree),
            names[0], med[0], names[1], med[1], names[2], med[2], names[3], med[3]
        ),
    )
}

// 10. Singular value concentration of power-law distance matrices.
fn low_rankness() -> Verdict {
    let mut shares = Vec::new();
    let mut energy = Vec::new();
    for seed in 1..=5u64 {
        let g = powerlaw_cluster_graph(&GeneratorParams::new(500, 5, 0.5, seed)).unwrap();
        let s = singular_value_profile(&hop_distance_matrix(&g).unwrap());
        shares.push(top_k_share(&s, 10));
        energy.push(top_k_energy_share(&s, 10));
    }
    let worst = shares.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        worst >= 0.9,
        format!("top-10 share of the singular value sum {shares:.3?}; of the squared sum {energy:.3?}"),
    )
}

fn report_bytes(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<u8>) {
    let report = run_experiment(cfg).unwrap();
    let (mut csv, mut json) = (Vec::new(), Vec::new());
    write_cells_csv(&report, &mut csv).unwrap();
    write_json(&report, &mut json).unwrap();
    (csv, json)
}

// 11. Byte-identical reports across runs.
fn reproducibility() -> Verdict {
    let mut cfg = parse_config(
        "dataset = powerlaw:80,3,0.5,2\nfractions = 0.05,0.2\nseeds = 1,2\nbroad_max = 20\n\
         pretrain_epochs = 5\nfinetune_epochs = 10\nprofile = true\n",
    )
    .unwrap();
    let first = report_bytes(&cfg);
    let second = report_bytes(&cfg);
    cfg.exec = Execution::Sequential;
    cfg.oracle.exec = Execution::Sequential;
    let sequential = report_bytes(&cfg);
    verdict(
        first == second && first == sequential,
        format!(
            "{} CSV bytes, {} JSON bytes; repeat identical: {}, sequential identical: {}",
            first.0.len(),
            first.1.len(),
            first == second,
            first == sequential
        ),
    )
}

// Optional: the headline claim on the e-mail network.
fn virgili() -> Option<Verdict> {
    let path = PathBuf::from(std::env::var_os("HOPDIST_DATA_DIR")?).join("virgili_emails.txt");
    if !path.exists() {
        return None;
    }
    let values: Vec<f64> = (1..=3u64)
        .map(|seed| {
            let cfg = desk_config(path.to_str().unwrap(), "osp", 0.01, seed);
            cell(&run_experiment(&cfg).unwrap(), Method::Osp).ahde
        })
        .collect();
    let m = median(values.clone());
    Some(verdict(m < 1.5, format!("median AHDE {m:.3} over seeds {values:.3?}")))
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, id: &str, title: &str, budget: Option<Duration>, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match result {
            Ok(v) => (v.pass, v.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if let Some(limit) = budget {
            if elapsed > limit {
                pass = false;
                detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
            }
        }
        self.failures += usize::from(!pass);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {title}: {detail} ({:.1}s)", elapsed.as_secs_f64());
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    panic::set_hook(Box::new(|_| {}));
    let mut suite = Suite { failures: 0 };
    let secs = Duration::from_secs;

    suite.check("1", "gradient correctness", Some(secs(10)), gradient_check);
    suite.check("2", "BFS equals Floyd-Warshall", Some(secs(30)), distance_oracle);
    suite.check("3", "generator properties", Some(secs(60)), generator_properties);
    suite.check("4", "metric fixtures", None, metric_fixtures);
    suite.check("5", "matrix completion recovery", Some(secs(60)), completion_recovery);
    suite.check("6", "oracle self-consistency", Some(secs(15 * 60)), oracle_self_consistency);

    let mut at_1 = Vec::new();
    suite.check("7", "under one hop at 1% sampling", Some(secs(20 * 60)), || {
        at_1 = desk_runs(0.01);
        headline(&at_1)
    });
    suite.check("8", "method ordering at 0.5-1% sampling", None, || {
        let at_half = desk_runs(0.005);
        ordering(&[(0.005, &at_half), (0.01, &at_1)])
    });
    suite.check("9", "window sensitivity ordering", None, sensitivity);
    suite.check("10", "low-rankness of distance matrices", None, low_rankness);
    suite.check("11", "end-to-end reproducibility", None, reproducibility);

    match virgili() {
        Some(v) => suite.check("7b", "under 1.5 hops on the e-mail network", None, || v),
        None => println!("[SKIP] 7b under 1.5 hops on the e-mail network: HOPDIST_DATA_DIR/virgili_emails.txt not found"),
    }

    println!("{} criteria failed", suite.failures);
    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
