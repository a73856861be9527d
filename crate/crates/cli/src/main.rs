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


use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hopdist::config::{DatasetSpec, ExperimentConfig, Method};
use hopdist::experiment::run_on_matrix;
use hopdist::graph::hop_distance_matrix_with;
use hopdist::report::{emit_report, lowrank_diagnostic, write_oracle_csv, write_profile_csv, ReportFormat};
use hopdist::{parse_config, run_experiment, run_oracle, sample_random_pairs, Execution};

/// Exit status when some grid cells failed but the run completed.
const PARTIAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "hopdist", version, about = "Predict missing hop distances from sampled node pairs")]
struct Cli {
    /// Directory for reports; overrides `output_dir` from a config file.
    #[arg(long, global = true, env = "HOPDIST_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rank parameter windows for one sample of a dataset.
    Oracle {
        /// Edge-list path or `powerlaw:N,m,p,seed`.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Upper bound on the average degree.
        #[arg(long)]
        n_d: Option<usize>,
        /// Lead cap of the broad windows.
        #[arg(long)]
        broad_max: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Singular value profile of the dataset's hop-distance matrix.
    Svd {
        #[arg(long)]
        dataset: String,
    },
    /// Predict one sample with a single method and score it.
    Complete {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        fraction: f64,
        /// osp, osp_no_finetune, observed_only, mc, trivial0 or trivial1.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn output_dir(cli: &Cli, fallback: &Path) -> Result<PathBuf> {
    let dir = cli.output_dir.clone().unwrap_or_else(|| fallback.to_path_buf());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn exec(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn dataset(text: &str) -> Result<DatasetSpec> {
    text.parse().with_context(|| format!("dataset {text:?}"))
}

fn write_reports(report: &hopdist::ExperimentReport, dir: &Path) -> Result<()> {
    emit_report(report, ReportFormat::Csv, &dir.join("report.csv"))?;
    emit_report(report, ReportFormat::Json, &dir.join("report.json"))?;
    if let Some(s) = &report.singular_values {
        write_profile_csv(s, BufWriter::new(File::create(dir.join("profile.csv"))?))?;
    }
    log::info!("reports written to {}", dir.display());
    Ok(())
}

fn status(report: &hopdist::ExperimentReport) -> ExitCode {
    let failed = report.failed_cells();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} of {} cells failed", report.cells.len());
        ExitCode::from(PARTIAL_FAILURE)
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { config } => {
            let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = parse_config(&text).with_context(|| format!("parsing {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("."));
            cfg.dataset = cfg.dataset.relative_to(base);
            if cli.sequential {
                cfg.exec = Execution::Sequential;
                cfg.oracle.exec = Execution::Sequential;
            }
            let dir = output_dir(cli, &cfg.output_dir)?;
            let report = run_experiment(&cfg)?;
            write_reports(&report, &dir)?;
            Ok(status(&report))
        }
        Command::Oracle {
            dataset: spec,
            fraction,
            seed,
            n_d,
            broad_max,
            top_k,
        } => {
            let spec = dataset(spec)?;
            let mut cfg = ExperimentConfig::new(spec.clone());
            cfg.exec = exec(cli);
            let mut ocfg = hopdist::experiment::oracle_for(&cfg, *seed);
            if let Some(v) = n_d {
                ocfg.n_d = *v;
            }
            if let Some(v) = broad_max {
                ocfg.broad_max = *v;
            }
            if let Some(v) = top_k {
                ocfg.top_k = *v;
            }
            let h = hop_distance_matrix_with(&spec.load()?, cfg.exec)?;
            let p = sample_random_pairs(&h, *fraction, hopdist::experiment::sample_seed(*seed, *fraction))?;
            let outcome = run_oracle(&p, &ocfg)?;
            let path = output_dir(cli, Path::new("results"))?.join("oracle.csv");
            write_oracle_csv(outcome.reports(), BufWriter::new(File::create(&path)?))?;
            for w in &outcome.selected {
                println!("{w}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Svd { dataset: spec } => {
            let sigmas = lowrank_diagnostic(&dataset(spec)?, exec(cli))?;
            let path = output_dir(cli, Path::new("results"))?.join("lowrank.csv");
            write_profile_csv(&sigmas, BufWriter::new(File::create(&path)?))?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Complete {
            dataset: spec,
            fraction,
            method,
            seed,
        } => {
            let method: Method = method.parse()?;
            let mut cfg = ExperimentConfig::new(dataset(spec)?);
            cfg.methods = vec![method];
            cfg.fractions = vec![*fraction];
            cfg.seeds = vec![*seed];
            cfg.exec = exec(cli);
            cfg.oracle.exec = cfg.exec;
            cfg.validate()?;
            let h = hop_distance_matrix_with(&cfg.dataset.load()?, cfg.exec)?;
            let report = run_on_matrix(&cfg, &h)?;
            let dir = output_dir(cli, Path::new("results"))?;
            emit_report(&report, ReportFormat::Csv, &dir.join("report.csv"))?;
            let cell = &report.cells[0];
            match (&cell.result, &cell.error) {
                (Some(r), _) => println!("{method} mean_error={} ahde={} pairs={}", r.mean_error, r.ahde, r.pair_count),
                (None, Some(e)) => eprintln!("{method} failed: {e}"),
                (None, None) => {}
            }
            Ok(status(&report))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
