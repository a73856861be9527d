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


//! CSV and JSON serialization of experiment and oracle reports, and the
//! singular value diagnostic.
//!
//! Floats are written in Rust's shortest round-trip form, so identical
//! reports produce identical bytes and parsing returns the same values.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::config::{DatasetSpec, Method};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::experiment::{CellRecord, ExperimentReport};
use crate::graph::hop_distance_matrix_with;
use crate::metrics::EvalResult;
use crate::oracle::WindowReport;
use crate::spectrum::singular_value_profile;

pub const CELL_HEADER: [&str; 6] = ["method", "fraction", "seed", "mean_error", "ahde", "pair_count"];
pub const ORACLE_HEADER: [&str; 5] = ["stage", "window", "mean_error", "ahde", "rank"];
pub const PROFILE_HEADER: [&str; 3] = ["index", "sigma", "log10_sigma"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::param("format", format!("{other:?} is not csv or json"))),
        }
    }
}

/// One row per cell. Failed cells leave the three result fields empty.
pub fn write_cells_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CELL_HEADER)?;
    for c in &report.cells {
        let (me, ahde, count) = match &c.result {
            Some(r) => (r.mean_error.to_string(), r.ahde.to_string(), r.pair_count.to_string()),
            None => Default::default(),
        };
        w.write_record([c.method.to_string(), c.fraction.to_string(), c.seed.to_string(), me, ahde, count])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the cell CSV. Rows with empty result fields come back as failed
/// cells with the message `"failed"`.
pub fn read_cells_csv<R: Read>(input: R) -> Result<Vec<CellRecord>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(CELL_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", CELL_HEADER.join(",")),
        });
    }
    let mut cells = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record?;
        let line = k + 2;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        let method: Method = field(0).parse().map_err(|_| bad("method"))?;
        let fraction: f64 = field(1).parse().map_err(|_| bad("fraction"))?;
        let seed: u64 = field(2).parse().map_err(|_| bad("seed"))?;
        let result = if field(3).is_empty() {
            None
        } else {
            Some(EvalResult {
                mean_error: field(3).parse().map_err(|_| bad("mean_error"))?,
                ahde: field(4).parse().map_err(|_| bad("ahde"))?,
                pair_count: field(5).parse().map_err(|_| bad("pair_count"))?,
            })
        };
        cells.push(CellRecord {
            method,
            fraction,
            seed,
            error: result.is_none().then(|| "failed".to_owned()),
            result,
        });
    }
    Ok(cells)
}

pub fn write_json<W: Write>(report: &ExperimentReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<ExperimentReport> {
    Ok(serde_json::from_reader(input)?)
}

/// Writes `report` to `path` in the given format.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ReportFormat::Csv => write_cells_csv(report, &mut out)?,
        ReportFormat::Json => write_json(report, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn write_oracle_csv<'a, W: Write>(reports: impl IntoIterator<Item = &'a WindowReport>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ORACLE_HEADER)?;
    for r in reports {
        w.write_record([
            r.stage.to_string(),
            r.window.to_string(),
            r.validation_mean_error.to_string(),
            r.validation_ahde.to_string(),
            r.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `index,sigma,log10_sigma` rows, index starting at 1. A zero singular
/// value has an empty log column.
pub fn write_profile_csv<W: Write>(sigmas: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROFILE_HEADER)?;
    for (k, s) in sigmas.iter().enumerate() {
        let log = if *s > 0.0 { s.log10().to_string() } else { String::new() };
        w.write_record([(k + 1).to_string(), s.to_string(), log])?;
    }
    w.flush()?;
    Ok(())
}

/// Singular values of the dataset's hop-distance matrix, largest first.
pub fn lowrank_diagnostic(dataset: &DatasetSpec, exec: Execution) -> Result<Vec<f64>> {
    let g = dataset.load()?;
    Ok(singular_value_profile(&hop_distance_matrix_with(&g, exec)?))
}
