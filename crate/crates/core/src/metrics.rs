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

//! Post-processing of predicted matrices and the two error measures.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Summed absolute error over summed true hops.
    pub mean_error: f64,
    /// Average absolute hop deviation per evaluated cell.
    pub ahde: f64,
    /// Number of evaluated cells.
    pub pair_count: usize,
}

/// Forces the diagonal to 0 and lifts off-diagonal values in `(0, 1)`, and
/// negative ones, to 1. An exact 0 off the diagonal is left alone.
pub fn postprocess(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            let v = &mut out[(i, j)];
            if i == j {
                *v = 0.0;
            } else if *v < 1.0 && *v != 0.0 {
                *v = 1.0;
            }
        }
    }
    out
}

fn check_shapes(pred: &DMatrix<f64>, truth: &DMatrix<f64>, mask: &Mask) -> Result<()> {
    let n = mask.n();
    for shape in [pred.shape(), truth.shape()] {
        if shape != (n, n) {
            return Err(Error::Dimension {
                expected: n,
                actual: shape.0.max(shape.1),
            });
        }
    }
    Ok(())
}

/// `(Σ|pred − truth|, Σ truth, cells)` over the mask.
fn accumulate(pred: &DMatrix<f64>, truth: &DMatrix<f64>, mask: &Mask) -> Result<(f64, f64, usize)> {
    check_shapes(pred, truth, mask)?;
    let mut abs_err = 0.0;
    let mut total = 0.0;
    let mut cells = 0;
    for (i, j) in mask.cells() {
        abs_err += (pred[(i, j)] - truth[(i, j)]).abs();
        total += truth[(i, j)];
        cells += 1;
    }
    Ok((abs_err, total, cells))
}

pub fn mean_error(pred: &DMatrix<f64>, truth: &DMatrix<f64>, eval_mask: &Mask) -> Result<f64> {
    let (abs_err, total, cells) = accumulate(pred, truth, eval_mask)?;
    if cells == 0 {
        return Err(Error::Empty("evaluation mask selects no cells"));
    }
    if total == 0.0 {
        return Err(Error::param("truth", "true distances sum to zero on the mask"));
    }
    Ok(abs_err / total)
}

pub fn ahde(pred: &DMatrix<f64>, truth: &DMatrix<f64>, eval_mask: &Mask) -> Result<f64> {
    let (abs_err, _, cells) = accumulate(pred, truth, eval_mask)?;
    if cells == 0 {
        return Err(Error::Empty("evaluation mask selects no cells"));
    }
    Ok(abs_err / cells as f64)
}

pub fn evaluate(pred: &DMatrix<f64>, truth: &DMatrix<f64>, eval_mask: &Mask) -> Result<EvalResult> {
    Ok(EvalResult {
        mean_error: mean_error(pred, truth, eval_mask)?,
        ahde: ahde(pred, truth, eval_mask)?,
        pair_count: eval_mask.count(),
    })
}

/// Constant predictions of 0 and of 1, scored on the mask.
pub fn trivial_baselines(truth: &DMatrix<f64>, eval_mask: &Mask) -> Result<(EvalResult, EvalResult)> {
    let (n, m) = truth.shape();
    let zeros = DMatrix::zeros(n, m);
    let ones = DMatrix::from_element(n, m, 1.0);
    Ok((evaluate(&zeros, truth, eval_mask)?, evaluate(&ones, truth, eval_mask)?))
}
