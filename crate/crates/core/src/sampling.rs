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

//! Uniform sampling of node-pair distances into a partial matrix.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HopDistanceMatrix;
use crate::mask::Mask;
use crate::seed;

/// Sampled distances. Unobserved cells hold 0; the diagonal is a known 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialMatrix {
    n: usize,
    values: Vec<f64>,
    mask: Mask,
    sampled_fraction: f64,
}

impl PartialMatrix {
    /// Checked constructor. `values` is row-major; off-mask values are reset
    /// to 0.
    pub fn new(n: usize, mut values: Vec<f64>, mask: Mask) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                actual: values.len(),
            });
        }
        if mask.n() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: mask.n(),
            });
        }
        if !mask.is_symmetric() {
            return Err(Error::param("mask", "observation mask is not symmetric"));
        }
        for i in 0..n {
            for j in 0..n {
                let v = &mut values[i * n + j];
                if !mask.get(i, j) {
                    *v = 0.0;
                    continue;
                }
                if !v.is_finite() {
                    return Err(Error::param("values", format!("({i}, {j}) is not finite")));
                }
                if i == j && *v != 0.0 {
                    return Err(Error::param("values", format!("diagonal entry {i} must be 0")));
                }
                if i != j && *v < 1.0 {
                    return Err(Error::param(
                        "values",
                        format!("observed ({i}, {j}) = {v} is below 1"),
                    ));
                }
            }
        }
        for (i, j) in mask.upper_pairs() {
            if values[i * n + j] != values[j * n + i] {
                return Err(Error::param("values", format!("({i}, {j}) is not symmetric")));
            }
        }
        let pairs = mask.upper_pairs().count();
        let total = n * n.saturating_sub(1) / 2;
        let sampled_fraction = if total == 0 {
            0.0
        } else {
            pairs as f64 / total as f64
        };
        Ok(PartialMatrix {
            n,
            values,
            mask,
            sampled_fraction,
        })
    }

    /// Skips value checks; for exercising numerical code on arbitrary
    /// symmetric matrices.
    #[cfg(test)]
    pub(crate) fn unchecked(n: usize, mut values: Vec<f64>, mask: Mask) -> Self {
        for (v, (i, j)) in values.iter_mut().zip((0..n).flat_map(|i| (0..n).map(move |j| (i, j)))) {
            if !mask.get(i, j) {
                *v = 0.0;
            }
        }
        let total = n * n.saturating_sub(1) / 2;
        let sampled_fraction = mask.upper_pairs().count() as f64 / total.max(1) as f64;
        PartialMatrix {
            n,
            values,
            mask,
            sampled_fraction,
        }
    }

    /// Observes `h` on `mask`.
    pub fn from_hop_matrix(h: &HopDistanceMatrix, mask: Mask) -> Result<Self> {
        let values = h.entries().iter().map(|&x| f64::from(x)).collect();
        Self::new(h.n(), values, mask)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Fraction of off-diagonal unordered pairs observed.
    pub fn sampled_fraction(&self) -> f64 {
        self.sampled_fraction
    }

    /// Number of observed off-diagonal unordered pairs.
    pub fn observed_pairs(&self) -> usize {
        self.mask.upper_pairs().count()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask.get(i, j)
    }

    /// Row `i` with unobserved entries as 0.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Keeps only the observations that are also in `keep`.
    pub fn restrict(&self, keep: &Mask) -> Result<Self> {
        Self::new(self.n, self.values.clone(), self.mask.and(keep))
    }

    /// Writes observed off-diagonal pairs as `i,j,hop` rows.
    pub fn write_triplets<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["i", "j", "hop"])?;
        for (i, j) in self.mask.upper_pairs() {
            writer.serialize((i, j, self.get(i, j)))?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Reads the triplet format back into an `n`-node partial matrix.
    pub fn read_triplets<R: Read>(input: R, n: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let mut mask = Mask::new(n);
        for i in 0..n {
            mask.set(i, i, true);
        }
        let mut values = vec![0.0; n * n];
        for (row, record) in reader.deserialize::<(usize, usize, f64)>().enumerate() {
            let (i, j, hop) = record?;
            if i >= n || j >= n || i == j {
                return Err(Error::Parse {
                    line: row + 2,
                    message: format!("pair ({i}, {j}) invalid for {n} nodes"),
                });
            }
            mask.set_pair(i, j, true);
            values[i * n + j] = hop;
            values[j * n + i] = hop;
        }
        Self::new(n, values, mask)
    }
}

/// Disjoint train/validation split of the observed pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitMask {
    pub train_mask: Mask,
    pub validation_mask: Mask,
}

fn pair_budget(fraction: f64, total: usize) -> usize {
    let exact = fraction * total as f64;
    let rounded = exact.round();
    // products like 0.3 * 10 land a hair above the integer
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

/// Samples `ceil(fraction * N(N-1)/2)` distinct unordered pairs uniformly
/// and observes both orientations. The diagonal is always observed.
pub fn sample_random_pairs(h: &HopDistanceMatrix, fraction: f64, seed: u64) -> Result<PartialMatrix> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("fraction", format!("{fraction} is not in (0, 1]")));
    }
    let n = h.n();
    let total = n * n.saturating_sub(1) / 2;
    let k = pair_budget(fraction, total).min(total);

    let mut rng = seed::rng(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, total, k).into_vec();
    chosen.sort_unstable();

    let mut mask = Mask::new(n);
    for i in 0..n {
        mask.set(i, i, true);
    }
    // walk the upper triangle row by row, matching sorted linear indices
    let mut next = chosen.into_iter().peekable();
    let mut row_start = 0;
    for i in 0..n {
        let row_len = n - 1 - i;
        while let Some(&t) = next.peek() {
            if t >= row_start + row_len {
                break;
            }
            mask.set_pair(i, i + 1 + (t - row_start), true);
            next.next();
        }
        row_start += row_len;
    }
    PartialMatrix::from_hop_matrix(h, mask)
}

/// Randomly partitions observed pairs; validation receives
/// `round(share * k)` pairs, clamped so each side keeps at least one. The
/// observed diagonal stays with the training side.
pub fn split_observed(p: &PartialMatrix, validation_share: f64, seed: u64) -> Result<SplitMask> {
    if !(validation_share > 0.0 && validation_share < 1.0) {
        return Err(Error::param(
            "validation_share",
            format!("{validation_share} is not in (0, 1)"),
        ));
    }
    let mut pairs: Vec<(usize, usize)> = p.mask().upper_pairs().collect();
    let k = pairs.len();
    if k < 2 {
        return Err(Error::param(
            "partial matrix",
            format!("{k} observed pairs; a split needs at least 2"),
        ));
    }
    let validation = ((validation_share * k as f64).round() as usize).clamp(1, k - 1);
    let mut rng = seed::rng(seed);
    pairs.shuffle(&mut rng);

    let n = p.n();
    let mut validation_mask = Mask::new(n);
    for &(i, j) in &pairs[..validation] {
        validation_mask.set_pair(i, j, true);
    }
    let train_mask = p.mask().and_not(&validation_mask);
    Ok(SplitMask {
        train_mask,
        validation_mask,
    })
}

/// Off-diagonal cells that were not observed.
pub fn unobserved_mask(p: &PartialMatrix) -> Mask {
    Mask::off_diagonal(p.n()).and_not(p.mask())
}
