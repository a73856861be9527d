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

use serde::{Deserialize, Serialize};

/// Square boolean matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    n: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(n: usize) -> Self {
        Mask {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn full(n: usize) -> Self {
        Mask {
            n,
            cells: vec![true; n * n],
        }
    }

    /// All off-diagonal cells set.
    pub fn off_diagonal(n: usize) -> Self {
        let mut mask = Mask::full(n);
        for i in 0..n {
            mask.set(i, i, false);
        }
        mask
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                cells.push(f(i, j));
            }
        }
        Mask { n, cells }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.cells[i * self.n + j] = value;
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set_pair(&mut self, i: usize, j: usize, value: bool) {
        self.set(i, j, value);
        self.set(j, i, value);
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.cells[i * self.n..(i + 1) * self.n]
    }

    /// Number of true cells.
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// True off-diagonal cells in the upper triangle, in row-major order.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).filter_map(move |j| self.get(i, j).then_some((i, j)))
        })
    }

    /// All true cells, row-major.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(move |(idx, _)| (idx / self.n, idx % self.n))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn and(&self, other: &Mask) -> Mask {
        debug_assert_eq!(self.n, other.n);
        Mask {
            n: self.n,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        debug_assert_eq!(self.n, other.n);
        Mask {
            n: self.n,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(&a, &b)| a && !b)
                .collect(),
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        debug_assert_eq!(self.n, other.n);
        Mask {
            n: self.n,
            cells: self
                .cells
                .iter()
                .zip(&other.cells)
                .map(|(&a, &b)| a || b)
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Mask) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !(a && b))
    }
}
