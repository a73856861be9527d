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

//! Singular value spectra used by the low-rankness diagnostic.

use nalgebra::DMatrix;

use crate::graph::HopDistanceMatrix;

/// All singular values of `m`, non-increasing.
///
/// Uses Householder bidiagonalization followed by implicit-shift QR on the
/// bidiagonal form.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut values: Vec<f64> = m.clone().singular_values().iter().map(|s| s.abs()).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

pub fn singular_value_profile(h: &HopDistanceMatrix) -> Vec<f64> {
    singular_values(&h.to_matrix())
}

/// Fraction of `Σσ` carried by the `k` largest values.
pub fn top_k_share(sorted: &[f64], k: usize) -> f64 {
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    sorted.iter().take(k).sum::<f64>() / total
}

/// Fraction of `Σσ²` (the squared Frobenius norm) carried by the `k`
/// largest values.
pub fn top_k_energy_share(sorted: &[f64], k: usize) -> f64 {
    let total: f64 = sorted.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    sorted.iter().take(k).map(|s| s * s).sum::<f64>() / total
}
