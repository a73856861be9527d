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

//! Low-rank matrix completion by singular value thresholding.
//!
//! The dual iterate `Y` only ever accumulates multiples of `mask ⊙ (P − M)`,
//! so it is symmetric and supported on the observation mask. Its singular
//! value shrinkage is therefore an eigenvalue shrinkage,
//! `shrink(Y) = Σ sign(λ)·max(|λ| − τ, 0)·v vᵀ`, and only the eigenpairs
//! with `|λ| > τ` are needed. Small problems use a dense symmetric
//! eigendecomposition; larger ones run Lanczos with full
//! reorthogonalization on the sparse `Y`, growing the Krylov space until
//! every Ritz pair above the threshold has converged.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::PartialMatrix;
use crate::seed;

/// Problems up to this size use the dense eigensolver.
const DENSE_LIMIT: usize = 160;
/// Iteration stops once the residual exceeds the best one by this factor.
const BLOWUP: f64 = 1e6;
const LANCZOS_SEED: u64 = 0x5157_0A1C;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    /// Shrinkage threshold τ.
    pub threshold: f64,
    /// Dual step size δ.
    pub step: f64,
    pub max_iters: usize,
    /// Target relative residual on observed entries.
    pub tol: f64,
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} must be positive")))
            }
        };
        positive("threshold", self.threshold)?;
        positive("step", self.step)?;
        positive("tol", self.tol)?;
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// `τ = 5N`, `δ = 1.2 / f`, 500 iterations, tolerance `1e-4`.
pub fn default_params(p: &PartialMatrix) -> Result<CompletionParams> {
    let f = p.sampled_fraction();
    if f <= 0.0 {
        return Err(Error::param("sampled_fraction", "no off-diagonal pair is observed"));
    }
    Ok(CompletionParams {
        threshold: 5.0 * p.n() as f64,
        step: 1.2 / f,
        max_iters: 500,
        tol: 1e-4,
    })
}

#[derive(Clone, Debug)]
pub struct CompletionOutcome {
    /// Best iterate (lowest observed residual), symmetrized.
    pub matrix: DMatrix<f64>,
    pub iterations: usize,
    /// Whether the tolerance was reached; `false` means `matrix` is the best
    /// iterate seen before `max_iters` ran out.
    pub converged: bool,
    /// Whether iteration was cut short because the residual blew up.
    pub diverged: bool,
    /// Relative observed residual of `matrix`.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Rank of `matrix`.
    pub rank: usize,
}

/// Symmetric matrix stored on a fixed sparsity pattern (row-major CSR).
struct PatternMatrix {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl PatternMatrix {
    fn from_mask(p: &PartialMatrix) -> Self {
        let n = p.n();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_start.push(0);
        for i in 0..n {
            for (j, &m) in p.mask().row(i).iter().enumerate() {
                if m {
                    cols.push(j);
                }
            }
            row_start.push(cols.len());
        }
        let values = vec![0.0; cols.len()];
        PatternMatrix {
            n,
            row_start,
            cols,
            values,
        }
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| (self.row_start[i]..self.row_start[i + 1]).map(move |k| (k, i, self.cols[k])))
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, i, j) in self.entries() {
            m[(i, j)] = self.values[k];
        }
        m
    }
}

/// Eigenpairs `(λ, v)` of a symmetric matrix with `|λ| > threshold`.
struct Spectrum {
    values: Vec<f64>,
    /// Unit eigenvectors, one per value.
    vectors: Vec<DVector<f64>>,
}

fn dense_eigenpairs_above(y: &DMatrix<f64>, threshold: f64) -> Spectrum {
    let eig = SymmetricEigen::new(y.clone());
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > threshold {
            values.push(lambda);
            vectors.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    Spectrum { values, vectors }
}

/// Lanczos with full reorthogonalization. Returns the basis and the
/// tridiagonal coefficients; stops early on an invariant subspace.
fn lanczos(a: &PatternMatrix, start: &[f64], steps: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = a.n;
    let norm = start.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / norm).collect()];
    let mut alphas = Vec::with_capacity(steps);
    let mut betas = Vec::with_capacity(steps);
    let mut w = vec![0.0; n];
    for k in 0..steps {
        a.matvec(&basis[k], &mut w);
        let alpha = dot(&basis[k], &w);
        alphas.push(alpha);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let beta = dot(&w, &w).sqrt();
        betas.push(beta);
        let scale = alphas.iter().chain(&betas).fold(0.0f64, |m, v| m.max(v.abs()));
        if k + 1 == steps || beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    (basis, alphas, betas)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lanczos_eigenpairs_above(a: &PatternMatrix, threshold: f64, hint: usize, start: &[f64]) -> Spectrum {
    let n = a.n;
    let mut steps = (hint + 20).min(n);
    loop {
        let (basis, alphas, betas) = lanczos(a, start, steps);
        let d = alphas.len();
        let t = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let tail = betas[d - 1];
        let exhausted = d < steps || d == n;
        let theta_max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut above = 0;
        let mut converged = true;
        for (k, &theta) in eig.eigenvalues.iter().enumerate() {
            if theta.abs() > threshold {
                above += 1;
                let resid = (tail * eig.eigenvectors[(d - 1, k)]).abs();
                if resid > 1e-8 * theta_max {
                    converged = false;
                }
            }
        }
        let room = d >= above + 10;
        if exhausted || (converged && room) {
            let mut values = Vec::new();
            let mut vectors = Vec::new();
            for (k, &theta) in eig.eigenvalues.iter().enumerate() {
                if theta.abs() > threshold {
                    let mut v = DVector::<f64>::zeros(n);
                    for (q, s) in basis.iter().zip(eig.eigenvectors.column(k).iter()) {
                        for (vi, qi) in v.iter_mut().zip(q) {
                            *vi += s * qi;
                        }
                    }
                    let norm = v.norm();
                    values.push(theta);
                    vectors.push(v / norm);
                }
            }
            return Spectrum { values, vectors };
        }
        steps = (2 * steps).min(n);
    }
}

/// Low-rank factors of the shrunk iterate: `M = Σ c_r v_r v_rᵀ`.
struct LowRank {
    coefficients: Vec<f64>,
    vectors: Vec<DVector<f64>>,
}

impl LowRank {
    fn shrink(spectrum: Spectrum, threshold: f64) -> Self {
        let coefficients = spectrum
            .values
            .iter()
            .map(|&l| l.signum() * (l.abs() - threshold))
            .collect();
        LowRank {
            coefficients,
            vectors: spectrum.vectors,
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.vectors)
            .map(|(c, v)| c * v[i] * v[j])
            .sum()
    }

    fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for (c, v) in self.coefficients.iter().zip(&self.vectors) {
            m.ger(*c, v, v, 1.0);
        }
        (&m + m.transpose()) * 0.5
    }
}

/// Singular value thresholding on the observed entries of `p`.
///
/// Never fails on rows without observations; those rows are filled from the
/// low-rank estimate.
pub fn complete_lowrank(p: &PartialMatrix, params: &CompletionParams) -> Result<CompletionOutcome> {
    complete_lowrank_with(p, params, p.n() <= DENSE_LIMIT)
}

fn complete_lowrank_with(p: &PartialMatrix, params: &CompletionParams, dense: bool) -> Result<CompletionOutcome> {
    params.validate()?;
    let n = p.n();
    let mut y = PatternMatrix::from_mask(p);
    if y.values.is_empty() {
        return Err(Error::Empty("partial matrix has no observed entries"));
    }
    let observed: Vec<f64> = y.entries().map(|(_, i, j)| p.get(i, j)).collect();
    let observed_norm = observed.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = if observed_norm > 0.0 { observed_norm } else { 1.0 };

    let mut rng = seed::rng(LANCZOS_SEED);
    let start: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut history = Vec::with_capacity(params.max_iters);
    let mut best: Option<(f64, LowRank)> = None;
    let mut converged = false;
    let mut diverged = false;
    let mut rank_hint = 0;
    for _ in 0..params.max_iters {
        let spectrum = if dense {
            dense_eigenpairs_above(&y.to_dense(), params.threshold)
        } else {
            lanczos_eigenpairs_above(&y, params.threshold, rank_hint, &start)
        };
        if spectrum.values.iter().any(|v| !v.is_finite()) {
            if best.is_none() {
                return Err(Error::Decomposition("non-finite eigenvalue".into()));
            }
            diverged = true;
            break;
        }
        rank_hint = spectrum.values.len();
        let m = LowRank::shrink(spectrum, params.threshold);

        let mut resid2 = 0.0;
        let residuals: Vec<f64> = y
            .entries()
            .zip(&observed)
            .map(|((_, i, j), &target)| {
                let r = target - m.entry(i, j);
                resid2 += r * r;
                r
            })
            .collect();
        let residual = resid2.sqrt() / norm;
        history.push(residual);
        let best_residual = best.as_ref().map_or(f64::INFINITY, |(b, _)| *b);
        if residual < best_residual {
            best = Some((residual, m));
        } else if !residual.is_finite() || residual > BLOWUP * best_residual {
            diverged = true;
            break;
        }
        if residual <= params.tol {
            converged = true;
            break;
        }
        for (v, r) in y.values.iter_mut().zip(&residuals) {
            *v += params.step * r;
        }
    }

    let (residual, best) = best.expect("at least one iteration runs");
    if diverged {
        log::warn!(
            "matrix completion diverged after {} iterations; keeping the best iterate (residual {residual:.3e})",
            history.len()
        );
    } else if !converged {
        log::warn!(
            "matrix completion stopped after {} iterations at residual {residual:.3e}",
            params.max_iters
        );
    }
    Ok(CompletionOutcome {
        matrix: best.to_dense(n),
        iterations: history.len(),
        converged,
        diverged,
        residual,
        residual_history: history,
        rank: best.coefficients.len(),
    })
}
