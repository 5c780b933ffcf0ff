//! Subspace projection of the Hamiltonian with the soft total-spin penalty.
//!
//! The penalized operator is `H_S + lambda (S2_S - s(s+1))^2`, where both
//! `H_S` and `S2_S` are the subspace-projected blocks over the batch members
//! and the square is taken of the projected spin matrix. It is applied
//! matrix-free as a composition, which keeps only the two sparse blocks in
//! memory.

use super::{Batch, SolverError};
use crate::integrals::IntegralSet;
use crate::matrix_elements::{
    connected_determinants, diagonal_element, h_element_same_sector, s2_element_same_sector,
};
use crate::solver::davidson::{CsrMatrix, SymOp};
use crate::system::Determinant;
use ndarray::Array2;
use rayon::prelude::*;
use std::collections::HashMap;

/// Weight and target of the total-spin soft constraint
/// `lambda [S^2 - s(s+1)]^2`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub target_s: f64,
}

impl PenaltyConfig {
    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            target_s: 0.0,
        }
    }

    /// Singlet target with the given weight.
    pub fn singlet(lambda: f64) -> Self {
        Self {
            lambda,
            target_s: 0.0,
        }
    }

    /// The spin eigenvalue `s(s+1)` being targeted.
    pub fn shift(&self) -> f64 {
        self.target_s * (self.target_s + 1.0)
    }
}

/// Sparse symmetric operator over a batch: bare Hamiltonian block, projected
/// spin block, and penalty configuration.
pub struct ProjectedOperator {
    h: CsrMatrix,
    s2: CsrMatrix,
    lambda: f64,
    shift: f64,
    penalized_diag: Vec<f64>,
}

impl ProjectedOperator {
    pub fn h(&self) -> &CsrMatrix {
        &self.h
    }

    pub fn s2(&self) -> &CsrMatrix {
        &self.s2
    }

    /// `c^T H_S c`, the bare (unpenalized) subspace energy.
    pub fn bare_energy(&self, c: &[f64]) -> f64 {
        self.h.quadratic_form(c)
    }

    /// `c^T S2_S c`.
    pub fn s2_expectation(&self, c: &[f64]) -> f64 {
        self.s2.quadratic_form(c)
    }

    /// Dense penalized matrix, for small cross-checks.
    pub fn to_dense(&self) -> Array2<f64> {
        let d = self.h.dim();
        let mut out = self.h.to_dense();
        if self.lambda != 0.0 {
            let mut a = self.s2.to_dense();
            for i in 0..d {
                a[[i, i]] -= self.shift;
            }
            let sq = a.dot(&a);
            out = out + sq.mapv(|x| self.lambda * x);
        }
        out
    }
}

impl SymOp for ProjectedOperator {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.h.matvec(v, out);
        if self.lambda == 0.0 {
            return;
        }
        let n = v.len();
        let mut u = vec![0.0; n];
        self.s2.matvec(v, &mut u);
        for i in 0..n {
            u[i] -= self.shift * v[i];
        }
        let mut u2 = vec![0.0; n];
        self.s2.matvec(&u, &mut u2);
        for i in 0..n {
            out[i] += self.lambda * (u2[i] - self.shift * u[i]);
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.penalized_diag.clone()
    }
}

/// Project `H + lambda [S^2 - s(s+1)]^2` onto the span of the batch.
pub fn project_hamiltonian(
    batch: &Batch,
    ints: &IntegralSet,
    penalty: &PenaltyConfig,
) -> Result<ProjectedOperator, SolverError> {
    if batch.is_empty() {
        return Err(SolverError::EmptyBatch);
    }
    if batch.shape().n_orb() != ints.n_orb() {
        return Err(SolverError::DimensionMismatch {
            expected: ints.n_orb(),
            found: batch.shape().n_orb(),
        });
    }
    let dets = batch.determinants();
    let shape = batch.shape();
    let position: HashMap<Determinant, u32> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i as u32))
        .collect();

    let rows: Vec<(Vec<(u32, f64)>, Vec<(u32, f64)>)> = dets
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut h_row = Vec::new();
            let mut s2_row = Vec::new();
            for y in connected_determinants(x, shape) {
                let Some(&j) = position.get(&y) else {
                    continue;
                };
                if j as usize == i {
                    h_row.push((j, diagonal_element(x, ints)));
                    let s2 = s2_element_same_sector(x, x);
                    if s2 != 0.0 {
                        s2_row.push((j, s2));
                    }
                } else {
                    let hv = h_element_same_sector(x, &y, ints);
                    if hv != 0.0 {
                        h_row.push((j, hv));
                    }
                    let sv = s2_element_same_sector(x, &y);
                    if sv != 0.0 {
                        s2_row.push((j, sv));
                    }
                }
            }
            (h_row, s2_row)
        })
        .collect();

    let mut h_rows = Vec::with_capacity(rows.len());
    let mut s2_rows = Vec::with_capacity(rows.len());
    for (h, s2) in rows {
        h_rows.push(h);
        s2_rows.push(s2);
    }
    let h = CsrMatrix::from_rows(h_rows);
    let s2 = CsrMatrix::from_rows(s2_rows);

    let shift = penalty.shift();
    let lambda = penalty.lambda;
    let d = h.dim();
    let mut penalized_diag = h.diagonal_vec();
    if lambda != 0.0 {
        for i in 0..d {
            // diagonal of (S2 - shift I)^2 is the squared row norm of the
            // shifted row
            let mut acc = 0.0;
            let mut diag_entry = -shift;
            for (c, v) in s2.row(i) {
                if c as usize == i {
                    diag_entry += v;
                } else {
                    acc += v * v;
                }
            }
            penalized_diag[i] += lambda * (acc + diag_entry * diag_entry);
        }
    }

    Ok(ProjectedOperator {
        h,
        s2,
        lambda,
        shift,
        penalized_diag,
    })
}
