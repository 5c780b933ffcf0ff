//! Davidson iteration for the lowest eigenpair of a sparse symmetric
//! operator.
//!
//! Deterministic by construction: the start vector is the unit vector at the
//! lowest diagonal entry (ties broken by index), the correction is diagonal
//! preconditioned, and the search subspace is capped at a fixed size before
//! restarting from the current Ritz vector. No randomness enters anywhere.

use crate::linalg;
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DavidsonError {
    #[error("davidson did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    NotConverged {
        iterations: usize,
        best_residual: f64,
    },
    #[error("operator has dimension zero")]
    EmptyOperator,
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Symmetric linear operator interface used by the Davidson solver.
pub trait SymOp {
    fn dim(&self) -> usize;
    /// `out = A v`; `out` is overwritten.
    fn apply(&self, v: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

/// Compressed sparse rows, full (not triangular) storage.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let dim = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi]
            .iter()
            .copied()
            .zip(self.vals[lo..hi].iter().copied())
    }

    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = 0.0;
            for (c, w) in self.row(i) {
                acc += w * v[c as usize];
            }
            out[i] = acc;
        }
    }

    /// `v^T A v` for a unit-normalized `v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for (c, w) in self.row(i) {
                row += w * v[c as usize];
            }
            acc += v[i] * row;
        }
        acc
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for (c, w) in self.row(i) {
                out[[i, c as usize]] += w;
            }
        }
        out
    }

    pub fn diagonal_vec(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for i in 0..self.dim {
            for (c, w) in self.row(i) {
                if c as usize == i {
                    d[i] += w;
                }
            }
        }
        d
    }
}

impl SymOp for CsrMatrix {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        self.matvec(v, out);
    }

    fn diagonal(&self) -> Vec<f64> {
        self.diagonal_vec()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DavidsonOptions {
    /// Residual target, scaled by `max(1, |eigenvalue|)`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Subspace size triggering a restart from the current Ritz vector.
    pub max_subspace: usize,
}

impl Default for DavidsonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 500,
            max_subspace: 24,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lowest eigenpair `(E, c)` of a symmetric operator with `||c|| = 1`.
pub fn davidson_ground<T: SymOp>(
    op: &T,
    opts: &DavidsonOptions,
) -> Result<(f64, Array1<f64>), DavidsonError> {
    let n = op.dim();
    if n == 0 {
        return Err(DavidsonError::EmptyOperator);
    }
    let diag = op.diagonal();
    if n == 1 {
        return Ok((diag[0], Array1::ones(1)));
    }
    let max_subspace = opts.max_subspace.max(2).min(n);

    let start = diag
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut v0 = vec![0.0; n];
    v0[start] = 1.0;

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut applied: Vec<Vec<f64>> = Vec::new();
    let mut push_vector = |basis: &mut Vec<Vec<f64>>, applied: &mut Vec<Vec<f64>>, v: Vec<f64>| {
        let mut av = vec![0.0; n];
        op.apply(&v, &mut av);
        basis.push(v);
        applied.push(av);
    };
    push_vector(&mut basis, &mut applied, v0);

    // Gram matrix of the search subspace, grown incrementally.
    let mut gram: Vec<Vec<f64>> = vec![vec![dot(&basis[0], &applied[0])]];

    let mut best_residual = f64::INFINITY;
    for iteration in 0..opts.max_iterations {
        let b = basis.len();
        let mut small = Array2::<f64>::zeros((b, b));
        for i in 0..b {
            for j in 0..=i {
                small[[i, j]] = gram[i][j];
                small[[j, i]] = gram[i][j];
            }
        }
        let (vals, vecs) = linalg::eigh_real(&small)?;
        let theta = vals[0];
        let coeff = vecs.column(0);

        let mut ritz = vec![0.0; n];
        let mut aritz = vec![0.0; n];
        for (k, &ck) in coeff.iter().enumerate() {
            for i in 0..n {
                ritz[i] += ck * basis[k][i];
                aritz[i] += ck * applied[k][i];
            }
        }
        let mut residual = vec![0.0; n];
        for i in 0..n {
            residual[i] = aritz[i] - theta * ritz[i];
        }
        let rnorm = norm(&residual);
        best_residual = best_residual.min(rnorm);
        if rnorm <= opts.tol * theta.abs().max(1.0) {
            let scale = 1.0 / norm(&ritz);
            let mut out = Array1::from_vec(ritz);
            out.mapv_inplace(|x| x * scale);
            return Ok((theta, out));
        }

        if b + 1 > max_subspace {
            // restart from the current Ritz vector; its application is known
            let scale = 1.0 / norm(&ritz);
            let v: Vec<f64> = ritz.iter().map(|x| x * scale).collect();
            let av: Vec<f64> = aritz.iter().map(|x| x * scale).collect();
            basis.clear();
            applied.clear();
            basis.push(v);
            applied.push(av);
            gram = vec![vec![dot(&basis[0], &applied[0])]];
            continue;
        }

        // diagonal-preconditioned correction
        let mut t = vec![0.0; n];
        for i in 0..n {
            let mut denom = diag[i] - theta;
            if denom.abs() < 1e-8 {
                denom = if denom < 0.0 { -1e-8 } else { 1e-8 };
            }
            t[i] = residual[i] / denom;
        }
        let orthogonalize = |t: &mut Vec<f64>, basis: &[Vec<f64>]| {
            for _ in 0..2 {
                for u in basis {
                    let proj = dot(t, u);
                    for i in 0..n {
                        t[i] -= proj * u[i];
                    }
                }
            }
        };
        orthogonalize(&mut t, &basis);
        let mut tnorm = norm(&t);
        if tnorm < 1e-10 {
            // stagnated correction; fall back to the coordinate of the
            // largest residual component
            let k = residual
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            t = vec![0.0; n];
            t[k] = 1.0;
            orthogonalize(&mut t, &basis);
            tnorm = norm(&t);
            if tnorm < 1e-10 {
                return Err(DavidsonError::NotConverged {
                    iterations: iteration + 1,
                    best_residual,
                });
            }
        }
        let scale = 1.0 / tnorm;
        let v: Vec<f64> = t.iter().map(|x| x * scale).collect();
        push_vector(&mut basis, &mut applied, v);
        let b_new = basis.len();
        let mut row = Vec::with_capacity(b_new);
        for j in 0..b_new {
            row.push(dot(&basis[b_new - 1], &applied[j]));
        }
        gram.push(row);
    }
    Err(DavidsonError::NotConverged {
        iterations: opts.max_iterations,
        best_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn one_by_one_matrix() {
        let m = CsrMatrix::from_rows(vec![vec![(0, -3.5)]]);
        let (e, c) = davidson_ground(&m, &DavidsonOptions::default()).unwrap();
        assert_eq!(e, -3.5);
        assert_eq!(c[0], 1.0);
    }

    #[test]
    fn diagonal_matrix_gives_min_diagonal() {
        let rows = (0..8)
            .map(|i| vec![(i as u32, (i as f64 - 4.2).abs())])
            .collect();
        let m = CsrMatrix::from_rows(rows);
        let (e, _) = davidson_ground(&m, &DavidsonOptions::default()).unwrap();
        assert!((e - 0.2).abs() < 1e-12);
    }

    #[test]
    fn tridiagonal_chain_ground_state() {
        // hopping chain with known spectrum 2 cos(k pi / (n+1))
        let n = 40;
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            if i > 0 {
                rows[i].push(((i - 1) as u32, -1.0));
            }
            if i + 1 < n {
                rows[i].push(((i + 1) as u32, -1.0));
            }
            rows[i].push((i as u32, 0.0));
        }
        let m = CsrMatrix::from_rows(rows);
        let (e, c) = davidson_ground(&m, &DavidsonOptions::default()).unwrap();
        let exact = -2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((e - exact).abs() < 1e-9, "{e} vs {exact}");
        let mut av = vec![0.0; n];
        m.apply(c.as_slice().unwrap(), &mut av);
        let resid: f64 = av
            .iter()
            .zip(c.iter())
            .map(|(x, y)| (x - e * y) * (x - e * y))
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-7);
    }

    #[test]
    fn determinism_across_runs() {
        let mut rng = crate::rng::substream(3, "davidson-test", 0);
        let n = 60;
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            rows[i].push((i as u32, rng.random::<f64>() * 4.0 - 2.0));
        }
        for _ in 0..150 {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let v = rng.random::<f64>() - 0.5;
            rows[i].push((j as u32, v));
            rows[j].push((i as u32, v));
        }
        let m = CsrMatrix::from_rows(rows);
        let (e1, c1) = davidson_ground(&m, &DavidsonOptions::default()).unwrap();
        let (e2, c2) = davidson_ground(&m, &DavidsonOptions::default()).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
        assert_eq!(c1, c2);
    }
}
