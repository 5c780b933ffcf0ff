//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here wraps LAPACK-backed `ndarray-linalg` routines. The complex
//! Hermitian wrapper normalizes the eigenvector convention (row-major input
//! can come back with conjugated columns depending on the backend's layout
//! handling), so callers always receive columns `v_k` with `A v_k = w_k v_k`.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("eigendecomposition failed: {0}")]
    Backend(String),
    #[error("matrix is not {kind} (max deviation {deviation:.3e})")]
    BadSymmetry { kind: &'static str, deviation: f64 },
    #[error("matrix logarithm inconsistent: reconstruction error {0:.3e}")]
    LogReconstruction(f64),
}

fn check_square<T>(a: &Array2<T>) -> Result<usize, LinalgError> {
    let (r, c) = a.dim();
    if r != c {
        return Err(LinalgError::NotSquare(r, c));
    }
    Ok(r)
}

/// Eigendecomposition of a real symmetric matrix; eigenvalues ascending,
/// eigenvectors in columns.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>), LinalgError> {
    check_square(a)?;
    a.eigh(UPLO::Lower)
        .map_err(|e| LinalgError::Backend(e.to_string()))
}

/// Eigendecomposition of a complex Hermitian matrix; eigenvalues ascending,
/// eigenvectors in columns.
pub fn eigh_complex(
    a: &Array2<Complex64>,
) -> Result<(Array1<f64>, Array2<Complex64>), LinalgError> {
    let n = check_square(a)?;
    let (vals, vecs) = a
        .eigh(UPLO::Lower)
        .map_err(|e| LinalgError::Backend(e.to_string()))?;
    if n == 0 {
        return Ok((vals, vecs));
    }
    // Decide between V and conj(V) by the eigen-residual of the first column.
    let resid = |v: &Array1<Complex64>| -> f64 {
        let av = a.dot(v);
        av.iter()
            .zip(v.iter())
            .map(|(x, y)| (x - y * vals[0]).norm())
            .fold(0.0, f64::max)
    };
    let col = vecs.column(0).to_owned();
    let col_conj = col.mapv(|z| z.conj());
    if resid(&col_conj) < resid(&col) {
        Ok((vals, vecs.mapv(|z| z.conj())))
    } else {
        Ok((vals, vecs))
    }
}

fn hermitian_deviation(a: &Array2<Complex64>) -> f64 {
    let n = a.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((a[[i, j]] + a[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Exponential of a complex anti-Hermitian matrix, computed through the
/// Hermitian eigendecomposition of `iK`. The result is unitary to machine
/// precision.
pub fn exp_antihermitian(k: &Array2<Complex64>) -> Result<Array2<Complex64>, LinalgError> {
    check_square(k)?;
    let dev = hermitian_deviation(k);
    if dev > 1e-10 {
        return Err(LinalgError::BadSymmetry {
            kind: "anti-Hermitian",
            deviation: dev,
        });
    }
    let i = Complex64::new(0.0, 1.0);
    let h = k.mapv(|z| i * z);
    let (vals, vecs) = eigh_complex(&h)?;
    let phases = Array2::from_diag(&vals.mapv(|w| Complex64::from_polar(1.0, -w)));
    let vdag = vecs.mapv(|z| z.conj()).reversed_axes();
    Ok(vecs.dot(&phases).dot(&vdag))
}

/// Exponential of a real antisymmetric matrix; the result is orthogonal.
pub fn exp_antisymmetric(kappa: &Array2<f64>) -> Result<Array2<f64>, LinalgError> {
    let kc = kappa.mapv(|x| Complex64::new(x, 0.0));
    let omega = exp_antihermitian(&kc)?;
    Ok(omega.mapv(|z| z.re))
}

/// Principal logarithm of a unitary matrix, returned as an anti-Hermitian
/// generator `K` with `exp(K) = U`.
///
/// `U` is normal, so it is diagonalized by simultaneously diagonalizing the
/// commuting Hermitian pair `(U + U†)/2` and `(U − U†)/2i`; this avoids a
/// general nonsymmetric eigensolver and stays well behaved under eigenvalue
/// degeneracies away from the branch cut.
pub fn unitary_log(u: &Array2<Complex64>) -> Result<Array2<Complex64>, LinalgError> {
    let n = check_square(u)?;
    let udag = u.mapv(|z| z.conj()).reversed_axes();
    let half = Complex64::new(0.5, 0.0);
    let cos_part: Array2<Complex64> = (u + &udag).mapv(|z| z * half);
    let sin_part: Array2<Complex64> = (u - &udag).mapv(|z| z * Complex64::new(0.0, -0.5));

    let (cvals, cvecs) = eigh_complex(&cos_part)?;
    let mut basis = cvecs;
    let mut thetas = Array1::<f64>::zeros(n);

    // Resolve each near-degenerate cos cluster by diagonalizing the sin part
    // restricted to it.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (cvals[end] - cvals[start]).abs() < 1e-9 {
            end += 1;
        }
        let cols = basis.slice(ndarray::s![.., start..end]).to_owned();
        let cols_dag = cols.mapv(|z| z.conj()).reversed_axes();
        let block = cols_dag.dot(&sin_part).dot(&cols);
        let (svals, svecs) = eigh_complex(&block)?;
        let rotated = cols.dot(&svecs);
        basis.slice_mut(ndarray::s![.., start..end]).assign(&rotated);
        for (offset, &s) in svals.iter().enumerate() {
            let c = cvals[start + offset];
            thetas[start + offset] = s.atan2(c);
        }
        start = end;
    }

    let phases = Array2::from_diag(&thetas.mapv(|t| Complex64::new(0.0, t)));
    let basis_dag = basis.mapv(|z| z.conj()).reversed_axes();
    let k = basis.dot(&phases).dot(&basis_dag);

    let recon = exp_antihermitian(&k)?;
    let err = (&recon - u).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if err > 1e-8 {
        return Err(LinalgError::LogReconstruction(err));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn random_antihermitian(n: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut k = Array2::<Complex64>::zeros((n, n));
        for p in 0..n {
            k[[p, p]] = Complex64::new(0.0, rng.random::<f64>() - 0.5);
            for q in 0..p {
                let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                k[[p, q]] = z;
                k[[q, p]] = -z.conj();
            }
        }
        k
    }

    #[test]
    fn real_eigh_columns_are_eigenvectors() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, -1.0]];
        let (vals, vecs) = eigh_real(&a).unwrap();
        for k in 0..3 {
            let v = vecs.column(k).to_owned();
            let r = &a.dot(&v) - &v.mapv(|x| x * vals[k]);
            assert!(r.iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn complex_eigh_columns_are_eigenvectors() {
        let k = random_antihermitian(6, 3);
        let i = Complex64::new(0.0, 1.0);
        let h = k.mapv(|z| i * z);
        let (vals, vecs) = eigh_complex(&h).unwrap();
        for j in 0..6 {
            let v = vecs.column(j).to_owned();
            let hv = h.dot(&v);
            let err = hv
                .iter()
                .zip(v.iter())
                .map(|(x, y)| (x - y * vals[j]).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "column {j} residual {err:.3e}");
        }
    }

    #[test]
    fn exponential_of_antihermitian_is_unitary() {
        let k = random_antihermitian(6, 11);
        let u = exp_antihermitian(&k).unwrap();
        let udag = u.mapv(|z| z.conj()).reversed_axes();
        let g = udag.dot(&u);
        for p in 0..6 {
            for q in 0..6 {
                let expect = if p == q { 1.0 } else { 0.0 };
                assert!((g[[p, q]] - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_log_round_trips() {
        for seed in 0..5u64 {
            let k = random_antihermitian(5, 100 + seed);
            let u = exp_antihermitian(&k).unwrap();
            let k2 = unitary_log(&u).unwrap();
            let u2 = exp_antihermitian(&k2).unwrap();
            let err = (&u2 - &u).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "seed {seed}: {err:.3e}");
        }
    }

    #[test]
    fn unitary_log_handles_permutations() {
        // even and odd permutation matrices, including a -1 eigenvalue
        let p = array![
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0]
        ];
        let pc = p.mapv(|x| Complex64::new(x, 0.0));
        let k = unitary_log(&pc).unwrap();
        let u = exp_antihermitian(&k).unwrap();
        let err = (&u - &pc).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err:.3e}");
    }
}
