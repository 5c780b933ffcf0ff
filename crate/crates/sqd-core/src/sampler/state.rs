//! Statevector over a fixed particle sector and the LUCJ factor actions.

use super::ansatz::LucjParams;
use super::SamplerError;
use crate::linalg;
use crate::system::{sector_determinants, sector_index, sector_masks, Determinant, SystemShape};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

/// Default cap on the sector dimension a statevector may occupy.
pub const DEFAULT_STATE_BUDGET: usize = 10_000_000;

/// Normalized complex amplitudes over the sector in canonical determinant
/// order (spin-up major).
#[derive(Clone, Debug)]
pub struct SectorState {
    shape: SystemShape,
    amplitudes: Array1<Complex64>,
}

impl SectorState {
    fn checked_dimension(shape: &SystemShape, budget: usize) -> Result<usize, SamplerError> {
        let dim = shape.sector_dimension();
        if dim > budget as u128 {
            return Err(SamplerError::VectorTooLarge { dim, budget });
        }
        Ok(dim as usize)
    }

    /// Point mass on one sector determinant.
    pub fn point_mass(shape: SystemShape, det: &Determinant) -> Result<Self, SamplerError> {
        if !det.is_in_sector(&shape) {
            return Err(SamplerError::OutOfSector(det.render(&shape)));
        }
        let dim = Self::checked_dimension(&shape, DEFAULT_STATE_BUDGET)?;
        let mut amplitudes = Array1::zeros(dim);
        amplitudes[sector_index(det, &shape)] = Complex64::new(1.0, 0.0);
        Ok(Self { shape, amplitudes })
    }

    /// Point mass on the restricted Hartree-Fock reference.
    pub fn rhf(shape: SystemShape) -> Result<Self, SamplerError> {
        Self::point_mass(shape, &Determinant::rhf(&shape))
    }

    /// Wrap real amplitudes in canonical order (e.g. a solved full-sector
    /// ground state); the vector is normalized.
    pub fn from_real_amplitudes(shape: SystemShape, values: &[f64]) -> Result<Self, SamplerError> {
        let dim = Self::checked_dimension(&shape, DEFAULT_STATE_BUDGET)?;
        if values.len() != dim {
            return Err(SamplerError::DimensionMismatch {
                expected: dim,
                found: values.len(),
            });
        }
        let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(SamplerError::InvalidAmplitudes("zero vector".into()));
        }
        let amplitudes = values.iter().map(|v| Complex64::new(v / norm, 0.0)).collect();
        Ok(Self { shape, amplitudes })
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amplitudes
    }

    /// `|c_x|^2` in canonical order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Squared overlap with another state of the same sector.
    pub fn fidelity(&self, other: &Self) -> f64 {
        let overlap: Complex64 = self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        overlap.norm_sqr()
    }

    /// Amplitude of one determinant.
    pub fn amplitude(&self, det: &Determinant) -> Complex64 {
        self.amplitudes[sector_index(det, &self.shape)]
    }
}

fn antihermitian_deviation(k: &Array2<Complex64>) -> f64 {
    let n = k.nrows();
    let mut dev = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            dev = dev.max((k[[p, q]] + k[[q, p]].conj()).norm());
        }
    }
    dev
}

/// Determinant of a small complex matrix by Gaussian elimination with
/// partial pivoting; consumed in place.
fn complex_det(m: &mut Array2<Complex64>) -> Complex64 {
    let n = m.nrows();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[[col, col]].norm();
        for row in col + 1..n {
            let mag = m[[row, col]].norm();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m[[col, j]];
                m[[col, j]] = m[[pivot, j]];
                m[[pivot, j]] = tmp;
            }
            det = -det;
        }
        let diag = m[[col, col]];
        det *= diag;
        for row in col + 1..n {
            let factor = m[[row, col]] / diag;
            if factor.norm() == 0.0 {
                continue;
            }
            for j in col..n {
                let sub = factor * m[[col, j]];
                m[[row, j]] -= sub;
            }
        }
    }
    det
}

/// Sector-basis matrix of the one-body exponential for one spin species:
/// entry `(row, col)` is the minor `det(Omega[occ(row), occ(col)])`.
fn species_transform(omega: &Array2<Complex64>, n_orb: usize, n_elec: usize) -> Array2<Complex64> {
    let masks = sector_masks(n_orb, n_elec);
    let dim = masks.len();
    let occ: Vec<Vec<usize>> = masks
        .iter()
        .map(|&m| {
            let mut bits = Vec::with_capacity(n_elec);
            let mut mm = m;
            while mm != 0 {
                bits.push(mm.trailing_zeros() as usize);
                mm &= mm - 1;
            }
            bits
        })
        .collect();
    let mut t = Array2::zeros((dim, dim));
    let mut minor = Array2::zeros((n_elec, n_elec));
    for r in 0..dim {
        for c in 0..dim {
            for (i, &row_orb) in occ[r].iter().enumerate() {
                for (j, &col_orb) in occ[c].iter().enumerate() {
                    minor[[i, j]] = omega[[row_orb, col_orb]];
                }
            }
            t[[r, c]] = complex_det(&mut minor);
        }
    }
    t
}

/// Apply `exp(sign * K_hat)` to both spin species of the state, where `K`
/// is the anti-Hermitian single-particle generator. The single-particle
/// unitary `Omega = exp(sign K)` is lifted to the sector basis through minors
/// of its occupied submatrices.
pub fn apply_orbital_rotation(
    state: &SectorState,
    k: &Array2<Complex64>,
    sign: f64,
) -> Result<SectorState, SamplerError> {
    let shape = *state.shape();
    let n = shape.n_orb();
    if k.nrows() != n || k.ncols() != n {
        return Err(SamplerError::DimensionMismatch {
            expected: n,
            found: k.nrows(),
        });
    }
    if sign != 1.0 && sign != -1.0 {
        return Err(SamplerError::BadSign(sign));
    }
    let dev = antihermitian_deviation(k);
    if dev > 1e-10 {
        return Err(SamplerError::NotAntiHermitian(dev));
    }
    let omega = linalg::exp_antihermitian(&k.mapv(|z| z * sign))?;

    let t_alpha = species_transform(&omega, n, shape.n_alpha());
    let t_beta = if shape.n_beta() == shape.n_alpha() {
        t_alpha.clone()
    } else {
        species_transform(&omega, n, shape.n_beta())
    };

    let dim_a = t_alpha.nrows();
    let dim_b = t_beta.nrows();
    let grid = state
        .amplitudes
        .to_shape((dim_a, dim_b))
        .expect("sector grid")
        .to_owned();
    let rotated = t_alpha.dot(&grid).dot(&t_beta.t());
    let amplitudes = Array1::from_iter(rotated.iter().copied());
    Ok(SectorState { shape, amplitudes })
}

/// Apply the diagonal density-density phase
/// `exp(i sum_{ps,qt} J_{ps,qt} x_ps x_qt)` with the full `M x M` tensor,
/// spin-up block first.
pub fn apply_jastrow(state: &SectorState, j: &Array2<f64>) -> Result<SectorState, SamplerError> {
    let shape = *state.shape();
    let m = shape.n_qubits();
    if j.nrows() != m || j.ncols() != m {
        return Err(SamplerError::DimensionMismatch {
            expected: m,
            found: j.nrows(),
        });
    }
    let mut dev = 0.0f64;
    for p in 0..m {
        for q in 0..p {
            dev = dev.max((j[[p, q]] - j[[q, p]]).abs());
        }
    }
    if dev > 1e-10 {
        return Err(SamplerError::NotSymmetric(dev));
    }
    let n = shape.n_orb();
    let dets = sector_determinants(&shape);
    let mut amplitudes = state.amplitudes.clone();
    let mut occ = Vec::with_capacity(shape.n_electrons());
    for (idx, det) in dets.iter().enumerate() {
        occ.clear();
        let mut mask = det.alpha_mask();
        while mask != 0 {
            occ.push(mask.trailing_zeros() as usize);
            mask &= mask - 1;
        }
        mask = det.beta_mask();
        while mask != 0 {
            occ.push(n + mask.trailing_zeros() as usize);
            mask &= mask - 1;
        }
        let mut phase = 0.0;
        for &a in &occ {
            for &b in &occ {
                phase += j[[a, b]];
            }
        }
        amplitudes[idx] *= Complex64::from_polar(1.0, phase);
    }
    Ok(SectorState { shape, amplitudes })
}

/// Prepare the LUCJ state: starting from the Hartree-Fock reference, each
/// layer applies `exp(s K) exp(i J) exp(-s K)` with its configured exponent
/// sign, followed by the optional trailing orbital rotation of the truncated
/// ansatz.
pub fn prepare_lucj(params: &LucjParams, shape: SystemShape) -> Result<SectorState, SamplerError> {
    params.validate(shape.n_orb())?;
    let mut state = SectorState::rhf(shape)?;
    for layer in &params.layers {
        let s = layer.exponent_sign;
        state = apply_orbital_rotation(&state, &layer.orbital_generator, -s)?;
        state = apply_jastrow(&state, &layer.jastrow)?;
        state = apply_orbital_rotation(&state, &layer.orbital_generator, s)?;
    }
    if let Some((k, sign)) = &params.final_rotation {
        state = apply_orbital_rotation(&state, k, *sign)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn random_antihermitian(n: usize, seed: u64, scale: f64) -> Array2<Complex64> {
        let mut rng = substream(seed, "antiherm", 0);
        let mut k = Array2::<Complex64>::zeros((n, n));
        for p in 0..n {
            k[[p, p]] = Complex64::new(0.0, scale * (rng.random::<f64>() - 0.5));
            for q in 0..p {
                let z = Complex64::new(
                    scale * (rng.random::<f64>() - 0.5),
                    scale * (rng.random::<f64>() - 0.5),
                );
                k[[p, q]] = z;
                k[[q, p]] = -z.conj();
            }
        }
        k
    }

    fn random_state(shape: SystemShape, seed: u64) -> SectorState {
        let dim = shape.sector_dimension() as usize;
        let mut rng = substream(seed, "state", 1);
        let values: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        SectorState::from_real_amplitudes(shape, &values).unwrap()
    }

    #[test]
    fn zero_generator_is_identity() {
        let shape = SystemShape::new(4, 2, 2).unwrap();
        let state = random_state(shape, 3);
        let k = Array2::<Complex64>::zeros((4, 4));
        let rotated = apply_orbital_rotation(&state, &k, 1.0).unwrap();
        let dev = state
            .amplitudes()
            .iter()
            .zip(rotated.amplitudes().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12);
    }

    #[test]
    fn rotations_preserve_norm_and_sector() {
        let shape = SystemShape::new(5, 3, 2).unwrap();
        let state = random_state(shape, 4);
        let k = random_antihermitian(5, 9, 1.0);
        let rotated = apply_orbital_rotation(&state, &k, -1.0).unwrap();
        assert!((rotated.norm() - 1.0).abs() < 1e-10);
        // applying the inverse returns the original state
        let back = apply_orbital_rotation(&rotated, &k, 1.0).unwrap();
        assert!(back.fidelity(&state) > 1.0 - 1e-10);
    }

    #[test]
    fn jastrow_is_a_pure_phase() {
        let shape = SystemShape::new(4, 2, 2).unwrap();
        let state = random_state(shape, 5);
        let mut rng = substream(6, "jastrow", 0);
        let m = shape.n_qubits();
        let mut j = Array2::<f64>::zeros((m, m));
        for p in 0..m {
            for q in 0..=p {
                let v = rng.random::<f64>() - 0.5;
                j[[p, q]] = v;
                j[[q, p]] = v;
            }
        }
        let phased = apply_jastrow(&state, &j).unwrap();
        assert!((phased.norm() - 1.0).abs() < 1e-12);
        for (a, b) in state.amplitudes().iter().zip(phased.amplitudes().iter()) {
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-12);
        }
        // zero tensor is the identity
        let id = apply_jastrow(&state, &Array2::zeros((m, m))).unwrap();
        assert!(id.fidelity(&state) > 1.0 - 1e-12);
    }

    #[test]
    fn empty_ansatz_is_the_hf_point_mass() {
        let shape = SystemShape::new(4, 2, 2).unwrap();
        let params = LucjParams::empty();
        let state = prepare_lucj(&params, shape).unwrap();
        let rhf = Determinant::rhf(&shape);
        assert!((state.amplitude(&rhf).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jastrow_only_layer_keeps_hf_probability() {
        let shape = SystemShape::new(3, 1, 1).unwrap();
        let m = shape.n_qubits();
        let mut j = Array2::<f64>::zeros((m, m));
        for p in 0..m {
            for q in 0..m {
                j[[p, q]] = 0.1 * (1 + p + q) as f64;
            }
        }
        let j = (&j + &j.t()) / 2.0;
        let params = LucjParams {
            layers: vec![crate::sampler::LucjLayer {
                orbital_generator: Array2::zeros((3, 3)),
                jastrow: j,
                exponent_sign: -1.0,
            }],
            final_rotation: None,
        };
        let state = prepare_lucj(&params, shape).unwrap();
        let rhf = Determinant::rhf(&shape);
        assert!((state.amplitude(&rhf).norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_rejects_oversized_sectors() {
        let shape = SystemShape::new(32, 16, 16).unwrap();
        assert!(matches!(
            SectorState::rhf(shape),
            Err(SamplerError::VectorTooLarge { .. })
        ));
    }
}
