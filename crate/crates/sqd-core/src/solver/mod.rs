//! Batch solves: subspace projection, Davidson diagonalization, and the
//! quantities derived from each subspace ground state (energy, occupancies,
//! reduced density matrices, Hamiltonian variance) plus orbital-rotation
//! optimization of the averaged subspace energy.

mod davidson;
mod projection;

pub use davidson::{davidson_ground, CsrMatrix, DavidsonError, DavidsonOptions, SymOp};
pub use projection::{project_hamiltonian, PenaltyConfig, ProjectedOperator};

use crate::integrals::{contract_four, IntegralSet, OrbitalRotation};
use crate::linalg;
use crate::matrix_elements::{connected_determinants, h_element_same_sector};
use crate::system::{sector_determinants, Determinant, SystemShape};
use ndarray::{Array1, Array2, Array4};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("determinant {0:?} is outside the target particle sector")]
    OutOfSector(String),
    #[error("dimension mismatch: expected {expected} orbitals, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("occupancy list is empty")]
    EmptyOccupancyList,
    #[error("occupancy vectors have unequal lengths")]
    RaggedOccupancies,
    #[error(transparent)]
    Davidson(#[from] DavidsonError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Integrals(#[from] crate::integrals::IntegralError),
}

/// An ordered, deduplicated set of same-sector determinants labeled by a
/// batch index.
#[derive(Clone, Debug)]
pub struct Batch {
    determinants: Vec<Determinant>,
    shape: SystemShape,
    index: usize,
}

impl Batch {
    /// Canonicalize (sort lexicographically on masks, dedup) and validate
    /// that every member carries the sector's electron counts.
    pub fn new(
        mut determinants: Vec<Determinant>,
        shape: SystemShape,
        index: usize,
    ) -> Result<Self, SolverError> {
        for d in &determinants {
            if !d.is_in_sector(&shape) {
                return Err(SolverError::OutOfSector(d.render(&shape)));
            }
        }
        determinants.sort();
        determinants.dedup();
        Ok(Self {
            determinants,
            shape,
            index,
        })
    }

    /// The entire particle sector as one batch.
    pub fn full_sector(shape: SystemShape, index: usize) -> Self {
        Self {
            determinants: sector_determinants(&shape),
            shape,
            index,
        }
    }

    pub fn determinants(&self) -> &[Determinant] {
        &self.determinants
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn len(&self) -> usize {
        self.determinants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.determinants.is_empty()
    }

    /// Canonical position of a determinant, if present.
    pub fn position(&self, det: &Determinant) -> Option<usize> {
        self.determinants.binary_search(det).ok()
    }

    /// Whether the set maps onto itself under spin inversion.
    pub fn is_spin_closed(&self) -> bool {
        self.determinants
            .iter()
            .all(|d| self.position(&d.spin_inverse()).is_some())
    }
}

/// Ground-state data of one projected batch.
#[derive(Clone, Debug)]
pub struct SubspaceSolution {
    /// Real amplitudes over the batch in canonical order, unit norm.
    pub amplitudes: Array1<f64>,
    /// Bare subspace energy `<psi|H_S|psi>` in Hartree.
    pub energy: f64,
    /// `<psi|S^2|psi>` over the batch.
    pub s2_expectation: f64,
    /// `<psi|H^2|psi> - <psi|H|psi>^2` with the full Hamiltonian applied to
    /// `psi`; `None` when skipped for speed.
    pub variance: Option<f64>,
    /// `<n_{p,sigma}>` per spin-orbital, spin-up block first.
    pub occupancies: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub davidson: DavidsonOptions,
    pub compute_variance: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            davidson: DavidsonOptions::default(),
            compute_variance: true,
        }
    }
}

/// Project, diagonalize, and evaluate state-derived quantities for one batch.
pub fn solve_batch(
    batch: &Batch,
    ints: &IntegralSet,
    penalty: &PenaltyConfig,
    opts: &SolveOptions,
) -> Result<SubspaceSolution, SolverError> {
    let op = project_hamiltonian(batch, ints, penalty)?;
    let (_, mut c) = davidson_ground(&op, &opts.davidson)?;
    // fix the overall sign so identical batches give identical vectors
    let pivot = c
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    if c[pivot] < 0.0 {
        c.mapv_inplace(|x| -x);
    }
    let cs = c.as_slice().expect("contiguous amplitudes");
    let energy = op.bare_energy(cs);
    let s2_expectation = op.s2_expectation(cs);
    let occupancies = occupancies(cs, batch);
    let variance = if opts.compute_variance {
        Some(hamiltonian_variance(cs, batch, ints))
    } else {
        None
    };
    Ok(SubspaceSolution {
        amplitudes: c,
        energy,
        s2_expectation,
        variance,
        occupancies,
    })
}

/// Spin-orbital occupancies `<n_{p,sigma}> = sum_x |c_x|^2 x_{p,sigma}`,
/// length `M` with the spin-up block first.
pub fn occupancies(amplitudes: &[f64], batch: &Batch) -> Vec<f64> {
    let n = batch.shape().n_orb();
    let mut occ = vec![0.0; 2 * n];
    for (x, &cx) in batch.determinants().iter().zip(amplitudes) {
        let w = cx * cx;
        let mut m = x.alpha_mask();
        while m != 0 {
            occ[m.trailing_zeros() as usize] += w;
            m &= m - 1;
        }
        m = x.beta_mask();
        while m != 0 {
            occ[n + m.trailing_zeros() as usize] += w;
            m &= m - 1;
        }
    }
    occ
}

/// Arithmetic mean of per-batch occupancy vectors.
pub fn average_occupancies(per_batch: &[Vec<f64>]) -> Result<Vec<f64>, SolverError> {
    let first = per_batch.first().ok_or(SolverError::EmptyOccupancyList)?;
    let len = first.len();
    if per_batch.iter().any(|v| v.len() != len) {
        return Err(SolverError::RaggedOccupancies);
    }
    let scale = 1.0 / per_batch.len() as f64;
    let mut mean = vec![0.0; len];
    for v in per_batch {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += scale * x;
        }
    }
    Ok(mean)
}

/// Hamiltonian variance `<psi|H^2|psi> - <psi|H|psi>^2`, with `H psi`
/// evaluated in the full space so contributions leaving the batch span are
/// counted. The spin penalty never enters here.
pub fn hamiltonian_variance(amplitudes: &[f64], batch: &Batch, ints: &IntegralSet) -> f64 {
    let shape = batch.shape();
    // ordered map: the quadratic accumulation below must not depend on hash
    // iteration order, or reruns drift in the last bits
    let mut w: BTreeMap<Determinant, f64> = BTreeMap::new();
    for (x, &cx) in batch.determinants().iter().zip(amplitudes) {
        if cx == 0.0 {
            continue;
        }
        for y in connected_determinants(x, shape) {
            let v = h_element_same_sector(&y, x, ints);
            if v != 0.0 {
                *w.entry(y).or_insert(0.0) += v * cx;
            }
        }
    }
    let h2: f64 = w.values().map(|v| v * v).sum();
    let mut e = 0.0;
    for (x, &cx) in batch.determinants().iter().zip(amplitudes) {
        if let Some(&wx) = w.get(x) {
            e += wx * cx;
        }
    }
    h2 - e * e
}

/// One- and two-body reduced density matrices with contributions restricted
/// to the batch span.
///
/// Index conventions: `one_rdm[s][[p, q]] = <a+_{p,s} a_{q,s}>` and
/// `two_rdm[s][t][[p, r, q, u]] = <a+_{p,s} a+_{q,t} a_{u,t} a_{r,s}>`,
/// aligned with the chemist tensor so the energy is
/// `E0 + sum h_pr G1_pr + 1/2 sum (pr|qu) G2_prqu`.
#[derive(Clone, Debug)]
pub struct DensityMatrices {
    pub one_rdm: [Array2<f64>; 2],
    pub two_rdm: [[Array4<f64>; 2]; 2],
}

impl DensityMatrices {
    pub fn n_orb(&self) -> usize {
        self.one_rdm[0].nrows()
    }

    /// Spin-summed one-body density matrix.
    pub fn one_rdm_total(&self) -> Array2<f64> {
        &self.one_rdm[0] + &self.one_rdm[1]
    }

    /// Spin-summed two-body density tensor.
    pub fn two_rdm_total(&self) -> Array4<f64> {
        let n = self.n_orb();
        let mut total = Array4::<f64>::zeros((n, n, n, n));
        for s in 0..2 {
            for t in 0..2 {
                total += &self.two_rdm[s][t];
            }
        }
        total
    }
}

#[inline]
fn parity_below(mask: u64, k: usize) -> f64 {
    let below = mask & ((1u64 << k) - 1);
    if below.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn bits_of(mut m: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        out.push(m.trailing_zeros() as usize);
        m &= m - 1;
    }
    out
}

/// Build the reduced density matrices of a solved batch by explicit operator
/// application within the span.
pub fn compute_rdms(amplitudes: &[f64], batch: &Batch) -> DensityMatrices {
    let n = batch.shape().n_orb();
    let mut one = [Array2::zeros((n, n)), Array2::zeros((n, n))];
    let mut two = [
        [Array4::zeros((n, n, n, n)), Array4::zeros((n, n, n, n))],
        [Array4::zeros((n, n, n, n)), Array4::zeros((n, n, n, n))],
    ];
    let position: HashMap<Determinant, usize> = batch
        .determinants()
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i))
        .collect();

    let species_mask = |d: &Determinant, species: usize| -> u64 {
        if species == 0 {
            d.alpha_mask()
        } else {
            d.beta_mask()
        }
    };

    for (y, &cy) in batch.determinants().iter().zip(amplitudes) {
        if cy == 0.0 {
            continue;
        }
        // one-body: a+_{p,s} a_{q,s}
        for s in 0..2usize {
            let my = species_mask(y, s);
            for q in bits_of(my) {
                let sign_q = parity_below(my, q);
                let m1 = my ^ (1u64 << q);
                for p in 0..n {
                    if m1 >> p & 1 == 1 {
                        continue;
                    }
                    let sign_p = parity_below(m1, p);
                    let m2 = m1 | (1u64 << p);
                    let xd = if s == 0 {
                        Determinant::from_masks(m2, y.beta_mask())
                    } else {
                        Determinant::from_masks(y.alpha_mask(), m2)
                    };
                    if let Some(&ix) = position.get(&xd) {
                        one[s][[p, q]] += amplitudes[ix] * cy * sign_q * sign_p;
                    }
                }
            }
        }
        // two-body: a+_{p,s} a+_{q,t} a_{u,t} a_{r,s}, applied right to left;
        // cross-species crossings pair up, so per-species parities suffice
        for s in 0..2usize {
            for t in 0..2usize {
                for r in bits_of(species_mask(y, s)) {
                    let mut m = [y.alpha_mask(), y.beta_mask()];
                    let sign_r = parity_below(m[s], r);
                    m[s] ^= 1u64 << r;
                    for u in bits_of(m[t]) {
                        let mut m2 = m;
                        let sign_u = parity_below(m2[t], u);
                        m2[t] ^= 1u64 << u;
                        for q in 0..n {
                            if m2[t] >> q & 1 == 1 {
                                continue;
                            }
                            let mut m3 = m2;
                            let sign_q = parity_below(m3[t], q);
                            m3[t] |= 1u64 << q;
                            for p in 0..n {
                                if m3[s] >> p & 1 == 1 {
                                    continue;
                                }
                                let sign_p = parity_below(m3[s], p);
                                let mut m4 = m3;
                                m4[s] |= 1u64 << p;
                                let xd = Determinant::from_masks(m4[0], m4[1]);
                                if let Some(&ix) = position.get(&xd) {
                                    two[s][t][[p, r, q, u]] +=
                                        amplitudes[ix] * cy * sign_r * sign_u * sign_q * sign_p;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    DensityMatrices {
        one_rdm: one,
        two_rdm: two,
    }
}

/// Contract density matrices with integral tensors:
/// `E0 + sum h G1 + 1/2 sum (pr|qu) G2`.
pub fn energy_from_rdms(ints: &IntegralSet, rdms: &DensityMatrices) -> f64 {
    let n = ints.n_orb();
    let g1 = rdms.one_rdm_total();
    let g2 = rdms.two_rdm_total();
    let mut e = ints.core_energy;
    for p in 0..n {
        for r in 0..n {
            e += ints.one_body[[p, r]] * g1[[p, r]];
        }
    }
    for p in 0..n {
        for r in 0..n {
            for q in 0..n {
                for u in 0..n {
                    e += 0.5 * ints.two_body[[p, r, q, u]] * g2[[p, r, q, u]];
                }
            }
        }
    }
    e
}

/// Occupancies in a rotated single-particle basis:
/// `n_t = sum_s (Omega^T Gamma_s Omega)_tt`.
pub fn localized_occupancies(
    rdms: &DensityMatrices,
    rot: &OrbitalRotation,
) -> Result<Vec<f64>, SolverError> {
    let n = rdms.n_orb();
    if rot.n_orb() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            found: rot.n_orb(),
        });
    }
    let omega = rot.omega();
    let mut out = vec![0.0; n];
    for s in 0..2 {
        let rotated = omega.t().dot(&rdms.one_rdm[s]).dot(omega);
        for t in 0..n {
            out[t] += rotated[[t, t]];
        }
    }
    Ok(out)
}

/// Mean subspace energy over batches in the basis rotated by `exp(kappa)`,
/// evaluated from frozen per-batch density matrices.
pub fn orbital_energy(
    ints: &IntegralSet,
    rdms: &[DensityMatrices],
    kappa: &Array2<f64>,
) -> Result<f64, SolverError> {
    let rot = OrbitalRotation::from_kappa(kappa.clone())?;
    let rotated = crate::integrals::rotate_integrals(ints, &rot)?;
    let mean = rdms
        .iter()
        .map(|r| energy_from_rdms(&rotated, r))
        .sum::<f64>()
        / rdms.len().max(1) as f64;
    Ok(mean)
}

/// Gradient of [`orbital_energy`] with respect to the independent entries of
/// `kappa`, contracting batch-averaged density matrices with integral
/// derivatives; `dOmega/dkappa_pq` is taken by central finite differences on
/// the matrix exponential.
pub fn orbital_gradient(
    ints: &IntegralSet,
    rdms: &[DensityMatrices],
    kappa: &Array2<f64>,
    fd_step: f64,
) -> Result<Array2<f64>, SolverError> {
    let n = ints.n_orb();
    if kappa.nrows() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            found: kappa.nrows(),
        });
    }
    let k = rdms.len().max(1) as f64;
    let mut g1 = Array2::<f64>::zeros((n, n));
    let mut g2 = Array4::<f64>::zeros((n, n, n, n));
    for r in rdms {
        g1 += &r.one_rdm_total();
        g2 += &r.two_rdm_total();
    }
    g1.mapv_inplace(|x| x / k);
    g2.mapv_inplace(|x| x / k);

    let omega = linalg::exp_antisymmetric(kappa)?;
    let mut grad = Array2::<f64>::zeros((n, n));
    for p in 0..n {
        for q in 0..p {
            let mut kp = kappa.clone();
            kp[[p, q]] += fd_step;
            kp[[q, p]] -= fd_step;
            let mut km = kappa.clone();
            km[[p, q]] -= fd_step;
            km[[q, p]] += fd_step;
            let d_omega = (linalg::exp_antisymmetric(&kp)? - linalg::exp_antisymmetric(&km)?)
                / (2.0 * fd_step);

            let h_prime = d_omega.t().dot(&ints.one_body).dot(&omega)
                + omega.t().dot(&ints.one_body).dot(&d_omega);
            let mut val = (&h_prime * &g1).sum();

            for slot in 0..4 {
                let factors = [
                    if slot == 0 { &d_omega } else { &omega },
                    if slot == 1 { &d_omega } else { &omega },
                    if slot == 2 { &d_omega } else { &omega },
                    if slot == 3 { &d_omega } else { &omega },
                ];
                let gp = contract_four(&ints.two_body, factors, n);
                val += 0.5 * (&gp * &g2).sum();
            }
            grad[[p, q]] = val;
            grad[[q, p]] = -val;
        }
    }
    Ok(grad)
}

/// Gradient-descent state for orbital optimization.
#[derive(Clone, Debug)]
pub struct OrbitalOptimizer {
    pub learning_rate: f64,
    pub momentum: f64,
    pub fd_step: f64,
    velocity: Option<Array2<f64>>,
}

impl OrbitalOptimizer {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            fd_step: 1e-6,
            velocity: None,
        }
    }

    /// One descent step on the averaged rotated energy; returns the updated
    /// generator.
    pub fn step(
        &mut self,
        ints: &IntegralSet,
        rdms: &[DensityMatrices],
        kappa: &Array2<f64>,
    ) -> Result<Array2<f64>, SolverError> {
        if self.learning_rate == 0.0 {
            return Ok(kappa.clone());
        }
        let grad = orbital_gradient(ints, rdms, kappa, self.fd_step)?;
        let velocity = match self.velocity.take() {
            Some(v) => v.mapv(|x| x * self.momentum) + &grad,
            None => grad,
        };
        let updated = kappa - &velocity.mapv(|x| x * self.learning_rate);
        self.velocity = Some(velocity);
        Ok(updated)
    }
}

/// Single optimization step with no accumulated momentum history.
pub fn orbital_opt_step(
    ints: &IntegralSet,
    rdms: &[DensityMatrices],
    kappa: &Array2<f64>,
    learning_rate: f64,
    momentum: f64,
) -> Result<Array2<f64>, SolverError> {
    OrbitalOptimizer::new(learning_rate, momentum).step(ints, rdms, kappa)
}
