//! Slater-Condon matrix elements between determinants.
//!
//! Sign convention: within each spin species creation operators are ordered
//! by increasing orbital index, and the full operator string places the
//! spin-down block after the spin-up block. Excitation operators conserve
//! the particle count of each species, so cross-species reordering never
//! contributes a sign and the per-species parities multiply.

use crate::integrals::IntegralSet;
use crate::system::{sector_masks, Determinant, SystemShape};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixElementError {
    #[error("determinants live in different particle sectors: ({0}, {1}) vs ({2}, {3})")]
    SectorMismatch(usize, usize, usize, usize),
}

/// Excitation connecting two same-sector determinants, with holes and
/// particles listed per spin species and the fermionic sign of the aligning
/// permutation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Excitation {
    pub alpha_degree: u8,
    pub beta_degree: u8,
    pub alpha_holes: [u32; 2],
    pub alpha_particles: [u32; 2],
    pub beta_holes: [u32; 2],
    pub beta_particles: [u32; 2],
    pub sign: f64,
}

impl Excitation {
    pub fn total_degree(&self) -> u8 {
        self.alpha_degree + self.beta_degree
    }
}

/// Parity sign of moving one electron `from -> to` through the occupied bits
/// of `mask` strictly between the two positions.
#[inline]
fn single_sign(mask: u64, from: u32, to: u32) -> f64 {
    let (lo, hi) = if from < to { (from, to) } else { (to, from) };
    if hi - lo <= 1 {
        return 1.0;
    }
    let between = (mask >> (lo + 1)) & ((1u64 << (hi - lo - 1)) - 1);
    if between.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Holes, particles and sign for one spin species; `None` if the degree
/// exceeds 2.
fn species_excitation(x: u64, y: u64) -> Option<(u8, [u32; 2], [u32; 2], f64)> {
    let diff = x ^ y;
    let degree = diff.count_ones() / 2;
    if degree > 2 {
        return None;
    }
    let mut holes = [0u32; 2];
    let mut particles = [0u32; 2];
    let mut hm = x & diff;
    let mut pm = y & diff;
    for slot in 0..degree as usize {
        holes[slot] = hm.trailing_zeros();
        particles[slot] = pm.trailing_zeros();
        hm &= hm - 1;
        pm &= pm - 1;
    }
    // pair the k-th hole with the k-th particle, updating the mask so each
    // transposition sees the intermediate occupation
    let mut sign = 1.0;
    let mut mask = x;
    for slot in 0..degree as usize {
        sign *= single_sign(mask, holes[slot], particles[slot]);
        mask = mask ^ (1u64 << holes[slot]) ^ (1u64 << particles[slot]);
    }
    Some((degree as u8, holes, particles, sign))
}

/// Classify the excitation between two determinants; `None` when the total
/// degree exceeds 2 (matrix elements vanish there).
pub fn excitation_between(x: &Determinant, y: &Determinant) -> Option<Excitation> {
    let (ad, ah, ap, asn) = species_excitation(x.alpha_mask(), y.alpha_mask())?;
    let (bd, bh, bp, bsn) = species_excitation(x.beta_mask(), y.beta_mask())?;
    if ad + bd > 2 {
        return None;
    }
    Some(Excitation {
        alpha_degree: ad,
        beta_degree: bd,
        alpha_holes: ah,
        alpha_particles: ap,
        beta_holes: bh,
        beta_particles: bp,
        sign: asn * bsn,
    })
}

fn check_same_sector(x: &Determinant, y: &Determinant) -> Result<(), MatrixElementError> {
    let (xa, xb) = x.hamming_weights();
    let (ya, yb) = y.hamming_weights();
    if xa != ya || xb != yb {
        return Err(MatrixElementError::SectorMismatch(xa, xb, ya, yb));
    }
    Ok(())
}

fn occupied_spin_orbitals(d: &Determinant) -> Vec<(usize, bool)> {
    let mut occ = Vec::with_capacity(d.total_electrons());
    let mut m = d.alpha_mask();
    while m != 0 {
        occ.push((m.trailing_zeros() as usize, true));
        m &= m - 1;
    }
    m = d.beta_mask();
    while m != 0 {
        occ.push((m.trailing_zeros() as usize, false));
        m &= m - 1;
    }
    occ
}

/// Diagonal element `<x|H|x>`, including the core energy.
pub fn diagonal_element(x: &Determinant, ints: &IntegralSet) -> f64 {
    let occ = occupied_spin_orbitals(x);
    let mut e = ints.core_energy;
    for &(p, _) in &occ {
        e += ints.one_body[[p, p]];
    }
    for &(p, sp) in &occ {
        for &(q, sq) in &occ {
            let mut v = ints.two_body[[p, p, q, q]];
            if sp == sq {
                v -= ints.two_body[[p, q, q, p]];
            }
            e += 0.5 * v;
        }
    }
    e
}

fn single_excitation_value(
    f: usize,
    t: usize,
    same_spin_is_alpha: bool,
    x: &Determinant,
    ints: &IntegralSet,
) -> f64 {
    // one-body part plus the mean-field sum over all occupied spin-orbitals;
    // the q = f same-spin term cancels between Coulomb and exchange
    let mut v = ints.one_body[[f, t]];
    for &(q, q_is_alpha) in &occupied_spin_orbitals(x) {
        let mut w = ints.two_body[[f, t, q, q]];
        if q_is_alpha == same_spin_is_alpha {
            w -= ints.two_body[[f, q, q, t]];
        }
        v += w;
    }
    v
}

/// Hamiltonian matrix element `<x|H|y>` by the Slater-Condon rules.
pub fn h_element(
    x: &Determinant,
    y: &Determinant,
    ints: &IntegralSet,
) -> Result<f64, MatrixElementError> {
    check_same_sector(x, y)?;
    Ok(h_element_same_sector(x, y, ints))
}

/// As [`h_element`] with the sector check already done by the caller.
pub fn h_element_same_sector(x: &Determinant, y: &Determinant, ints: &IntegralSet) -> f64 {
    let Some(exc) = excitation_between(x, y) else {
        return 0.0;
    };
    match (exc.alpha_degree, exc.beta_degree) {
        (0, 0) => diagonal_element(x, ints),
        (1, 0) => {
            let f = exc.alpha_holes[0] as usize;
            let t = exc.alpha_particles[0] as usize;
            exc.sign * single_excitation_value(f, t, true, x, ints)
        }
        (0, 1) => {
            let f = exc.beta_holes[0] as usize;
            let t = exc.beta_particles[0] as usize;
            exc.sign * single_excitation_value(f, t, false, x, ints)
        }
        (2, 0) => {
            let (f1, f2) = (exc.alpha_holes[0] as usize, exc.alpha_holes[1] as usize);
            let (t1, t2) = (
                exc.alpha_particles[0] as usize,
                exc.alpha_particles[1] as usize,
            );
            exc.sign * (ints.two_body[[f1, t1, f2, t2]] - ints.two_body[[f1, t2, f2, t1]])
        }
        (0, 2) => {
            let (f1, f2) = (exc.beta_holes[0] as usize, exc.beta_holes[1] as usize);
            let (t1, t2) = (
                exc.beta_particles[0] as usize,
                exc.beta_particles[1] as usize,
            );
            exc.sign * (ints.two_body[[f1, t1, f2, t2]] - ints.two_body[[f1, t2, f2, t1]])
        }
        (1, 1) => {
            let fa = exc.alpha_holes[0] as usize;
            let ta = exc.alpha_particles[0] as usize;
            let fb = exc.beta_holes[0] as usize;
            let tb = exc.beta_particles[0] as usize;
            exc.sign * ints.two_body[[fa, ta, fb, tb]]
        }
        _ => 0.0,
    }
}

/// Total-spin matrix element `<x|S^2|y>` from
/// `S^2 = S_- S_+ + S_z (S_z + 1)`.
pub fn s2_element(x: &Determinant, y: &Determinant) -> Result<f64, MatrixElementError> {
    check_same_sector(x, y)?;
    Ok(s2_element_same_sector(x, y))
}

/// As [`s2_element`] with the sector check already done by the caller.
pub fn s2_element_same_sector(x: &Determinant, y: &Determinant) -> f64 {
    if x == y {
        let (na, nb) = x.hamming_weights();
        let sz = 0.5 * (na as f64 - nb as f64);
        // spin-down electrons without a same-orbital spin-up partner
        let unpaired_beta = (x.beta_mask() & !x.alpha_mask()).count_ones() as f64;
        return sz * (sz + 1.0) + unpaired_beta;
    }
    let Some(exc) = excitation_between(x, y) else {
        return 0.0;
    };
    if exc.alpha_degree != 1 || exc.beta_degree != 1 {
        return 0.0;
    }
    let p = exc.alpha_holes[0];
    let q = exc.alpha_particles[0];
    // the only surviving pattern is the spin-exchange pair: alpha p -> q
    // together with beta q -> p
    if exc.beta_holes[0] != q || exc.beta_particles[0] != p {
        return 0.0;
    }
    -exc.sign
}

/// All determinants reachable from `x` by single and double excitations
/// within its particle sector, `x` itself first; no duplicates.
pub fn connected_determinants(x: &Determinant, shape: &SystemShape) -> Vec<Determinant> {
    let n = shape.n_orb();
    let alpha = x.alpha_mask();
    let beta = x.beta_mask();
    let occ_a: Vec<u32> = bits(alpha);
    let occ_b: Vec<u32> = bits(beta);
    let virt_a: Vec<u32> = bits(!alpha & mask_width(n));
    let virt_b: Vec<u32> = bits(!beta & mask_width(n));

    let singles =
        |occ: &[u32], virt: &[u32], mask: u64| -> Vec<u64> {
            let mut out = Vec::with_capacity(occ.len() * virt.len());
            for &f in occ {
                for &t in virt {
                    out.push(mask ^ (1u64 << f) ^ (1u64 << t));
                }
            }
            out
        };
    let alpha_singles = singles(&occ_a, &virt_a, alpha);
    let beta_singles = singles(&occ_b, &virt_b, beta);

    let mut out = Vec::new();
    out.push(*x);
    for &a in &alpha_singles {
        out.push(Determinant::from_masks(a, beta));
    }
    for &b in &beta_singles {
        out.push(Determinant::from_masks(alpha, b));
    }
    // opposite-spin doubles
    for &a in &alpha_singles {
        for &b in &beta_singles {
            out.push(Determinant::from_masks(a, b));
        }
    }
    // same-spin doubles
    let doubles = |occ: &[u32], virt: &[u32], mask: u64, out: &mut Vec<u64>| {
        for i in 0..occ.len() {
            for j in (i + 1)..occ.len() {
                for a in 0..virt.len() {
                    for b in (a + 1)..virt.len() {
                        out.push(
                            mask ^ (1u64 << occ[i])
                                ^ (1u64 << occ[j])
                                ^ (1u64 << virt[a])
                                ^ (1u64 << virt[b]),
                        );
                    }
                }
            }
        }
    };
    let mut alpha_doubles = Vec::new();
    doubles(&occ_a, &virt_a, alpha, &mut alpha_doubles);
    for &a in &alpha_doubles {
        out.push(Determinant::from_masks(a, beta));
    }
    let mut beta_doubles = Vec::new();
    doubles(&occ_b, &virt_b, beta, &mut beta_doubles);
    for &b in &beta_doubles {
        out.push(Determinant::from_masks(alpha, b));
    }
    out
}

#[inline]
fn bits(mut m: u64) -> Vec<u32> {
    let mut out = Vec::with_capacity(m.count_ones() as usize);
    while m != 0 {
        out.push(m.trailing_zeros());
        m &= m - 1;
    }
    out
}

#[inline]
fn mask_width(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Expected size of the single-plus-double excitation space, used by the
/// enumeration cross-checks.
pub fn cisd_space_size(shape: &SystemShape) -> usize {
    let n = shape.n_orb();
    let (na, nb) = (shape.n_alpha(), shape.n_beta());
    let (va, vb) = (n - na, n - nb);
    let c2 = |k: usize| k * k.saturating_sub(1) / 2;
    1 + na * va
        + nb * vb
        + na * va * nb * vb
        + c2(na) * c2(va)
        + c2(nb) * c2(vb)
}

/// Exhaustive sector scan equivalent of [`connected_determinants`], used by
/// tests on small sectors.
pub fn connected_by_scan(x: &Determinant, shape: &SystemShape) -> Vec<Determinant> {
    let mut out = Vec::new();
    for a in sector_masks(shape.n_orb(), shape.n_alpha()) {
        for b in sector_masks(shape.n_orb(), shape.n_beta()) {
            let d = Determinant::from_masks(a, b);
            let da = (x.alpha_mask() ^ a).count_ones() / 2;
            let db = (x.beta_mask() ^ b).count_ones() / 2;
            if da + db <= 2 {
                out.push(d);
            }
        }
    }
    out
}
