//! Electronic configurations as Jordan-Wigner bitstrings.
//!
//! A configuration (Slater determinant) over `n_orb` spatial orbitals is a
//! pair of occupation masks, one per spin species, with bit `p` of each mask
//! holding the occupation `x_{p,sigma}` of spatial orbital `p`. The textual
//! form is the `M = 2 n_orb` character string
//!
//! ```text
//! x_{n_orb-1, dn} ... x_{0, dn} x_{n_orb-1, up} ... x_{0, up}
//! ```
//!
//! i.e. the spin-down block is printed first and the leftmost character is
//! the highest spin-down orbital. Sets of determinants are canonically
//! ordered lexicographically on `(alpha_mask, beta_mask)`, which the derived
//! `Ord` implements directly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SystemError {
    #[error("invalid shape: {0} spatial orbitals with ({1}, {2}) electrons")]
    InvalidShape(usize, usize, usize),
    #[error("orbital count {0} exceeds the 64-orbital mask width")]
    TooManyOrbitals(usize),
    #[error("mask has bits above orbital {0}")]
    MaskOutOfRange(usize),
    #[error("bitstring has length {found}, expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("bitstring contains illegal character {0:?}")]
    IllegalCharacter(char),
}

/// Orbital and electron counts of a particle sector, plus derived sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemShape {
    n_orb: usize,
    n_alpha: usize,
    n_beta: usize,
}

impl SystemShape {
    pub fn new(n_orb: usize, n_alpha: usize, n_beta: usize) -> Result<Self, SystemError> {
        if n_orb > 64 {
            return Err(SystemError::TooManyOrbitals(n_orb));
        }
        if n_alpha > n_orb || n_beta > n_orb {
            return Err(SystemError::InvalidShape(n_orb, n_alpha, n_beta));
        }
        Ok(Self {
            n_orb,
            n_alpha,
            n_beta,
        })
    }

    pub fn n_orb(&self) -> usize {
        self.n_orb
    }

    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn n_beta(&self) -> usize {
        self.n_beta
    }

    /// Total qubit count `M = 2 n_orb` of the Jordan-Wigner encoding.
    pub fn n_qubits(&self) -> usize {
        2 * self.n_orb
    }

    /// Total electron count `N`.
    pub fn n_electrons(&self) -> usize {
        self.n_alpha + self.n_beta
    }

    /// Filling factor `N / M`, the default corner of the recovery ReLU.
    pub fn filling_factor(&self) -> f64 {
        self.n_electrons() as f64 / self.n_qubits() as f64
    }

    /// Dimension of the particle sector,
    /// `C(n_orb, n_alpha) * C(n_orb, n_beta)`.
    pub fn sector_dimension(&self) -> u128 {
        binomial(self.n_orb, self.n_alpha) * binomial(self.n_orb, self.n_beta)
    }

    fn mask_width(&self) -> u64 {
        if self.n_orb == 64 {
            u64::MAX
        } else {
            (1u64 << self.n_orb) - 1
        }
    }
}

/// One electronic configuration: spin-up and spin-down occupation masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Determinant {
    alpha_mask: u64,
    beta_mask: u64,
}

impl Determinant {
    /// Build a determinant, rejecting masks with bits above `n_orb - 1`.
    pub fn new(alpha_mask: u64, beta_mask: u64, shape: &SystemShape) -> Result<Self, SystemError> {
        let width = shape.mask_width();
        if alpha_mask & !width != 0 || beta_mask & !width != 0 {
            return Err(SystemError::MaskOutOfRange(shape.n_orb));
        }
        Ok(Self {
            alpha_mask,
            beta_mask,
        })
    }

    /// Build without range checking; callers must keep bits within the
    /// orbital count of the shape they pair this with.
    pub fn from_masks(alpha_mask: u64, beta_mask: u64) -> Self {
        Self {
            alpha_mask,
            beta_mask,
        }
    }

    pub fn alpha_mask(&self) -> u64 {
        self.alpha_mask
    }

    pub fn beta_mask(&self) -> u64 {
        self.beta_mask
    }

    /// Per-species Hamming weights `(N_up, N_dn)`.
    pub fn hamming_weights(&self) -> (usize, usize) {
        (
            self.alpha_mask.count_ones() as usize,
            self.beta_mask.count_ones() as usize,
        )
    }

    /// Total electron count `N_x` of the configuration.
    pub fn total_electrons(&self) -> usize {
        let (a, b) = self.hamming_weights();
        a + b
    }

    /// Swap the two spin species.
    pub fn spin_inverse(&self) -> Self {
        Self {
            alpha_mask: self.beta_mask,
            beta_mask: self.alpha_mask,
        }
    }

    /// Whether both species carry the electron counts of `shape`.
    pub fn is_in_sector(&self, shape: &SystemShape) -> bool {
        let (a, b) = self.hamming_weights();
        a == shape.n_alpha && b == shape.n_beta
    }

    /// The restricted Hartree-Fock reference: the lowest `n_alpha` /
    /// `n_beta` orbitals of each species filled.
    pub fn rhf(shape: &SystemShape) -> Self {
        let fill = |k: usize| -> u64 {
            if k == 64 {
                u64::MAX
            } else {
                (1u64 << k) - 1
            }
        };
        Self {
            alpha_mask: fill(shape.n_alpha),
            beta_mask: fill(shape.n_beta),
        }
    }

    /// Render as the paper-ordered bitstring (spin-down block first,
    /// highest orbital leftmost).
    pub fn render(&self, shape: &SystemShape) -> String {
        let mut out = String::with_capacity(shape.n_qubits());
        for p in (0..shape.n_orb).rev() {
            out.push(if self.beta_mask >> p & 1 == 1 { '1' } else { '0' });
        }
        for p in (0..shape.n_orb).rev() {
            out.push(if self.alpha_mask >> p & 1 == 1 { '1' } else { '0' });
        }
        out
    }

    /// Parse the textual form; the exact inverse of [`Determinant::render`].
    pub fn parse(text: &str, shape: &SystemShape) -> Result<Self, SystemError> {
        let m = shape.n_qubits();
        let chars: Vec<char> = text.chars().collect();
        if chars.len() != m {
            return Err(SystemError::BadLength {
                expected: m,
                found: chars.len(),
            });
        }
        let mut alpha = 0u64;
        let mut beta = 0u64;
        for (i, &c) in chars.iter().enumerate() {
            let bit = match c {
                '0' => 0u64,
                '1' => 1u64,
                other => return Err(SystemError::IllegalCharacter(other)),
            };
            let p = if i < shape.n_orb {
                shape.n_orb - 1 - i
            } else {
                m - 1 - i
            };
            if i < shape.n_orb {
                beta |= bit << p;
            } else {
                alpha |= bit << p;
            }
        }
        Ok(Self {
            alpha_mask: alpha,
            beta_mask: beta,
        })
    }
}

/// Exact binomial coefficient, valid through `n = 64`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// All `n`-bit masks of popcount `k`, in increasing numeric order
/// (Gosper's hack).
pub fn sector_masks(n_orb: usize, k: usize) -> Vec<u64> {
    assert!(k <= n_orb && n_orb <= 64);
    if k == 0 {
        return vec![0];
    }
    let count = binomial(n_orb, k) as usize;
    let mut out = Vec::with_capacity(count);
    let mut x: u64 = (1u64 << k) - 1;
    for _ in 0..count {
        out.push(x);
        let u = x & x.wrapping_neg();
        let v = x.wrapping_add(u);
        if v == 0 {
            break;
        }
        x = v | (((x ^ v) / u) >> 2);
    }
    out
}

/// Every determinant of the sector in canonical order (alpha-major, both
/// species in increasing mask order).
pub fn sector_determinants(shape: &SystemShape) -> Vec<Determinant> {
    let alphas = sector_masks(shape.n_orb, shape.n_alpha);
    let betas = sector_masks(shape.n_orb, shape.n_beta);
    let mut out = Vec::with_capacity(alphas.len() * betas.len());
    for &a in &alphas {
        for &b in &betas {
            out.push(Determinant::from_masks(a, b));
        }
    }
    out
}

/// Rank of `mask` among same-popcount masks in increasing numeric order.
pub fn mask_rank(mask: u64) -> usize {
    let mut rank: u128 = 0;
    let mut m = mask;
    let mut i = 1usize;
    while m != 0 {
        let b = m.trailing_zeros() as usize;
        rank += binomial(b, i);
        m &= m - 1;
        i += 1;
    }
    rank as usize
}

/// Position of a sector determinant in [`sector_determinants`] order.
pub fn sector_index(det: &Determinant, shape: &SystemShape) -> usize {
    let dim_beta = binomial(shape.n_orb, shape.n_beta) as usize;
    mask_rank(det.alpha_mask()) * dim_beta + mask_rank(det.beta_mask())
}

/// Inverse of [`mask_rank`]: the mask of popcount `k` at position `rank`
/// in increasing numeric order.
pub fn mask_from_rank(n_orb: usize, k: usize, rank: usize) -> u64 {
    let mut mask = 0u64;
    let mut remaining = rank as u128;
    let mut slots = k;
    let mut ceiling = n_orb;
    while slots > 0 {
        // highest set bit b is the largest with C(b, slots) <= remaining
        let mut b = slots - 1;
        for cand in (slots - 1..ceiling).rev() {
            if binomial(cand, slots) <= remaining {
                b = cand;
                break;
            }
        }
        remaining -= binomial(b, slots);
        mask |= 1u64 << b;
        ceiling = b;
        slots -= 1;
    }
    mask
}
