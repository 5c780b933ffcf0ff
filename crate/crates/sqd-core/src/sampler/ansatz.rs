//! LUCJ parameters and their construction from CCSD doubles amplitudes.
//!
//! The `t2` tensor reshaped over (virtual, occupied) pairs is symmetric; its
//! spectral decomposition yields, per eigenvector, two Hermitian
//! single-particle operators whose eigenbases define orbital rotations and
//! whose eigenvalue vectors define rank-one density-density couplings. Layers
//! are retained in decreasing order of the |t2| eigenvalues.

use super::SamplerError;
use crate::linalg;
use ndarray::{Array2, Array4};
use num_complex::Complex64;
use serde::Deserialize;
use std::io::Read;

/// One LUCJ layer `exp(s K) exp(i J) exp(-s K)`.
#[derive(Clone, Debug)]
pub struct LucjLayer {
    /// Anti-Hermitian single-particle generator over spatial orbitals.
    pub orbital_generator: Array2<Complex64>,
    /// Real symmetric density-density tensor over spin-orbitals
    /// (`M x M`, spin-up block first).
    pub jastrow: Array2<f64>,
    /// Which side of the conjugation carries the plus sign; the main text
    /// and the supplement disagree, so it stays configurable.
    pub exponent_sign: f64,
}

/// Factor ordering conventions for the truncated two-layer ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorOrder {
    /// `exp(K2) exp(-K1) exp(iJ1) exp(K1) |HF>` (the default).
    Supplement,
    /// `exp(-K2) exp(K1) exp(iJ1) exp(-K1) |HF>`.
    MainText,
}

/// The full parameter set: ordered layers plus the optional trailing
/// orbital rotation of the truncated ansatz.
#[derive(Clone, Debug)]
pub struct LucjParams {
    pub layers: Vec<LucjLayer>,
    pub final_rotation: Option<(Array2<Complex64>, f64)>,
}

impl LucjParams {
    /// No factors at all; prepares the bare reference state.
    pub fn empty() -> Self {
        Self {
            layers: Vec::new(),
            final_rotation: None,
        }
    }

    pub fn validate(&self, n_orb: usize) -> Result<(), SamplerError> {
        let m = 2 * n_orb;
        for layer in &self.layers {
            if layer.orbital_generator.nrows() != n_orb {
                return Err(SamplerError::DimensionMismatch {
                    expected: n_orb,
                    found: layer.orbital_generator.nrows(),
                });
            }
            if layer.jastrow.nrows() != m {
                return Err(SamplerError::DimensionMismatch {
                    expected: m,
                    found: layer.jastrow.nrows(),
                });
            }
            if layer.exponent_sign != 1.0 && layer.exponent_sign != -1.0 {
                return Err(SamplerError::BadSign(layer.exponent_sign));
            }
        }
        if let Some((k, sign)) = &self.final_rotation {
            if k.nrows() != n_orb {
                return Err(SamplerError::DimensionMismatch {
                    expected: n_orb,
                    found: k.nrows(),
                });
            }
            if *sign != 1.0 && *sign != -1.0 {
                return Err(SamplerError::BadSign(*sign));
            }
        }
        Ok(())
    }

    /// The truncated two-layer form: the first decomposition layer in full,
    /// the second contributing only its orbital rotation.
    pub fn truncated_from_t2(t2: &Array4<f64>, order: FactorOrder) -> Result<Self, SamplerError> {
        let full = decompose_t2(t2, 2)?;
        let mut layers = full.layers;
        if layers.len() < 2 {
            return Err(SamplerError::InvalidAmplitudes(
                "t2 decomposition yields fewer than two layers".into(),
            ));
        }
        let second = layers.pop().expect("two layers");
        let mut first = layers.pop().expect("two layers");
        let (layer_sign, trailing_sign) = match order {
            FactorOrder::Supplement => (-1.0, 1.0),
            FactorOrder::MainText => (1.0, -1.0),
        };
        first.exponent_sign = layer_sign;
        Ok(Self {
            layers: vec![first],
            final_rotation: Some((second.orbital_generator, trailing_sign)),
        })
    }
}

/// Expand a spatial coupling matrix to the full spin-orbital tensor; all
/// four spin blocks carry the same spatial matrix.
pub fn expand_spin_blocks(spatial: &Array2<f64>, n_orb: usize) -> Array2<f64> {
    let m = 2 * n_orb;
    let mut full = Array2::zeros((m, m));
    for p in 0..n_orb {
        for q in 0..n_orb {
            let v = spatial[[p, q]];
            full[[p, q]] = v;
            full[[p, n_orb + q]] = v;
            full[[n_orb + p, q]] = v;
            full[[n_orb + p, n_orb + q]] = v;
        }
    }
    full
}

/// Spectral decomposition of the reshaped doubles tensor:
/// `(t2)_{ai,bj} = sum_y tau_y U_{ai,y} U_{bj,y}` with eigenvalues sorted by
/// decreasing magnitude. Returns the sorted eigenvalues and the matching
/// eigenvector columns.
pub fn t2_spectral_decomposition(
    t2: &Array4<f64>,
) -> Result<(Vec<f64>, Array2<f64>), SamplerError> {
    let (n_virt, n_occ, n_virt2, n_occ2) = t2.dim();
    if n_virt != n_virt2 || n_occ != n_occ2 {
        return Err(SamplerError::InvalidAmplitudes(format!(
            "t2 tensor has inconsistent dimensions {:?}",
            t2.dim()
        )));
    }
    let pairs = n_virt * n_occ;
    let mut reshaped = Array2::<f64>::zeros((pairs, pairs));
    for a in 0..n_virt {
        for i in 0..n_occ {
            for b in 0..n_virt {
                for j in 0..n_occ {
                    reshaped[[a * n_occ + i, b * n_occ + j]] = t2[[a, i, b, j]];
                }
            }
        }
    }
    let mut dev = 0.0f64;
    for r in 0..pairs {
        for c in 0..r {
            dev = dev.max((reshaped[[r, c]] - reshaped[[c, r]]).abs());
        }
    }
    if dev > 1e-8 {
        return Err(SamplerError::InvalidAmplitudes(format!(
            "reshaped t2 is not symmetric (max deviation {dev:.3e})"
        )));
    }
    let sym = (&reshaped + &reshaped.t()) / 2.0;
    let (vals, vecs) = linalg::eigh_real(&sym)?;
    let mut order: Vec<usize> = (0..pairs).collect();
    order.sort_by(|&a, &b| {
        vals[b]
            .abs()
            .partial_cmp(&vals[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let taus: Vec<f64> = order.iter().map(|&y| vals[y]).collect();
    let mut columns = Array2::<f64>::zeros((pairs, pairs));
    for (slot, &y) in order.iter().enumerate() {
        columns.column_mut(slot).assign(&vecs.column(y));
    }
    Ok((taus, columns))
}

/// Build LUCJ layers from CCSD doubles amplitudes indexed `(a, i, b, j)`
/// over the virtual/occupied split of the reference. Each retained
/// eigenvector of the reshaped tensor contributes two layers; the first
/// `layer_count` are kept, with the supplement's factor signs.
pub fn decompose_t2(t2: &Array4<f64>, layer_count: usize) -> Result<LucjParams, SamplerError> {
    let (n_virt, n_occ, _, _) = t2.dim();
    let n_orb = n_occ + n_virt;
    let (taus, columns) = t2_spectral_decomposition(t2)?;

    let mut layers = Vec::with_capacity(layer_count);
    let i = Complex64::new(0.0, 1.0);
    'outer: for (y, &tau) in taus.iter().enumerate() {
        // extend the pair eigenvector to the virtual-occupied block of an
        // n_orb x n_orb matrix
        let mut u_tilde = Array2::<Complex64>::zeros((n_orb, n_orb));
        for a in 0..n_virt {
            for j in 0..n_occ {
                u_tilde[[n_occ + a, j]] = Complex64::new(columns[[a * n_occ + j, y]], 0.0);
            }
        }
        let u_t = u_tilde.t().to_owned();
        for (branch, x) in [
            // X_+ = (1 - i)/2 (U + i U^T)
            (
                0usize,
                (&u_tilde + &u_t.mapv(|z| z * i)).mapv(|z| z * (Complex64::new(1.0, -1.0) / 2.0)),
            ),
            // X_- = (1 + i)/2 (U - i U^T)
            (
                1usize,
                (&u_tilde - &u_t.mapv(|z| z * i)).mapv(|z| z * (Complex64::new(1.0, 1.0) / 2.0)),
            ),
        ] {
            if layers.len() >= layer_count {
                break 'outer;
            }
            let (g, v) = linalg::eigh_complex(&x)?;
            let coupling = if branch == 0 { tau } else { -tau };
            let mut spatial = Array2::<f64>::zeros((n_orb, n_orb));
            for p in 0..n_orb {
                for q in 0..n_orb {
                    spatial[[p, q]] = coupling * g[p] * g[q];
                }
            }
            let k = linalg::unitary_log(&v)?;
            layers.push(LucjLayer {
                orbital_generator: k,
                jastrow: expand_spin_blocks(&spatial, n_orb),
                exponent_sign: -1.0,
            });
        }
    }
    Ok(LucjParams {
        layers,
        final_rotation: None,
    })
}

/// Zero every density-density coupling a heavy-hex layout cannot realize:
/// same-spin couplings survive only between adjacent orbitals `(p, p+1)`,
/// opposite-spin couplings only on the diagonal at anchor orbitals
/// `p % 4 == 0` (optionally capped at a maximum anchor index).
pub fn sparsify_heavy_hex(
    params: &LucjParams,
    n_orb: usize,
    anchor_cap: Option<usize>,
) -> LucjParams {
    let keep = |p: usize, q: usize| -> bool {
        let same_spin = (p < n_orb) == (q < n_orb);
        let (sp, sq) = (p % n_orb, q % n_orb);
        if same_spin {
            sp.abs_diff(sq) == 1
        } else {
            sp == sq && sp % 4 == 0 && anchor_cap.map_or(true, |cap| sp <= cap)
        }
    };
    let mut out = params.clone();
    for layer in &mut out.layers {
        let m = layer.jastrow.nrows();
        for p in 0..m {
            for q in 0..m {
                if !keep(p, q) {
                    layer.jastrow[[p, q]] = 0.0;
                }
            }
        }
    }
    out
}

/// Indices retained by [`sparsify_heavy_hex`] in the opposite-spin block.
pub fn heavy_hex_anchors(n_orb: usize, anchor_cap: Option<usize>) -> Vec<usize> {
    (0..n_orb)
        .step_by(4)
        .filter(|p| anchor_cap.map_or(true, |cap| *p <= cap))
        .collect()
}

/// Relabel orbitals inside each layer so the largest opposite-spin diagonal
/// couplings sit on the heavy-hex anchor positions `0, 4, 8, ...`, folding
/// the permutation into that layer's orbital rotations. The prepared state
/// is unchanged; only a subsequent sparsification sees different survivors.
pub fn permute_for_anchors(
    params: &LucjParams,
    n_orb: usize,
    anchor_cap: Option<usize>,
) -> Result<LucjParams, SamplerError> {
    let anchors = heavy_hex_anchors(n_orb, anchor_cap);
    let mut out = params.clone();
    for layer in &mut out.layers {
        // rank spatial orbitals by |J^{ab}_{p,p}|
        let mut ranked: Vec<usize> = (0..n_orb).collect();
        ranked.sort_by(|&a, &b| {
            let va = layer.jastrow[[a, n_orb + a]].abs();
            let vb = layer.jastrow[[b, n_orb + b]].abs();
            vb.partial_cmp(&va).unwrap().then(a.cmp(&b))
        });
        let mut perm = vec![usize::MAX; n_orb];
        for (slot, &p) in anchors.iter().zip(ranked.iter()) {
            perm[p] = *slot;
        }
        let mut free_slots: Vec<usize> = (0..n_orb).filter(|s| !anchors.contains(s)).collect();
        free_slots.reverse();
        for p in 0..n_orb {
            if perm[p] == usize::MAX {
                perm[p] = free_slots.pop().expect("slot available");
            }
        }
        if perm.iter().enumerate().all(|(p, &t)| p == t) {
            continue;
        }

        // spatial permutation matrix P e_q = e_{perm(q)}
        let mut p_mat = Array2::<f64>::zeros((n_orb, n_orb));
        for q in 0..n_orb {
            p_mat[[perm[q], q]] = 1.0;
        }
        // conjugate the coupling tensor: J' = P_M J P_M^T per spin block
        let m = 2 * n_orb;
        let mut jp = Array2::<f64>::zeros((m, m));
        for p in 0..m {
            for q in 0..m {
                let (bp, sp) = (p / n_orb, p % n_orb);
                let (bq, sq) = (q / n_orb, q % n_orb);
                jp[[bp * n_orb + perm[sp], bq * n_orb + perm[sq]]] = layer.jastrow[[p, q]];
            }
        }
        layer.jastrow = jp;

        // fold the permutation into the rotation: exp(s K') = exp(s K) P
        let s = layer.exponent_sign;
        let omega = linalg::exp_antihermitian(&layer.orbital_generator.mapv(|z| z * s))?;
        let p_complex = p_mat.mapv(|x| Complex64::new(x, 0.0));
        let folded = omega.dot(&p_complex);
        let k_prime = linalg::unitary_log(&folded)?.mapv(|z| z * s);
        layer.orbital_generator = k_prime;
    }
    Ok(out)
}

/// CCSD amplitudes as produced by external chemistry software. The `t1`
/// block is accepted for format fidelity but unused; only `t2` parametrizes
/// the ansatz.
#[derive(Debug, Deserialize)]
pub struct CcsdAmplitudes {
    pub n_occ: usize,
    pub n_virt: usize,
    #[serde(default)]
    pub t1: Vec<Vec<f64>>,
    pub t2: Vec<Vec<Vec<Vec<f64>>>>,
}

impl CcsdAmplitudes {
    /// The doubles tensor indexed `(a, i, b, j)`.
    pub fn t2_tensor(&self) -> Result<Array4<f64>, SamplerError> {
        let (nv, no) = (self.n_virt, self.n_occ);
        let mut t2 = Array4::zeros((nv, no, nv, no));
        if self.t2.len() != nv {
            return Err(SamplerError::InvalidAmplitudes(format!(
                "t2 outer dimension {} does not match n_virt {nv}",
                self.t2.len()
            )));
        }
        for a in 0..nv {
            for i in 0..no {
                for b in 0..nv {
                    for j in 0..no {
                        let row = self
                            .t2
                            .get(a)
                            .and_then(|x| x.get(i))
                            .and_then(|x| x.get(b))
                            .and_then(|x| x.get(j))
                            .ok_or_else(|| {
                                SamplerError::InvalidAmplitudes(format!(
                                    "t2 is ragged at ({a},{i},{b},{j})"
                                ))
                            })?;
                        t2[[a, i, b, j]] = *row;
                    }
                }
            }
        }
        Ok(t2)
    }
}

/// Parse the JSON amplitude file `{n_occ, n_virt, t1, t2}`.
pub fn load_ccsd_json<R: Read>(reader: R) -> Result<CcsdAmplitudes, SamplerError> {
    let amps: CcsdAmplitudes = serde_json::from_reader(reader)?;
    Ok(amps)
}
