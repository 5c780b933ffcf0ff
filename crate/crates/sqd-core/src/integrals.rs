//! Hamiltonian coefficients: core energy, one-body matrix, and the
//! two-electron tensor in chemist notation `(pr|qs)`.
//!
//! Coefficients are ingested from FCIDUMP files or synthesized for the
//! fully-connected random-hopping Hubbard model. The two-body tensor is
//! stored dense with its 8-fold permutation symmetry expanded on load so
//! matrix-element inner loops stay branch-free.

use crate::linalg;
use crate::rng::substream;
use crate::system::SystemShape;
use ndarray::{Array2, Array4};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntegralError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("shape error: {0}")]
    Shape(#[from] crate::system::SystemError),
    #[error("hubbard model needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("dimension mismatch: integrals over {expected} orbitals, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("one-body matrix is not symmetric (max deviation {0:.3e})")]
    AsymmetricOneBody(f64),
    #[error("kappa is not antisymmetric (max deviation {0:.3e})")]
    NotAntisymmetric(f64),
    #[error("matrix is not orthogonal (max deviation {0:.3e})")]
    NotOrthogonal(f64),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Second-quantized Hamiltonian coefficients over a molecular-orbital basis.
#[derive(Clone, Debug)]
pub struct IntegralSet {
    pub shape: SystemShape,
    /// Constant term (nuclear repulsion or effective-core shift), Hartree.
    pub core_energy: f64,
    /// `h_pr`, symmetric.
    pub one_body: Array2<f64>,
    /// `(pr|qs)` indexed `[p, r, q, s]`, 8-fold symmetric.
    pub two_body: Array4<f64>,
}

impl IntegralSet {
    /// Zeroed coefficients for `shape`.
    pub fn empty(shape: SystemShape) -> Self {
        let n = shape.n_orb();
        Self {
            shape,
            core_energy: 0.0,
            one_body: Array2::zeros((n, n)),
            two_body: Array4::zeros((n, n, n, n)),
        }
    }

    pub fn n_orb(&self) -> usize {
        self.shape.n_orb()
    }

    /// Assign `(pr|qs) = value` together with its 7 symmetry images.
    pub fn assign_two_body_symmetric(&mut self, p: usize, r: usize, q: usize, s: usize, value: f64) {
        for &(a, b, c, d) in &[
            (p, r, q, s),
            (r, p, q, s),
            (p, r, s, q),
            (r, p, s, q),
            (q, s, p, r),
            (s, q, p, r),
            (q, s, r, p),
            (s, q, r, p),
        ] {
            self.two_body[[a, b, c, d]] = value;
        }
    }
}

/// Disordered fully-connected Hubbard instance: hoppings `t_pq = t_qp` are
/// i.i.d. standard normal, scaled by `1/sqrt(L)`, with on-site repulsion `U`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct HubbardSpec {
    pub n_sites: usize,
    pub onsite_u: f64,
    pub seed: u64,
    pub realization_index: u64,
}

/// Build the Hubbard integral set at half filling
/// (`n_alpha = n_beta = n_sites / 2`).
pub fn build_hubbard(spec: &HubbardSpec) -> Result<IntegralSet, IntegralError> {
    let l = spec.n_sites;
    if l < 2 {
        return Err(IntegralError::TooFewSites(l));
    }
    let shape = SystemShape::new(l, l / 2, l / 2)?;
    let mut ints = IntegralSet::empty(shape);
    let mut rng = substream(spec.seed, "hubbard", spec.realization_index);
    let scale = 1.0 / (l as f64).sqrt();
    for p in 0..l {
        for q in 0..p {
            let t: f64 = StandardNormal.sample(&mut rng);
            ints.one_body[[p, q]] = -t * scale;
            ints.one_body[[q, p]] = -t * scale;
        }
        ints.assign_two_body_symmetric(p, p, p, p, spec.onsite_u);
    }
    Ok(ints)
}

/// A single-particle basis rotation `Omega = exp(kappa)` with real
/// antisymmetric generator.
#[derive(Clone, Debug)]
pub struct OrbitalRotation {
    kappa: Array2<f64>,
    omega: Array2<f64>,
}

impl OrbitalRotation {
    /// Exponentiate an antisymmetric generator (tolerance 1e-12 on
    /// antisymmetry).
    pub fn from_kappa(kappa: Array2<f64>) -> Result<Self, IntegralError> {
        let n = kappa.nrows();
        let mut dev = 0.0f64;
        for p in 0..n {
            for q in 0..n {
                dev = dev.max((kappa[[p, q]] + kappa[[q, p]]).abs());
            }
        }
        if dev > 1e-12 {
            return Err(IntegralError::NotAntisymmetric(dev));
        }
        let omega = linalg::exp_antisymmetric(&kappa)?;
        Ok(Self { kappa, omega })
    }

    /// Wrap an explicitly orthogonal matrix (e.g. a localization transform or
    /// an even permutation), recovering the generator from its principal
    /// logarithm. Improper rotations (det = -1) are rejected; flip the sign
    /// of one column first, which leaves all derived occupancies unchanged.
    pub fn from_orthogonal(omega: Array2<f64>) -> Result<Self, IntegralError> {
        let n = omega.nrows();
        let gram = omega.t().dot(&omega);
        let mut dev = 0.0f64;
        for p in 0..n {
            for q in 0..n {
                let expect = if p == q { 1.0 } else { 0.0 };
                dev = dev.max((gram[[p, q]] - expect).abs());
            }
        }
        if dev > 1e-12 {
            return Err(IntegralError::NotOrthogonal(dev));
        }
        let omega_c = omega.mapv(|x| Complex64::new(x, 0.0));
        let k = linalg::unitary_log(&omega_c)?;
        let kappa = k.mapv(|z| z.re);
        let recon = linalg::exp_antisymmetric(&kappa)?;
        let err = (&recon - &omega).iter().map(|x| x.abs()).fold(0.0, f64::max);
        if err > 1e-8 {
            return Err(IntegralError::NotOrthogonal(err));
        }
        Ok(Self { kappa, omega })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            kappa: Array2::zeros((n, n)),
            omega: Array2::eye(n),
        }
    }

    pub fn kappa(&self) -> &Array2<f64> {
        &self.kappa
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn n_orb(&self) -> usize {
        self.omega.nrows()
    }
}

/// Transform coefficients to the rotated basis:
/// `h'_pq = h_tu Omega_tp Omega_uq`, and the two-body tensor contracted on
/// all four indices. The core energy is unchanged.
pub fn rotate_integrals(
    ints: &IntegralSet,
    rot: &OrbitalRotation,
) -> Result<IntegralSet, IntegralError> {
    let n = ints.n_orb();
    if rot.n_orb() != n {
        return Err(IntegralError::DimensionMismatch {
            expected: n,
            found: rot.n_orb(),
        });
    }
    let omega = rot.omega();
    let mut out = IntegralSet::empty(ints.shape);
    out.core_energy = ints.core_energy;
    out.one_body = omega.t().dot(&ints.one_body).dot(omega);
    out.two_body = contract_four(&ints.two_body, [omega, omega, omega, omega], n);
    Ok(out)
}

/// Contract each tensor axis with the first index of the matching factor,
/// `out_{pqrs} = g_{tuvw} F0_{tp} F1_{uq} F2_{vr} F3_{ws}`, one axis at a
/// time.
pub(crate) fn contract_four(
    g: &Array4<f64>,
    factors: [&Array2<f64>; 4],
    n: usize,
) -> Array4<f64> {
    let mut cur = g.clone();
    for (axis, factor) in factors.iter().enumerate() {
        let mut next = Array4::<f64>::zeros((n, n, n, n));
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = cur[[a, b, c, d]];
                        if v == 0.0 {
                            continue;
                        }
                        for e in 0..n {
                            let w = match axis {
                                0 => factor[[a, e]],
                                1 => factor[[b, e]],
                                2 => factor[[c, e]],
                                _ => factor[[d, e]],
                            };
                            let idx = match axis {
                                0 => [e, b, c, d],
                                1 => [a, e, c, d],
                                2 => [a, b, e, d],
                                _ => [a, b, c, e],
                            };
                            next[idx] += v * w;
                        }
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Parse a Molpro-style FCIDUMP stream: a `&FCI ... &END` (or `/`) namelist
/// with NORB/NELEC/MS2, followed by `value i j k l` records with 1-based
/// indices in chemist convention. `(i,j,0,0)` records carry `h_ij`,
/// `(0,0,0,0)` the core energy; `(i,0,0,0)` orbital-energy records are
/// accepted and ignored.
pub fn parse_fcidump<R: BufRead>(reader: R) -> Result<IntegralSet, IntegralError> {
    let mut lines = reader.lines().enumerate();

    let mut header = String::new();
    let mut header_done = false;
    let mut body_start_line = 0usize;
    for (idx, line) in &mut lines {
        let line = line?;
        let lineno = idx + 1;
        if header.is_empty() && !line.trim_start().starts_with('&') {
            return Err(IntegralError::Parse {
                line: lineno,
                message: "expected namelist header starting with '&'".into(),
            });
        }
        header.push(' ');
        header.push_str(&line);
        let upper = line.to_uppercase();
        if upper.contains("&END") || line.trim_end().ends_with('/') {
            header_done = true;
            body_start_line = lineno;
            break;
        }
    }
    if !header_done {
        return Err(IntegralError::Parse {
            line: body_start_line.max(1),
            message: "namelist header never terminated with &END or /".into(),
        });
    }

    let (norb, nelec, ms2) = parse_namelist(&header, body_start_line)?;
    let n_alpha_twice = nelec as i64 + ms2;
    if n_alpha_twice < 0 || n_alpha_twice % 2 != 0 {
        return Err(IntegralError::Parse {
            line: body_start_line,
            message: format!("NELEC={nelec} and MS2={ms2} do not define integer electron counts"),
        });
    }
    let n_alpha = (n_alpha_twice / 2) as usize;
    if n_alpha > nelec {
        return Err(IntegralError::Parse {
            line: body_start_line,
            message: format!("MS2={ms2} exceeds NELEC={nelec}"),
        });
    }
    let n_beta = nelec - n_alpha;
    let shape = SystemShape::new(norb, n_alpha, n_beta)?;
    let mut ints = IntegralSet::empty(shape);

    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 5 {
            return Err(IntegralError::Parse {
                line: lineno,
                message: format!("expected 'value i j k l', got {} fields", tokens.len()),
            });
        }
        let value: f64 = tokens[0]
            .replace(['D', 'd'], "E")
            .parse()
            .map_err(|_| IntegralError::Parse {
                line: lineno,
                message: format!("non-numeric value {:?}", tokens[0]),
            })?;
        let mut ix = [0usize; 4];
        for (slot, tok) in ix.iter_mut().zip(&tokens[1..]) {
            *slot = tok.parse().map_err(|_| IntegralError::Parse {
                line: lineno,
                message: format!("non-integer index {tok:?}"),
            })?;
            if *slot > norb {
                return Err(IntegralError::Parse {
                    line: lineno,
                    message: format!("index {slot} out of range 1..={norb}"),
                });
            }
        }
        match ix {
            [0, 0, 0, 0] => ints.core_energy = value,
            [i, j, 0, 0] if i > 0 && j > 0 => {
                ints.one_body[[i - 1, j - 1]] = value;
                ints.one_body[[j - 1, i - 1]] = value;
            }
            [_, 0, 0, 0] => {} // orbital energy record
            [i, j, k, l] if i > 0 && j > 0 && k > 0 && l > 0 => {
                ints.assign_two_body_symmetric(i - 1, j - 1, k - 1, l - 1, value);
            }
            _ => {
                return Err(IntegralError::Parse {
                    line: lineno,
                    message: format!("unsupported index pattern {ix:?}"),
                });
            }
        }
    }
    Ok(ints)
}

fn parse_namelist(header: &str, lineno: usize) -> Result<(usize, usize, i64), IntegralError> {
    let cleaned = header
        .replace("&END", " ")
        .replace("&end", " ")
        .replace('/', " ")
        .replace("&FCI", " ")
        .replace("&fci", " ");
    let mut norb: Option<usize> = None;
    let mut nelec: Option<usize> = None;
    let mut ms2: i64 = 0;
    for field in cleaned.split(|c: char| c == ',' || c.is_whitespace()) {
        if let Some((key, val)) = field.split_once('=') {
            let key = key.trim().to_uppercase();
            let val = val.trim();
            if val.is_empty() {
                continue;
            }
            let parse_usize = |v: &str| -> Result<usize, IntegralError> {
                v.parse().map_err(|_| IntegralError::Parse {
                    line: lineno,
                    message: format!("bad value {v:?} for {key}"),
                })
            };
            match key.as_str() {
                "NORB" => norb = Some(parse_usize(val)?),
                "NELEC" => nelec = Some(parse_usize(val)?),
                "MS2" => {
                    ms2 = val.parse().map_err(|_| IntegralError::Parse {
                        line: lineno,
                        message: format!("bad value {val:?} for MS2"),
                    })?
                }
                _ => {}
            }
        }
    }
    let norb = norb.ok_or_else(|| IntegralError::Parse {
        line: lineno,
        message: "namelist is missing NORB".into(),
    })?;
    let nelec = nelec.ok_or_else(|| IntegralError::Parse {
        line: lineno,
        message: "namelist is missing NELEC".into(),
    })?;
    Ok((norb, nelec, ms2))
}

/// Write the same FCIDUMP dialect accepted by [`parse_fcidump`]; exact zeros
/// are omitted and coefficients round-trip losslessly.
pub fn emit_fcidump<W: Write>(ints: &IntegralSet, mut w: W) -> Result<(), IntegralError> {
    let n = ints.n_orb();
    let shape = &ints.shape;
    writeln!(
        w,
        "&FCI NORB={},NELEC={},MS2={},",
        n,
        shape.n_electrons(),
        shape.n_alpha() as i64 - shape.n_beta() as i64
    )?;
    let orbsym = vec!["1"; n].join(",");
    writeln!(w, " ORBSYM={orbsym},")?;
    writeln!(w, " ISYM=1,")?;
    writeln!(w, "&END")?;
    let pair = |a: usize, b: usize| a * (a + 1) / 2 + b;
    for p in 0..n {
        for r in 0..=p {
            for q in 0..n {
                for s in 0..=q {
                    if pair(p, r) < pair(q, s) {
                        continue;
                    }
                    let v = ints.two_body[[p, r, q, s]];
                    if v != 0.0 {
                        writeln!(w, "{v:24.16E} {} {} {} {}", p + 1, r + 1, q + 1, s + 1)?;
                    }
                }
            }
        }
    }
    for p in 0..n {
        for r in 0..=p {
            let v = ints.one_body[[p, r]];
            if v != 0.0 {
                writeln!(w, "{v:24.16E} {} {} 0 0", p + 1, r + 1)?;
            }
        }
    }
    writeln!(w, "{:24.16E} 0 0 0 0", ints.core_energy)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn parse_minimal_records() {
        let text = "&FCI NORB=1,NELEC=2,MS2=0,\n&END\n0.5 1 1 0 0\n-1.25 0 0 0 0\n";
        let ints = parse_fcidump(text.as_bytes()).unwrap();
        assert_eq!(ints.one_body[[0, 0]], 0.5);
        assert_eq!(ints.core_energy, -1.25);
        assert_eq!(ints.shape.n_alpha(), 1);
        assert_eq!(ints.shape.n_beta(), 1);
    }

    #[test]
    fn two_body_record_expands_all_images() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n2.0 1 2 1 1\n";
        let ints = parse_fcidump(text.as_bytes()).unwrap();
        for &(a, b, c, d) in &[
            (0, 1, 0, 0),
            (1, 0, 0, 0),
            (0, 1, 0, 0),
            (0, 0, 0, 1),
            (0, 0, 1, 0),
        ] {
            assert_eq!(ints.two_body[[a, b, c, d]], 2.0, "({a}{b}|{c}{d})");
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n1.0 3 1 0 0\n";
        match parse_fcidump(text.as_bytes()) {
            Err(IntegralError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\nxyz 1 1 0 0\n";
        assert!(matches!(
            parse_fcidump(text.as_bytes()),
            Err(IntegralError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn emit_parse_round_trip() {
        let shape = SystemShape::new(3, 2, 1).unwrap();
        let mut ints = IntegralSet::empty(shape);
        ints.core_energy = 0.7071067811865476;
        let mut rng = substream(5, "roundtrip", 0);
        for p in 0..3 {
            for r in 0..=p {
                let v: f64 = rng.random::<f64>() - 0.5;
                ints.one_body[[p, r]] = v;
                ints.one_body[[r, p]] = v;
                for q in 0..3 {
                    for s in 0..=q {
                        ints.assign_two_body_symmetric(p, r, q, s, rng.random::<f64>() - 0.5);
                    }
                }
            }
        }
        let mut buf = Vec::new();
        emit_fcidump(&ints, &mut buf).unwrap();
        let back = parse_fcidump(buf.as_slice()).unwrap();
        assert_eq!(back.core_energy, ints.core_energy);
        for p in 0..3 {
            for r in 0..3 {
                assert!((back.one_body[[p, r]] - ints.one_body[[p, r]]).abs() < 1e-12);
                for q in 0..3 {
                    for s in 0..3 {
                        assert!(
                            (back.two_body[[p, r, q, s]] - ints.two_body[[p, r, q, s]]).abs()
                                < 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hubbard_u_zero_has_no_two_body() {
        let ints = build_hubbard(&HubbardSpec {
            n_sites: 4,
            onsite_u: 0.0,
            seed: 1,
            realization_index: 0,
        })
        .unwrap();
        assert!(ints.two_body.iter().all(|&v| v == 0.0));
        for p in 0..4 {
            assert_eq!(ints.one_body[[p, p]], 0.0);
        }
    }

    #[test]
    fn hubbard_is_deterministic_per_realization() {
        let spec = HubbardSpec {
            n_sites: 5,
            onsite_u: 4.0,
            seed: 42,
            realization_index: 3,
        };
        let a = build_hubbard(&spec).unwrap();
        let b = build_hubbard(&spec).unwrap();
        assert_eq!(a.one_body, b.one_body);
        let other = build_hubbard(&HubbardSpec {
            realization_index: 4,
            ..spec
        })
        .unwrap();
        assert_ne!(a.one_body, other.one_body);
    }

    #[test]
    fn hubbard_hopping_statistics() {
        // entries are N(0, 1/L); check mean and variance over realizations
        let l = 6;
        let k = 600;
        let mut samples = Vec::new();
        for r in 0..k {
            let ints = build_hubbard(&HubbardSpec {
                n_sites: l,
                onsite_u: 0.0,
                seed: 7,
                realization_index: r,
            })
            .unwrap();
            samples.push(ints.one_body[[1, 0]]);
            samples.push(ints.one_body[[4, 2]]);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let sigma = 1.0 / l as f64;
        assert!(mean.abs() < 3.0 * (sigma / n).sqrt(), "mean {mean}");
        let var_sd = sigma * (2.0 / (n - 1.0)).sqrt();
        assert!((var - sigma).abs() < 3.0 * var_sd, "var {var} vs {sigma}");
    }

    #[test]
    fn kappa_zero_gives_identity() {
        let rot = OrbitalRotation::from_kappa(Array2::zeros((3, 3))).unwrap();
        assert_eq!(rot.omega(), &Array2::<f64>::eye(3));
    }

    #[test]
    fn two_by_two_kappa_is_planar_rotation() {
        let theta = 0.3f64;
        let kappa = array![[0.0, theta], [-theta, 0.0]];
        let rot = OrbitalRotation::from_kappa(kappa).unwrap();
        let o = rot.omega();
        assert!((o[[0, 0]] - theta.cos()).abs() < 1e-14);
        assert!((o[[0, 1]] - theta.sin()).abs() < 1e-14);
        assert!((o[[1, 0]] + theta.sin()).abs() < 1e-14);
        assert!((o[[1, 1]] - theta.cos()).abs() < 1e-14);
    }

    #[test]
    fn random_kappa_gives_orthogonal_omega() {
        let mut rng = substream(9, "kappa", 0);
        let n = 6;
        let mut kappa = Array2::<f64>::zeros((n, n));
        for p in 0..n {
            for q in 0..p {
                let v = rng.random::<f64>() - 0.5;
                kappa[[p, q]] = v;
                kappa[[q, p]] = -v;
            }
        }
        let rot = OrbitalRotation::from_kappa(kappa).unwrap();
        let gram = rot.omega().t().dot(rot.omega());
        let mut dev = 0.0f64;
        for p in 0..n {
            for q in 0..n {
                let expect = if p == q { 1.0 } else { 0.0 };
                dev = dev.max((gram[[p, q]] - expect).abs());
            }
        }
        assert!(dev < 1e-12, "orthogonality deviation {dev:.3e}");
    }

    #[test]
    fn non_antisymmetric_kappa_is_rejected() {
        let kappa = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            OrbitalRotation::from_kappa(kappa),
            Err(IntegralError::NotAntisymmetric(_))
        ));
    }

    #[test]
    fn identity_rotation_preserves_integrals() {
        let ints = build_hubbard(&HubbardSpec {
            n_sites: 3,
            onsite_u: 2.0,
            seed: 11,
            realization_index: 0,
        })
        .unwrap();
        let rotated = rotate_integrals(&ints, &OrbitalRotation::identity(3)).unwrap();
        assert_eq!(rotated.one_body, ints.one_body);
        assert_eq!(rotated.two_body, ints.two_body);
        assert_eq!(rotated.core_energy, ints.core_energy);
    }

    #[test]
    fn permutation_rotation_relabels_integrals() {
        // 3-cycle 0 -> 1 -> 2 -> 0 is proper (det = +1)
        let mut omega = Array2::<f64>::zeros((3, 3));
        omega[[1, 0]] = 1.0;
        omega[[2, 1]] = 1.0;
        omega[[0, 2]] = 1.0;
        let rot = OrbitalRotation::from_orthogonal(omega.clone()).unwrap();
        let ints = build_hubbard(&HubbardSpec {
            n_sites: 3,
            onsite_u: 1.5,
            seed: 13,
            realization_index: 1,
        })
        .unwrap();
        let rotated = rotate_integrals(&ints, &rot).unwrap();
        // column p of omega holds the image of new orbital p: new label p
        // corresponds to old orbital pi(p)
        let pi = [1usize, 2, 0];
        for p in 0..3 {
            for q in 0..3 {
                assert!(
                    (rotated.one_body[[p, q]] - ints.one_body[[pi[p], pi[q]]]).abs() < 1e-12
                );
            }
        }
        for p in 0..3 {
            assert!((rotated.two_body[[p, p, p, p]] - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rotations_compose() {
        let mut rng = substream(21, "compose", 0);
        let n = 4;
        let mut k1 = Array2::<f64>::zeros((n, n));
        let mut k2 = Array2::<f64>::zeros((n, n));
        for p in 0..n {
            for q in 0..p {
                let v1 = 0.4 * (rng.random::<f64>() - 0.5);
                let v2 = 0.4 * (rng.random::<f64>() - 0.5);
                k1[[p, q]] = v1;
                k1[[q, p]] = -v1;
                k2[[p, q]] = v2;
                k2[[q, p]] = -v2;
            }
        }
        let r1 = OrbitalRotation::from_kappa(k1).unwrap();
        let r2 = OrbitalRotation::from_kappa(k2).unwrap();
        let ints = build_hubbard(&HubbardSpec {
            n_sites: n,
            onsite_u: 3.0,
            seed: 23,
            realization_index: 0,
        })
        .unwrap();
        let sequential = rotate_integrals(&rotate_integrals(&ints, &r1).unwrap(), &r2).unwrap();
        let combined =
            OrbitalRotation::from_orthogonal(r1.omega().dot(r2.omega())).unwrap();
        let at_once = rotate_integrals(&ints, &combined).unwrap();
        let mut dev = 0.0f64;
        for (a, b) in sequential.two_body.iter().zip(at_once.two_body.iter()) {
            dev = dev.max((a - b).abs());
        }
        for (a, b) in sequential.one_body.iter().zip(at_once.one_body.iter()) {
            dev = dev.max((a - b).abs());
        }
        assert!(dev < 1e-10, "composition deviation {dev:.3e}");
    }
}
