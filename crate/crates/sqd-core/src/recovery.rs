//! Self-consistent configuration recovery.
//!
//! Measured bitstrings with the wrong per-species particle number are
//! repaired by probabilistic bit flips weighted by the distance of each bit
//! to the reference orbital occupancy, then pooled with the correct-sector
//! samples, subsampled into spin-closed batches, and solved; the averaged
//! occupancies of the batch ground states feed the next round.

use crate::integrals::IntegralSet;
use crate::rng::substream;
use crate::solver::{
    average_occupancies, solve_batch, Batch, PenaltyConfig, SolveOptions, SolverError,
    SubspaceSolution,
};
use crate::system::{Determinant, SystemError, SystemShape};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("flip distance {0} outside [0, 1]")]
    DistanceOutOfRange(f64),
    #[error("invalid recovery configuration: {0}")]
    BadConfig(String),
    #[error("sample pool is empty")]
    EmptyPool,
    #[error("no correct-sector samples and no warm-start occupancies")]
    UnrecoverableInput,
    #[error("occupancy vector has length {found}, expected {expected}")]
    BadOccupancyLength { expected: usize, found: usize },
    #[error("samples use {found} orbitals but the Hamiltonian has {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("line {line}: {source}")]
    ParseSample { line: usize, source: SystemError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Multiset of measured bitstrings. Entries may violate the particle sector;
/// that is what recovery repairs. Canonically ordered for reproducibility.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    shape: SystemShape,
    entries: BTreeMap<Determinant, u64>,
    total: u64,
}

impl SampleSet {
    pub fn new(shape: SystemShape) -> Self {
        Self {
            shape,
            entries: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn from_counts<I: IntoIterator<Item = (Determinant, u64)>>(
        shape: SystemShape,
        counts: I,
    ) -> Self {
        let mut s = Self::new(shape);
        for (d, c) in counts {
            s.add(d, c);
        }
        s
    }

    pub fn add(&mut self, det: Determinant, count: u64) {
        if count == 0 {
            return;
        }
        *self.entries.entry(det).or_insert(0) += count;
        self.total += count;
    }

    pub fn merge(&mut self, other: &SampleSet) {
        for (&d, &c) in &other.entries {
            self.add(d, c);
        }
    }

    pub fn shape(&self) -> &SystemShape {
        &self.shape
    }

    /// Total multiplicity.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct bitstrings.
    pub fn unique_len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Determinant, u64)> {
        self.entries.iter().map(|(d, &c)| (d, c))
    }

    /// Read `bitstring [count]` lines.
    pub fn load<R: BufRead>(reader: R, shape: SystemShape) -> Result<Self, RecoveryError> {
        let mut out = Self::new(shape);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut fields = trimmed.split_whitespace();
            let text = fields.next().unwrap();
            let det = Determinant::parse(text, &shape)
                .map_err(|source| RecoveryError::ParseSample {
                    line: idx + 1,
                    source,
                })?;
            let count = match fields.next() {
                Some(tok) => tok.parse::<u64>().map_err(|_| RecoveryError::ParseSample {
                    line: idx + 1,
                    source: SystemError::IllegalCharacter(tok.chars().next().unwrap_or(' ')),
                })?,
                None => 1,
            };
            out.add(det, count);
        }
        Ok(out)
    }

    /// Write `bitstring count` lines in canonical order.
    pub fn save<W: Write>(&self, mut w: W) -> Result<(), RecoveryError> {
        for (d, c) in self.iter() {
            writeln!(w, "{} {}", d.render(&self.shape), c)?;
        }
        Ok(())
    }
}

/// Parameters of the recovery loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryConfig {
    /// ReLU value at the corner.
    pub delta: f64,
    /// ReLU corner location `h` in (0, 1); the filling factor by default.
    pub corner: f64,
    /// Number of batches `K`.
    pub batches: usize,
    /// Target subspace dimension `d` per batch.
    pub batch_size: usize,
    /// Cap on self-consistent iterations after the setup phase.
    pub max_iterations: usize,
    pub seed: u64,
    /// Reference occupancies replacing the setup phase.
    pub warm_start_occupancies: Option<Vec<f64>>,
    /// Stop when `max |n_new - n_old|` drops below this.
    pub convergence_tol: f64,
}

impl RecoveryConfig {
    /// Paper defaults for a sector: `delta = 0.01`, corner at the filling
    /// factor, 5 iterations.
    pub fn for_shape(shape: &SystemShape, batch_size: usize, batches: usize, seed: u64) -> Self {
        Self {
            delta: 0.01,
            corner: shape.filling_factor(),
            batches,
            batch_size,
            max_iterations: 5,
            seed,
            warm_start_occupancies: None,
            convergence_tol: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<(), RecoveryError> {
        if !(self.corner > 0.0 && self.corner < 1.0) {
            return Err(RecoveryError::BadConfig(format!(
                "corner must lie in (0, 1), got {}",
                self.corner
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(RecoveryError::BadConfig(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if self.batches == 0 || self.batch_size == 0 {
            return Err(RecoveryError::BadConfig(
                "batches and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Modified ReLU flip weight: `delta * y / h` below the corner `h`, rising
/// linearly to `w(1) = 1` above it.
pub fn relu_weight(y: f64, cfg: &RecoveryConfig) -> Result<f64, RecoveryError> {
    if !(0.0..=1.0).contains(&y) {
        return Err(RecoveryError::DistanceOutOfRange(y));
    }
    let (delta, h) = (cfg.delta, cfg.corner);
    Ok(if y <= h {
        delta * y / h
    } else {
        delta + (1.0 - delta) * (y - h) / (1.0 - h)
    })
}

/// Split a sample set into the correct-sector part (both species match) and
/// the rest, preserving multiplicities.
pub fn triage(samples: &SampleSet, shape: &SystemShape) -> (SampleSet, SampleSet) {
    let mut correct = SampleSet::new(*shape);
    let mut wrong = SampleSet::new(*shape);
    for (d, c) in samples.iter() {
        if d.is_in_sector(shape) {
            correct.add(*d, c);
        } else {
            wrong.add(*d, c);
        }
    }
    (correct, wrong)
}

/// Draw `flips` distinct positions from `candidates` with probability
/// proportional to their weights; with all remaining weights zero the choice
/// falls back to uniform.
fn sample_flips(
    candidates: &mut Vec<(usize, f64)>,
    flips: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(flips);
    for _ in 0..flips {
        let total: f64 = candidates.iter().map(|(_, w)| w).sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = candidates.len() - 1;
            for (i, (_, w)) in candidates.iter().enumerate() {
                if r < *w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..candidates.len())
        };
        chosen.push(candidates.swap_remove(pick).0);
    }
    chosen
}

fn repair_species(
    mask: u64,
    target: usize,
    occ: impl Fn(usize) -> f64,
    n_orb: usize,
    cfg: &RecoveryConfig,
    rng: &mut ChaCha12Rng,
) -> Result<u64, RecoveryError> {
    let count = mask.count_ones() as usize;
    let mut out = mask;
    if count > target {
        let mut candidates: Vec<(usize, f64)> = (0..n_orb)
            .filter(|p| mask >> p & 1 == 1)
            .map(|p| Ok((p, relu_weight((1.0 - occ(p)).clamp(0.0, 1.0), cfg)?)))
            .collect::<Result<_, RecoveryError>>()?;
        for p in sample_flips(&mut candidates, count - target, rng) {
            out ^= 1u64 << p;
        }
    } else if count < target {
        let mut candidates: Vec<(usize, f64)> = (0..n_orb)
            .filter(|p| mask >> p & 1 == 0)
            .map(|p| Ok((p, relu_weight(occ(p).clamp(0.0, 1.0), cfg)?)))
            .collect::<Result<_, RecoveryError>>()?;
        for p in sample_flips(&mut candidates, target - count, rng) {
            out ^= 1u64 << p;
        }
    }
    Ok(out)
}

/// Repair one raw bitstring to the target sector, handling each spin species
/// independently: the over-occupied species flips occupied bits down, the
/// under-occupied species flips empty bits up, weighted by
/// `w(|x_{p,sigma} - n_{p,sigma}|)` and drawn without replacement.
pub fn recover_configuration(
    raw: &Determinant,
    occupancies: &[f64],
    cfg: &RecoveryConfig,
    shape: &SystemShape,
    rng: &mut ChaCha12Rng,
) -> Result<Determinant, RecoveryError> {
    let n = shape.n_orb();
    if occupancies.len() != 2 * n {
        return Err(RecoveryError::BadOccupancyLength {
            expected: 2 * n,
            found: occupancies.len(),
        });
    }
    let alpha = repair_species(
        raw.alpha_mask(),
        shape.n_alpha(),
        |p| occupancies[p],
        n,
        cfg,
        rng,
    )?;
    let beta = repair_species(
        raw.beta_mask(),
        shape.n_beta(),
        |p| occupancies[n + p],
        n,
        cfg,
        rng,
    )?;
    Ok(Determinant::from_masks(alpha, beta))
}

/// Repair every wrong-sector entry, one independent draw per copy, each on
/// its own RNG substream.
pub fn recover_all(
    wrong: &SampleSet,
    occupancies: &[f64],
    cfg: &RecoveryConfig,
    shape: &SystemShape,
    round: u64,
) -> Result<SampleSet, RecoveryError> {
    let mut tasks = Vec::new();
    let mut counter = 0u64;
    for (d, c) in wrong.iter() {
        for _ in 0..c {
            tasks.push((*d, counter));
            counter += 1;
        }
    }
    let repaired: Vec<Result<Determinant, RecoveryError>> = tasks
        .par_iter()
        .map(|(d, idx)| {
            let mut rng = substream(cfg.seed, "recover", round.wrapping_mul(1 << 32) + idx);
            recover_configuration(d, occupancies, cfg, shape, &mut rng)
        })
        .collect();
    let mut out = SampleSet::new(*shape);
    for r in repaired {
        out.add(r?, 1);
    }
    Ok(out)
}

/// Build `K` spin-closed batches from a correct-sector pool: each batch
/// draws `floor(sqrt(d)/2)` entries proportionally to empirical frequency,
/// collects the distinct half-strings of both spin halves, and spans all of
/// their concatenations (at most `d` determinants, closed under spin
/// inversion).
///
/// For open-shell sectors the two species' half-strings cannot be
/// interchanged, so their sets are kept separate and crossed.
pub fn build_batches(
    pool: &SampleSet,
    cfg: &RecoveryConfig,
    shape: &SystemShape,
    round: u64,
) -> Result<Vec<Batch>, RecoveryError> {
    if pool.is_empty() {
        return Err(RecoveryError::EmptyPool);
    }
    let entries: Vec<(Determinant, u64)> = pool.iter().map(|(d, c)| (*d, c)).collect();
    let mut cumulative = Vec::with_capacity(entries.len());
    let mut acc = 0u64;
    for (_, c) in &entries {
        acc += c;
        cumulative.push(acc);
    }
    let draws = (((cfg.batch_size as f64).sqrt().floor() as usize) / 2).max(1);

    let mut batches = Vec::with_capacity(cfg.batches);
    for k in 0..cfg.batches {
        let mut rng = substream(cfg.seed, "subsample", round.wrapping_mul(1 << 20) + k as u64);
        let mut up_halves = std::collections::BTreeSet::new();
        let mut dn_halves = std::collections::BTreeSet::new();
        let symmetric = shape.n_alpha() == shape.n_beta();
        for _ in 0..draws {
            let r = rng.random_range(0..acc);
            let idx = cumulative.partition_point(|&c| c <= r);
            let det = entries[idx].0;
            if symmetric {
                up_halves.insert(det.alpha_mask());
                up_halves.insert(det.beta_mask());
            } else {
                up_halves.insert(det.alpha_mask());
                dn_halves.insert(det.beta_mask());
            }
        }
        let dn_ref: &std::collections::BTreeSet<u64> =
            if symmetric { &up_halves } else { &dn_halves };
        let mut dets = Vec::with_capacity(up_halves.len() * dn_ref.len());
        for &a in &up_halves {
            for &b in dn_ref.iter() {
                dets.push(Determinant::from_masks(a, b));
            }
        }
        batches.push(Batch::new(dets, *shape, k)?);
    }
    Ok(batches)
}

/// Per-batch record of one recovery iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchRecord {
    pub k: usize,
    pub d_effective: usize,
    pub energy: f64,
    pub s2: f64,
    pub variance: Option<f64>,
    pub occupancies: Vec<f64>,
}

impl BatchRecord {
    fn from_solution(k: usize, d: usize, sol: &SubspaceSolution) -> Self {
        Self {
            k,
            d_effective: d,
            energy: sol.energy,
            s2: sol.s2_expectation,
            variance: sol.variance,
            occupancies: sol.occupancies.clone(),
        }
    }
}

/// One pass of the loop: either the setup phase (iteration 0) or a
/// self-consistent iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Count of repaired copies added to the pool this round.
    pub recovered: u64,
    /// Distinct configurations in the pool the batches were drawn from.
    pub pool_unique: usize,
    pub batches: Vec<BatchRecord>,
    pub min_energy: f64,
    pub avg_occupancies: Vec<f64>,
    /// `max |n_new - n_old|`; absent for the setup phase.
    pub occupancy_change: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunHistory {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl RunHistory {
    /// Lowest batch energy over the whole run.
    pub fn min_energy(&self) -> f64 {
        self.iterations
            .iter()
            .map(|it| it.min_energy)
            .fold(f64::INFINITY, f64::min)
    }

    /// Final averaged occupancies.
    pub fn final_occupancies(&self) -> Option<&[f64]> {
        self.iterations.last().map(|it| it.avg_occupancies.as_slice())
    }
}

fn solve_round(
    batches: &[Batch],
    ints: &IntegralSet,
    penalty: &PenaltyConfig,
    opts: &SolveOptions,
) -> Result<Vec<SubspaceSolution>, RecoveryError> {
    let solutions: Vec<Result<SubspaceSolution, SolverError>> = batches
        .par_iter()
        .map(|b| solve_batch(b, ints, penalty, opts))
        .collect();
    let mut out = Vec::with_capacity(solutions.len());
    for s in solutions {
        out.push(s?);
    }
    Ok(out)
}

fn record_round(
    iteration: usize,
    recovered: u64,
    pool_unique: usize,
    batches: &[Batch],
    solutions: &[SubspaceSolution],
    previous: Option<&[f64]>,
) -> Result<IterationRecord, RecoveryError> {
    let per_batch: Vec<Vec<f64>> = solutions.iter().map(|s| s.occupancies.clone()).collect();
    let avg = average_occupancies(&per_batch)?;
    let min_energy = solutions
        .iter()
        .map(|s| s.energy)
        .fold(f64::INFINITY, f64::min);
    let occupancy_change = previous.map(|prev| {
        avg.iter()
            .zip(prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    Ok(IterationRecord {
        iteration,
        recovered,
        pool_unique,
        batches: solutions
            .iter()
            .enumerate()
            .map(|(k, s)| BatchRecord::from_solution(k, batches[k].len(), s))
            .collect(),
        min_energy,
        avg_occupancies: avg,
        occupancy_change,
    })
}

/// The full self-consistent procedure: setup on the correct-sector subset
/// (or a warm start), then repeated recovery of the wrong-sector entries,
/// batching of the merged pool, parallel batch solves, and occupancy
/// feedback, until the occupancies settle or the iteration cap is reached.
pub fn run_sqd(
    samples: &SampleSet,
    ints: &IntegralSet,
    cfg: &RecoveryConfig,
    penalty: &PenaltyConfig,
    opts: &SolveOptions,
) -> Result<RunHistory, RecoveryError> {
    cfg.validate()?;
    let shape = ints.shape;
    if samples.shape().n_orb() != shape.n_orb() {
        return Err(RecoveryError::ShapeMismatch {
            expected: shape.n_orb(),
            found: samples.shape().n_orb(),
        });
    }
    let (correct, wrong) = triage(samples, &shape);
    if correct.is_empty() && cfg.warm_start_occupancies.is_none() {
        return Err(RecoveryError::UnrecoverableInput);
    }

    let mut iterations = Vec::new();
    let mut reference: Vec<f64>;
    match &cfg.warm_start_occupancies {
        Some(warm) => {
            if warm.len() != shape.n_qubits() {
                return Err(RecoveryError::BadOccupancyLength {
                    expected: shape.n_qubits(),
                    found: warm.len(),
                });
            }
            if cfg.max_iterations == 0 {
                return Err(RecoveryError::BadConfig(
                    "a warm start replaces the setup phase and needs max_iterations >= 1".into(),
                ));
            }
            reference = warm.clone();
        }
        None => {
            let batches = build_batches(&correct, cfg, &shape, 0)?;
            let solutions = solve_round(&batches, ints, penalty, opts)?;
            let record = record_round(0, 0, correct.unique_len(), &batches, &solutions, None)?;
            reference = record.avg_occupancies.clone();
            iterations.push(record);
        }
    }

    let mut converged = false;
    for t in 1..=cfg.max_iterations {
        let recovered = if wrong.is_empty() {
            SampleSet::new(shape)
        } else {
            recover_all(&wrong, &reference, cfg, &shape, t as u64)?
        };
        let mut pool = correct.clone();
        pool.merge(&recovered);
        let batches = build_batches(&pool, cfg, &shape, t as u64)?;
        let solutions = solve_round(&batches, ints, penalty, opts)?;
        let record = record_round(
            t,
            recovered.total(),
            pool.unique_len(),
            &batches,
            &solutions,
            Some(&reference),
        )?;
        reference = record.avg_occupancies.clone();
        let change = record.occupancy_change.unwrap_or(f64::INFINITY);
        iterations.push(record);
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(RunHistory {
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::{build_hubbard, HubbardSpec};
    use crate::matrix_elements::diagonal_element;

    fn shape22() -> SystemShape {
        SystemShape::new(2, 1, 1).unwrap()
    }

    fn cfg_for(shape: &SystemShape, d: usize, k: usize) -> RecoveryConfig {
        RecoveryConfig::for_shape(shape, d, k, 7)
    }

    #[test]
    fn relu_hits_the_stated_points() {
        let shape = SystemShape::new(8, 4, 4).unwrap();
        let cfg = cfg_for(&shape, 100, 1);
        assert_eq!(relu_weight(0.0, &cfg).unwrap(), 0.0);
        assert!((relu_weight(cfg.corner, &cfg).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(relu_weight(1.0, &cfg).unwrap(), 1.0);
        assert!(relu_weight(1.5, &cfg).is_err());
        assert!(relu_weight(-0.1, &cfg).is_err());
    }

    #[test]
    fn triage_separates_sectors() {
        let s = shape22();
        let mut samples = SampleSet::new(s);
        samples.add(Determinant::parse("0101", &s).unwrap(), 3);
        samples.add(Determinant::parse("0111", &s).unwrap(), 2);
        let (correct, wrong) = triage(&samples, &s);
        assert_eq!(correct.total(), 3);
        assert_eq!(wrong.total(), 2);
        let empty = SampleSet::new(s);
        let (c, w) = triage(&empty, &s);
        assert!(c.is_empty() && w.is_empty());
    }

    #[test]
    fn forced_weights_make_repair_deterministic() {
        let s = SystemShape::new(4, 2, 2).unwrap();
        let cfg = cfg_for(&s, 16, 1);
        // reference occupancies exactly 0/1: alpha and beta occupy {0, 1}
        let mut occ = vec![0.0; 8];
        occ[0] = 1.0;
        occ[1] = 1.0;
        occ[4] = 1.0;
        occ[5] = 1.0;
        // extra alpha electron at orbital 3 where n = 0
        let raw = Determinant::from_masks(0b1011, 0b0011);
        for trial in 0..32 {
            let mut rng = substream(trial, "forced", 0);
            let fixed = recover_configuration(&raw, &occ, &cfg, &s, &mut rng).unwrap();
            assert_eq!(fixed.alpha_mask(), 0b0011, "trial {trial}");
            assert_eq!(fixed.beta_mask(), 0b0011);
        }
    }

    #[test]
    fn correct_species_is_untouched() {
        let s = SystemShape::new(4, 2, 2).unwrap();
        let cfg = cfg_for(&s, 16, 1);
        let occ = vec![0.5; 8];
        // alpha already has 2 electrons, beta has 1
        let raw = Determinant::from_masks(0b1010, 0b0100);
        for trial in 0..16 {
            let mut rng = substream(trial, "species", 1);
            let fixed = recover_configuration(&raw, &occ, &cfg, &s, &mut rng).unwrap();
            assert_eq!(fixed.alpha_mask(), 0b1010);
            assert_eq!(fixed.beta_mask().count_ones(), 2);
            // the occupied beta bit must survive; only empty bits gain
            assert_eq!(fixed.beta_mask() & 0b0100, 0b0100);
        }
    }

    #[test]
    fn repaired_outputs_always_land_in_sector() {
        let s = SystemShape::new(5, 3, 2).unwrap();
        let cfg = cfg_for(&s, 64, 1);
        let occ: Vec<f64> = (0..10).map(|i| (i as f64) / 10.0).collect();
        let mut rng = substream(3, "insector", 0);
        for _ in 0..200 {
            let raw = Determinant::from_masks(
                rng.random_range(0..32) as u64,
                rng.random_range(0..32) as u64,
            );
            let mut flip_rng = substream(rng.random(), "flip", 0);
            let fixed = recover_configuration(&raw, &occ, &cfg, &s, &mut flip_rng).unwrap();
            assert!(fixed.is_in_sector(&s), "raw {raw:?} fixed {fixed:?}");
        }
    }

    #[test]
    fn flip_frequencies_follow_normalized_weights() {
        // one excess spin-up electron among four occupied orbitals with an
        // interpolated reference profile
        let s = SystemShape::new(5, 3, 2).unwrap();
        let cfg = cfg_for(&s, 64, 1);
        let mut occ = vec![0.0; 10];
        occ[0] = 0.9;
        occ[1] = 0.9;
        occ[2] = 0.1;
        occ[3] = 0.5;
        occ[5] = 0.9;
        occ[6] = 0.9;
        let raw = Determinant::from_masks(0b01111, 0b00011);
        let weights: Vec<f64> = (0..4)
            .map(|p| relu_weight(1.0 - occ[p], &cfg).unwrap())
            .collect();
        let total: f64 = weights.iter().sum();
        let trials = 100_000usize;
        let mut counts = [0usize; 4];
        for t in 0..trials {
            let mut rng = substream(11, "freq", t as u64);
            let fixed = recover_configuration(&raw, &occ, &cfg, &s, &mut rng).unwrap();
            let dropped = (raw.alpha_mask() ^ fixed.alpha_mask()).trailing_zeros() as usize;
            counts[dropped] += 1;
        }
        for p in 0..4 {
            let expect = weights[p] / total;
            let freq = counts[p] as f64 / trials as f64;
            let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
            assert!(
                (freq - expect).abs() <= 3.0 * sigma + 1e-12,
                "bit {p}: freq {freq:.5} expect {expect:.5} sigma {sigma:.3e}"
            );
        }
    }

    #[test]
    fn open_shell_singlet_pool_spans_the_paper_set() {
        let s = shape22();
        let mut pool = SampleSet::new(s);
        pool.add(Determinant::parse("1001", &s).unwrap(), 5);
        let mut cfg = cfg_for(&s, 16, 1);
        cfg.batch_size = 16;
        let batches = build_batches(&pool, &cfg, &s, 0).unwrap();
        let mut rendered: Vec<String> = batches[0]
            .determinants()
            .iter()
            .map(|d| d.render(&s))
            .collect();
        rendered.sort();
        assert_eq!(rendered, vec!["0101", "0110", "1001", "1010"]);
    }

    #[test]
    fn closed_shell_pool_gives_single_member() {
        let s = shape22();
        let mut pool = SampleSet::new(s);
        pool.add(Determinant::parse("0101", &s).unwrap(), 2);
        let batches = build_batches(&pool, &cfg_for(&s, 4, 3), &s, 0).unwrap();
        for b in &batches {
            assert_eq!(b.len(), 1);
            assert_eq!(b.determinants()[0].render(&s), "0101");
        }
    }

    #[test]
    fn batches_respect_size_bound_and_spin_closure() {
        let s = SystemShape::new(6, 3, 3).unwrap();
        let mut rng = substream(5, "poolgen", 0);
        let masks = crate::system::sector_masks(6, 3);
        let mut pool = SampleSet::new(s);
        for _ in 0..200 {
            let a = masks[rng.random_range(0..masks.len())];
            let b = masks[rng.random_range(0..masks.len())];
            pool.add(Determinant::from_masks(a, b), 1 + rng.random_range(0..4));
        }
        for d in [4usize, 25, 100, 400] {
            let mut cfg = cfg_for(&s, d, 3);
            cfg.seed = 100 + d as u64;
            let batches = build_batches(&pool, &cfg, &s, 1).unwrap();
            for b in &batches {
                assert!(b.len() <= d, "batch of {} exceeds d = {d}", b.len());
                assert!(b.is_spin_closed());
            }
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        let s = shape22();
        let pool = SampleSet::new(s);
        assert!(matches!(
            build_batches(&pool, &cfg_for(&s, 4, 1), &s, 0),
            Err(RecoveryError::EmptyPool)
        ));
    }

    #[test]
    fn sample_files_round_trip() {
        let s = SystemShape::new(3, 2, 1).unwrap();
        let mut samples = SampleSet::new(s);
        let mut rng = substream(9, "file", 0);
        for _ in 0..20 {
            samples.add(
                Determinant::from_masks(rng.random_range(0..8), rng.random_range(0..8)),
                1 + rng.random_range(0..9),
            );
        }
        let mut buf = Vec::new();
        samples.save(&mut buf).unwrap();
        let back = SampleSet::load(buf.as_slice(), s).unwrap();
        assert_eq!(back, samples);
        // counts are optional on read
        let implicit = "010101\n010101\n";
        let set = SampleSet::load(implicit.as_bytes(), s).unwrap();
        assert_eq!(set.total(), 2);
        assert_eq!(set.unique_len(), 1);
    }

    #[test]
    fn run_is_deterministic_and_respects_iteration_cap() {
        let ints = build_hubbard(&HubbardSpec {
            n_sites: 4,
            onsite_u: 4.0,
            seed: 3,
            realization_index: 0,
        })
        .unwrap();
        let shape = ints.shape;
        let mut samples = SampleSet::new(shape);
        // correct-sector entries plus noise with one missing electron
        let mut rng = substream(21, "mix", 0);
        let masks = crate::system::sector_masks(4, 2);
        for _ in 0..40 {
            let a = masks[rng.random_range(0..masks.len())];
            let b = masks[rng.random_range(0..masks.len())];
            samples.add(Determinant::from_masks(a, b), 1 + rng.random_range(0..3));
        }
        for _ in 0..20 {
            samples.add(
                Determinant::from_masks(0b0001, masks[rng.random_range(0..masks.len())]),
                1,
            );
        }
        let mut cfg = cfg_for(&shape, 30, 2);
        cfg.max_iterations = 2;
        cfg.convergence_tol = 0.0; // force the cap
        let opts = SolveOptions::default();
        let h1 = run_sqd(&samples, &ints, &cfg, &PenaltyConfig::none(), &opts).unwrap();
        let h2 = run_sqd(&samples, &ints, &cfg, &PenaltyConfig::none(), &opts).unwrap();
        assert_eq!(h1.iterations.len(), 3); // setup + 2 iterations
        assert_eq!(
            serde_json::to_string(&h1).unwrap(),
            serde_json::to_string(&h2).unwrap()
        );
        for it in &h1.iterations[1..] {
            assert!(it.recovered > 0);
        }
    }

    #[test]
    fn zero_iterations_is_the_setup_phase_alone() {
        let ints = build_hubbard(&HubbardSpec {
            n_sites: 4,
            onsite_u: 2.0,
            seed: 5,
            realization_index: 1,
        })
        .unwrap();
        let shape = ints.shape;
        let mut samples = SampleSet::new(shape);
        samples.add(Determinant::rhf(&shape), 4);
        samples.add(Determinant::from_masks(0b0011, 0b0110), 1);
        let mut cfg = cfg_for(&shape, 16, 2);
        cfg.max_iterations = 0;
        let history = run_sqd(
            &samples,
            &ints,
            &cfg,
            &PenaltyConfig::none(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(history.iterations.len(), 1);
        assert_eq!(history.iterations[0].iteration, 0);
        assert!(!history.converged);
    }

    #[test]
    fn all_wrong_sector_needs_warm_start_and_beats_rhf() {
        let ints = build_hubbard(&HubbardSpec {
            n_sites: 4,
            onsite_u: 8.0,
            seed: 8,
            realization_index: 0,
        })
        .unwrap();
        let shape = ints.shape;
        // every sample misses one spin-down electron
        let mut samples = SampleSet::new(shape);
        let mut rng = substream(33, "wrongonly", 0);
        let masks = crate::system::sector_masks(4, 2);
        for _ in 0..60 {
            let a = masks[rng.random_range(0..masks.len())];
            samples.add(Determinant::from_masks(a, 1 << rng.random_range(0..4)), 1);
        }
        let mut cfg = cfg_for(&shape, 36, 2);
        assert!(matches!(
            run_sqd(
                &samples,
                &ints,
                &cfg,
                &PenaltyConfig::none(),
                &SolveOptions::default()
            ),
            Err(RecoveryError::UnrecoverableInput)
        ));
        // warm start with the exact ground-state occupancies
        let exact = solve_batch(
            &Batch::full_sector(shape, 0),
            &ints,
            &PenaltyConfig::none(),
            &SolveOptions::default(),
        )
        .unwrap();
        cfg.warm_start_occupancies = Some(exact.occupancies.clone());
        cfg.max_iterations = 3;
        let history = run_sqd(
            &samples,
            &ints,
            &cfg,
            &PenaltyConfig::none(),
            &SolveOptions::default(),
        )
        .unwrap();
        let rhf_energy = diagonal_element(&Determinant::rhf(&shape), &ints);
        assert!(
            history.min_energy() < rhf_energy,
            "recovered {} vs RHF {rhf_energy}",
            history.min_energy()
        );
    }
}
