//! Drawing configuration samples from a sector state under a noise model.

use super::{SamplerError, SectorState};
use crate::recovery::SampleSet;
use crate::rng::substream;
use crate::system::{mask_from_rank, sector_determinants, Determinant};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How measurement outcomes are distorted (or replaced) relative to the
/// ideal distribution `|<x|Psi>|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Sample the ideal distribution.
    None,
    /// With probability `alpha` draw from the ideal distribution, otherwise
    /// uniformly over all `2^M` bitstrings.
    Depolarizing { alpha: f64 },
    /// Uniform over the full Fock space.
    UniformFullFock,
    /// Uniform over the correct particle sector.
    UniformSector,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if let NoiseModel::Depolarizing { alpha } = self {
            if !(0.0..=1.0).contains(alpha) {
                return Err(SamplerError::BadAlpha(*alpha));
            }
        }
        Ok(())
    }
}

fn uniform_mask(rng: &mut ChaCha12Rng, n_orb: usize) -> u64 {
    if n_orb == 64 {
        rng.random::<u64>()
    } else {
        rng.random::<u64>() & ((1u64 << n_orb) - 1)
    }
}

fn draw_from_cumulative(cumulative: &[f64], dets: &[Determinant], rng: &mut ChaCha12Rng) -> Determinant {
    let r = rng.random::<f64>() * cumulative.last().copied().unwrap_or(1.0);
    let idx = cumulative.partition_point(|&c| c <= r).min(dets.len() - 1);
    dets[idx]
}

/// Draw `count` measurement outcomes. Work is split into fixed chunks, each
/// on its own RNG substream of `seed`, so results do not depend on thread
/// scheduling.
pub fn sample(
    state: &SectorState,
    noise: &NoiseModel,
    count: u64,
    seed: u64,
) -> Result<SampleSet, SamplerError> {
    noise.validate()?;
    if count == 0 {
        return Err(SamplerError::ZeroCount);
    }
    let shape = *state.shape();
    let n_orb = shape.n_orb();

    // cumulative ideal distribution, needed by the signal branches
    let needs_signal = matches!(noise, NoiseModel::None | NoiseModel::Depolarizing { .. });
    let (dets, cumulative) = if needs_signal {
        let dets = sector_determinants(&shape);
        let mut cum = Vec::with_capacity(dets.len());
        let mut acc = 0.0;
        for p in state.probabilities() {
            acc += p;
            cum.push(acc);
        }
        (dets, cum)
    } else {
        (Vec::new(), Vec::new())
    };

    let (dim_alpha, dim_beta) = (
        crate::system::binomial(n_orb, shape.n_alpha()) as usize,
        crate::system::binomial(n_orb, shape.n_beta()) as usize,
    );

    const CHUNK: u64 = 1 << 15;
    let n_chunks = count.div_ceil(CHUNK);
    let chunk_sets: Vec<SampleSet> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = substream(seed, "sample", chunk);
            let draws = CHUNK.min(count - chunk * CHUNK);
            let mut set = SampleSet::new(shape);
            for _ in 0..draws {
                let det = match noise {
                    NoiseModel::None => draw_from_cumulative(&cumulative, &dets, &mut rng),
                    NoiseModel::Depolarizing { alpha } => {
                        if rng.random::<f64>() < *alpha {
                            draw_from_cumulative(&cumulative, &dets, &mut rng)
                        } else {
                            let a = uniform_mask(&mut rng, n_orb);
                            let b = uniform_mask(&mut rng, n_orb);
                            Determinant::from_masks(a, b)
                        }
                    }
                    NoiseModel::UniformFullFock => {
                        let a = uniform_mask(&mut rng, n_orb);
                        let b = uniform_mask(&mut rng, n_orb);
                        Determinant::from_masks(a, b)
                    }
                    NoiseModel::UniformSector => {
                        let ra = rng.random_range(0..dim_alpha as u64) as usize;
                        let rb = rng.random_range(0..dim_beta as u64) as usize;
                        Determinant::from_masks(
                            mask_from_rank(n_orb, shape.n_alpha(), ra),
                            mask_from_rank(n_orb, shape.n_beta(), rb),
                        )
                    }
                };
                set.add(det, 1);
            }
            set
        })
        .collect();

    let mut merged = SampleSet::new(shape);
    for s in &chunk_sets {
        merged.merge(s);
    }
    Ok(merged)
}
