use std::collections::BTreeMap;

use rand::Rng;

use super::binning::BinKey;
use crate::error::{Error, Result};
use crate::types::{total_weight, Ensemble, Walker, WEIGHT_SUM_TOLERANCE};

/// Walkers lighter than this are never split further.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy)]
struct Share {
    source: usize,
    weight: f64,
}

/// Index of the heaviest share; ties go to the lower source id.
fn heaviest(shares: &[Share], walkers: &[Walker]) -> usize {
    (1..shares.len()).fold(0, |best, i| {
        let (a, b) = (&shares[i], &shares[best]);
        if a.weight > b.weight || (a.weight == b.weight && walkers[a.source].id < walkers[b.source].id) {
            i
        } else {
            best
        }
    })
}

fn split_to_target(shares: &mut Vec<Share>, walkers: &[Walker], target: usize) {
    while shares.len() < target {
        let h = heaviest(shares, walkers);
        let clones = target - shares.len() + 1;
        let piece = shares[h].weight / clones as f64;
        if piece < WEIGHT_FLOOR {
            break;
        }
        let source = shares[h].source;
        shares[h].weight = piece;
        shares.splice(
            h + 1..h + 1,
            std::iter::repeat_n(Share { source, weight: piece }, clones - 1),
        );
    }
}

fn merge_to_target(shares: &mut Vec<Share>, walkers: &[Walker], target: usize, rng: &mut impl Rng) {
    while shares.len() > target {
        shares.sort_by(|a, b| {
            a.weight
                .total_cmp(&b.weight)
                .then(walkers[a.source].id.cmp(&walkers[b.source].id))
        });
        let (a, b) = (shares[0], shares[1]);
        let total = a.weight + b.weight;
        let survivor = if rng.random::<f64>() * total < a.weight {
            a.source
        } else {
            b.source
        };
        shares.drain(..2);
        shares.push(Share {
            source: survivor,
            weight: total,
        });
    }
    shares.sort_by_key(|s| walkers[s.source].id);
}

/// Huber-Kim split/merge to `target` walkers per bin.
///
/// Under target, the heaviest walker is split into equal clones; over
/// target, the two lightest walkers are merged repeatedly, the survivor
/// drawn with probability proportional to weight. Exempt bins are only
/// split. Children get fresh ids from `next_id`, the iteration after
/// `ensemble`'s, and the source walker as parent.
pub fn resample(
    ensemble: &Ensemble,
    bins: &[BinKey],
    target: usize,
    rng: &mut impl Rng,
    next_id: &mut u64,
) -> Result<Ensemble> {
    let walkers = ensemble.walkers();
    if walkers.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if bins.len() != walkers.len() {
        return Err(Error::DimensionMismatch {
            expected: walkers.len(),
            found: bins.len(),
        });
    }
    if target == 0 {
        return Err(Error::InvalidArgument("walkers_per_bin must be at least 1".into()));
    }
    let total = total_weight(ensemble);
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::WeightNotConserved(total));
    }

    let mut groups: BTreeMap<BinKey, Vec<Share>> = BTreeMap::new();
    for (i, (w, key)) in walkers.iter().zip(bins).enumerate() {
        groups.entry(*key).or_default().push(Share {
            source: i,
            weight: w.weight,
        });
    }
    let iteration = ensemble.iteration + 1;
    let mut out = Vec::with_capacity(groups.len() * target);
    for (key, mut shares) in groups {
        if shares.len() < target {
            split_to_target(&mut shares, walkers, target);
        } else if shares.len() > target && !key.exempt {
            merge_to_target(&mut shares, walkers, target, rng);
        }
        for s in shares {
            let src = &walkers[s.source];
            out.push(Walker {
                id: *next_id,
                state: src.state.clone(),
                weight: s.weight,
                parent_id: Some(src.id),
                iteration,
                pcoord: src.pcoord.clone(),
            });
            *next_id += 1;
        }
    }
    Ensemble::new(out, iteration)
}
