use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ImageId;

/// Requested train/validation/test sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSizes {
    /// Exact sizes. They may sum to less than the corpus; the remainder is
    /// left unassigned.
    Counts([usize; 3]),
    /// Non-negative weights; rounded with the largest-remainder method.
    Ratios([f64; 3]),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: Vec<ImageId>,
    pub val: Vec<ImageId>,
    pub test: Vec<ImageId>,
    /// Ids left over when explicit counts do not cover the corpus.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unassigned: Vec<ImageId>,
}

fn counts_from_ratios(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || total <= 0.0 {
        return Err(Error::InvalidArgument(format!("invalid split ratios {ratios:?}")));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r / total * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let short = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    Ok(counts)
}

/// Deterministic shuffled partition of `ids` into train/validation/test.
///
/// Ids are put in canonical (sorted) order before shuffling, so the result
/// depends only on the id set and the seed.
pub fn split(ids: &[ImageId], sizes: SplitSizes, seed: u64) -> Result<SplitSpec> {
    let unique: BTreeSet<&ImageId> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidArgument("duplicate image ids in corpus".into()));
    }
    let counts = match sizes {
        SplitSizes::Counts(c) => c,
        SplitSizes::Ratios(r) => counts_from_ratios(ids.len(), r)?,
    };
    if counts.iter().sum::<usize>() > ids.len() {
        return Err(Error::InvalidArgument(format!(
            "split counts {counts:?} exceed corpus size {}",
            ids.len()
        )));
    }

    let mut shuffled: Vec<ImageId> = unique.into_iter().cloned().collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let unassigned = shuffled.split_off(counts.iter().sum());
    let test = shuffled.split_off(counts[0] + counts[1]);
    let val = shuffled.split_off(counts[0]);
    Ok(SplitSpec {
        seed,
        train: shuffled,
        val,
        test,
        unassigned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<ImageId> {
        (0..n).map(|i| ImageId::new(format!("img{i:05}"))).collect()
    }

    #[test]
    fn all_train() {
        let s = split(&ids(10), SplitSizes::Counts([10, 0, 0]), 0).unwrap();
        assert_eq!(s.train.len(), 10);
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn same_seed_same_partition() {
        let a = split(&ids(50), SplitSizes::Counts([30, 10, 10]), 7).unwrap();
        let b = split(&ids(50), SplitSizes::Counts([30, 10, 10]), 7).unwrap();
        assert_eq!(a, b);
        let c = split(&ids(50), SplitSizes::Counts([30, 10, 10]), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn input_order_does_not_matter() {
        let mut rev = ids(20);
        rev.reverse();
        let a = split(&ids(20), SplitSizes::Counts([10, 5, 5]), 3).unwrap();
        let b = split(&rev, SplitSizes::Counts([10, 5, 5]), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn count_mismatch_is_error() {
        assert!(split(&ids(10), SplitSizes::Counts([5, 3, 3]), 0).is_err());
        let dup = vec![ImageId::new("a"), ImageId::new("a")];
        assert!(split(&dup, SplitSizes::Counts([2, 0, 0]), 0).is_err());
    }

    #[test]
    fn short_counts_leave_remainder() {
        let s = split(&ids(10), SplitSizes::Counts([5, 3, 1]), 0).unwrap();
        assert_eq!(s.unassigned.len(), 1);
        let mut all: Vec<_> = [&s.train, &s.val, &s.test, &s.unassigned]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        all.sort();
        assert_eq!(all, ids(10));
    }

    #[test]
    fn ratios_round_to_corpus_size() {
        assert_eq!(counts_from_ratios(10, [0.7, 0.2, 0.1]).unwrap(), [7, 2, 1]);
        assert_eq!(
            counts_from_ratios(9634, [6722.0, 1915.0, 997.0]).unwrap(),
            [6722, 1915, 997]
        );
        let c = counts_from_ratios(11, [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 11);
        assert!(counts_from_ratios(5, [-1.0, 1.0, 1.0]).is_err());
    }
}
