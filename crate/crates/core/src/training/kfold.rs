use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it into `k` contiguous blocks; the
/// first `n mod k` blocks hold one extra index. Fold `i` tests on block `i`
/// and trains on the rest (both sorted ascending).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>, TrainError> {
    if k < 2 {
        return Err(TrainError::Config(format!("k_folds must be at least 2, got {k}")));
    }
    if n < k {
        return Err(TrainError::Data(format!("{n} samples cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k + 1);
    bounds.push(0);
    for i in 0..k {
        bounds.push(bounds[i] + base + usize::from(i < extra));
    }

    Ok((0..k)
        .map(|i| {
            let mut test_indices = order[bounds[i]..bounds[i + 1]].to_vec();
            let mut train_indices: Vec<usize> = order[..bounds[i]]
                .iter()
                .chain(&order[bounds[i + 1]..])
                .copied()
                .collect();
            test_indices.sort_unstable();
            train_indices.sort_unstable();
            FoldSplit {
                fold_index: i,
                train_indices,
                test_indices,
            }
        })
        .collect())
}
