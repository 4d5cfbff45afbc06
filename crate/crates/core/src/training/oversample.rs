//! Random oversampling of minority classes against the largest class.
//!
//! For a class with `n` samples and the largest class with `n_max`, let
//! `ρ = n_max / n`:
//!
//! * `ρ ≥ 2`: every sample is copied so the class holds `round(ρ)·n`
//!   samples (round half up);
//! * `1 < ρ < 2`: `n_max − n` distinct samples, drawn uniformly without
//!   replacement, are duplicated once, which is `round((ρ − 1)·n)`;
//! * the largest class and empty classes are left alone.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rule {
    Keep,
    Replicate(usize),
    Partial(usize),
}

fn rule(n: usize, n_max: usize) -> Rule {
    if n == 0 || n >= n_max {
        Rule::Keep
    } else if n_max >= 2 * n {
        // round-half-up of n_max / n in integer arithmetic
        Rule::Replicate((2 * n_max + n) / (2 * n))
    } else {
        Rule::Partial(n_max - n)
    }
}

/// Class counts after oversampling.
pub fn oversampled_counts(counts: &[usize]) -> Vec<usize> {
    let n_max = counts.iter().copied().max().unwrap_or(0);
    counts
        .iter()
        .map(|&n| match rule(n, n_max) {
            Rule::Keep => n,
            Rule::Replicate(m) => m * n,
            Rule::Partial(extra) => n + extra,
        })
        .collect()
}

/// Indices into the input after oversampling: `0..labels.len()` in order,
/// followed by the duplicates, class by class.
pub fn oversample_indices(labels: &[usize], num_classes: usize, seed: u64) -> Result<Vec<usize>, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::Data("cannot oversample an empty dataset".into()));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members
            .get_mut(l)
            .ok_or_else(|| TrainError::Data(format!("label {l} outside {num_classes} classes")))?
            .push(i);
    }
    let n_max = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for class in &members {
        match rule(class.len(), n_max) {
            Rule::Keep => {}
            Rule::Replicate(m) => {
                for _ in 1..m {
                    out.extend_from_slice(class);
                }
            }
            Rule::Partial(extra) => {
                let mut picked = index::sample(&mut rng, class.len(), extra).into_vec();
                picked.sort_unstable();
                out.extend(picked.into_iter().map(|j| class[j]));
            }
        }
    }
    Ok(out)
}

pub fn oversample(data: &Dataset, seed: u64) -> Result<Dataset, TrainError> {
    let idx = oversample_indices(&data.labels(), data.num_classes(), seed)?;
    Ok(data.subset(&idx))
}
