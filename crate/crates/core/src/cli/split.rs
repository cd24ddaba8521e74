//! Train/test partitions: random per-output holdouts and contiguous missing ranges.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Rows `start..end` (in file order) of `output` are held out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingRange {
    pub output: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SplitPolicy {
    /// Each output is shuffled independently; either a fixed number or a
    /// fraction of its points (rounded to nearest, at least one) is kept for training.
    Random {
        #[serde(default)]
        train_per_output: Option<usize>,
        #[serde(default)]
        train_fraction: Option<f64>,
    },
    /// Contiguous blocks are held out; everything else trains. Resplitting has no effect.
    MissingRange { ranges: Vec<MissingRange> },
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy::Random {
            train_per_output: None,
            train_fraction: Some(0.25),
        }
    }
}

impl SplitPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            SplitPolicy::Random {
                train_per_output,
                train_fraction,
            } => match (train_per_output, train_fraction) {
                (Some(n), None) if *n > 0 => Ok(()),
                (None, Some(f)) if *f > 0.0 && *f < 1.0 => Ok(()),
                _ => Err(Error::InvalidSpec(
                    "random split needs exactly one of train_per_output > 0 or train_fraction in (0, 1)".into(),
                )),
            },
            SplitPolicy::MissingRange { ranges } => {
                if let Some(r) = ranges.iter().find(|r| r.start >= r.end) {
                    return Err(Error::InvalidSpec(format!(
                        "empty missing range {}..{} on output {}",
                        r.start, r.end, r.output
                    )));
                }
                Ok(())
            }
        }
    }

    /// Train and test indices per output for resplit number `split`.
    pub fn indices(&self, counts: &[usize], seed: u64, split: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        self.validate()?;
        match self {
            SplitPolicy::Random {
                train_per_output,
                train_fraction,
            } => {
                let sizes = counts
                    .iter()
                    .enumerate()
                    .map(|(d, &n)| {
                        let k = match (train_per_output, train_fraction) {
                            (Some(k), _) => *k,
                            (None, Some(f)) => ((f * n as f64).round() as usize).max(1),
                            (None, None) => unreachable!("validated"),
                        };
                        if k > n {
                            Err(Error::InvalidSpec(format!(
                                "output {d} has {n} points, fewer than the {k} requested for training"
                            )))
                        } else {
                            Ok(k)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(random_indices(counts, &sizes, seed, split))
            }
            SplitPolicy::MissingRange { ranges } => {
                let mut held: Vec<Vec<bool>> = counts.iter().map(|&n| vec![false; n]).collect();
                for r in ranges {
                    let Some(mask) = held.get_mut(r.output) else {
                        return Err(Error::InvalidOutput {
                            index: r.output,
                            outputs: counts.len(),
                        });
                    };
                    if r.end > mask.len() {
                        return Err(Error::InvalidSpec(format!(
                            "missing range {}..{} exceeds the {} points of output {}",
                            r.start,
                            r.end,
                            mask.len(),
                            r.output
                        )));
                    }
                    mask[r.start..r.end].iter_mut().for_each(|m| *m = true);
                }
                Ok(held
                    .iter()
                    .map(|mask| {
                        let (test, train): (Vec<usize>, Vec<usize>) = (0..mask.len()).partition(|&i| mask[i]);
                        (train, test)
                    })
                    .collect())
            }
        }
    }

    pub fn apply(&self, data: &Dataset, seed: u64, split: u64) -> Result<(Dataset, Dataset)> {
        let parts = self.indices(&data.counts(), seed, split)?;
        let train: Vec<Vec<usize>> = parts.iter().map(|p| p.0.clone()).collect();
        let test: Vec<Vec<usize>> = parts.iter().map(|p| p.1.clone()).collect();
        Ok((data.subset(&train)?, data.subset(&test)?))
    }
}

/// Shuffles each output independently with ChaCha stream `1 + split` and keeps the
/// first `sizes[d]` positions for training. Both index lists come back sorted.
pub fn random_indices(counts: &[usize], sizes: &[usize], seed: u64, split: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + split);
    counts
        .iter()
        .zip(sizes)
        .map(|(&n, &k)| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (mut train, mut test) = (idx[..k].to_vec(), idx[k..].to_vec());
            train.sort_unstable();
            test.sort_unstable();
            (train, test)
        })
        .collect()
}
