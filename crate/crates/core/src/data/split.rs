use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.val, self.test];
        if r.iter().any(|v| !v.is_finite() || *v < 0.0) || r.iter().sum::<f64>() <= 0.0 {
            return Err(Error::arg(format!("invalid split ratios {r:?}")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items.
    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let r = [self.train, self.val, self.test];
        let parts = r.iter().filter(|v| **v > 0.0).count();
        if n < parts {
            return Err(Error::arg(format!("cannot split {n} items into {parts} non-empty parts")));
        }
        let total: f64 = r.iter().sum();
        let exact: Vec<f64> = r.iter().map(|v| v / total * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if r[i] > 0.0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        // every requested part gets at least one item
        for i in 0..3 {
            if r[i] > 0.0 && counts[i] == 0 {
                let donor = (0..3).max_by_key(|&j| counts[j]).unwrap_or(0);
                counts[donor] -= 1;
                counts[i] += 1;
            }
        }
        Ok([counts[0], counts[1], counts[2]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a contiguous three-way split.
pub fn split_dataset<T>(items: Vec<T>, ratios: &SplitRatios, seed_: u64) -> Result<Splits<T>> {
    let [n_train, n_val, _] = ratios.counts(items.len())?;
    let mut items = items;
    items.shuffle(&mut seed::rng_for(seed_, &[0x5b11]));
    let test = items.split_off(n_train + n_val);
    let val = items.split_off(n_train);
    Ok(Splits { train: items, val, test })
}
