use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sequence indices of each part.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Parts left empty despite a nonzero ratio.
    pub warnings: Vec<String>,
}

/// Seeded shuffle of `0..n` cut into train/val/test. Validation and test
/// sizes are rounded from their ratios; train takes the rest.
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative")));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} do not sum to 1")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n);
    let n_test = ((n as f64 * ratios[2]).round() as usize).min(n - n_val);
    let n_train = n - n_val - n_test;

    let mut out = Split {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
        warnings: Vec::new(),
    };
    for (name, part, r) in [
        ("train", &out.train, ratios[0]),
        ("val", &out.val, ratios[1]),
        ("test", &out.test, ratios[2]),
    ] {
        if part.is_empty() && r > 0.0 {
            out.warnings.push(format!("{name} split is empty at ratio {r}"));
        }
    }
    Ok(out)
}
