use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::labels::LabelState;
use crate::error::{Error, Result};
use crate::rng;

/// Disjoint train / validation / test node sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Fractions of labelled nodes assigned to each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.05,
            val: 0.10,
            test: 0.60,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("val", self.val),
            ("test", self.test),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Validation(format!(
                    "{name} fraction {f} outside (0, 1]"
                )));
            }
        }
        let total = self.train + self.val + self.test;
        if total > 1.0 + 1e-12 {
            return Err(Error::Validation(format!(
                "split fractions sum to {total} > 1"
            )));
        }
        Ok(())
    }
}

/// Stratified random split of the labelled nodes.
///
/// Per class, nodes are shuffled and the first `round(f * class_size)` go to
/// train, the next to validation, the next to test.
pub fn make_splits(
    labels: &LabelState,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitMasks> {
    fractions.validate()?;
    let mut rng = rng::stream(seed, "splits");
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.classes()];
    for (i, y) in labels.supervising() {
        by_class[y].push(i);
    }
    let mut masks = SplitMasks {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut nodes) in by_class.into_iter().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        nodes.shuffle(&mut rng);
        let size = nodes.len();
        let take = |f: f64, left: usize| ((f * size as f64).round() as usize).min(left);
        let n_train = take(fractions.train, size);
        let n_val = take(fractions.val, size - n_train);
        let n_test = take(fractions.test, size - n_train - n_val);
        if n_train == 0 {
            return Err(Error::Validation(format!(
                "class {class} receives no training nodes ({size} labelled)"
            )));
        }
        masks.train.extend_from_slice(&nodes[..n_train]);
        masks
            .validation
            .extend_from_slice(&nodes[n_train..n_train + n_val]);
        masks
            .test
            .extend_from_slice(&nodes[n_train + n_val..n_train + n_val + n_test]);
    }
    masks.train.sort_unstable();
    masks.validation.sort_unstable();
    masks.test.sort_unstable();
    Ok(masks)
}
