use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    /// Majority vote; ties go to the smaller label.
    #[default]
    Classify,
    /// Arithmetic mean, rounded toward negative infinity.
    Regress,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(LabelMode::Classify),
            "regress" => Ok(LabelMode::Regress),
            other => Err(Error::InvalidConfig(format!("unknown label mode `{other}`"))),
        }
    }
}

pub fn assign_label(neighbor_labels: &[i64], mode: LabelMode) -> Result<i64> {
    if neighbor_labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    match mode {
        LabelMode::Classify => {
            let mut votes = BTreeMap::new();
            for &l in neighbor_labels {
                *votes.entry(l).or_insert(0usize) += 1;
            }
            // BTreeMap iterates ascending, and max_by_key keeps the last max, so reverse.
            let (label, _) = votes.iter().rev().max_by_key(|(_, &c)| c).expect("non-empty");
            Ok(*label)
        }
        LabelMode::Regress => {
            let sum: i128 = neighbor_labels.iter().map(|&l| i128::from(l)).sum();
            let n = neighbor_labels.len() as i128;
            // nearest integer, exact halves go down
            let (q, r) = (sum.div_euclid(n), sum.rem_euclid(n));
            Ok((if 2 * r > n { q + 1 } else { q }) as i64)
        }
    }
}
