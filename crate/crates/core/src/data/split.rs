//! Seeded calibration/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::McqaItem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Calibration,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub item_id: String,
    pub role: SplitRole,
    pub seed: u64,
    pub calibration_fraction: f64,
}

/// Number of calibration items for a corpus of `n`.
pub fn calibration_count(n: usize, calibration_fraction: f64) -> usize {
    ((calibration_fraction * n as f64).round() as usize).min(n)
}

pub fn check_fraction(calibration_fraction: f64) -> Result<()> {
    if calibration_fraction > 0.0 && calibration_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "calibration fraction {calibration_fraction} outside (0, 1)"
        )))
    }
}

/// Shuffles item ids (sorted first, so input order is irrelevant) and
/// assigns the first `round(fraction * n)` to calibration. No stratification.
///
/// Assignments are returned in input order.
pub fn split(items: &[McqaItem], seed: u64, calibration_fraction: f64) -> Result<Vec<SplitAssignment>> {
    check_fraction(calibration_fraction)?;
    if items.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty corpus".into()));
    }
    let ids: Vec<&str> = items.iter().map(|i| i.item_id.as_str()).collect();
    let roles = split_ids(&ids, seed, calibration_fraction);
    Ok(items
        .iter()
        .zip(roles)
        .map(|(item, role)| SplitAssignment {
            item_id: item.item_id.clone(),
            role,
            seed,
            calibration_fraction,
        })
        .collect())
}

/// Role for each id, aligned with `ids`.
pub(crate) fn split_ids(ids: &[&str], seed: u64, calibration_fraction: f64) -> Vec<SplitRole> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_cal = calibration_count(ids.len(), calibration_fraction);
    let mut roles = vec![SplitRole::Test; ids.len()];
    for &idx in &order[..n_cal] {
        roles[idx] = SplitRole::Calibration;
    }
    roles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::stub_item;
    use crate::data::DatasetId;

    fn items(n: usize) -> Vec<McqaItem> {
        (0..n).map(|i| stub_item(DatasetId::Mmb, &format!("i{i:03}"), "", 0)).collect()
    }

    fn count(assign: &[SplitAssignment], role: SplitRole) -> usize {
        assign.iter().filter(|a| a.role == role).count()
    }

    #[test]
    fn half_split_of_hundred() {
        let a = split(&items(100), 3, 0.5).unwrap();
        assert_eq!(count(&a, SplitRole::Calibration), 50);
        assert_eq!(count(&a, SplitRole::Test), 50);
    }

    #[test]
    fn tenth_of_ten_is_one_calibration_item() {
        let a = split(&items(10), 3, 0.1).unwrap();
        assert_eq!(count(&a, SplitRole::Calibration), 1);
        assert_eq!(count(&a, SplitRole::Test), 9);
    }

    #[test]
    fn same_seed_same_assignment_regardless_of_order() {
        let corpus = items(40);
        let a = split(&corpus, 17, 0.3).unwrap();
        let b = split(&corpus, 17, 0.3).unwrap();
        assert_eq!(a, b);

        let mut reversed = corpus.clone();
        reversed.reverse();
        let c = split(&reversed, 17, 0.3).unwrap();
        for x in &a {
            let y = c.iter().find(|y| y.item_id == x.item_id).unwrap();
            assert_eq!(x.role, y.role);
        }
    }

    #[test]
    fn different_seeds_differ() {
        let corpus = items(40);
        assert_ne!(split(&corpus, 1, 0.5).unwrap(), split(&corpus, 2, 0.5).unwrap());
    }

    #[test]
    fn fraction_must_be_open_unit_interval() {
        assert!(split(&items(4), 0, 0.0).is_err());
        assert!(split(&items(4), 0, 1.0).is_err());
        assert!(split(&items(4), 0, -0.2).is_err());
        assert!(split(&[], 0, 0.5).is_err());
    }
}
