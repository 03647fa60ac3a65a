//! Split-conformal calibration and prediction sets.

use std::collections::HashMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::data::OptionLabel;
use crate::error::{Error, Result};
use crate::scoring::{ProbVector, ScoreFn};

/// Absorbs floating-point error in `(n + 1)(1 - alpha)` before the ceiling.
const RANK_GUARD: f64 = 1e-9;

/// Calibrated threshold. `Infinite` is the sentinel used when the
/// calibration set is too small for the requested level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QHat {
    Finite(f64),
    Infinite,
}

impl QHat {
    pub fn admits(self, score: f64) -> bool {
        match self {
            QHat::Finite(q) => score <= q,
            QHat::Infinite => true,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, QHat::Infinite)
    }

    pub fn as_f64(self) -> f64 {
        match self {
            QHat::Finite(q) => q,
            QHat::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for QHat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QHat::Finite(q) => write!(f, "{q}"),
            QHat::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for QHat {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QHat::Finite(q) => serializer.serialize_f64(*q),
            QHat::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for QHat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct QHatVisitor;

        impl Visitor<'_> for QHatVisitor {
            type Value = QHat;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<QHat, E> {
                Ok(QHat::Finite(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<QHat, E> {
                Ok(QHat::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<QHat, E> {
                Ok(QHat::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<QHat, E> {
                if v == "inf" {
                    Ok(QHat::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(QHatVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalThreshold {
    pub score_fn: ScoreFn,
    pub alpha: f64,
    pub n_cal: usize,
    pub q_hat: QHat,
}

/// The 1-based order statistic `ceil((n + 1)(1 - alpha))` used as the threshold.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    ((n as f64 + 1.0) * (1.0 - alpha) - RANK_GUARD).ceil().max(1.0) as usize
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

/// Fits the threshold from calibration scores of the true labels.
pub fn calibrate(scores: &[f64], alpha: f64, score_fn: ScoreFn) -> Result<ConformalThreshold> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::Calibration("no calibration scores".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite calibration score {bad}"
        )));
    }
    let n = scores.len();
    let k = quantile_rank(n, alpha);
    let q_hat = if k > n {
        QHat::Infinite
    } else {
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        QHat::Finite(sorted[k - 1])
    };
    Ok(ConformalThreshold {
        score_fn,
        alpha,
        n_cal: n,
        q_hat,
    })
}

/// A subset of the six option labels, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);
    pub const FULL: LabelSet = LabelSet(0b11_1111);

    pub fn insert(&mut self, label: OptionLabel) {
        self.0 |= 1 << label.index();
    }

    pub fn contains(self, label: OptionLabel) -> bool {
        self.0 & (1 << label.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_superset(self, other: LabelSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn iter(self) -> impl Iterator<Item = OptionLabel> {
        OptionLabel::ALL.into_iter().filter(move |l| self.contains(*l))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl FromIterator<OptionLabel> for LabelSet {
    fn from_iter<I: IntoIterator<Item = OptionLabel>>(iter: I) -> Self {
        let mut set = LabelSet::EMPTY;
        for label in iter {
            set.insert(label);
        }
        set
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(Vec::<OptionLabel>::deserialize(deserializer)?
            .into_iter()
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub item_id: String,
    pub labels: LabelSet,
    pub score_fn: ScoreFn,
}

/// Labels whose score does not exceed the threshold.
pub fn predict_labels(p: &ProbVector, threshold: &ConformalThreshold) -> LabelSet {
    if threshold.q_hat.is_infinite() {
        return LabelSet::FULL;
    }
    OptionLabel::ALL
        .into_iter()
        .filter(|&label| threshold.q_hat.admits(threshold.score_fn.score(p, label)))
        .collect()
}

pub fn predict_set(item_id: &str, p: &ProbVector, threshold: &ConformalThreshold) -> PredictionSet {
    PredictionSet {
        item_id: item_id.to_string(),
        labels: predict_labels(p, threshold),
        score_fn: threshold.score_fn,
    }
}

/// Percentage of sets that contain their item's truth.
pub fn coverage_rate(sets: &[PredictionSet], truths: &HashMap<String, OptionLabel>) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::InvalidArgument(
            "coverage of an empty test set is undefined".into(),
        ));
    }
    let mut covered = 0usize;
    for set in sets {
        let truth = truths.get(&set.item_id).ok_or_else(|| {
            Error::record(&set.item_id, "prediction set has no ground truth")
        })?;
        if set.labels.contains(*truth) {
            covered += 1;
        }
    }
    Ok(100.0 * covered as f64 / sets.len() as f64)
}

/// Percentage of empty sets (possible under LAC).
pub fn empty_set_rate(sets: &[PredictionSet]) -> f64 {
    if sets.is_empty() {
        return 0.0;
    }
    let empty = sets.iter().filter(|s| s.labels.is_empty()).count();
    100.0 * empty as f64 / sets.len() as f64
}
