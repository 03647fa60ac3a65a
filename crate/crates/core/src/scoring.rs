//! Six-way probabilities and the LAC / APS nonconformity scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{OptionLabel, OPTION_COUNT};
use crate::error::{Error, Result};

/// Tolerance on the probability-vector sum.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

/// Raw logits of the six option-letter tokens for one (model, item).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub item_id: String,
    pub model_id: String,
    pub logits: [f64; OPTION_COUNT],
}

impl LogitRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::record(
                &self.item_id,
                format!(
                    "non-finite logit {} for option {} (model `{}`)",
                    self.logits[pos],
                    OptionLabel::ALL[pos],
                    self.model_id
                ),
            ));
        }
        Ok(())
    }
}

/// A point of the six-simplex, indexed by [`OptionLabel`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; OPTION_COUNT]", into = "[f64; OPTION_COUNT]")]
pub struct ProbVector([f64; OPTION_COUNT]);

impl ProbVector {
    pub fn new(probs: [f64; OPTION_COUNT]) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument(format!(
                "probabilities must lie in [0, 1]: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(ProbVector(probs))
    }

    pub fn uniform() -> Self {
        ProbVector([1.0 / OPTION_COUNT as f64; OPTION_COUNT])
    }

    pub fn get(&self, label: OptionLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> &[f64; OPTION_COUNT] {
        &self.0
    }

    /// Highest-probability label; ties go to the earliest label.
    pub fn argmax(&self) -> OptionLabel {
        let mut best = 0;
        for i in 1..OPTION_COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        OptionLabel::ALL[best]
    }

    /// Confidence of the prediction, `max(p)`.
    pub fn confidence(&self) -> f64 {
        self.0[self.argmax().index()]
    }
}

impl TryFrom<[f64; OPTION_COUNT]> for ProbVector {
    type Error = Error;

    fn try_from(value: [f64; OPTION_COUNT]) -> Result<Self> {
        ProbVector::new(value)
    }
}

impl From<ProbVector> for [f64; OPTION_COUNT] {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// Max-shifted softmax over the six option logits.
pub fn softmax6(record: &LogitRecord) -> Result<ProbVector> {
    record.validate()?;
    let max = record
        .logits
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut exps = [0.0; OPTION_COUNT];
    for (e, l) in exps.iter_mut().zip(record.logits.iter()) {
        *e = (l - max).exp();
    }
    let total: f64 = exps.iter().sum();
    Ok(ProbVector(exps.map(|e| e / total)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreFn {
    #[serde(rename = "LAC")]
    Lac,
    #[serde(rename = "APS")]
    Aps,
}

impl ScoreFn {
    pub const ALL: [ScoreFn; 2] = [ScoreFn::Lac, ScoreFn::Aps];

    pub fn score(self, p: &ProbVector, label: OptionLabel) -> f64 {
        match self {
            ScoreFn::Lac => lac_score(p, label).value,
            ScoreFn::Aps => aps_score(p, label).value,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreFn::Lac => "LAC",
            ScoreFn::Aps => "APS",
        }
    }
}

impl fmt::Display for ScoreFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lac" => Ok(ScoreFn::Lac),
            "aps" => Ok(ScoreFn::Aps),
            _ => Err(Error::InvalidArgument(format!("unknown score function `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonconformityScore {
    pub value: f64,
    pub score_fn: ScoreFn,
}

/// `1 - p[label]`.
pub fn lac_score(p: &ProbVector, label: OptionLabel) -> NonconformityScore {
    NonconformityScore {
        value: 1.0 - p.get(label),
        score_fn: ScoreFn::Lac,
    }
}

/// Total mass of every label at least as probable as `label` (ties
/// included, compared exactly). The sum is correctly rounded, so the result
/// does not depend on summation order.
pub fn aps_score(p: &ProbVector, label: OptionLabel) -> NonconformityScore {
    let own = p.get(label);
    let mut terms = [0.0; OPTION_COUNT];
    let mut n = 0;
    for &q in p.as_array() {
        if q >= own {
            terms[n] = q;
            n += 1;
        }
    }
    NonconformityScore {
        value: exact_sum(&terms[..n]),
        score_fn: ScoreFn::Aps,
    }
}

/// Correctly rounded floating-point sum (Shewchuk partials with a
/// round-half-even fix-up on the final step).
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::with_capacity(4);
    for &value in values {
        let mut x = value;
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}
