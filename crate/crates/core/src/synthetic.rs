//! Synthetic six-way classifiers with known calibration, plus a brute-force
//! conformal oracle used to cross-check the calibrated pipeline.
//!
//! For each item a four-way probability vector is drawn from a Dirichlet
//! centered on a random "favored" option, a hidden label is drawn from that
//! vector, and the vector is relabeled so the hidden label lands on the item's
//! ground truth. The resulting predictor is calibrated by construction while
//! every model still sees the same truths. Options E and F get a fixed
//! sliver of mass, and logits are `ln(p) / miscalibration`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::conformal::{LabelSet, QHat};
use crate::data::{DatasetId, McqaItem, OptionLabel, Provenance, OPTION_COUNT};
use crate::error::{Error, Result};
use crate::scoring::{softmax6, LogitRecord, ProbVector, ScoreFn};

/// Probability given to each of E and F before relabeling.
pub const EF_MASS: f64 = 1e-4;

/// Lower bound on any generated probability, keeps logits finite.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub model_id: String,
    /// Mean probability on the favored option; accuracy approaches this as
    /// `sharpness` goes to zero.
    pub target_accuracy: f64,
    /// Inverse Dirichlet concentration. Large values push vectors toward one-hot.
    pub sharpness: f64,
    /// Logit temperature; 1.0 keeps the model calibrated.
    #[serde(default = "one")]
    pub miscalibration: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticModelSpec {
    pub fn calibrated(model_id: &str, target_accuracy: f64, sharpness: f64, seed: u64) -> Self {
        SyntheticModelSpec {
            model_id: model_id.to_string(),
            target_accuracy,
            sharpness,
            miscalibration: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidArgument(format!(
                "synthetic model `{}`: {what}",
                self.model_id
            )))
        };
        if self.model_id.is_empty() {
            return bad("empty model_id");
        }
        if !(self.target_accuracy > 0.0 && self.target_accuracy < 1.0) {
            return bad("target_accuracy must lie in (0, 1)");
        }
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return bad("sharpness must be positive and finite");
        }
        if !(self.miscalibration.is_finite() && self.miscalibration > 0.0) {
            return bad("miscalibration must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    /// Seeds the ground truths, which every model shares.
    pub seed: u64,
    #[serde(default = "default_datasets")]
    pub datasets: Vec<DatasetId>,
    /// Assigned round-robin to items; empty leaves items uncategorized.
    #[serde(default)]
    pub categories: Vec<String>,
    pub models: Vec<SyntheticModelSpec>,
}

fn default_datasets() -> Vec<DatasetId> {
    vec![DatasetId::Mmb]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub items: Vec<McqaItem>,
    pub logits: Vec<LogitRecord>,
}

/// Placeholder item with generic option texts.
///
/// # Panics
///
/// If `answer_index` is not in `0..4`.
pub fn stub_item(dataset: DatasetId, item_id: &str, category: &str, answer_index: usize) -> McqaItem {
    McqaItem::from_substantive(
        item_id.to_string(),
        dataset,
        category.to_string(),
        format!("Synthetic question {item_id}"),
        None,
        ["Option 1", "Option 2", "Option 3", "Option 4"].map(|t| (t.to_string(), Provenance::Original)),
        answer_index,
    )
    .expect("stub answer index must be in 0..4")
}

/// Single-model corpus of `n_items` items on MMB.
pub fn generate(spec: &SyntheticModelSpec, n_items: usize) -> Result<SyntheticCorpus> {
    generate_corpus(
        &SyntheticCorpusSpec {
            seed: spec.seed,
            datasets: default_datasets(),
            categories: Vec::new(),
            models: vec![spec.clone()],
        },
        n_items,
    )
}

/// `n_per_dataset` items for every dataset, with logits for every model.
pub fn generate_corpus(spec: &SyntheticCorpusSpec, n_per_dataset: usize) -> Result<SyntheticCorpus> {
    if n_per_dataset == 0 {
        return Err(Error::InvalidArgument("n_items must be at least 1".into()));
    }
    if spec.models.is_empty() {
        return Err(Error::InvalidArgument("synthetic corpus needs at least one model".into()));
    }
    if spec.datasets.is_empty() {
        return Err(Error::InvalidArgument("synthetic corpus needs at least one dataset".into()));
    }
    for model in &spec.models {
        model.validate()?;
    }

    let mut items = Vec::with_capacity(n_per_dataset * spec.datasets.len());
    let mut logits = Vec::with_capacity(items.capacity() * spec.models.len());
    for (ds_idx, &dataset) in spec.datasets.iter().enumerate() {
        let mut truth_rng = stream(spec.seed, 2 * ds_idx as u64);
        let truths: Vec<usize> = (0..n_per_dataset).map(|_| truth_rng.random_range(0..4)).collect();
        let ids: Vec<String> = (0..n_per_dataset).map(|i| format!("{dataset}-{i:06}")).collect();
        for (i, (id, &truth)) in ids.iter().zip(&truths).enumerate() {
            let category = if spec.categories.is_empty() {
                ""
            } else {
                &spec.categories[i % spec.categories.len()]
            };
            items.push(stub_item(dataset, id, category, truth));
        }
        for model in &spec.models {
            let mut rng = stream(model.seed, 2 * ds_idx as u64 + 1);
            for (id, &truth) in ids.iter().zip(&truths) {
                logits.push(LogitRecord {
                    item_id: id.clone(),
                    model_id: model.model_id.clone(),
                    logits: draw_logits(&mut rng, model, truth),
                });
            }
        }
    }
    Ok(SyntheticCorpus { items, logits })
}

/// Fast path for Monte-Carlo work: `n` (probabilities, truth) pairs without
/// building items. Truths are uniform on A-D; `replication` picks the stream.
pub fn sample(spec: &SyntheticModelSpec, n: usize, replication: u64) -> Result<Vec<(ProbVector, OptionLabel)>> {
    spec.validate()?;
    let mut rng = stream(spec.seed, replication);
    (0..n)
        .map(|_| {
            let truth = rng.random_range(0..4);
            let record = LogitRecord {
                item_id: String::new(),
                model_id: String::new(),
                logits: draw_logits(&mut rng, spec, truth),
            };
            Ok((softmax6(&record)?, OptionLabel::SUBSTANTIVE[truth]))
        })
        .collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_logits(rng: &mut ChaCha8Rng, spec: &SyntheticModelSpec, truth: usize) -> [f64; OPTION_COUNT] {
    let favored = rng.random_range(0..4);
    let rest = (1.0 - spec.target_accuracy) / 3.0;
    let scale = 4.0 / spec.sharpness;
    let mut concentration = [rest * scale; 4];
    concentration[favored] = spec.target_accuracy * scale;
    let p = dirichlet(rng, &concentration);

    let u: f64 = rng.random();
    let mut hidden = 3;
    let mut acc = 0.0;
    for (j, &pj) in p.iter().enumerate() {
        acc += pj;
        if u < acc {
            hidden = j;
            break;
        }
    }

    // Uniform permutation of A-D conditioned on hidden -> truth.
    let mut others: Vec<usize> = (0..4).filter(|&j| j != truth).collect();
    for i in (1..others.len()).rev() {
        let j = rng.random_range(0..=i);
        others.swap(i, j);
    }
    let mut relabeled = [0.0; 4];
    relabeled[truth] = p[hidden];
    let mut slot = others.into_iter();
    for (j, &pj) in p.iter().enumerate() {
        if j != hidden {
            relabeled[slot.next().expect("three remaining slots")] = pj;
        }
    }

    let mut p6 = [EF_MASS; OPTION_COUNT];
    for j in 0..4 {
        p6[j] = (1.0 - 2.0 * EF_MASS) * relabeled[j];
    }
    p6.map(|x| x.max(PROB_FLOOR).ln() / spec.miscalibration)
}

/// Dirichlet draw computed in log space so tiny concentrations stay exact:
/// `ln G(a) = ln G(a + 1) + ln(U) / a`.
fn dirichlet(rng: &mut ChaCha8Rng, concentration: &[f64; 4]) -> [f64; 4] {
    let mut log_g = [0.0; 4];
    for (lg, &a) in log_g.iter_mut().zip(concentration) {
        let g: f64 = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        *lg = g.ln() + u.ln() / a;
    }
    let max = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = log_g.map(|lg| (lg - max).exp());
    let total: f64 = w.iter().sum();
    w.map(|x| x / total)
}

/// Exhaustive conformal oracle. Tries every calibration score and `+inf` as
/// the threshold, keeps the smallest one covering at least
/// `ceil((n + 1)(1 - alpha))` calibration points, then evaluates each test
/// label directly. Quadratic in `n`; meant for `n <= 1000`.
pub fn brute_force_sets(
    cal_probs: &[ProbVector],
    cal_truths: &[OptionLabel],
    test_probs: &[ProbVector],
    alpha: f64,
    score_fn: ScoreFn,
) -> (QHat, Vec<LabelSet>) {
    let scores: Vec<f64> = cal_probs
        .iter()
        .zip(cal_truths)
        .map(|(p, &y)| oracle_score(p.as_array(), y.index(), score_fn))
        .collect();
    let n = scores.len();
    let target = (n as f64 + 1.0) * (1.0 - alpha);
    let mut needed = 0usize;
    while (needed as f64) < target - 1e-9 {
        needed += 1;
    }

    let mut best: Option<f64> = None;
    if needed <= n {
        for &t in &scores {
            let covered = scores.iter().filter(|&&s| s <= t).count();
            if covered >= needed && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }

    let sets = test_probs
        .iter()
        .map(|p| {
            let mut set = LabelSet::EMPTY;
            for y in 0..OPTION_COUNT {
                let keep = match best {
                    None => true,
                    Some(q) => oracle_score(p.as_array(), y, score_fn) <= q,
                };
                if keep {
                    set.insert(OptionLabel::ALL[y]);
                }
            }
            set
        })
        .collect();
    let q_hat = best.map_or(QHat::Infinite, QHat::Finite);
    (q_hat, sets)
}

fn oracle_score(p: &[f64; OPTION_COUNT], y: usize, score_fn: ScoreFn) -> f64 {
    match score_fn {
        ScoreFn::Lac => 1.0 - p[y],
        ScoreFn::Aps => {
            let mut acc = FixedSum::default();
            for &q in p.iter().rev() {
                if q >= p[y] {
                    acc.add(q);
                }
            }
            acc.round()
        }
    }
}

/// Exact sum of non-negative doubles no larger than 2^10, held as a
/// fixed-point integer in units of 2^-1074 and rounded once at the end.
#[derive(Default)]
struct FixedSum {
    limbs: [u64; 18],
}

impl FixedSum {
    fn add(&mut self, x: f64) {
        debug_assert!((0.0..=1024.0).contains(&x));
        let bits = x.to_bits();
        let exp = (bits >> 52) & 0x7ff;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, shift) = if exp == 0 {
            (frac, 0)
        } else {
            (frac | (1u64 << 52), exp as usize - 1)
        };
        let wide = (mant as u128) << (shift % 64);
        let parts = [wide as u64, (wide >> 64) as u64];
        let mut carry = 0u128;
        for (k, idx) in (shift / 64..self.limbs.len()).enumerate() {
            let add = parts.get(k).copied().unwrap_or(0) as u128;
            if k >= parts.len() && carry == 0 {
                break;
            }
            let total = self.limbs[idx] as u128 + add + carry;
            self.limbs[idx] = total as u64;
            carry = total >> 64;
        }
    }

    fn bit(&self, i: usize) -> bool {
        (self.limbs[i / 64] >> (i % 64)) & 1 == 1
    }

    fn any_below(&self, i: usize) -> bool {
        let full = i / 64;
        if self.limbs[..full].iter().any(|&l| l != 0) {
            return true;
        }
        let rem = i % 64;
        rem > 0 && self.limbs[full] & ((1u64 << rem) - 1) != 0
    }

    fn round(&self) -> f64 {
        let Some(top) = (0..self.limbs.len()).rev().find(|&i| self.limbs[i] != 0) else {
            return 0.0;
        };
        let high = top * 64 + 63 - self.limbs[top].leading_zeros() as usize;
        let tiny = f64::from_bits(1);
        if high < 53 {
            return self.limbs[0] as f64 * tiny;
        }
        let mut mant = 0u64;
        for i in (high - 52..=high).rev() {
            mant = (mant << 1) | self.bit(i) as u64;
        }
        let round_bit = self.bit(high - 53);
        let sticky = high >= 54 && self.any_below(high - 53);
        let mut high = high;
        if round_bit && (sticky || mant & 1 == 1) {
            mant += 1;
            if mant == 1u64 << 53 {
                mant >>= 1;
                high += 1;
            }
        }
        let unit = mant as f64 / (1u64 << 52) as f64;
        let scale = f64::from_bits(((high as i64 - 1074 + 1023) as u64) << 52);
        unit * scale
    }
}
