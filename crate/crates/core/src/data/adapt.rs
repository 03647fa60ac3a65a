//! Adapters from post-read benchmark records to [`McqaItem`].
//!
//! Source-format parsing is out of scope; each adapter consumes the record
//! shape its reader produces. All randomness comes from a single ChaCha8
//! stream seeded by the caller and consumed in corpus order, so an adapter
//! run is a pure function of `(records, seed)`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetId, McqaItem, Provenance};
use crate::error::{Error, Result};

/// Seeded draws allowed per padding slot before the record is rejected.
const MAX_PAD_DRAWS: usize = 100;

/// The seven OODCV-VQA scenarios, in canonical spelling.
pub const OOD_SCENARIOS: [&str; 7] = [
    "Weather",
    "Context",
    "Occlusion",
    "IID",
    "Texture",
    "Shape",
    "Pose",
];

/// SEEDBench evaluation dimensions 1-12; only 1-9 are image questions.
pub const SEED_DIMENSIONS: [&str; 12] = [
    "Scene Understanding",
    "Instance Identity",
    "Instance Attribute",
    "Instance Location",
    "Instances Counting",
    "Spatial Relation",
    "Instance Interaction",
    "Visual Reasoning",
    "Text Understanding",
    "Action Recognition",
    "Action Prediction",
    "Procedure Understanding",
];

const LAST_IMAGE_DIMENSION: u32 = 9;

/// A free-text multiple-choice record (MMBench, ScienceQA, AI2D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawChoiceRecord {
    pub item_id: String,
    pub question: String,
    #[serde(default)]
    pub hint: Option<String>,
    pub options: Vec<String>,
    /// Zero-based index of the correct option.
    pub answer: usize,
}

/// An OODCV-VQA "Digits" record: digit options and a scenario tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDigitRecord {
    pub item_id: String,
    pub question: String,
    pub scenario: String,
    pub options: Vec<String>,
    pub answer: usize,
}

/// A SEEDBench record carrying its evaluation dimension (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeedRecord {
    pub item_id: String,
    pub question: String,
    #[serde(default)]
    pub dimension: Option<u32>,
    pub options: Vec<String>,
    pub answer: usize,
}

/// Incorrect options of every record, tagged with the owning record index.
struct PadPool {
    entries: Vec<(usize, String)>,
}

impl PadPool {
    fn from_records(records: &[RawChoiceRecord]) -> Self {
        let entries = records
            .iter()
            .enumerate()
            .flat_map(|(idx, rec)| {
                rec.options
                    .iter()
                    .enumerate()
                    .filter(move |(i, _)| *i != rec.answer)
                    .map(move |(_, text)| (idx, text.clone()))
            })
            .collect();
        PadPool { entries }
    }

    /// Fills `options` up to four with texts drawn from other records.
    fn pad(
        &self,
        owner: usize,
        item_id: &str,
        options: &mut Vec<(String, Provenance)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        while options.len() < 4 {
            let mut picked = None;
            if !self.entries.is_empty() {
                for _ in 0..MAX_PAD_DRAWS {
                    let (src, text) = &self.entries[rng.random_range(0..self.entries.len())];
                    if *src == owner || options.iter().any(|(t, _)| t == text) {
                        continue;
                    }
                    picked = Some(text.clone());
                    break;
                }
            }
            let text = picked.ok_or_else(|| {
                Error::record(
                    item_id,
                    format!("no non-duplicate padding option found in {MAX_PAD_DRAWS} draws"),
                )
            })?;
            options.push((text, Provenance::Padded));
        }
        Ok(())
    }
}

fn originals(options: &[String]) -> Vec<(String, Provenance)> {
    options
        .iter()
        .map(|t| (t.clone(), Provenance::Original))
        .collect()
}

fn into_four(item_id: &str, options: Vec<(String, Provenance)>) -> Result<[(String, Provenance); 4]> {
    options
        .try_into()
        .map_err(|v: Vec<_>| Error::record(item_id, format!("expected 4 options, got {}", v.len())))
}

fn check_answer_index(item_id: &str, answer: usize, n_options: usize) -> Result<()> {
    if answer >= n_options {
        return Err(Error::record(
            item_id,
            format!("answer index {answer} out of range for {n_options} options"),
        ));
    }
    Ok(())
}

fn normalized_hint(hint: &Option<String>) -> Option<String> {
    hint.as_ref()
        .filter(|h| !h.trim().is_empty())
        .cloned()
}

/// MMBench dev split: pads every question to four options with incorrect
/// options sampled from other questions of the same corpus.
pub fn adapt_mmbench(records: &[RawChoiceRecord], seed: u64) -> Result<Vec<McqaItem>> {
    let pool = PadPool::from_records(records);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .enumerate()
        .map(|(idx, rec)| {
            let n = rec.options.len();
            if n == 0 || n > 4 {
                return Err(Error::record(
                    &rec.item_id,
                    format!("expected 1-4 options, got {n}"),
                ));
            }
            check_answer_index(&rec.item_id, rec.answer, n)?;
            let mut options = originals(&rec.options);
            pool.pad(idx, &rec.item_id, &mut options, &mut rng)?;
            McqaItem::from_substantive(
                rec.item_id.clone(),
                DatasetId::Mmb,
                String::new(),
                rec.question.clone(),
                normalized_hint(&rec.hint),
                into_four(&rec.item_id, options)?,
                rec.answer,
            )
        })
        .collect()
}

/// OODCV-VQA digits: pads to four options with unused digits from 0-5.
pub fn adapt_oodcv(records: &[RawDigitRecord], seed: u64) -> Result<Vec<McqaItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .map(|rec| {
            let id = rec.item_id.as_str();
            let n = rec.options.len();
            if n == 0 || n > 4 {
                return Err(Error::record(id, format!("expected 1-4 options, got {n}")));
            }
            check_answer_index(id, rec.answer, n)?;
            let answer_digit = parse_digit(rec.options[rec.answer].trim());
            if !matches!(answer_digit, Some(0..=5)) {
                return Err(Error::record(
                    id,
                    format!("correct answer `{}` is not a digit 0-5", rec.options[rec.answer]),
                ));
            }
            let mut used = Vec::with_capacity(4);
            for text in &rec.options {
                match parse_digit(text.trim()) {
                    Some(d @ 0..=5) if !used.contains(&d) => used.push(d),
                    Some(d @ 0..=5) => {
                        return Err(Error::record(id, format!("duplicate option `{d}`")))
                    }
                    _ => {
                        return Err(Error::record(
                            id,
                            format!("option `{text}` is not a digit string 0-5"),
                        ))
                    }
                }
            }
            let scenario = OOD_SCENARIOS
                .iter()
                .find(|s| s.eq_ignore_ascii_case(rec.scenario.trim()))
                .ok_or_else(|| Error::record(id, format!("unknown scenario `{}`", rec.scenario)))?;

            let mut candidates: Vec<u32> = (0..=5).filter(|d| !used.contains(d)).collect();
            let mut options: Vec<(String, Provenance)> = used
                .iter()
                .map(|d| (d.to_string(), Provenance::Original))
                .collect();
            while options.len() < 4 {
                let pick = candidates.remove(rng.random_range(0..candidates.len()));
                options.push((pick.to_string(), Provenance::Padded));
            }
            McqaItem::from_substantive(
                rec.item_id.clone(),
                DatasetId::Ood,
                scenario.to_string(),
                rec.question.clone(),
                None,
                into_four(id, options)?,
                rec.answer,
            )
        })
        .collect()
}

fn parse_digit(text: &str) -> Option<u32> {
    if text.len() == 1 {
        text.chars().next()?.to_digit(10)
    } else {
        None
    }
}

/// ScienceQA (pre-filtered to image, closed-choice questions): pads short
/// questions like MMBench and deletes one incorrect option from
/// five-option questions.
pub fn adapt_scienceqa(records: &[RawChoiceRecord], seed: u64) -> Result<Vec<McqaItem>> {
    let pool = PadPool::from_records(records);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .enumerate()
        .map(|(idx, rec)| {
            let id = rec.item_id.as_str();
            let n = rec.options.len();
            if n == 0 || n > 5 {
                return Err(Error::record(id, format!("expected 1-5 options, got {n}")));
            }
            check_answer_index(id, rec.answer, n)?;
            let mut options = originals(&rec.options);
            let mut answer = rec.answer;
            if n == 5 {
                let correct = &rec.options[rec.answer];
                let deletable: Vec<usize> = (0..n)
                    .filter(|&i| i != rec.answer && &rec.options[i] != correct)
                    .collect();
                if deletable.is_empty() {
                    return Err(Error::record(id, "no incorrect option available for deletion"));
                }
                let removed = deletable[rng.random_range(0..deletable.len())];
                options.remove(removed);
                if removed < answer {
                    answer -= 1;
                }
            } else {
                pool.pad(idx, id, &mut options, &mut rng)?;
            }
            McqaItem::from_substantive(
                rec.item_id.clone(),
                DatasetId::Sqa,
                String::new(),
                rec.question.clone(),
                normalized_hint(&rec.hint),
                into_four(id, options)?,
                answer,
            )
        })
        .collect()
}

/// SEEDBench: keeps image dimensions 1-9, tagging each item with its
/// dimension name.
pub fn adapt_seedbench(records: &[RawSeedRecord]) -> Result<Vec<McqaItem>> {
    let mut out = Vec::new();
    for rec in records {
        let id = rec.item_id.as_str();
        let dim = rec
            .dimension
            .ok_or_else(|| Error::record(id, "missing dimension index"))?;
        if !(1..=SEED_DIMENSIONS.len() as u32).contains(&dim) {
            return Err(Error::record(id, format!("dimension {dim} outside 1-12")));
        }
        if dim > LAST_IMAGE_DIMENSION {
            continue;
        }
        if rec.options.len() != 4 {
            return Err(Error::record(
                id,
                format!("expected 4 options, got {}", rec.options.len()),
            ));
        }
        check_answer_index(id, rec.answer, 4)?;
        out.push(McqaItem::from_substantive(
            rec.item_id.clone(),
            DatasetId::Sb,
            SEED_DIMENSIONS[dim as usize - 1].to_string(),
            rec.question.clone(),
            None,
            into_four(id, originals(&rec.options))?,
            rec.answer,
        )?);
    }
    Ok(out)
}

/// AI2D: already four options; only E/F are appended.
pub fn adapt_ai2d(records: &[RawChoiceRecord]) -> Result<Vec<McqaItem>> {
    records
        .iter()
        .map(|rec| {
            let id = rec.item_id.as_str();
            if rec.options.len() != 4 {
                return Err(Error::record(
                    id,
                    format!("expected exactly 4 options, got {}", rec.options.len()),
                ));
            }
            check_answer_index(id, rec.answer, 4)?;
            McqaItem::from_substantive(
                rec.item_id.clone(),
                DatasetId::Ai2d,
                String::new(),
                rec.question.clone(),
                normalized_hint(&rec.hint),
                into_four(id, originals(&rec.options))?,
                rec.answer,
            )
        })
        .collect()
}

/// Unique incorrect option texts across a corpus; used by tests and audits.
pub fn incorrect_option_texts(records: &[RawChoiceRecord]) -> HashSet<String> {
    PadPool::from_records(records)
        .entries
        .into_iter()
        .map(|(_, t)| t)
        .collect()
}
