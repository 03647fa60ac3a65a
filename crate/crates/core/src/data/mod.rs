//! Unified six-option MCQA records.
//!
//! Every benchmark is normalized into [`McqaItem`]: four substantive options
//! (A-D) followed by the two fixed distractors "I don't know" (E) and
//! "None of the above" (F). The ground truth is always one of A-D.

pub mod adapt;
pub mod prompt;
pub mod split;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adapt::{
    adapt_ai2d, adapt_mmbench, adapt_oodcv, adapt_scienceqa, adapt_seedbench, RawChoiceRecord,
    RawDigitRecord, RawSeedRecord, OOD_SCENARIOS, SEED_DIMENSIONS,
};
pub use prompt::{render_prompt, PromptTemplate, ANSWER_INSTRUCTION};
pub use split::{split, SplitAssignment, SplitRole};

/// Text of the appended option E.
pub const IDK_TEXT: &str = "I don't know";
/// Text of the appended option F.
pub const NOTA_TEXT: &str = "None of the above";

/// Number of options in every unified item.
pub const OPTION_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionLabel {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl OptionLabel {
    pub const ALL: [OptionLabel; OPTION_COUNT] = [
        OptionLabel::A,
        OptionLabel::B,
        OptionLabel::C,
        OptionLabel::D,
        OptionLabel::E,
        OptionLabel::F,
    ];

    /// The labels a ground truth may take.
    pub const SUBSTANTIVE: [OptionLabel; 4] =
        [OptionLabel::A, OptionLabel::B, OptionLabel::C, OptionLabel::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn is_substantive(self) -> bool {
        self.index() < 4
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "MMB")]
    Mmb,
    #[serde(rename = "OOD")]
    Ood,
    #[serde(rename = "SQA")]
    Sqa,
    #[serde(rename = "SB")]
    Sb,
    #[serde(rename = "AI2D")]
    Ai2d,
}

impl DatasetId {
    /// Column order used in every table.
    pub const ALL: [DatasetId; 5] = [
        DatasetId::Mmb,
        DatasetId::Ood,
        DatasetId::Sqa,
        DatasetId::Sb,
        DatasetId::Ai2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Mmb => "MMB",
            DatasetId::Ood => "OOD",
            DatasetId::Sqa => "SQA",
            DatasetId::Sb => "SB",
            DatasetId::Ai2d => "AI2D",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MMB" | "MMBENCH" => Ok(DatasetId::Mmb),
            "OOD" | "OODCV" | "OODCV-VQA" => Ok(DatasetId::Ood),
            "SQA" | "SCIENCEQA" => Ok(DatasetId::Sqa),
            "SB" | "SEEDBENCH" | "SEED-BENCH" => Ok(DatasetId::Sb),
            "AI2D" => Ok(DatasetId::Ai2d),
            _ => Err(Error::InvalidArgument(format!("unknown dataset `{s}`"))),
        }
    }
}

/// Where an option text came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Padded,
    AppendedE,
    AppendedF,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqaItem {
    pub item_id: String,
    pub dataset: DatasetId,
    /// SEEDBench dimension, OODCV scenario, or empty.
    #[serde(default)]
    pub category: String,
    pub question: String,
    pub hint: Option<String>,
    pub options: [String; OPTION_COUNT],
    pub answer: OptionLabel,
    pub provenance: [Provenance; OPTION_COUNT],
}

impl McqaItem {
    /// Builds an item from four substantive options, appending E and F.
    pub(crate) fn from_substantive(
        item_id: String,
        dataset: DatasetId,
        category: String,
        question: String,
        hint: Option<String>,
        substantive: [(String, Provenance); 4],
        answer_index: usize,
    ) -> Result<Self> {
        let answer = OptionLabel::from_index(answer_index)
            .filter(|label| label.is_substantive())
            .ok_or_else(|| Error::record(&item_id, "answer outside A-D"))?;
        let [a, b, c, d] = substantive;
        let item = McqaItem {
            item_id,
            dataset,
            category,
            question,
            hint,
            options: [
                a.0,
                b.0,
                c.0,
                d.0,
                IDK_TEXT.to_string(),
                NOTA_TEXT.to_string(),
            ],
            answer,
            provenance: [
                a.1,
                b.1,
                c.1,
                d.1,
                Provenance::AppendedE,
                Provenance::AppendedF,
            ],
        };
        item.validate()?;
        Ok(item)
    }

    pub fn option(&self, label: OptionLabel) -> &str {
        &self.options[label.index()]
    }

    /// Checks the unified-format invariants.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Err(Error::record(&self.item_id, reason));
        if self.item_id.is_empty() {
            return Err(Error::record("<empty>", "empty item_id"));
        }
        if !self.answer.is_substantive() {
            return fail("ground truth must be one of A-D");
        }
        if self.options[4] != IDK_TEXT || self.options[5] != NOTA_TEXT {
            return fail("options E/F must be the fixed texts");
        }
        if self.provenance[4] != Provenance::AppendedE || self.provenance[5] != Provenance::AppendedF
        {
            return fail("provenance of E/F must be appended_e/appended_f");
        }
        if self.provenance[..4]
            .iter()
            .any(|p| matches!(p, Provenance::AppendedE | Provenance::AppendedF))
        {
            return fail("options A-D cannot carry appended provenance");
        }
        let mut seen = HashSet::new();
        for text in &self.options[..4] {
            if !seen.insert(text.as_str()) {
                return fail(&format!("duplicate option text `{text}`"));
            }
        }
        Ok(())
    }
}

/// Validates a corpus: per-item invariants plus unique ids.
pub fn validate_corpus(items: &[McqaItem]) -> Result<()> {
    let mut ids = HashSet::new();
    for item in items {
        item.validate()?;
        if !ids.insert(item.item_id.as_str()) {
            return Err(Error::DuplicateItem(item.item_id.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item() -> McqaItem {
        McqaItem::from_substantive(
            "q1".into(),
            DatasetId::Ai2d,
            String::new(),
            "What?".into(),
            None,
            [
                ("w".into(), Provenance::Original),
                ("x".into(), Provenance::Original),
                ("y".into(), Provenance::Original),
                ("z".into(), Provenance::Padded),
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn labels_are_ordered_and_indexed() {
        assert!(OptionLabel::A < OptionLabel::F);
        for (i, label) in OptionLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(OptionLabel::from_index(i), Some(*label));
        }
        assert_eq!(OptionLabel::from_index(6), None);
        assert_eq!(OptionLabel::E.letter(), 'E');
    }

    #[test]
    fn json_schema_matches_unified_format() {
        let json = serde_json::to_value(item()).unwrap();
        assert_eq!(json["dataset"], "AI2D");
        assert_eq!(json["answer"], "B");
        assert_eq!(json["hint"], serde_json::Value::Null);
        assert_eq!(json["options"][4], "I don't know");
        assert_eq!(json["options"][5], "None of the above");
        assert_eq!(json["provenance"][3], "padded");
        assert_eq!(json["provenance"][4], "appended_e");
        let back: McqaItem = serde_json::from_value(json).unwrap();
        assert_eq!(back, item());
    }

    #[test]
    fn rejects_truth_outside_substantive_options() {
        let mut bad = item();
        bad.answer = OptionLabel::E;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_duplicate_substantive_texts() {
        let mut bad = item();
        bad.options[2] = "w".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_altered_fixed_options() {
        let mut bad = item();
        bad.options[5] = "none of these".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn corpus_ids_must_be_unique() {
        let err = validate_corpus(&[item(), item()]).unwrap_err();
        assert!(matches!(err, Error::DuplicateItem(id) if id == "q1"));
    }

    #[test]
    fn dataset_names_parse() {
        assert_eq!("mmb".parse::<DatasetId>().unwrap(), DatasetId::Mmb);
        assert_eq!("SEEDBench".parse::<DatasetId>().unwrap(), DatasetId::Sb);
        assert!("vqav2".parse::<DatasetId>().is_err());
    }
}
