//! Zero-shot prompt rendering.

use super::{McqaItem, OptionLabel};
use crate::error::{Error, Result};

/// Instruction line closing every prompt body.
pub const ANSWER_INSTRUCTION: &str =
    "Answer with the option's letter from the given choices directly.";

/// Placeholder replaced by the rendered body.
pub const BODY_PLACEHOLDER: &str = "{BODY}";

/// A model-specific chat wrapper around the prompt body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    wrapper: String,
}

impl PromptTemplate {
    /// The wrapper must contain [`BODY_PLACEHOLDER`] exactly once.
    pub fn new(wrapper: impl Into<String>) -> Result<Self> {
        let wrapper = wrapper.into();
        match wrapper.matches(BODY_PLACEHOLDER).count() {
            1 => Ok(PromptTemplate { wrapper }),
            0 => Err(Error::Config(format!(
                "prompt template has no {BODY_PLACEHOLDER} placeholder"
            ))),
            n => Err(Error::Config(format!(
                "prompt template has {n} {BODY_PLACEHOLDER} placeholders, expected one"
            ))),
        }
    }

    /// Identity wrapper: the body alone.
    pub fn plain() -> Self {
        PromptTemplate {
            wrapper: BODY_PLACEHOLDER.to_string(),
        }
    }
}

/// Question, optional hint, six lettered options, then the instruction.
pub fn render_body(item: &McqaItem) -> String {
    let mut lines = Vec::with_capacity(9);
    lines.push(item.question.clone());
    if let Some(hint) = item.hint.as_deref().filter(|h| !h.trim().is_empty()) {
        lines.push(hint.to_string());
    }
    for label in OptionLabel::ALL {
        lines.push(format!("{}. {}", label.letter(), item.option(label)));
    }
    lines.push(ANSWER_INSTRUCTION.to_string());
    lines.join("\n")
}

pub fn render_prompt(item: &McqaItem, template: &PromptTemplate) -> String {
    template
        .wrapper
        .replacen(BODY_PLACEHOLDER, &render_body(item), 1)
}
