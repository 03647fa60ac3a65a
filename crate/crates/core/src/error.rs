use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A single input record failed validation.
    #[error("invalid record `{item_id}`: {reason}")]
    InvalidRecord { item_id: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Fail-fast report of every (model, item) pair without a logit record.
    #[error("missing logits for {} (model, item) pairs: {}", .0.len(), fmt_pairs(.0))]
    MissingLogits(Vec<(String, String)>),

    #[error("duplicate logit record for model `{model_id}`, item `{item_id}`")]
    DuplicateLogit { model_id: String, item_id: String },

    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),

    #[error("logit record references unknown item `{item_id}` (model `{model_id}`)")]
    UnknownItem { model_id: String, item_id: String },

    #[error("table is ragged, missing (model, dataset) cells: {}", fmt_pairs(.0))]
    RaggedTable(Vec<(String, String)>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error at line {line}: {source}")]
    JsonLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn record(item_id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidRecord {
            item_id: item_id.into(),
            reason: reason.into(),
        }
    }
}

fn fmt_pairs(pairs: &[(String, String)]) -> String {
    const SHOWN: usize = 10;
    let mut out = pairs
        .iter()
        .take(SHOWN)
        .map(|(a, b)| format!("({a}, {b})"))
        .collect::<Vec<_>>()
        .join(", ");
    if pairs.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", pairs.len() - SHOWN));
    }
    out
}
