//! End-to-end evaluation: join, split, calibrate, predict, score.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::{calibrate, check_alpha, predict_set, ConformalThreshold, QHat};
use crate::data::split::{check_fraction, split_ids};
use crate::data::{validate_corpus, DatasetId, McqaItem, OptionLabel, SplitRole};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::metrics::{compute_row, mean_row, MetricsRow, ScoreView, DEFAULT_BINS};
use crate::scoring::{softmax6, LogitRecord, ProbVector, ScoreFn};

/// How category breakdowns obtain their thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CategoryCalibration {
    /// Recalibrate on the calibration members of each category.
    #[default]
    PerCategory,
    /// Reuse the cell's threshold and slice the test set.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    pub calibration_fraction: f64,
    pub seed: u64,
    pub score_fns: Vec<ScoreFn>,
    /// Empty selects every dataset present in the corpus.
    pub datasets: Vec<DatasetId>,
    /// Empty selects every model present in the logits.
    pub models: Vec<String>,
    pub category_breakdown: bool,
    pub category_calibration: CategoryCalibration,
    pub sweep_fractions: Option<Vec<f64>>,
    pub m_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.1,
            calibration_fraction: 0.5,
            seed: 0,
            score_fns: ScoreFn::ALL.to_vec(),
            datasets: Vec::new(),
            models: Vec::new(),
            category_breakdown: false,
            category_calibration: CategoryCalibration::PerCategory,
            sweep_fractions: None,
            m_bins: DEFAULT_BINS,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_fraction(self.calibration_fraction)?;
        if self.score_fns.is_empty() {
            return Err(Error::Config("at least one score function is required".into()));
        }
        if self.m_bins == 0 {
            return Err(Error::Config("m_bins must be at least 1".into()));
        }
        for &f in self.sweep_fractions.iter().flatten() {
            check_fraction(f)?;
        }
        Ok(())
    }

    fn sorted_score_fns(&self) -> Vec<ScoreFn> {
        let set: BTreeSet<ScoreFn> = self.score_fns.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// Result of one category within a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CategoryOutcome {
    Evaluated {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        threshold: Option<ConformalThreshold>,
        metrics: MetricsRow,
    },
    /// The category has test items but no calibration items.
    InsufficientCalibration { n_test: usize },
    NoTestItems { n_cal: usize },
}

impl CategoryOutcome {
    pub fn n_test(&self) -> usize {
        match self {
            CategoryOutcome::Evaluated { metrics, .. } => metrics.n_test,
            CategoryOutcome::InsufficientCalibration { n_test } => *n_test,
            CategoryOutcome::NoTestItems { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model_id: String,
    pub dataset_id: DatasetId,
    pub score_fn: ScoreView,
    /// Absent for MEAN cells.
    pub threshold: Option<ConformalThreshold>,
    pub metrics: MetricsRow,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_category: Option<BTreeMap<String, CategoryOutcome>>,
}

/// Everything needed to evaluate one (model, dataset) pair.
#[derive(Debug, Clone)]
pub struct CellInputs<'a> {
    pub model_id: String,
    pub dataset: DatasetId,
    pub items: Vec<&'a McqaItem>,
    pub probs: Vec<ProbVector>,
    pub roles: Vec<SplitRole>,
}

impl CellInputs<'_> {
    fn indices(&self, role: SplitRole, category: Option<&str>) -> Vec<usize> {
        (0..self.items.len())
            .filter(|&i| self.roles[i] == role)
            .filter(|&i| category.is_none_or(|c| self.items[i].category == c))
            .collect()
    }

    fn fit(&self, idx: &[usize], score_fn: ScoreFn, alpha: f64) -> Result<ConformalThreshold> {
        let scores: Vec<f64> = idx
            .iter()
            .map(|&i| score_fn.score(&self.probs[i], self.items[i].answer))
            .collect();
        calibrate(&scores, alpha, score_fn)
    }

    fn row(&self, idx: &[usize], threshold: &ConformalThreshold, m_bins: usize) -> Result<MetricsRow> {
        let pairs: Vec<(ProbVector, OptionLabel)> =
            idx.iter().map(|&i| (self.probs[i], self.items[i].answer)).collect();
        let sets: Vec<_> = idx
            .iter()
            .map(|&i| predict_set(&self.items[i].item_id, &self.probs[i], threshold))
            .collect();
        compute_row(
            &self.model_id,
            self.dataset.as_str(),
            threshold.score_fn,
            &pairs,
            &sets,
            m_bins,
        )
    }

    /// True when every item carries a non-empty category.
    pub fn is_categorized(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| !i.category.is_empty())
    }
}

/// Per-category results for one score function.
pub fn category_breakdown(
    inputs: &CellInputs<'_>,
    score_fn: ScoreFn,
    config: &RunConfig,
    global: &ConformalThreshold,
) -> Result<BTreeMap<String, CategoryOutcome>> {
    let categories: BTreeSet<&str> = inputs.items.iter().map(|i| i.category.as_str()).collect();
    let mut out = BTreeMap::new();
    for category in categories {
        let cal = inputs.indices(SplitRole::Calibration, Some(category));
        let test = inputs.indices(SplitRole::Test, Some(category));
        let outcome = if test.is_empty() {
            CategoryOutcome::NoTestItems { n_cal: cal.len() }
        } else {
            match config.category_calibration {
                CategoryCalibration::Global => CategoryOutcome::Evaluated {
                    threshold: None,
                    metrics: inputs.row(&test, global, config.m_bins)?,
                },
                CategoryCalibration::PerCategory if cal.is_empty() => {
                    CategoryOutcome::InsufficientCalibration { n_test: test.len() }
                }
                CategoryCalibration::PerCategory => {
                    let threshold = inputs.fit(&cal, score_fn, config.alpha)?;
                    CategoryOutcome::Evaluated {
                        metrics: inputs.row(&test, &threshold, config.m_bins)?,
                        threshold: Some(threshold),
                    }
                }
            }
        };
        out.insert(category.to_string(), outcome);
    }
    Ok(out)
}

fn mean_breakdown(
    parts: &[&BTreeMap<String, CategoryOutcome>],
) -> Result<BTreeMap<String, CategoryOutcome>> {
    let mut out = BTreeMap::new();
    for (category, first) in parts[0] {
        let outcomes: Vec<&CategoryOutcome> = parts.iter().map(|p| &p[category]).collect();
        let rows: Option<Vec<MetricsRow>> = outcomes
            .iter()
            .map(|o| match o {
                CategoryOutcome::Evaluated { metrics, .. } => Some(metrics.clone()),
                _ => None,
            })
            .collect();
        let outcome = match rows {
            Some(rows) => CategoryOutcome::Evaluated {
                threshold: None,
                metrics: mean_row(&rows)?,
            },
            None => first.clone(),
        };
        out.insert(category.clone(), outcome);
    }
    Ok(out)
}

/// Evaluates every configured score function on one (model, dataset), then
/// appends the MEAN cell.
pub fn evaluate_cell(inputs: &CellInputs<'_>, config: &RunConfig) -> Result<Vec<EvalCell>> {
    let cal = inputs.indices(SplitRole::Calibration, None);
    let test = inputs.indices(SplitRole::Test, None);
    if cal.is_empty() || test.is_empty() {
        return Err(Error::Calibration(format!(
            "dataset {} has {} calibration and {} test items; both must be non-empty",
            inputs.dataset,
            cal.len(),
            test.len()
        )));
    }
    let breakdown = config.category_breakdown && inputs.is_categorized();
    let mut cells = Vec::new();
    for score_fn in config.sorted_score_fns() {
        let threshold = inputs.fit(&cal, score_fn, config.alpha)?;
        let metrics = inputs.row(&test, &threshold, config.m_bins)?;
        let per_category = if breakdown {
            Some(category_breakdown(inputs, score_fn, config, &threshold)?)
        } else {
            None
        };
        cells.push(EvalCell {
            model_id: inputs.model_id.clone(),
            dataset_id: inputs.dataset,
            score_fn: score_fn.into(),
            threshold: Some(threshold),
            metrics,
            per_category,
        });
    }
    let rows: Vec<MetricsRow> = cells.iter().map(|c| c.metrics.clone()).collect();
    let per_category = if breakdown {
        let parts: Vec<_> = cells.iter().filter_map(|c| c.per_category.as_ref()).collect();
        Some(mean_breakdown(&parts)?)
    } else {
        None
    };
    cells.push(EvalCell {
        model_id: inputs.model_id.clone(),
        dataset_id: inputs.dataset,
        score_fn: ScoreView::Mean,
        threshold: None,
        metrics: mean_row(&rows)?,
        per_category,
    });
    Ok(cells)
}

/// Validated join of items and logits, grouped by (model, dataset).
pub fn prepare<'a>(
    config: &RunConfig,
    items: &'a [McqaItem],
    logits: &[LogitRecord],
) -> Result<Vec<CellInputs<'a>>> {
    config.validate()?;
    validate_corpus(items)?;

    let index: HashMap<&str, usize> = items
        .iter()
        .enumerate()
        .map(|(i, item)| (item.item_id.as_str(), i))
        .collect();
    let mut by_model: BTreeMap<&str, HashMap<usize, ProbVector>> = BTreeMap::new();
    for record in logits {
        let Some(&idx) = index.get(record.item_id.as_str()) else {
            return Err(Error::UnknownItem {
                model_id: record.model_id.clone(),
                item_id: record.item_id.clone(),
            });
        };
        let probs = softmax6(record)?;
        if by_model
            .entry(record.model_id.as_str())
            .or_default()
            .insert(idx, probs)
            .is_some()
        {
            return Err(Error::DuplicateLogit {
                model_id: record.model_id.clone(),
                item_id: record.item_id.clone(),
            });
        }
    }

    let models: Vec<String> = if config.models.is_empty() {
        by_model.keys().map(|m| m.to_string()).collect()
    } else {
        let set: BTreeSet<&String> = config.models.iter().collect();
        set.into_iter().cloned().collect()
    };
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to evaluate".into()));
    }
    let present: BTreeSet<DatasetId> = items.iter().map(|i| i.dataset).collect();
    let datasets: Vec<DatasetId> = if config.datasets.is_empty() {
        present.into_iter().collect()
    } else {
        let wanted: BTreeSet<DatasetId> = config.datasets.iter().copied().collect();
        if let Some(absent) = wanted.iter().find(|d| !present.contains(d)) {
            return Err(Error::InvalidArgument(format!("dataset {absent} has no items")));
        }
        wanted.into_iter().collect()
    };

    let empty = HashMap::new();
    let mut missing = Vec::new();
    let mut out = Vec::new();
    for &dataset in &datasets {
        let ds_items: Vec<(usize, &McqaItem)> =
            items.iter().enumerate().filter(|(_, i)| i.dataset == dataset).collect();
        let ids: Vec<&str> = ds_items.iter().map(|(_, i)| i.item_id.as_str()).collect();
        let roles = split_ids(&ids, config.seed, config.calibration_fraction);
        for model in &models {
            let probs_of = by_model.get(model.as_str()).unwrap_or(&empty);
            let mut probs = Vec::with_capacity(ds_items.len());
            for (idx, item) in &ds_items {
                match probs_of.get(idx) {
                    Some(p) => probs.push(*p),
                    None => missing.push((model.clone(), item.item_id.clone())),
                }
            }
            out.push(CellInputs {
                model_id: model.clone(),
                dataset,
                items: ds_items.iter().map(|(_, i)| *i).collect(),
                probs,
                roles: roles.clone(),
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingLogits(missing));
    }
    out.sort_by(|a, b| (&a.model_id, a.dataset).cmp(&(&b.model_id, b.dataset)));
    Ok(out)
}

/// Evaluates every (model, dataset, view). Cells are ordered by model, then
/// dataset, then LAC, APS, MEAN.
pub fn run(config: &RunConfig, items: &[McqaItem], logits: &[LogitRecord]) -> Result<Vec<EvalCell>> {
    let inputs = prepare(config, items, logits)?;
    let groups: Vec<Result<Vec<EvalCell>>> =
        inputs.par_iter().map(|i| evaluate_cell(i, config)).collect();
    let mut cells = Vec::new();
    for group in groups {
        cells.extend(group?);
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub calibration_fraction: f64,
    pub model_id: String,
    pub dataset_id: DatasetId,
    pub score_fn: ScoreView,
    pub n_cal: Option<usize>,
    pub n_test: usize,
    pub q_hat: Option<QHat>,
    pub coverage_pct: f64,
    pub ss: f64,
}

/// Reruns split, calibration and prediction per fraction with the same seed.
pub fn sweep_calibration_fraction(
    config: &RunConfig,
    items: &[McqaItem],
    logits: &[LogitRecord],
    fractions: &[f64],
) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no sweep fractions given".into()));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        let cfg = RunConfig {
            calibration_fraction: fraction,
            category_breakdown: false,
            sweep_fractions: None,
            ..config.clone()
        };
        for cell in run(&cfg, items, logits)? {
            rows.push(SweepRow {
                calibration_fraction: fraction,
                model_id: cell.model_id,
                dataset_id: cell.dataset_id,
                score_fn: cell.score_fn,
                n_cal: cell.threshold.map(|t| t.n_cal),
                n_test: cell.metrics.n_test,
                q_hat: cell.threshold.map(|t| t.q_hat),
                coverage_pct: cell.metrics.coverage_pct,
                ss: cell.metrics.ss,
            });
        }
    }
    Ok(rows)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reproducibility record written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub n_items: usize,
    pub n_logit_records: usize,
    /// SHA-256 of the corpora re-serialized as canonical JSONL.
    pub items_sha256: String,
    pub logits_sha256: String,
    /// SHA-256 of every other file in the output directory.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, items: &[McqaItem], logits: &[LogitRecord]) -> Result<Self> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            n_items: items.len(),
            n_logit_records: logits.len(),
            items_sha256: sha256_hex(&jsonl::to_bytes(items)?),
            logits_sha256: sha256_hex(&jsonl::to_bytes(logits)?),
            outputs: BTreeMap::new(),
        })
    }
}
