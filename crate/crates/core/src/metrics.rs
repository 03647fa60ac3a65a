//! Accuracy, set size, UAcc, ECE/MCE and E/F rates.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionSet;
use crate::data::{OptionLabel, OPTION_COUNT};
use crate::error::{Error, Result};
use crate::scoring::{exact_sum, ProbVector, ScoreFn};

/// Default number of equal-width confidence bins.
pub const DEFAULT_BINS: usize = 10;

/// Which prediction sets a row summarizes. `Mean` averages the per-score rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreView {
    #[serde(rename = "LAC")]
    Lac,
    #[serde(rename = "APS")]
    Aps,
    #[serde(rename = "MEAN")]
    Mean,
}

impl ScoreView {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreView::Lac => "LAC",
            ScoreView::Aps => "APS",
            ScoreView::Mean => "MEAN",
        }
    }
}

impl From<ScoreFn> for ScoreView {
    fn from(f: ScoreFn) -> Self {
        match f {
            ScoreFn::Lac => ScoreView::Lac,
            ScoreFn::Aps => ScoreView::Aps,
        }
    }
}

impl fmt::Display for ScoreView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lac" => Ok(ScoreView::Lac),
            "aps" => Ok(ScoreView::Aps),
            "mean" => Ok(ScoreView::Mean),
            _ => Err(Error::InvalidArgument(format!("unknown score view `{s}`"))),
        }
    }
}

/// One (model, dataset, view) result at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model_id: String,
    pub dataset_id: String,
    pub score_fn: ScoreView,
    pub coverage_pct: f64,
    pub acc_pct: f64,
    pub ss: f64,
    /// Missing when every set is empty.
    pub uacc_pct: Option<f64>,
    pub ece_pct: f64,
    pub mce_pct: f64,
    pub e_rate_pct: f64,
    pub f_rate_pct: f64,
    pub empty_set_pct: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub m_bins: usize,
    pub bins: Vec<ReliabilityBin>,
}

fn non_empty<T>(values: &[T], what: &str) -> Result<()> {
    if values.is_empty() {
        Err(Error::InvalidArgument(format!("{what} of an empty test set is undefined")))
    } else {
        Ok(())
    }
}

fn pct(count: usize, n: usize) -> f64 {
    100.0 * count as f64 / n as f64
}

/// Percentage of items whose argmax equals the truth.
pub fn accuracy(pairs: &[(ProbVector, OptionLabel)]) -> Result<f64> {
    non_empty(pairs, "accuracy")?;
    let hits = pairs.iter().filter(|(p, y)| p.argmax() == *y).count();
    Ok(pct(hits, pairs.len()))
}

/// Mean prediction-set cardinality.
pub fn set_sizes(sets: &[PredictionSet]) -> Result<f64> {
    non_empty(sets, "set size")?;
    let total: usize = sets.iter().map(|s| s.labels.len()).sum();
    Ok(total as f64 / sets.len() as f64)
}

/// `acc / ss * sqrt(option_count)`, or `None` when `ss` is zero.
pub fn uacc(acc_pct: f64, ss: f64, option_count: usize) -> Option<f64> {
    (ss > 0.0).then(|| acc_pct / ss * (option_count as f64).sqrt())
}

/// 0-based bin for `conf`; bin `m` covers `(m/M, (m+1)/M]` and 0 goes to bin 0.
pub fn bin_index(conf: f64, m_bins: usize) -> usize {
    let m = m_bins as f64;
    let mut idx = ((conf * m).ceil() as isize - 1).clamp(0, m_bins as isize - 1) as usize;
    while idx > 0 && conf <= idx as f64 / m {
        idx -= 1;
    }
    while idx + 1 < m_bins && conf > (idx + 1) as f64 / m {
        idx += 1;
    }
    idx
}

pub fn reliability_bins(pairs: &[(ProbVector, OptionLabel)], m_bins: usize) -> Result<ReliabilityBins> {
    non_empty(pairs, "calibration error")?;
    if m_bins == 0 {
        return Err(Error::InvalidArgument("m_bins must be at least 1".into()));
    }
    let mut confs: Vec<Vec<f64>> = vec![Vec::new(); m_bins];
    let mut hits = vec![0usize; m_bins];
    for (p, y) in pairs {
        let conf = p.confidence();
        let b = bin_index(conf, m_bins);
        confs[b].push(conf);
        if p.argmax() == *y {
            hits[b] += 1;
        }
    }
    let bins = confs
        .iter()
        .zip(&hits)
        .map(|(c, &h)| {
            let count = c.len();
            ReliabilityBin {
                count,
                mean_confidence: (count > 0).then(|| exact_sum(c) / count as f64),
                mean_accuracy: (count > 0).then(|| h as f64 / count as f64),
            }
        })
        .collect();
    Ok(ReliabilityBins { m_bins, bins })
}

/// Expected and maximum calibration error, in percent.
pub fn ece_mce(pairs: &[(ProbVector, OptionLabel)], m_bins: usize) -> Result<(f64, f64)> {
    let rb = reliability_bins(pairs, m_bins)?;
    let n = pairs.len() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    for bin in &rb.bins {
        if let (Some(conf), Some(acc)) = (bin.mean_confidence, bin.mean_accuracy) {
            let gap = (acc - conf).abs();
            ece += bin.count as f64 / n * gap;
            mce = mce.max(gap);
        }
    }
    Ok((100.0 * ece, 100.0 * mce))
}

/// Percentage of items predicted E and F. Truths must lie in A-D.
pub fn ef_rates(pairs: &[(ProbVector, OptionLabel)]) -> Result<(f64, f64)> {
    non_empty(pairs, "E/F rate")?;
    let mut e = 0;
    let mut f = 0;
    for (p, y) in pairs {
        if !y.is_substantive() {
            return Err(Error::InvalidArgument(format!(
                "ground truth {y} is an appended option"
            )));
        }
        match p.argmax() {
            OptionLabel::E => e += 1,
            OptionLabel::F => f += 1,
            _ => {}
        }
    }
    Ok((pct(e, pairs.len()), pct(f, pairs.len())))
}

/// Two-decimal display rounding, halves away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Full row for one score function's test sets.
pub fn compute_row(
    model_id: &str,
    dataset_id: &str,
    score_fn: ScoreFn,
    pairs: &[(ProbVector, OptionLabel)],
    sets: &[PredictionSet],
    m_bins: usize,
) -> Result<MetricsRow> {
    if pairs.len() != sets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} prediction sets",
            pairs.len(),
            sets.len()
        )));
    }
    let acc_pct = accuracy(pairs)?;
    let ss = set_sizes(sets)?;
    let (ece_pct, mce_pct) = ece_mce(pairs, m_bins)?;
    let (e_rate_pct, f_rate_pct) = ef_rates(pairs)?;
    let covered = pairs
        .iter()
        .zip(sets)
        .filter(|((_, y), s)| s.labels.contains(*y))
        .count();
    let empty = sets.iter().filter(|s| s.labels.is_empty()).count();
    Ok(MetricsRow {
        model_id: model_id.to_string(),
        dataset_id: dataset_id.to_string(),
        score_fn: score_fn.into(),
        coverage_pct: pct(covered, sets.len()),
        acc_pct,
        ss,
        uacc_pct: uacc(acc_pct, ss, OPTION_COUNT),
        ece_pct,
        mce_pct,
        e_rate_pct,
        f_rate_pct,
        empty_set_pct: pct(empty, sets.len()),
        n_test: sets.len(),
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0;
    let mut total = 0.0;
    for v in values {
        total += v;
        n += 1;
    }
    total / n as f64
}

/// Averages per-score rows of one (model, dataset) into a MEAN row.
pub fn mean_row(rows: &[MetricsRow]) -> Result<MetricsRow> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidArgument("no rows to average".into()))?;
    for row in rows {
        if row.model_id != first.model_id || row.dataset_id != first.dataset_id {
            return Err(Error::InvalidArgument(
                "MEAN row over different models or datasets".into(),
            ));
        }
        if row.score_fn == ScoreView::Mean {
            return Err(Error::InvalidArgument("cannot average MEAN rows".into()));
        }
        if row.n_test != first.n_test {
            return Err(Error::InvalidArgument("MEAN row over different test sets".into()));
        }
    }
    let uacc_pct = rows
        .iter()
        .map(|r| r.uacc_pct)
        .collect::<Option<Vec<_>>>()
        .map(|v| mean(v.into_iter()));
    Ok(MetricsRow {
        score_fn: ScoreView::Mean,
        coverage_pct: mean(rows.iter().map(|r| r.coverage_pct)),
        ss: mean(rows.iter().map(|r| r.ss)),
        uacc_pct,
        empty_set_pct: mean(rows.iter().map(|r| r.empty_set_pct)),
        ..first.clone()
    })
}

pub fn write_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut csv = csv::Reader::from_reader(reader);
    csv.deserialize().map(|r| r.map_err(Error::from)).collect()
}
