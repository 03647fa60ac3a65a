//! Ranked leaderboard tables, group comparisons and their exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::DatasetId;
use crate::error::{Error, Result};
use crate::evaluation::EvalCell;
use crate::metrics::{round2, MetricsRow, ScoreView};

/// Label of the cross-dataset mean column.
pub const AVG_COLUMN: &str = "Avg.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Coverage,
    Acc,
    #[serde(rename = "SS")]
    Ss,
    #[serde(rename = "UAcc")]
    UAcc,
    #[serde(rename = "ECE")]
    Ece,
    #[serde(rename = "MCE")]
    Mce,
    ERate,
    FRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Coverage,
        Metric::Acc,
        Metric::Ss,
        Metric::UAcc,
        Metric::Ece,
        Metric::Mce,
        Metric::ERate,
        Metric::FRate,
    ];

    pub fn direction(self) -> Direction {
        match self {
            Metric::Ss | Metric::Ece | Metric::Mce => Direction::LowerBetter,
            _ => Direction::HigherBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Coverage => "Coverage",
            Metric::Acc => "Acc",
            Metric::Ss => "SS",
            Metric::UAcc => "UAcc",
            Metric::Ece => "ECE",
            Metric::Mce => "MCE",
            Metric::ERate => "ERate",
            Metric::FRate => "FRate",
        }
    }

    pub fn value(self, row: &MetricsRow) -> Option<f64> {
        match self {
            Metric::Coverage => Some(row.coverage_pct),
            Metric::Acc => Some(row.acc_pct),
            Metric::Ss => Some(row.ss),
            Metric::UAcc => row.uacc_pct,
            Metric::Ece => Some(row.ece_pct),
            Metric::Mce => Some(row.mce_pct),
            Metric::ERate => Some(row.e_rate_pct),
            Metric::FRate => Some(row.f_rate_pct),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "coverage" | "cr" => Ok(Metric::Coverage),
            "acc" | "accuracy" => Ok(Metric::Acc),
            "ss" | "setsize" | "setsizes" => Ok(Metric::Ss),
            "uacc" => Ok(Metric::UAcc),
            "ece" => Ok(Metric::Ece),
            "mce" => Ok(Metric::Mce),
            "erate" => Ok(Metric::ERate),
            "frate" => Ok(Metric::FRate),
            _ => Err(Error::InvalidArgument(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCell {
    /// Rounded to two decimals; missing when undefined.
    pub value: Option<f64>,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub model: String,
    pub cells: Vec<RankedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTable {
    pub metric: Metric,
    pub direction: Direction,
    pub view: ScoreView,
    pub columns: Vec<String>,
    pub rows: Vec<RankedRow>,
}

/// Competition ranks (1, 2, 2, 4) of `values`; missing values get no rank.
pub fn competition_ranks(values: &[Option<f64>], direction: Direction) -> Vec<Option<usize>> {
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                1 + values
                    .iter()
                    .flatten()
                    .filter(|&&y| match direction {
                        Direction::HigherBetter => y > x,
                        Direction::LowerBetter => y < x,
                    })
                    .count()
            })
        })
        .collect()
}

impl RankedTable {
    /// Rounds every value and ranks each column. `rows` hold one value per column.
    pub fn from_values(
        metric: Metric,
        view: ScoreView,
        columns: Vec<String>,
        rows: Vec<(String, Vec<Option<f64>>)>,
    ) -> Result<Self> {
        if let Some((model, _)) = rows.iter().find(|(_, v)| v.len() != columns.len()) {
            return Err(Error::InvalidArgument(format!(
                "row `{model}` does not have {} values",
                columns.len()
            )));
        }
        let direction = metric.direction();
        let rounded: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|(_, v)| v.iter().map(|x| x.map(round2)).collect())
            .collect();
        let mut ranks = vec![vec![None; columns.len()]; rows.len()];
        for col in 0..columns.len() {
            let column: Vec<Option<f64>> = rounded.iter().map(|r| r[col]).collect();
            for (r, rank) in competition_ranks(&column, direction).into_iter().enumerate() {
                ranks[r][col] = rank;
            }
        }
        let rows = rows
            .into_iter()
            .zip(rounded.into_iter().zip(ranks))
            .map(|((model, _), (values, ranks))| RankedRow {
                model,
                cells: values
                    .into_iter()
                    .zip(ranks)
                    .map(|(value, rank)| RankedCell { value, rank })
                    .collect(),
            })
            .collect();
        Ok(RankedTable {
            metric,
            direction,
            view,
            columns,
            rows,
        })
    }

    pub fn column_index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn cell(&self, model: &str, column: &str) -> Option<&RankedCell> {
        let col = self.column_index(column)?;
        self.rows.iter().find(|r| r.model == model).map(|r| &r.cells[col])
    }
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().copied().collect::<Option<_>>()?;
    Some(present.iter().sum::<f64>() / present.len() as f64)
}

/// Model-by-dataset table for one metric and view, with an Avg. column
/// computed from the unrounded per-dataset values.
pub fn build_table(cells: &[EvalCell], metric: Metric, view: ScoreView) -> Result<RankedTable> {
    let mut grid: BTreeMap<&str, BTreeMap<DatasetId, Option<f64>>> = BTreeMap::new();
    for cell in cells.iter().filter(|c| c.score_fn == view) {
        let row = grid.entry(cell.model_id.as_str()).or_default();
        if row.insert(cell.dataset_id, metric.value(&cell.metrics)).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate cell for model `{}` on {}",
                cell.model_id, cell.dataset_id
            )));
        }
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument(format!("no {view} cells to tabulate")));
    }
    let datasets: BTreeSet<DatasetId> = grid.values().flat_map(|r| r.keys().copied()).collect();
    let gaps: Vec<(String, String)> = grid
        .iter()
        .flat_map(|(model, row)| {
            datasets
                .iter()
                .filter(|d| !row.contains_key(d))
                .map(|d| (model.to_string(), d.to_string()))
                .collect::<Vec<_>>()
        })
        .collect();
    if !gaps.is_empty() {
        return Err(Error::RaggedTable(gaps));
    }

    let mut columns: Vec<String> = datasets.iter().map(|d| d.to_string()).collect();
    columns.push(AVG_COLUMN.to_string());
    let rows = grid
        .into_iter()
        .map(|(model, row)| {
            let mut values: Vec<Option<f64>> = row.into_values().collect();
            values.push(mean_of(&values));
            (model.to_string(), values)
        })
        .collect();
    RankedTable::from_values(metric, view, columns, rows)
}

/// One bar of a grouped comparison chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub group: String,
    pub dataset: String,
    pub metric: String,
    pub value: Option<f64>,
}

/// Acc, SS and UAcc per dataset for each group of models. Groups holding
/// several models report the mean over those models.
pub fn build_group_comparison(
    cells: &[EvalCell],
    grouping: &BTreeMap<String, String>,
    view: ScoreView,
) -> Result<Vec<GroupPoint>> {
    if grouping.is_empty() {
        return Err(Error::InvalidArgument("grouping is empty".into()));
    }
    if grouping.len() < 2 {
        return Err(Error::InvalidArgument("grouping must cover at least two models".into()));
    }
    let known: BTreeSet<&str> = cells.iter().map(|c| c.model_id.as_str()).collect();
    if let Some(model) = grouping.keys().find(|m| !known.contains(m.as_str())) {
        return Err(Error::InvalidArgument(format!("unknown model `{model}` in grouping")));
    }

    const METRICS: [Metric; 3] = [Metric::Acc, Metric::Ss, Metric::UAcc];
    let mut acc: BTreeMap<(&str, DatasetId, Metric), Vec<Option<f64>>> = BTreeMap::new();
    for cell in cells.iter().filter(|c| c.score_fn == view) {
        if let Some(group) = grouping.get(&cell.model_id) {
            for metric in METRICS {
                acc.entry((group.as_str(), cell.dataset_id, metric))
                    .or_default()
                    .push(metric.value(&cell.metrics));
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|((group, dataset, metric), values)| GroupPoint {
            group: group.to_string(),
            dataset: dataset.to_string(),
            metric: metric.to_string(),
            value: mean_of(&values),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Markdown,
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Markdown => "md",
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ExportFormat::Markdown),
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(Error::InvalidArgument(format!("unknown export format `{s}`"))),
        }
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

pub fn export(table: &RankedTable, format: ExportFormat) -> Result<Vec<u8>> {
    match format {
        ExportFormat::Markdown => Ok(to_markdown(table).into_bytes()),
        ExportFormat::Csv => to_csv(table),
        ExportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(table)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

fn to_markdown(table: &RankedTable) -> String {
    let mut out = format!("{} ({})\n\n| Model |", table.metric, table.view);
    for col in &table.columns {
        out.push_str(&format!(" {col} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(table.columns.len()));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&format!("| {} |", row.model));
        for cell in &row.cells {
            match cell.rank {
                Some(rank) => out.push_str(&format!(" {} ({rank}) |", fmt_value(cell.value))),
                None => out.push_str(&format!(" {} |", fmt_value(cell.value))),
            }
        }
        out.push('\n');
    }
    out
}

fn to_csv(table: &RankedTable) -> Result<Vec<u8>> {
    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    for col in &table.columns {
        header.push(format!("{col}_value"));
        header.push(format!("{col}_rank"));
    }
    csv.write_record(&header)?;
    for row in &table.rows {
        let mut record = vec![row.model.clone()];
        for cell in &row.cells {
            record.push(cell.value.map(|v| format!("{v:.2}")).unwrap_or_default());
            record.push(cell.rank.map(|r| r.to_string()).unwrap_or_default());
        }
        csv.write_record(&record)?;
    }
    csv.into_inner()
        .map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(model: &str, dataset: &str, view: ScoreView, ss: f64, acc: f64) -> MetricsRow {
        MetricsRow {
            model_id: model.into(),
            dataset_id: dataset.into(),
            score_fn: view,
            coverage_pct: 91.0,
            acc_pct: acc,
            ss,
            uacc_pct: Some(acc / ss * 6f64.sqrt()),
            ece_pct: 2.0,
            mce_pct: 5.0,
            e_rate_pct: 0.0,
            f_rate_pct: 0.0,
            empty_set_pct: 0.0,
            n_test: 100,
        }
    }

    fn cell(model: &str, dataset: DatasetId, ss: f64, acc: f64) -> EvalCell {
        EvalCell {
            model_id: model.into(),
            dataset_id: dataset,
            score_fn: ScoreView::Mean,
            threshold: None,
            metrics: row(model, dataset.as_str(), ScoreView::Mean, ss, acc),
            per_category: None,
        }
    }

    #[test]
    fn competition_ranking_skips_after_ties() {
        let v = [Some(2.7), Some(2.6), Some(2.7), Some(2.72), None];
        assert_eq!(
            competition_ranks(&v, Direction::LowerBetter),
            vec![Some(2), Some(1), Some(2), Some(4), None]
        );
        assert_eq!(
            competition_ranks(&v, Direction::HigherBetter),
            vec![Some(2), Some(4), Some(2), Some(1), None]
        );
    }

    #[test]
    fn ties_are_judged_on_rounded_values() {
        let t = RankedTable::from_values(
            Metric::Ss,
            ScoreView::Mean,
            vec!["MMB".into()],
            vec![
                ("a".into(), vec![Some(2.701)]),
                ("b".into(), vec![Some(2.699)]),
                ("c".into(), vec![Some(2.72)]),
            ],
        )
        .unwrap();
        let ranks: Vec<_> = t.rows.iter().map(|r| r.cells[0].rank.unwrap()).collect();
        assert_eq!(ranks, vec![1, 1, 3]);
        assert_eq!(t.rows[0].cells[0].value, Some(2.7));
    }

    #[test]
    fn single_model_ranks_first_everywhere() {
        let cells = vec![cell("m", DatasetId::Mmb, 2.0, 70.0), cell("m", DatasetId::Sb, 3.0, 60.0)];
        let t = build_table(&cells, Metric::Ss, ScoreView::Mean).unwrap();
        assert_eq!(t.columns, vec!["MMB", "SB", "Avg."]);
        assert!(t.rows[0].cells.iter().all(|c| c.rank == Some(1)));
        assert_eq!(t.rows[0].cells[2].value, Some(2.5));
    }

    #[test]
    fn average_uses_unrounded_values() {
        let cells = vec![
            cell("m", DatasetId::Mmb, 0.004, 70.0),
            cell("m", DatasetId::Ood, 0.004, 70.0),
            cell("m", DatasetId::Sb, 0.008, 70.0),
        ];
        let t = build_table(&cells, Metric::Ss, ScoreView::Mean).unwrap();
        let shown: Vec<f64> = t.rows[0].cells[..3].iter().map(|c| c.value.unwrap()).collect();
        assert_eq!(shown, vec![0.0, 0.0, 0.01]);
        assert_eq!(round2(shown.iter().sum::<f64>() / 3.0), 0.0);
        assert_eq!(t.cell("m", "Avg.").unwrap().value, Some(0.01));
    }

    #[test]
    fn ragged_input_lists_gaps() {
        let cells = vec![
            cell("a", DatasetId::Mmb, 2.0, 70.0),
            cell("a", DatasetId::Sb, 2.0, 70.0),
            cell("b", DatasetId::Mmb, 2.0, 70.0),
        ];
        match build_table(&cells, Metric::Acc, ScoreView::Mean) {
            Err(Error::RaggedTable(gaps)) => assert_eq!(gaps, vec![("b".to_string(), "SB".to_string())]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn view_filter_applies() {
        let cells = vec![cell("a", DatasetId::Mmb, 2.0, 70.0)];
        assert!(build_table(&cells, Metric::Acc, ScoreView::Lac).is_err());
    }

    fn two_by_two() -> RankedTable {
        let cells = vec![
            cell("a", DatasetId::Mmb, 2.0, 70.0),
            cell("a", DatasetId::Sb, 3.0, 60.0),
            cell("b", DatasetId::Mmb, 1.5, 65.0),
            cell("b", DatasetId::Sb, 3.0, 66.0),
        ];
        build_table(&cells, Metric::Ss, ScoreView::Mean).unwrap()
    }

    #[test]
    fn markdown_golden() {
        let md = String::from_utf8(export(&two_by_two(), ExportFormat::Markdown).unwrap()).unwrap();
        let expected = "SS (MEAN)\n\n\
            | Model | MMB | SB | Avg. |\n\
            |---|---:|---:|---:|\n\
            | a | 2.00 (2) | 3.00 (1) | 2.50 (2) |\n\
            | b | 1.50 (1) | 3.00 (1) | 2.25 (1) |\n";
        assert_eq!(md, expected);
    }

    #[test]
    fn csv_header_and_fields() {
        let csv = String::from_utf8(export(&two_by_two(), ExportFormat::Csv).unwrap()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,MMB_value,MMB_rank,SB_value,SB_rank,Avg._value,Avg._rank"
        );
        assert_eq!(lines.next().unwrap(), "a,2.00,2,3.00,1,2.50,2");
    }

    #[test]
    fn json_round_trips() {
        let table = two_by_two();
        let bytes = export(&table, ExportFormat::Json).unwrap();
        let back: RankedTable = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, table);
        assert_eq!(export(&back, ExportFormat::Json).unwrap(), bytes);
    }

    #[test]
    fn unknown_format_is_rejected() {
        assert!("xlsx".parse::<ExportFormat>().is_err());
        assert_eq!("md".parse::<ExportFormat>().unwrap(), ExportFormat::Markdown);
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("uacc".parse::<Metric>().unwrap(), Metric::UAcc);
        assert_eq!("E-rate".parse::<Metric>().unwrap(), Metric::ERate);
        assert_eq!("SS".parse::<Metric>().unwrap(), Metric::Ss);
        assert!("bleu".parse::<Metric>().is_err());
    }

    #[test]
    fn group_comparison_cardinality() {
        let mut cells = Vec::new();
        for model in ["7b", "13b", "34b"] {
            for ds in DatasetId::ALL {
                cells.push(cell(model, ds, 2.0, 70.0));
            }
        }
        let grouping: BTreeMap<String, String> =
            ["7b", "13b", "34b"].iter().map(|m| (m.to_string(), m.to_uppercase())).collect();
        let points = build_group_comparison(&cells, &grouping, ScoreView::Mean).unwrap();
        assert_eq!(points.len(), 3 * 5 * 3);
        let json = serde_json::to_value(&points[0]).unwrap();
        assert!(json.get("group").is_some() && json.get("dataset").is_some());

        assert!(build_group_comparison(&cells, &BTreeMap::new(), ScoreView::Mean).is_err());
        let one: BTreeMap<_, _> = [("7b".to_string(), "x".to_string())].into();
        assert!(build_group_comparison(&cells, &one, ScoreView::Mean).is_err());
        let ghost: BTreeMap<_, _> =
            [("7b".to_string(), "x".to_string()), ("70b".to_string(), "y".to_string())].into();
        assert!(build_group_comparison(&cells, &ghost, ScoreView::Mean).is_err());
    }

    #[test]
    fn paired_groups_average_members() {
        let cells = vec![
            cell("base", DatasetId::Mmb, 2.0, 60.0),
            cell("chat", DatasetId::Mmb, 3.0, 70.0),
            cell("chat2", DatasetId::Mmb, 1.0, 80.0),
        ];
        let grouping: BTreeMap<String, String> = [
            ("base".to_string(), "base".to_string()),
            ("chat".to_string(), "chat".to_string()),
            ("chat2".to_string(), "chat".to_string()),
        ]
        .into();
        let points = build_group_comparison(&cells, &grouping, ScoreView::Mean).unwrap();
        let chat_ss = points.iter().find(|p| p.group == "chat" && p.metric == "SS").unwrap();
        assert_eq!(chat_ss.value, Some(2.0));
    }

    proptest! {
        #[test]
        fn ranks_are_a_competition_ranking(values in prop::collection::vec(0u32..500, 1..30)) {
            let v: Vec<Option<f64>> = values.iter().map(|&x| Some(x as f64 / 100.0)).collect();
            for direction in [Direction::HigherBetter, Direction::LowerBetter] {
                let ranks: Vec<usize> = competition_ranks(&v, direction).into_iter().map(Option::unwrap).collect();
                let mut order: Vec<usize> = (0..v.len()).collect();
                order.sort_by(|&a, &b| {
                    let (x, y) = (v[a].unwrap(), v[b].unwrap());
                    match direction {
                        Direction::HigherBetter => y.total_cmp(&x),
                        Direction::LowerBetter => x.total_cmp(&y),
                    }
                });
                for (pos, &i) in order.iter().enumerate() {
                    let first = order.iter().position(|&j| v[j] == v[i]).unwrap();
                    prop_assert!(first <= pos);
                    prop_assert_eq!(ranks[i], first + 1);
                }
            }
        }
    }
}
