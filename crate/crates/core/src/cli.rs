//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::data::{
    adapt_ai2d, adapt_mmbench, adapt_oodcv, adapt_scienceqa, adapt_seedbench, DatasetId, McqaItem,
};
use crate::evaluation::{
    run, sha256_hex, sweep_calibration_fraction, CategoryCalibration, CategoryOutcome, EvalCell,
    RunConfig, RunManifest, SweepRow,
};
use crate::jsonl;
use crate::metrics::{self, round2, ScoreView, DEFAULT_BINS};
use crate::report::{build_group_comparison, build_table, export, ExportFormat, Metric};
use crate::scoring::{LogitRecord, ScoreFn};
use crate::synthetic::{generate_corpus, SyntheticCorpusSpec};

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "MCQA_UQ_SEED";

#[derive(Debug, Parser)]
#[command(name = "mcqa-uq", version, about = "Conformal uncertainty evaluation for multiple-choice QA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw benchmark dump into unified six-option JSONL.
    Prepare(PrepareArgs),
    /// Generate a synthetic corpus with logits.
    Synth(SynthArgs),
    /// Calibrate, predict and score every (model, dataset).
    Eval(EvalArgs),
    /// Re-run the evaluation across calibration fractions.
    Sweep(SweepArgs),
    /// Render a ranked table or group comparison from cells.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: DatasetId,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON synthetic corpus spec.
    #[arg(long)]
    pub spec: PathBuf,
    /// Items per dataset.
    #[arg(long)]
    pub n: usize,
    /// Directory receiving items.jsonl and logits.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub logits: PathBuf,
    #[arg(long, default_value_t = 0.1, value_parser = parse_alpha)]
    pub alpha: f64,
    #[arg(long = "cal-fraction", default_value_t = 0.5, value_parser = parse_fraction)]
    pub cal_fraction: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "score-fns", value_delimiter = ',', default_value = "lac,aps", value_parser = parse_score_fn)]
    pub score_fns: Vec<ScoreFn>,
    /// Restrict to these datasets (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_dataset)]
    pub datasets: Vec<DatasetId>,
    /// Restrict to these models (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Add per-category results for fully categorized datasets.
    #[arg(long = "by-category")]
    pub by_category: bool,
    /// Slice categories under the dataset threshold instead of recalibrating.
    #[arg(long = "global-category-threshold", requires = "by_category")]
    pub global_category_threshold: bool,
    #[arg(long, default_value_t = DEFAULT_BINS, value_parser = parse_bins)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

impl EvalArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            alpha: self.alpha,
            calibration_fraction: self.cal_fraction,
            seed: self.seed,
            score_fns: self.score_fns.clone(),
            datasets: self.datasets.clone(),
            models: self.models.clone(),
            category_breakdown: self.by_category,
            category_calibration: if self.global_category_threshold {
                CategoryCalibration::Global
            } else {
                CategoryCalibration::PerCategory
            },
            sweep_fractions: None,
            m_bins: self.bins,
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_fraction)]
    pub fractions: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub cells: PathBuf,
    #[arg(long, default_value = "ss", value_parser = parse_metric)]
    pub metric: Metric,
    #[arg(long, default_value = "mean", value_parser = parse_view)]
    pub view: ScoreView,
    #[arg(long, default_value = "md", value_parser = parse_format)]
    pub format: ExportFormat,
    /// JSON object mapping model id to group; emits group-comparison points.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("alpha must lie strictly between 0 and 1, got {v}"))
    }
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("fraction must lie strictly between 0 and 1, got {v}"))
    }
}

fn parse_bins(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("bin count must be a positive integer, got `{s}`")),
    }
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetId, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_score_fn(s: &str) -> std::result::Result<ScoreFn, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_view(s: &str) -> std::result::Result<ScoreView, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<ExportFormat, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

/// Parses `args` and runs the command. Usage errors exit 2, failures exit 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Prepare(args) => prepare(&args),
        Command::Synth(args) => synth(&args),
        Command::Eval(args) => eval(&args),
        Command::Sweep(args) => sweep(&args),
        Command::Report(args) => report(&args),
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    jsonl::read(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl_file<T: serde::Serialize>(path: &Path, values: &[T]) -> Result<()> {
    write_file(path, &jsonl::to_bytes(values)?)
}

fn pretty_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn prepare(args: &PrepareArgs) -> Result<()> {
    let items: Vec<McqaItem> = match args.dataset {
        DatasetId::Mmb => adapt_mmbench(&read_jsonl(&args.input)?, args.seed)?,
        DatasetId::Ood => adapt_oodcv(&read_jsonl(&args.input)?, args.seed)?,
        DatasetId::Sqa => adapt_scienceqa(&read_jsonl(&args.input)?, args.seed)?,
        DatasetId::Sb => adapt_seedbench(&read_jsonl(&args.input)?)?,
        DatasetId::Ai2d => adapt_ai2d(&read_jsonl(&args.input)?)?,
    };
    match &args.out {
        Some(path) => write_jsonl_file(path, &items)?,
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            jsonl::write(&mut out, &items)?;
            out.flush()?;
        }
    }
    eprintln!("prepared {} {} items", items.len(), args.dataset);
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let file = File::open(&args.spec).with_context(|| format!("opening {}", args.spec.display()))?;
    let spec: SyntheticCorpusSpec = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", args.spec.display()))?;
    let corpus = generate_corpus(&spec, args.n)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_jsonl_file(&args.out.join("items.jsonl"), &corpus.items)?;
    write_jsonl_file(&args.out.join("logits.jsonl"), &corpus.logits)?;
    eprintln!(
        "wrote {} items and {} logit records to {}",
        corpus.items.len(),
        corpus.logits.len(),
        args.out.display()
    );
    Ok(())
}

fn load_inputs(args: &EvalArgs) -> Result<(Vec<McqaItem>, Vec<LogitRecord>)> {
    Ok((read_jsonl(&args.items)?, read_jsonl(&args.logits)?))
}

/// Collects named artifacts, then writes them plus a manifest hashing each one.
struct OutputDir {
    dir: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

impl OutputDir {
    fn new(dir: &Path) -> Self {
        OutputDir {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    fn finish(self, mut manifest: RunManifest) -> Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        for (name, bytes) in &self.files {
            manifest.outputs.insert(name.clone(), sha256_hex(bytes));
            write_file(&self.dir.join(name), bytes)?;
        }
        write_file(&self.dir.join("manifest.json"), &pretty_json(&manifest)?)
    }
}

/// Tables written by `eval`: every metric for MEAN, set-based metrics per score.
fn table_specs(cells: &[EvalCell]) -> Vec<(ScoreView, Metric)> {
    let mut specs: Vec<(ScoreView, Metric)> = Metric::ALL.iter().map(|&m| (ScoreView::Mean, m)).collect();
    for view in [ScoreView::Lac, ScoreView::Aps] {
        if cells.iter().any(|c| c.score_fn == view) {
            for metric in [Metric::Coverage, Metric::Ss, Metric::UAcc] {
                specs.push((view, metric));
            }
        }
    }
    specs
}

fn categories_csv(cells: &[EvalCell]) -> Result<Vec<u8>> {
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([
        "model_id", "dataset_id", "score_fn", "category", "status", "n_test", "coverage_pct", "acc_pct", "ss",
        "uacc_pct",
    ])?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for cell in cells {
        for (category, outcome) in cell.per_category.iter().flatten() {
            let (status, row) = match outcome {
                CategoryOutcome::Evaluated { metrics, .. } => ("evaluated", Some(metrics)),
                CategoryOutcome::InsufficientCalibration { .. } => ("insufficient_calibration", None),
                CategoryOutcome::NoTestItems { .. } => ("no_test_items", None),
            };
            csv.write_record([
                cell.model_id.clone(),
                cell.dataset_id.to_string(),
                cell.score_fn.to_string(),
                category.clone(),
                status.to_string(),
                outcome.n_test().to_string(),
                num(row.map(|r| r.coverage_pct)),
                num(row.map(|r| r.acc_pct)),
                num(row.map(|r| r.ss)),
                num(row.and_then(|r| r.uacc_pct)),
            ])?;
        }
    }
    Ok(csv.into_inner().map_err(|e| e.into_error())?)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let config = args.config();
    let (items, logits) = load_inputs(args)?;
    let cells = run(&config, &items, &logits)?;

    let mut out = OutputDir::new(&args.out);
    out.add("cells.json", pretty_json(&cells)?);
    let rows: Vec<_> = cells.iter().map(|c| c.metrics.clone()).collect();
    let mut buf = Vec::new();
    metrics::write_csv(&mut buf, &rows)?;
    out.add("metrics.csv", buf);
    let thresholds: Vec<_> = cells
        .iter()
        .filter_map(|c| {
            c.threshold.map(|t| {
                serde_json::json!({
                    "model_id": c.model_id,
                    "dataset_id": c.dataset_id,
                    "threshold": t,
                })
            })
        })
        .collect();
    out.add("thresholds.json", pretty_json(&thresholds)?);
    if config.category_breakdown {
        out.add("categories.csv", categories_csv(&cells)?);
    }
    for (view, metric) in table_specs(&cells) {
        let table = build_table(&cells, metric, view)?;
        let stem = format!("table_{}_{}", view.as_str().to_ascii_lowercase(), metric.as_str().to_ascii_lowercase());
        out.add(format!("{stem}.md"), export(&table, ExportFormat::Markdown)?);
        out.add(format!("{stem}.csv"), export(&table, ExportFormat::Csv)?);
    }
    out.finish(RunManifest::new(&config, &items, &logits)?)?;
    eprintln!("evaluated {} cells into {}", cells.len(), args.out.display());
    Ok(())
}

fn sweep_markdown(rows: &[SweepRow]) -> String {
    let mut out = String::from("| model | dataset | view | fraction | coverage | SS |\n|---|---|---|---:|---:|---:|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {:.2} | {:.2} | {:.2} |\n",
            r.model_id,
            r.dataset_id,
            r.score_fn,
            r.calibration_fraction,
            round2(r.coverage_pct),
            round2(r.ss)
        ));
    }
    out
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut config = args.eval.config();
    config.sweep_fractions = Some(args.fractions.clone());
    let (items, logits) = load_inputs(&args.eval)?;
    let rows = sweep_calibration_fraction(&config, &items, &logits, &args.fractions)?;

    let mut out = OutputDir::new(&args.eval.out);
    let mut csv = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        csv.serialize(SweepCsvRow::from(row))?;
    }
    out.add("sweep.csv", csv.into_inner().map_err(|e| e.into_error())?);
    out.add("sweep.json", pretty_json(&rows)?);
    let mean_rows: Vec<SweepRow> = rows.iter().filter(|r| r.score_fn == ScoreView::Mean).cloned().collect();
    let table = sweep_markdown(&mean_rows);
    out.add("sweep.md", table.clone().into_bytes());
    out.finish(RunManifest::new(&config, &items, &logits)?)?;
    print!("{table}");
    Ok(())
}

#[derive(serde::Serialize)]
struct SweepCsvRow<'a> {
    calibration_fraction: f64,
    model_id: &'a str,
    dataset_id: DatasetId,
    score_fn: ScoreView,
    n_cal: Option<usize>,
    n_test: usize,
    q_hat: Option<String>,
    coverage_pct: f64,
    ss: f64,
}

impl<'a> From<&'a SweepRow> for SweepCsvRow<'a> {
    fn from(r: &'a SweepRow) -> Self {
        SweepCsvRow {
            calibration_fraction: r.calibration_fraction,
            model_id: &r.model_id,
            dataset_id: r.dataset_id,
            score_fn: r.score_fn,
            n_cal: r.n_cal,
            n_test: r.n_test,
            q_hat: r.q_hat.map(|q| q.to_string()),
            coverage_pct: r.coverage_pct,
            ss: r.ss,
        }
    }
}

fn report(args: &ReportArgs) -> Result<()> {
    let file = File::open(&args.cells).with_context(|| format!("opening {}", args.cells.display()))?;
    let cells: Vec<EvalCell> = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", args.cells.display()))?;
    let bytes = match &args.groups {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let grouping: BTreeMap<String, String> = serde_json::from_reader(BufReader::new(file))
                .with_context(|| format!("parsing {}", path.display()))?;
            pretty_json(&build_group_comparison(&cells, &grouping, args.view)?)?
        }
        None => export(&build_table(&cells, args.metric, args.view)?, args.format)?,
    };
    match &args.out {
        Some(path) => write_file(path, &bytes),
        None => {
            io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}
