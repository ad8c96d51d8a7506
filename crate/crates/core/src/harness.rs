//! Experiment plumbing: dataset and run specifications, multi-seed suites
//! with paired aggregation, and report emitters (CSV, JSON, text, SVG).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{generate_synthetic, HierDataset, SyntheticConfig, TupleSpec};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::ssl::{SslAlgo, SslHyperparams};
use crate::optim::OptimizerConfig;
use crate::train::{run, RunReport, TrainConfig, TrainMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HierarchySpec {
    Uniform { coarsest: usize, branching: Vec<usize> },
    Balanced { classes_per_level: Vec<usize> },
    Random { classes_per_level: Vec<usize>, seed: u64 },
    CifarTwoLevel,
    CifarThreeLevel,
    NabirdsAnalog { seed: u64 },
    File { path: PathBuf },
}

impl Default for HierarchySpec {
    fn default() -> Self {
        HierarchySpec::Uniform {
            coarsest: 4,
            branching: vec![3],
        }
    }
}

impl HierarchySpec {
    pub fn build(&self) -> Result<LabelHierarchy> {
        match self {
            HierarchySpec::Uniform { coarsest, branching } => LabelHierarchy::uniform(*coarsest, branching),
            HierarchySpec::Balanced { classes_per_level } => LabelHierarchy::balanced(classes_per_level),
            HierarchySpec::Random {
                classes_per_level,
                seed,
            } => LabelHierarchy::random(classes_per_level, *seed),
            HierarchySpec::CifarTwoLevel => Ok(LabelHierarchy::cifar_two_level()),
            HierarchySpec::CifarThreeLevel => Ok(LabelHierarchy::cifar_three_level()),
            HierarchySpec::NabirdsAnalog { seed } => Ok(LabelHierarchy::nabirds_analog(*seed)),
            HierarchySpec::File { path } => LabelHierarchy::load(path),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub hierarchy: HierarchySpec,
    pub synthetic: SyntheticConfig,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn build(&self) -> Result<HierDataset> {
        generate_synthetic(&self.hierarchy.build()?, &self.synthetic, self.seed)
    }
}

/// A single run as stored in a config file: data, label budget and trainer
/// settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPlan {
    pub dataset: DatasetSpec,
    pub tuple: TupleSpec,
    pub train: TrainConfig,
}

impl Default for RunPlan {
    fn default() -> Self {
        RunPlan {
            dataset: DatasetSpec::default(),
            tuple: TupleSpec::parse("60,0").expect("valid tuple"),
            train: TrainConfig::default(),
        }
    }
}

/// Switches the SSL algorithm together with the optimizer and unlabeled
/// ratio that go with it.
pub fn apply_algo(config: &mut TrainConfig, algo: SslAlgo) {
    if config.ssl.algo == algo {
        return;
    }
    let preset = TrainConfig::for_algo(algo);
    config.ssl = SslHyperparams::for_algo(algo);
    config.optimizer = preset.optimizer;
    config.batch.unlabeled_ratio = preset.batch.unlabeled_ratio;
}

/// Overlays `patch` onto `base`. Every key in the patch must already exist
/// in the base so that misspelled settings are reported instead of ignored.
pub fn merge_json(base: &mut Value, patch: &Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = format!("{path}.{k}");
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v, &here)?,
                    Some(slot) => *slot = v.clone(),
                    None => {
                        return Err(Error::Config(format!("unknown setting '{}'", &here[1..])));
                    }
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

pub fn apply_overrides(config: &TrainConfig, overrides: &Value) -> Result<TrainConfig> {
    if overrides.is_null() {
        return Ok(config.clone());
    }
    if !overrides.is_object() {
        return Err(Error::Config("overrides must be a JSON object".into()));
    }
    let mut base = serde_json::to_value(config)?;
    // optimizer variants carry different fields; a kind switch replaces it whole
    if let Some(opt) = overrides.get("optimizer") {
        if opt.get("kind").is_some() {
            let parsed: OptimizerConfig = serde_json::from_value(opt.clone())
                .map_err(|e| Error::Config(format!("bad optimizer override: {e}")))?;
            base["optimizer"] = serde_json::to_value(parsed)?;
        }
    }
    merge_json(&mut base, overrides, "")?;
    serde_json::from_value(base).map_err(|e| Error::Config(format!("bad override: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub name: String,
    pub mode: TrainMode,
    pub tuple: TupleSpec,
    #[serde(default = "default_algo")]
    pub algo: SslAlgo,
    /// Partial `TrainConfig` JSON applied on top of the algorithm preset.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub overrides: Value,
}

fn default_algo() -> SslAlgo {
    SslAlgo::MixMatch
}

impl RunSpec {
    pub fn config(&self, seed: u64) -> Result<TrainConfig> {
        let mut cfg = apply_overrides(&TrainConfig::for_algo(self.algo), &self.overrides)?;
        cfg.mode = self.mode;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSuite {
    #[serde(default)]
    pub dataset: DatasetSpec,
    pub runs: Vec<RunSpec>,
    pub seeds: Vec<u64>,
    /// Name of the run the Δtop-1 column is measured against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    /// Worker threads; 0 lets the pool pick.
    #[serde(default)]
    pub workers: usize,
}

impl Default for ExperimentSuite {
    fn default() -> Self {
        let run = |name: &str, mode, tuple: &str| RunSpec {
            name: name.into(),
            mode,
            tuple: TupleSpec::parse(tuple).expect("valid tuple"),
            algo: SslAlgo::MixMatch,
            overrides: Value::Null,
        };
        ExperimentSuite {
            dataset: DatasetSpec::default(),
            runs: vec![
                run("mixmatch", TrainMode::SslBaseline, "60,-"),
                run("hiermatch", TrainMode::HierMatch, "60,0"),
                run("hiermatch-48-12", TrainMode::HierMatch, "48,12"),
            ],
            seeds: (0..3).collect(),
            baseline: Some("mixmatch".into()),
            workers: 0,
        }
    }
}

impl ExperimentSuite {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("suite needs at least one seed".into()));
        }
        if self.runs.is_empty() {
            return Err(Error::Config("suite needs at least one run".into()));
        }
        let mut names = BTreeSet::new();
        for r in &self.runs {
            if r.name.is_empty() || r.name.contains(['/', '\\']) {
                return Err(Error::Config(format!("bad run name '{}'", r.name)));
            }
            if !names.insert(&r.name) {
                return Err(Error::Config(format!("duplicate run name '{}'", r.name)));
            }
            r.config(self.seeds[0])?;
        }
        if let Some(b) = &self.baseline {
            if !names.contains(b) {
                return Err(Error::Config(format!("baseline '{b}' is not a run")));
            }
        }
        Ok(())
    }
}

/// Outcome of one (run, seed) job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub run: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    /// Exit code class of the failure.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_code: Option<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub name: String,
    pub mode: TrainMode,
    pub tuple: String,
    pub completed: usize,
    pub top1_mean: f64,
    /// Sample standard deviation; absent with fewer than two seeds.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top1_std: Option<f64>,
    pub top5_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub top5_std: Option<f64>,
    /// Mean paired difference in top-1 against the baseline run.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_top1: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failed_seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub rows: Vec<SuiteRow>,
    pub outcomes: Vec<SeedOutcome>,
    pub partial: bool,
}

impl SuiteResult {
    /// Exit code for the suite as a whole: 0, or the largest failure code.
    pub fn exit_code(&self) -> i32 {
        self.outcomes.iter().filter_map(|o| o.error_code).max().unwrap_or(0)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the n - 1 denominator.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Aggregates per-seed outcomes into one row per run.
pub fn aggregate(suite: &ExperimentSuite, outcomes: &[SeedOutcome]) -> Vec<SuiteRow> {
    let top1_of = |name: &str, seed: u64| {
        outcomes
            .iter()
            .find(|o| o.run == name && o.seed == seed)
            .and_then(|o| o.report.as_ref())
            .map(|r| r.test_top1)
    };
    suite
        .runs
        .iter()
        .map(|r| {
            let mine: Vec<&SeedOutcome> = outcomes.iter().filter(|o| o.run == r.name).collect();
            let done: Vec<&RunReport> = mine.iter().filter_map(|o| o.report.as_ref()).collect();
            let top1: Vec<f64> = done.iter().map(|x| x.test_top1).collect();
            let top5: Vec<f64> = done.iter().map(|x| x.test_top5).collect();
            let delta_top1 = suite.baseline.as_ref().and_then(|b| {
                let diffs: Vec<f64> = suite
                    .seeds
                    .iter()
                    .filter_map(|&s| Some(top1_of(&r.name, s)? - top1_of(b, s)?))
                    .collect();
                (!diffs.is_empty()).then(|| mean(&diffs))
            });
            SuiteRow {
                name: r.name.clone(),
                mode: r.mode,
                tuple: r.tuple.to_string(),
                completed: done.len(),
                top1_mean: if top1.is_empty() { f64::NAN } else { mean(&top1) },
                top1_std: sample_std(&top1),
                top5_mean: if top5.is_empty() { f64::NAN } else { mean(&top5) },
                top5_std: sample_std(&top5),
                delta_top1,
                failed_seeds: mine.iter().filter(|o| o.report.is_none()).map(|o| o.seed).collect(),
            }
        })
        .collect()
}

/// Runs every (run, seed) pair on a bounded worker pool. All runs share one
/// dataset, and a run's labels are allocated from its seed, so runs with the
/// same seed see the same finest labels. A failing job marks the suite
/// partial without stopping the others.
pub fn run_suite(suite: &ExperimentSuite) -> Result<SuiteResult> {
    suite.validate()?;
    let dataset = suite.dataset.build()?;
    let jobs: Vec<(usize, u64)> = suite
        .runs
        .iter()
        .enumerate()
        .flat_map(|(i, _)| suite.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(suite.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let spec = &suite.runs[i];
                let result = spec
                    .config(seed)
                    .and_then(|cfg| run(&dataset, &spec.tuple, &cfg));
                match result {
                    Ok(out) => {
                        info!("{} seed {seed}: top-1 {:.4}", spec.name, out.report.test_top1);
                        SeedOutcome {
                            run: spec.name.clone(),
                            seed,
                            report: Some(out.report),
                            error: None,
                            error_code: None,
                        }
                    }
                    Err(e) => {
                        warn!("{} seed {seed} failed: {e}", spec.name);
                        SeedOutcome {
                            run: spec.name.clone(),
                            seed,
                            report: None,
                            error: Some(e.to_string()),
                            error_code: Some(e.exit_code()),
                        }
                    }
                }
            })
            .collect()
    });
    let partial = outcomes.iter().any(|o| o.error.is_some());
    Ok(SuiteResult {
        rows: aggregate(suite, &outcomes),
        outcomes,
        partial,
    })
}

fn fmt_pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn fmt_mean_std(m: f64, s: Option<f64>) -> String {
    match s {
        Some(s) => format!("{} ± {}", fmt_pct(m), fmt_pct(s)),
        None => fmt_pct(m),
    }
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for r in rows {
        out += &line(r.clone());
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str =
    "name,mode,tuple,completed,top1_mean,top1_std,top5_mean,top5_std,delta_top1";
pub const SEEDS_CSV_HEADER: &str = "name,seed,best_epoch,test_top1,test_top5,error";

impl SuiteResult {
    pub fn summary_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.name.clone(),
                    r.mode.to_string(),
                    format!("({})", r.tuple),
                    r.completed.to_string(),
                    fmt_mean_std(r.top1_mean, r.top1_std),
                    fmt_mean_std(r.top5_mean, r.top5_std),
                    r.delta_top1.map(|d| format!("{:+.2}", 100.0 * d)).unwrap_or_default(),
                ]
            })
            .collect();
        let mut out = aligned(
            &["run", "mode", "tuple", "seeds", "top-1 (%)", "top-5 (%)", "Δtop-1"],
            &rows,
        );
        if self.partial {
            out += "partial: some seeds failed\n";
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{SUMMARY_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},\"{}\",{},{},{},{},{},{}",
                r.name,
                r.mode,
                r.tuple,
                r.completed,
                r.top1_mean,
                opt(r.top1_std),
                r.top5_mean,
                opt(r.top5_std),
                opt(r.delta_top1)
            );
        }
        out
    }

    pub fn seeds_csv(&self) -> String {
        let mut out = format!("{SEEDS_CSV_HEADER}\n");
        for o in &self.outcomes {
            match &o.report {
                Some(r) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},",
                        o.run, o.seed, r.best_epoch, r.test_top1, r.test_top5
                    );
                }
                None => {
                    let msg = o.error.clone().unwrap_or_default().replace(['"', '\n'], "'");
                    let _ = writeln!(out, "{},{},,,,\"{msg}\"", o.run, o.seed);
                }
            }
        }
        out
    }

    /// Writes per-seed reports and the summary tables under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut put = |path: PathBuf, text: String| -> Result<()> {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        for o in &self.outcomes {
            if let Some(r) = &o.report {
                let base = dir.join(&o.run);
                put(base.join(format!("seed-{}.json", o.seed)), r.to_json()?)?;
                put(base.join(format!("seed-{}.csv", o.seed)), r.to_csv())?;
            }
        }
        put(dir.join("seeds.csv"), self.seeds_csv())?;
        put(dir.join("summary.csv"), self.summary_csv())?;
        put(dir.join("summary.txt"), self.summary_table())?;
        put(dir.join("summary.json"), serde_json::to_string_pretty(&self.rows)?)?;
        Ok(written)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Csv,
    Json,
    Txt,
    SvgPlot,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "txt" => Ok(ReportFormat::Txt),
            "svg-plot" | "svg" => Ok(ReportFormat::SvgPlot),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// Writes `reports` (label, report) in the requested format under `dir` and
/// returns the files written.
pub fn emit_report(
    reports: &[(String, RunReport)],
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Argument("no reports to emit".into()));
    }
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    match format {
        ReportFormat::Csv => {
            for (label, r) in reports {
                files.push((dir.join(format!("{label}.csv")), r.to_csv()));
            }
        }
        ReportFormat::Json => {
            for (label, r) in reports {
                files.push((dir.join(format!("{label}.json")), r.to_json()?));
            }
        }
        ReportFormat::Txt => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|(label, r)| {
                    vec![
                        label.clone(),
                        r.mode.to_string(),
                        r.tuple.clone().map(|t| format!("({t})")).unwrap_or_default(),
                        r.seed.to_string(),
                        r.best_epoch.to_string(),
                        fmt_pct(r.test_top1),
                        fmt_pct(r.test_top5),
                    ]
                })
                .collect();
            let table = aligned(
                &["report", "mode", "tuple", "seed", "best epoch", "top-1 (%)", "top-5 (%)"],
                &rows,
            );
            files.push((dir.join("reports.txt"), table));
        }
        ReportFormat::SvgPlot => {
            for (label, r) in reports {
                files.push((dir.join(format!("{label}-accuracy.svg")), accuracy_svg(r)));
                if let Some(svg) = confidence_svg(r) {
                    files.push((dir.join(format!("{label}-confidence.svg")), svg));
                }
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (path, text) in files {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Validation top-1 per level against epoch.
pub fn accuracy_svg(report: &RunReport) -> String {
    let (w, h, m) = (640.0, 360.0, 48.0);
    let n = report.epochs.len().max(2) - 1;
    let x = |e: usize| m + (w - 2.0 * m) * e as f64 / n as f64;
    let y = |v: f64| h - m - (h - 2.0 * m) * v;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">validation top-1 by epoch</text>\n",
        w / 2.0
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>",
        h - m,
        w - m,
        h - m,
        h - m
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{tick:.2}</text>",
            m - 4.0,
            y(tick) + 3.0
        );
    }
    for (i, level) in report.levels.iter().enumerate() {
        let pts: Vec<String> = report
            .epochs
            .iter()
            .map(|e| format!("{:.2},{:.2}", x(e.epoch), y(e.levels[i].val_top1)))
            .collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">level {level}</text>",
            w - m - 60.0,
            m + 14.0 * (i as f64 + 1.0)
        );
    }
    let _ = writeln!(
        svg,
        "<line x1=\"{0:.2}\" y1=\"{m}\" x2=\"{0:.2}\" y2=\"{1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        x(report.best_epoch),
        h - m
    );
    svg.push_str("</svg>\n");
    svg
}

/// Heat map of the per-epoch confidence histograms: one column per epoch,
/// one row per bin, darker cells hold a larger share of that epoch's draws.
pub fn confidence_svg(report: &RunReport) -> Option<String> {
    let hists: Vec<&Vec<usize>> = report
        .epochs
        .iter()
        .filter_map(|e| e.confidence_histogram.as_ref())
        .collect();
    if hists.is_empty() {
        return None;
    }
    let bins = hists[0].len();
    let (w, h, m) = (640.0, 360.0, 48.0);
    let cw = (w - 2.0 * m) / hists.len() as f64;
    let ch = (h - 2.0 * m) / bins as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">pseudo-label confidence by epoch</text>\n",
        w / 2.0
    );
    for (e, hist) in hists.iter().enumerate() {
        let total = hist.iter().sum::<usize>().max(1) as f64;
        for (b, &c) in hist.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#1f77b4\" fill-opacity=\"{:.3}\"/>",
                m + cw * e as f64,
                h - m - ch * (b as f64 + 1.0),
                cw,
                ch,
                c as f64 / total
            );
        }
    }
    for (v, label) in [(0.0, "0"), (0.5, "0.5"), (1.0, "1")] {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{label}</text>",
            m - 4.0,
            h - m - (h - 2.0 * m) * v + 3.0
        );
    }
    svg.push_str("</svg>\n");
    Some(svg)
}
