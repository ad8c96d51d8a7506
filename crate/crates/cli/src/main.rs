//! Command-line front end: `generate`, `train`, `suite` and `report`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;

use hiermatch::data::{HierDataset, TupleSpec};
use hiermatch::harness::{apply_algo, emit_report, run_suite, DatasetSpec, ExperimentSuite, ReportFormat, RunPlan};
use hiermatch::ssl::SslAlgo;
use hiermatch::train::{run, RunReport, TrainMode};
use hiermatch::{Error, Result};

#[derive(Parser)]
#[command(name = "hiermatch", version, about = "Hierarchical semi-supervised training on synthetic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it with its hierarchy.
    Generate {
        /// Dataset spec JSON; written with defaults if missing.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "HIERMATCH_OUT", default_value = "runs")]
        out: PathBuf,
    },
    /// Train one model and write its report, CSV log and checkpoint.
    Train {
        /// Run plan JSON; written with defaults if missing.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Label budget, e.g. "60,0,-".
        #[arg(long)]
        tuple: Option<String>,
        #[arg(long)]
        algo: Option<SslAlgo>,
        /// hiermatch, baseline or sup (full mode names are accepted too).
        #[arg(long)]
        mode: Option<TrainMode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use a dataset file from `generate` instead of the plan's spec.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, env = "HIERMATCH_OUT", default_value = "runs")]
        out: PathBuf,
    },
    /// Run every configured run over several seeds and aggregate.
    Suite {
        /// Suite JSON; written with defaults if missing.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace the seed list with 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, env = "HIERMATCH_OUT", default_value = "runs")]
        out: PathBuf,
    },
    /// Render saved run reports.
    Report {
        /// Report JSON files, or directories searched recursively.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// csv, json, txt or svg-plot.
        #[arg(long, default_value = "txt")]
        format: ReportFormat,
        #[arg(long, env = "HIERMATCH_OUT", default_value = "runs")]
        out: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Loads a config file, or writes the defaults to it when it does not exist.
fn load_or_init<T: Serialize + DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    if !path.exists() {
        let value = T::default();
        write_json(path, &value)?;
        info!("wrote default config to {}", path.display());
        return Ok(value);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn generate(config: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let mut spec: DatasetSpec = load_or_init(config.as_deref())?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dataset = spec.build()?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    dataset.save(&out.join("dataset.json"))?;
    dataset.hierarchy.save(&out.join("hierarchy.json"))?;
    write_json(&out.join("dataset-spec.json"), &spec)?;
    println!(
        "generated {} samples ({} train, {} val, {} test) with {} levels in {}",
        dataset.len(),
        dataset.splits.train.len(),
        dataset.splits.val.len(),
        dataset.splits.test.len(),
        dataset.hierarchy.levels(),
        out.display()
    );
    Ok(())
}

struct TrainArgs {
    config: Option<PathBuf>,
    tuple: Option<String>,
    algo: Option<SslAlgo>,
    mode: Option<TrainMode>,
    seed: Option<u64>,
    dataset: Option<PathBuf>,
    out: PathBuf,
}

fn train(args: TrainArgs) -> Result<()> {
    let mut plan: RunPlan = load_or_init(args.config.as_deref())?;
    if let Some(t) = &args.tuple {
        plan.tuple = TupleSpec::parse(t)?;
    }
    if let Some(a) = args.algo {
        apply_algo(&mut plan.train, a);
    }
    if let Some(m) = args.mode {
        plan.train.mode = m;
    }
    if let Some(s) = args.seed {
        plan.train.seed = s;
    }
    plan.train.validate()?;
    let dataset = match &args.dataset {
        Some(path) => HierDataset::load(path)?,
        None => plan.dataset.build()?,
    };
    write_json(&args.out.join("config.json"), &plan)?;
    let outcome = run(&dataset, &plan.tuple, &plan.train)?;
    let report = &outcome.report;
    write_text(&args.out.join("report.json"), &report.to_json()?)?;
    write_text(&args.out.join("report.csv"), &report.to_csv())?;
    outcome.model.save_checkpoint(&args.out.join("model.json"))?;
    println!(
        "{} ({}) seed {}: test top-1 {:.2}% top-5 {:.2}% (best epoch {})",
        report.mode,
        plan.tuple,
        report.seed,
        100.0 * report.test_top1,
        100.0 * report.test_top5,
        report.best_epoch
    );
    Ok(())
}

/// Returns the suite exit code: 0 when every seed finished.
fn suite(config: Option<PathBuf>, seeds: Option<u64>, out: PathBuf) -> Result<i32> {
    let mut suite: ExperimentSuite = load_or_init(config.as_deref())?;
    if let Some(n) = seeds {
        suite.seeds = (0..n).collect();
    }
    let result = run_suite(&suite)?;
    write_json(&out.join("suite.json"), &suite)?;
    result.write(&out)?;
    print!("{}", result.summary_table());
    if result.partial {
        for o in result.outcomes.iter().filter(|o| o.error.is_some()) {
            warn!("{} seed {}: {}", o.run, o.seed, o.error.as_deref().unwrap_or(""));
        }
    }
    Ok(result.exit_code())
}

fn collect_reports(path: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                collect_reports(&p, found)?;
            } else if p.extension().is_some_and(|e| e == "json") {
                found.push(p);
            }
        }
        Ok(())
    } else if path.exists() {
        found.push(path.to_path_buf());
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn label_for(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match path.parent().and_then(|p| p.file_name()) {
        Some(dir) => format!("{}-{stem}", dir.to_string_lossy()),
        None => stem,
    }
}

fn report(inputs: Vec<PathBuf>, format: ReportFormat, out: PathBuf) -> Result<()> {
    let mut paths = Vec::new();
    for input in &inputs {
        collect_reports(input, &mut paths)?;
    }
    let mut reports = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        // directories also hold configs and summaries; only run reports count
        match RunReport::from_json(&text) {
            Ok(r) => reports.push((label_for(&path), r)),
            Err(e) if inputs.contains(&path) => return Err(e),
            Err(_) => {}
        }
    }
    for path in emit_report(&reports, format, &out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { config, seed, out } => generate(config, seed, out).map(|_| 0),
        Command::Train {
            config,
            tuple,
            algo,
            mode,
            seed,
            dataset,
            out,
        } => train(TrainArgs {
            config,
            tuple,
            algo,
            mode,
            seed,
            dataset,
            out,
        })
        .map(|_| 0),
        Command::Suite { config, seeds, out } => suite(config, seeds, out),
        Command::Report { inputs, format, out } => report(inputs, format, out).map(|_| 0),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            eprintln!("error: some seeds failed; see seeds.csv");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
