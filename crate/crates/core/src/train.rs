//! The training loop, evaluation and the baseline runners.
//!
//! Each iteration draws one batch per active level, sums
//! `L_X + λ_u · L_U` over those levels and takes a single optimizer step.
//! After every epoch the classifiers are scored on the validation split and
//! the parameters with the best finest-level top-1 are kept for the one test
//! evaluation at the end.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::data::{
    allocate_labels, AllocationOptions, Augmenter, BatchConfig, BatchIterator, HierDataset,
    LevelBatch, LevelSets, TupleEntry, TupleSpec,
};
use crate::error::{Error, Result};
use crate::model::{BoundParams, DisentangledModel, ModelConfig};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{derive_seed, TAG_SSL};
use crate::ssl::{
    lambda_schedule, level_losses, supervised_level_loss, LevelInputs, SslAlgo, SslHyperparams,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// SSL losses at every active level of the hierarchy.
    #[serde(rename = "hiermatch")]
    HierMatch,
    /// SSL on the finest level only, coarse labels dropped.
    SslBaseline,
    /// Supervised loss on the finest labels only.
    SupOnly,
    /// Supervised loss at every active level.
    HierarchicalSup,
}

impl TrainMode {
    pub fn uses_unlabeled(self) -> bool {
        matches!(self, TrainMode::HierMatch | TrainMode::SslBaseline)
    }

    pub fn is_flat(self) -> bool {
        matches!(self, TrainMode::SslBaseline | TrainMode::SupOnly)
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hiermatch" => Ok(TrainMode::HierMatch),
            "ssl-baseline" | "baseline" => Ok(TrainMode::SslBaseline),
            "sup-only" | "sup" => Ok(TrainMode::SupOnly),
            "hierarchical-sup" | "hier-sup" => Ok(TrainMode::HierarchicalSup),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::HierMatch => "hiermatch",
            TrainMode::SslBaseline => "ssl-baseline",
            TrainMode::SupOnly => "sup-only",
            TrainMode::HierarchicalSup => "hierarchical-sup",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub optimizer: OptimizerConfig,
    pub ssl: SslHyperparams,
    pub batch: BatchConfig,
    pub augment: Augmenter,
    /// `input_dim` and `classes_per_level` are overwritten from the data.
    pub model: ModelConfig,
    pub seed: u64,
    pub mode: TrainMode,
    /// Keep the per-iteration loss log in the report.
    pub log_iterations: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_algo(SslAlgo::MixMatch)
    }
}

impl TrainConfig {
    /// Desk-scale defaults: Adam for MixMatch, SGD with cosine decay and
    /// seven unlabeled samples per labeled one for FixMatch.
    pub fn for_algo(algo: SslAlgo) -> Self {
        let (optimizer, ratio) = match algo {
            SslAlgo::MixMatch => (OptimizerConfig::adam(), 1),
            SslAlgo::FixMatch => (OptimizerConfig::sgd_cosine(), 7),
        };
        TrainConfig {
            epochs: 50,
            iterations_per_epoch: 64,
            optimizer,
            ssl: SslHyperparams::for_algo(algo),
            batch: BatchConfig {
                batch_size: 32,
                unlabeled_ratio: ratio,
            },
            augment: Augmenter::default(),
            model: ModelConfig::default(),
            seed: 0,
            mode: TrainMode::HierMatch,
            log_iterations: true,
        }
    }

    /// Full-length schedule: 500 epochs of 1024 iterations with batch 64.
    pub fn full_scale(algo: SslAlgo) -> Self {
        let mut cfg = TrainConfig::for_algo(algo);
        cfg.epochs = 500;
        cfg.iterations_per_epoch = 1024;
        cfg.batch.batch_size = 64;
        cfg
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.iterations_per_epoch == 0 {
            return Err(Error::Config(
                "epochs and iterations_per_epoch must be >= 1".into(),
            ));
        }
        if self.batch.batch_size == 0 || self.batch.unlabeled_ratio == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        self.optimizer.validate()?;
        self.ssl.validate()
    }
}

/// Loss components of one level in one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTerm {
    /// Dataset level the term belongs to.
    pub level: usize,
    pub sup: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub unsup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mask_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub epoch: usize,
    pub total: f64,
    pub levels: Vec<LevelTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLevelLog {
    pub level: usize,
    pub loss_sup: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_unsup: Option<f64>,
    pub val_top1: f64,
    pub val_top5: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mask_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub levels: Vec<EpochLevelLog>,
    /// Counts of the finest classifier's max-softmax on unlabeled draws,
    /// in equal bins over [0, 1].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence_histogram: Option<Vec<usize>>,
    /// Largest of those max-softmax values.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_confidence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMetric {
    pub level: usize,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub mode: TrainMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub algo: Option<SslAlgo>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tuple: Option<String>,
    pub seed: u64,
    /// Dataset levels that had a classifier in this run, coarsest first.
    pub levels: Vec<usize>,
    pub labeled_counts: Vec<usize>,
    pub epochs: Vec<EpochLog>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub iterations: Vec<IterationLog>,
    pub best_epoch: usize,
    /// Test accuracy of every classifier at the selected epoch.
    pub test: Vec<LevelMetric>,
    pub test_top1: f64,
    pub test_top5: f64,
}

pub const CSV_HEADER: &str = "epoch,level,loss_sup,loss_unsup,val_top1,val_top5,mask_rate";

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: RunReport = serde_json::from_str(text)?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "report format {} unsupported",
                report.format_version
            )));
        }
        Ok(report)
    }

    /// One row per epoch and level; absent values are empty cells.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            for l in &e.levels {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    e.epoch,
                    l.level,
                    l.loss_sup,
                    opt(l.loss_unsup),
                    l.val_top1,
                    l.val_top5,
                    opt(l.mask_rate)
                ));
            }
        }
        out
    }

    pub fn finest_level(&self) -> usize {
        *self.levels.last().expect("at least one level")
    }
}

/// Result of a training run: the report and the selected parameters.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: RunReport,
    pub model: DisentangledModel,
}

/// Fraction of rows whose label is among the `k` largest logits. Ties rank
/// the lower class id first.
pub fn top_k_accuracy(logits: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 || k > logits.cols() {
        return Err(Error::Range(format!("k = {k} with {} classes", logits.cols())));
    }
    if labels.len() != logits.rows() {
        return Err(Error::Argument(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Argument("cannot score an empty set".into()));
    }
    let mut hits = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let target = row[y];
        // rank = classes strictly ahead of y under (logit desc, id asc)
        let ahead = row
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v > target || (v == target && c < y))
            .count();
        if ahead < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// Top-k accuracy of classifier `run_level` on the given dataset rows.
pub fn evaluate(
    model: &DisentangledModel,
    dataset: &HierDataset,
    indices: &[usize],
    run_level: usize,
    dataset_level: usize,
    k: usize,
) -> Result<f64> {
    let logits = model.predict_level(&dataset.rows(indices), run_level)?;
    let truth = dataset.labels_at(dataset_level)?;
    let labels: Vec<usize> = indices.iter().map(|&i| truth[i]).collect();
    top_k_accuracy(&logits, &labels, k)
}

fn score_all(
    model: &DisentangledModel,
    dataset: &HierDataset,
    indices: &[usize],
    dataset_levels: &[usize],
) -> Result<Vec<LevelMetric>> {
    let logits = model.predict(&dataset.rows(indices))?;
    dataset_levels
        .iter()
        .zip(&logits)
        .map(|(&level, z)| {
            let truth = dataset.labels_at(level)?;
            let labels: Vec<usize> = indices.iter().map(|&i| truth[i]).collect();
            Ok(LevelMetric {
                level,
                top1: top_k_accuracy(z, &labels, 1)?,
                top5: top_k_accuracy(z, &labels, 5.min(z.cols()))?,
            })
        })
        .collect()
}

pub fn confidence_histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut out = vec![0usize; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        out[b] += 1;
    }
    out
}

/// Loss nodes of one level within an iteration graph.
#[derive(Clone, Copy, Debug)]
pub struct TermVars {
    pub dataset_level: usize,
    pub sup: Var,
    pub unsup: Option<Var>,
    pub lambda_u: Option<f64>,
    pub mask_rate: Option<f64>,
}

/// Everything one iteration produced on its tape.
pub struct IterationGraph {
    pub total: Var,
    pub terms: Vec<TermVars>,
    pub finest_confidences: Vec<f64>,
}

/// Builds the summed loss for one iteration. `skip_levels` lists run levels
/// whose terms are left out entirely.
#[allow(clippy::too_many_arguments)]
pub fn build_iteration(
    model: &DisentangledModel,
    tape: &mut Tape,
    params: &BoundParams,
    dataset: &HierDataset,
    sets: &LevelSets,
    batch: &[LevelBatch],
    config: &TrainConfig,
    iteration: usize,
    skip_levels: &[usize],
) -> Result<IterationGraph> {
    let lambda = if config.mode.uses_unlabeled() {
        Some(lambda_schedule(iteration, config.total_iterations(), &config.ssl)?)
    } else {
        None
    };
    let mut total: Option<Var> = None;
    let mut terms = Vec::new();
    let mut finest_confidences = Vec::new();
    for lb in batch {
        if skip_levels.contains(&lb.level) {
            continue;
        }
        let dataset_level = sets.dataset_levels[lb.level - 1];
        let seed = derive_seed(config.seed, &[TAG_SSL, iteration as u64, dataset_level as u64]);
        let unlabeled = if config.mode.uses_unlabeled() {
            dataset.rows(&lb.unlabeled)
        } else {
            Matrix::zeros(0, dataset.dim())
        };
        let inputs = LevelInputs {
            level: lb.level,
            labeled: dataset.rows(&lb.labeled),
            labels: lb.labels.clone(),
            unlabeled,
        };
        let term = if let Some(lambda) = lambda {
            let l = level_losses(model, tape, params, &inputs, &config.ssl, &config.augment, seed)?;
            if lb.level == sets.levels() {
                finest_confidences = l.confidences;
            }
            let term = match l.unsup {
                Some(u) => {
                    let w = tape.scale(u, lambda);
                    tape.add(l.sup, w)?
                }
                None => l.sup,
            };
            terms.push(TermVars {
                dataset_level,
                sup: l.sup,
                unsup: l.unsup,
                lambda_u: Some(lambda),
                mask_rate: l.mask_rate,
            });
            term
        } else {
            let sup = supervised_level_loss(model, tape, params, &inputs, &config.augment, seed)?;
            terms.push(TermVars {
                dataset_level,
                sup,
                unsup: None,
                lambda_u: None,
                mask_rate: None,
            });
            sup
        };
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("no level contributed a loss".into()))?;
    Ok(IterationGraph {
        total,
        terms,
        finest_confidences,
    })
}

/// Prepares the level sets a mode trains on: flat modes see only the finest
/// level of `sets`.
pub fn sets_for_mode(sets: &LevelSets, mode: TrainMode) -> Result<LevelSets> {
    if mode.is_flat() && sets.levels() > 1 {
        sets.finest_view()
    } else {
        Ok(sets.clone())
    }
}

/// Builds a fresh model whose shape matches the data and level sets.
pub fn init_model(dataset: &HierDataset, sets: &LevelSets, config: &TrainConfig) -> Result<DisentangledModel> {
    let mut mc = config.model.clone();
    mc.input_dim = dataset.dim();
    mc.classes_per_level = sets.hierarchy.classes_per_level().to_vec();
    DisentangledModel::init(&mc, config.seed)
}

fn check_finite(value: f64, epoch: usize, iteration: usize, level: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            epoch,
            iteration,
            level,
            value,
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn train(dataset: &HierDataset, sets: &LevelSets, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let sets = sets_for_mode(sets, config.mode)?;
    sets.check_invariants()?;
    if dataset.splits.val.is_empty() || dataset.splits.test.is_empty() {
        return Err(Error::Config("dataset needs non-empty val and test splits".into()));
    }
    let mut model = init_model(dataset, &sets, config)?;
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|p| p.shape()).collect();
    let mut optimizer = Optimizer::new(&config.optimizer, &shapes)?;
    let mut batches = BatchIterator::new(&sets, &config.batch, config.seed)?;
    let total_iterations = config.total_iterations();
    let levels = sets.levels();

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut iterations = Vec::new();
    let mut best: Option<(usize, f64, DisentangledModel)> = None;

    for epoch in 0..config.epochs {
        let mut sup = vec![Vec::new(); levels];
        let mut unsup = vec![Vec::new(); levels];
        let mut masks = vec![Vec::new(); levels];
        let mut confidences = Vec::new();
        for step in 0..config.iterations_per_epoch {
            let t = epoch * config.iterations_per_epoch + step;
            let batch = batches.next().expect("batch stream is endless");
            let mut tape = Tape::new();
            let params = model.bind(&mut tape);
            let graph = build_iteration(&model, &mut tape, &params, dataset, &sets, &batch, config, t, &[])?;

            let mut logged = Vec::with_capacity(graph.terms.len());
            for (i, term) in graph.terms.iter().enumerate() {
                let TermVars {
                    dataset_level: level,
                    sup: s,
                    unsup: u,
                    lambda_u: lambda,
                    mask_rate: mask,
                } = *term;
                let sv = tape.scalar(s);
                check_finite(sv, epoch, t, level)?;
                let uv = u.map(|u| tape.scalar(u));
                if let Some(v) = uv {
                    check_finite(v, epoch, t, level)?;
                }
                sup[i].push(sv);
                if let Some(v) = uv {
                    unsup[i].push(v);
                }
                if let Some(m) = mask {
                    masks[i].push(m);
                }
                logged.push(LevelTerm {
                    level,
                    sup: sv,
                    unsup: uv,
                    lambda_u: lambda,
                    mask_rate: mask,
                });
            }
            let total = tape.scalar(graph.total);
            check_finite(total, epoch, t, sets.dataset_levels[levels - 1])?;
            confidences.extend(graph.finest_confidences);

            tape.backward(graph.total)?;
            let grads: Vec<&Matrix> = params.vars.iter().map(|v| tape.grad(*v)).collect();
            optimizer.step(model.params_mut(), &grads, total_iterations)?;
            if model.params().iter().any(|p| !p.all_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    iteration: t,
                    level: sets.dataset_levels[levels - 1],
                    value: f64::NAN,
                });
            }
            if config.log_iterations {
                iterations.push(IterationLog {
                    iteration: t,
                    epoch,
                    total,
                    levels: logged,
                });
            }
        }

        let val = score_all(&model, dataset, &dataset.splits.val, &sets.dataset_levels)?;
        let level_logs = (0..levels)
            .map(|i| EpochLevelLog {
                level: sets.dataset_levels[i],
                loss_sup: mean(&sup[i]),
                loss_unsup: (!unsup[i].is_empty()).then(|| mean(&unsup[i])),
                val_top1: val[i].top1,
                val_top5: val[i].top5,
                mask_rate: (!masks[i].is_empty()).then(|| mean(&masks[i])),
            })
            .collect();
        let finest_val = val[levels - 1].top1;
        debug!("epoch {epoch}: val top-1 {finest_val:.4}");
        if best.as_ref().is_none_or(|(_, b, _)| finest_val > *b) {
            best = Some((epoch, finest_val, model.clone()));
        }
        epochs.push(EpochLog {
            epoch,
            levels: level_logs,
            confidence_histogram: config
                .mode
                .uses_unlabeled()
                .then(|| confidence_histogram(&confidences, HISTOGRAM_BINS)),
            max_confidence: confidences.iter().copied().reduce(f64::max),
        });
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    let test = score_all(&best_model, dataset, &dataset.splits.test, &sets.dataset_levels)?;
    let finest = test.last().expect("one level").clone();
    info!(
        "{} run, seed {}: best epoch {best_epoch}, test top-1 {:.4}",
        config.mode, config.seed, finest.top1
    );
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        mode: config.mode,
        algo: config.mode.uses_unlabeled().then_some(config.ssl.algo),
        tuple: None,
        seed: config.seed,
        levels: sets.dataset_levels.clone(),
        labeled_counts: (1..=levels).map(|l| sets.labeled(l).len()).collect(),
        epochs,
        iterations,
        best_epoch,
        test,
        test_top1: finest.top1,
        test_top5: finest.top5,
    };
    Ok(TrainOutcome {
        report,
        model: best_model,
    })
}

/// Allocates labels for `tuple` (using the run seed) and trains.
pub fn run(dataset: &HierDataset, tuple: &TupleSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    let sets = allocate_labels(dataset, tuple, &AllocationOptions::default(), config.seed)?;
    let mut outcome = train(dataset, &sets, config)?;
    outcome.report.tuple = Some(tuple.to_string());
    Ok(outcome)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Every train sample labeled at the finest level, no unlabeled loss.
    SupFull,
    /// The tuple's finest labels only, no unlabeled loss.
    SupLimited,
    /// Disentangled model with every train sample labeled at every level.
    HierSup,
    MixMatch,
    FixMatch,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sup-full" => Ok(BaselineKind::SupFull),
            "sup-limited" => Ok(BaselineKind::SupLimited),
            "hier-sup" => Ok(BaselineKind::HierSup),
            "mixmatch" => Ok(BaselineKind::MixMatch),
            "fixmatch" => Ok(BaselineKind::FixMatch),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        }
    }
}

fn finest_only(tuple: &TupleSpec) -> bool {
    tuple.entries()[1..].iter().all(|e| !e.is_present())
}

/// Runs one of the reference configurations. `tuple` is required for the
/// limited-label kinds and must name finest labels only; the fully labeled
/// kinds build their own tuple when none is given.
pub fn run_baseline(
    kind: BaselineKind,
    dataset: &HierDataset,
    tuple: Option<&TupleSpec>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let h = dataset.hierarchy.levels();
    let mut cfg = config.clone();
    let tuple = match kind {
        BaselineKind::SupFull => {
            let t = tuple.cloned().unwrap_or_else(|| TupleSpec::new(vec![TupleEntry::All]).expect("valid"));
            if t.entries()[0] != TupleEntry::All || !finest_only(&t) {
                return Err(Error::Config(format!("sup-full needs tuple (all), got ({t})")));
            }
            cfg.mode = TrainMode::SupOnly;
            t
        }
        BaselineKind::HierSup => {
            let t = match tuple {
                Some(t) => t.clone(),
                None => {
                    let mut e = vec![TupleEntry::All];
                    e.extend(std::iter::repeat_n(TupleEntry::Count(0), h - 1));
                    TupleSpec::new(e)?
                }
            };
            if t.active_levels(h)?.len() != h {
                return Err(Error::Config(format!("hier-sup needs every level present, got ({t})")));
            }
            cfg.mode = TrainMode::HierarchicalSup;
            t
        }
        BaselineKind::SupLimited | BaselineKind::MixMatch | BaselineKind::FixMatch => {
            let t = tuple
                .cloned()
                .ok_or_else(|| Error::Config(format!("{kind:?} needs a label tuple")))?;
            if !finest_only(&t) {
                return Err(Error::Config(format!(
                    "baseline uses finest labels only, got ({t})"
                )));
            }
            cfg.mode = match kind {
                BaselineKind::SupLimited => TrainMode::SupOnly,
                _ => TrainMode::SslBaseline,
            };
            let want = match kind {
                BaselineKind::MixMatch => Some(SslAlgo::MixMatch),
                BaselineKind::FixMatch => Some(SslAlgo::FixMatch),
                _ => None,
            };
            if let Some(algo) = want {
                if cfg.ssl.algo != algo {
                    return Err(Error::Config(format!(
                        "{algo} baseline with a {} config",
                        cfg.ssl.algo
                    )));
                }
            }
            t
        }
    };
    run(dataset, &tuple, &cfg)
}
