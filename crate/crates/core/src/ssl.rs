//! Per-level semi-supervised losses: MixMatch and FixMatch mechanics.
//!
//! Both entry points take one level's labeled batch and its unlabeled batch
//! (drawn from that level's pool) and return the supervised and unsupervised
//! loss nodes on the caller's tape. Weighting by λ_u is left to the trainer.

use log::warn;
use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax, check_distribution_rows, Matrix, Tape, Var};
use crate::data::Augmenter;
use crate::error::{Error, Result};
use crate::model::{BoundParams, DisentangledModel};
use crate::rng::{derive_seed, rng_for};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SslAlgo {
    MixMatch,
    FixMatch,
}

impl std::str::FromStr for SslAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixmatch" => Ok(SslAlgo::MixMatch),
            "fixmatch" => Ok(SslAlgo::FixMatch),
            other => Err(Error::Config(format!("unknown SSL algorithm '{other}'"))),
        }
    }
}

impl std::fmt::Display for SslAlgo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SslAlgo::MixMatch => "mixmatch",
            SslAlgo::FixMatch => "fixmatch",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ramp {
    /// λ_u grows linearly from 0 to its maximum over the whole run.
    Linear,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslHyperparams {
    pub algo: SslAlgo,
    /// Sharpening temperature T.
    pub temperature: f64,
    /// MixUp Beta(α, α) parameter.
    pub alpha: f64,
    /// Weak augmentations averaged when guessing labels.
    pub augmentations: usize,
    /// FixMatch confidence threshold τ.
    pub threshold: f64,
    pub lambda_u_max: f64,
    pub ramp: Ramp,
}

impl Default for SslHyperparams {
    fn default() -> Self {
        SslHyperparams::mixmatch()
    }
}

impl SslHyperparams {
    pub fn mixmatch() -> Self {
        SslHyperparams {
            algo: SslAlgo::MixMatch,
            temperature: 0.5,
            alpha: 0.75,
            augmentations: 2,
            threshold: 0.95,
            lambda_u_max: 150.0,
            ramp: Ramp::Linear,
        }
    }

    pub fn fixmatch() -> Self {
        SslHyperparams {
            algo: SslAlgo::FixMatch,
            lambda_u_max: 1.0,
            ramp: Ramp::Constant,
            ..SslHyperparams::mixmatch()
        }
    }

    pub fn for_algo(algo: SslAlgo) -> Self {
        match algo {
            SslAlgo::MixMatch => SslHyperparams::mixmatch(),
            SslAlgo::FixMatch => SslHyperparams::fixmatch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature {} must be > 0", self.temperature)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha {} must be > 0", self.alpha)));
        }
        if self.augmentations == 0 {
            return Err(Error::Config("need at least one augmentation".into()));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold {} not in (0, 1]", self.threshold)));
        }
        if !(self.lambda_u_max >= 0.0) {
            return Err(Error::Config(format!("lambda_u_max {} must be >= 0", self.lambda_u_max)));
        }
        Ok(())
    }
}

/// Temperature sharpening `p_i^(1/T) / Σ_j p_j^(1/T)`.
pub fn sharpen(p: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::Validation(format!("temperature {temperature} must be > 0")));
    }
    let total: f64 = p.iter().sum();
    if p.iter().all(|v| *v == 0.0) || (total - 1.0).abs() > 1e-6 || p.iter().any(|v| *v < 0.0) {
        return Err(Error::Validation(format!(
            "cannot sharpen a vector summing to {total}"
        )));
    }
    if temperature == 1.0 {
        return Ok(p.to_vec());
    }
    // work in log space so tiny T does not underflow every entry
    let inv = 1.0 / temperature;
    let logs: Vec<f64> = p
        .iter()
        .map(|&v| if v > 0.0 { v.ln() * inv } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    Ok(out)
}

pub fn sharpen_rows(p: &Matrix, temperature: f64) -> Result<Matrix> {
    let mut out = Matrix::zeros(p.rows(), p.cols());
    for r in 0..p.rows() {
        out.row_mut(r).copy_from_slice(&sharpen(p.row(r), temperature)?);
    }
    Ok(out)
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum()
}

/// Result of a MixUp draw.
#[derive(Clone, Debug)]
pub struct Mixed {
    pub x: Matrix,
    pub p: Matrix,
    /// Applied weight of the first argument, `max(λ, 1 - λ)`.
    pub lambda: f64,
}

/// Draws λ ~ Beta(α, α) and returns `max(λ, 1 - λ)`.
pub fn mixup_lambda(alpha: f64, seed: u64) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::Config(format!("bad MixUp alpha {alpha}: {e}")))?;
    let lambda: f64 = beta.sample(&mut rng_for(seed, &[0x4d49_5855]));
    Ok(lambda.max(1.0 - lambda))
}

/// Convex combination of two inputs and their soft targets, weighted towards
/// the first. Accepts single rows or whole batches; one λ covers the call.
pub fn mixup(
    x1: &Matrix,
    p1: &Matrix,
    x2: &Matrix,
    p2: &Matrix,
    alpha: f64,
    seed: u64,
) -> Result<Mixed> {
    if x1.shape() != x2.shape() || p1.shape() != p2.shape() || x1.rows() != p1.rows() {
        return Err(Error::Dimension {
            op: "mixup",
            left: x1.shape(),
            right: x2.shape(),
        });
    }
    check_distribution_rows(p1)?;
    check_distribution_rows(p2)?;
    let lambda = mixup_lambda(alpha, seed)?;
    let blend = |a: &Matrix, b: &Matrix| {
        let data = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(u, v)| lambda * u + (1.0 - lambda) * v)
            .collect();
        Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
    };
    Ok(Mixed {
        x: blend(x1, x2),
        p: blend(p1, p2),
        lambda,
    })
}

/// Softmax of classifier `level` averaged over `k` weak views, then sharpened.
/// Returns the guessed targets and, per row, the largest averaged probability
/// before sharpening.
pub fn guess_labels(
    model: &DisentangledModel,
    x: &Matrix,
    level: usize,
    k: usize,
    temperature: f64,
    augmenter: &Augmenter,
    seed: u64,
) -> Result<(Matrix, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Config("label guessing needs k >= 1".into()));
    }
    let mut avg = Matrix::zeros(x.rows(), model.config.classes_per_level[level - 1]);
    for view in 0..k {
        let xv = augmenter.weak(x, derive_seed(seed, &[view as u64]));
        avg.add_assign(&model.predict_level(&xv, level)?.softmax_rows());
    }
    avg.scale_assign(1.0 / k as f64);
    let confidence = (0..avg.rows())
        .map(|r| avg.row(r).iter().copied().fold(0.0, f64::max))
        .collect();
    Ok((sharpen_rows(&avg, temperature)?, confidence))
}

/// One level's inputs for an iteration.
#[derive(Clone, Debug)]
pub struct LevelInputs {
    /// Run level (1 = coarsest).
    pub level: usize,
    pub labeled: Matrix,
    pub labels: Vec<usize>,
    pub unlabeled: Matrix,
}

/// Loss nodes produced for one level.
#[derive(Clone, Debug)]
pub struct LevelLosses {
    pub sup: Var,
    /// `None` when the unlabeled batch was empty.
    pub unsup: Option<Var>,
    /// FixMatch only: share of unlabeled rows that passed the threshold.
    pub mask_rate: Option<f64>,
    /// Max class probability the model gave each unlabeled row.
    pub confidences: Vec<f64>,
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &c) in labels.iter().enumerate() {
        if c >= classes {
            return Err(Error::Range(format!("label {c} >= {classes} classes")));
        }
        m.set(r, c, 1.0);
    }
    Ok(m)
}

const SEED_LABELED: u64 = 0;
const SEED_UNLABELED: u64 = 1;
const SEED_STRONG: u64 = 2;
const SEED_SHUFFLE: u64 = 3;
const SEED_MIX: u64 = 4;

fn classifier_logits(
    model: &DisentangledModel,
    tape: &mut Tape,
    params: &BoundParams,
    x: &Matrix,
    level: usize,
) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let out = model.forward_levels(tape, params, xv, &[level])?;
    Ok(out.logits[level - 1].expect("requested level"))
}

/// Cross-entropy on a weakly augmented labeled batch. This is FixMatch's
/// supervised term and the whole loss of the supervised-only modes.
pub fn supervised_level_loss(
    model: &DisentangledModel,
    tape: &mut Tape,
    params: &BoundParams,
    inputs: &LevelInputs,
    augmenter: &Augmenter,
    seed: u64,
) -> Result<Var> {
    if inputs.labeled.rows() == 0 {
        return Err(Error::Contract("labeled batch is empty".into()));
    }
    let k = model.config.classes_per_level[inputs.level - 1];
    let x = augmenter.weak(&inputs.labeled, derive_seed(seed, &[SEED_LABELED]));
    let logits = classifier_logits(model, tape, params, &x, inputs.level)?;
    tape.cross_entropy(logits, &one_hot(&inputs.labels, k)?)
}

pub fn mixmatch_level_losses(
    model: &DisentangledModel,
    tape: &mut Tape,
    params: &BoundParams,
    inputs: &LevelInputs,
    hp: &SslHyperparams,
    augmenter: &Augmenter,
    seed: u64,
) -> Result<LevelLosses> {
    let level = inputs.level;
    let classes = model.config.classes_per_level[level - 1];
    let b = inputs.labeled.rows();
    if b == 0 {
        return Err(Error::Contract("labeled batch is empty".into()));
    }
    let xl = augmenter.weak(&inputs.labeled, derive_seed(seed, &[SEED_LABELED]));
    let pl = one_hot(&inputs.labels, classes)?;

    if inputs.unlabeled.rows() == 0 {
        warn!("level {level}: unlabeled pool is empty, unsupervised loss set to 0");
        let logits = classifier_logits(model, tape, params, &xl, level)?;
        return Ok(LevelLosses {
            sup: tape.cross_entropy(logits, &pl)?,
            unsup: None,
            mask_rate: None,
            confidences: Vec::new(),
        });
    }

    let useed = derive_seed(seed, &[SEED_UNLABELED]);
    let (guess, confidences) = guess_labels(
        model,
        &inputs.unlabeled,
        level,
        hp.augmentations,
        hp.temperature,
        augmenter,
        useed,
    )?;
    // the guessing pass used the same per-view seeds, so these are its inputs
    let views: Vec<Matrix> = (0..hp.augmentations)
        .map(|v| augmenter.weak(&inputs.unlabeled, derive_seed(useed, &[v as u64])))
        .collect();

    let mut xs: Vec<&Matrix> = vec![&xl];
    xs.extend(views.iter());
    let all_x = Matrix::vstack(&xs)?;
    let mut ps: Vec<&Matrix> = vec![&pl];
    ps.extend(std::iter::repeat_n(&guess, hp.augmentations));
    let all_p = Matrix::vstack(&ps)?;

    let mut perm: Vec<usize> = (0..all_x.rows()).collect();
    perm.shuffle(&mut rng_for(seed, &[SEED_SHUFFLE]));
    let mixed = mixup(
        &all_x,
        &all_p,
        &all_x.select_rows(&perm),
        &all_p.select_rows(&perm),
        hp.alpha,
        derive_seed(seed, &[SEED_MIX]),
    )?;

    let head: Vec<usize> = (0..b).collect();
    let tail: Vec<usize> = (b..all_x.rows()).collect();
    let logits_x = classifier_logits(model, tape, params, &mixed.x.select_rows(&head), level)?;
    let sup = tape.cross_entropy(logits_x, &mixed.p.select_rows(&head))?;
    let logits_u = classifier_logits(model, tape, params, &mixed.x.select_rows(&tail), level)?;
    let probs_u = tape.softmax(logits_u);
    let sq = tape.mse(probs_u, &mixed.p.select_rows(&tail))?;
    let unsup = tape.scale(sq, 1.0 / classes as f64);

    Ok(LevelLosses {
        sup,
        unsup: Some(unsup),
        mask_rate: None,
        confidences,
    })
}

pub fn fixmatch_level_losses(
    model: &DisentangledModel,
    tape: &mut Tape,
    params: &BoundParams,
    inputs: &LevelInputs,
    hp: &SslHyperparams,
    augmenter: &Augmenter,
    seed: u64,
) -> Result<LevelLosses> {
    if !(hp.threshold > 0.0 && hp.threshold <= 1.0) {
        return Err(Error::Config(format!("threshold {} not in (0, 1]", hp.threshold)));
    }
    let level = inputs.level;
    let classes = model.config.classes_per_level[level - 1];
    let sup = supervised_level_loss(model, tape, params, inputs, augmenter, seed)?;
    let n = inputs.unlabeled.rows();
    if n == 0 {
        warn!("level {level}: unlabeled pool is empty, unsupervised loss set to 0");
        return Ok(LevelLosses {
            sup,
            unsup: None,
            mask_rate: Some(0.0),
            confidences: Vec::new(),
        });
    }

    let useed = derive_seed(seed, &[SEED_UNLABELED]);
    let weak = augmenter.weak(&inputs.unlabeled, useed);
    let strong = augmenter.strong(&inputs.unlabeled, derive_seed(seed, &[SEED_STRONG]));
    let probs = model.predict_level(&weak, level)?.softmax_rows();
    let mut pseudo = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    for r in 0..n {
        let row = probs.row(r);
        let c = argmax(row);
        pseudo.push(c);
        confidences.push(row[c]);
        mask.push(if row[c] >= hp.threshold { 1.0 } else { 0.0 });
    }
    let mask_rate = mask.iter().sum::<f64>() / n as f64;
    let logits = classifier_logits(model, tape, params, &strong, level)?;
    let unsup = tape.weighted_cross_entropy(logits, &one_hot(&pseudo, classes)?, &mask)?;
    Ok(LevelLosses {
        sup,
        unsup: Some(unsup),
        mask_rate: Some(mask_rate),
        confidences,
    })
}

/// Dispatches to the algorithm named in `hp`.
pub fn level_losses(
    model: &DisentangledModel,
    tape: &mut Tape,
    params: &BoundParams,
    inputs: &LevelInputs,
    hp: &SslHyperparams,
    augmenter: &Augmenter,
    seed: u64,
) -> Result<LevelLosses> {
    match hp.algo {
        SslAlgo::MixMatch => mixmatch_level_losses(model, tape, params, inputs, hp, augmenter, seed),
        SslAlgo::FixMatch => fixmatch_level_losses(model, tape, params, inputs, hp, augmenter, seed),
    }
}

/// λ_u at iteration `t` of `total`.
pub fn lambda_schedule(t: usize, total: usize, hp: &SslHyperparams) -> Result<f64> {
    if total == 0 {
        return Err(Error::Config("schedule needs at least one iteration".into()));
    }
    if t > total {
        return Err(Error::Range(format!("iteration {t} beyond {total}")));
    }
    Ok(match hp.ramp {
        Ramp::Linear => hp.lambda_u_max * t as f64 / total as f64,
        Ramp::Constant => hp.lambda_u_max,
    })
}
