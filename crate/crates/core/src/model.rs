//! MLP backbone whose feature vector is cut into one slice per hierarchy
//! level, with one classifier per level.
//!
//! The classifier for level h reads `concat(f^h, stop(f^{h+1}), …, stop(f^H))`:
//! finer slices help coarse predictions going forward, but coarse losses never
//! send gradient into them.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{rng_for, TAG_INIT};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Widths of the H feature slices, coarsest first. Every slice gets
/// `dim / levels`; the finest slice also takes the remainder.
pub fn split_plan(dim: usize, levels: usize) -> Result<Vec<usize>> {
    if levels == 0 || dim < levels {
        return Err(Error::Config(format!(
            "cannot split {dim} features over {levels} levels"
        )));
    }
    let base = dim / levels;
    let mut plan = vec![base; levels];
    plan[levels - 1] += dim - base * levels;
    Ok(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Hidden widths of the backbone; each is followed by a relu.
    pub hidden: Vec<usize>,
    /// Width D of the backbone output f.
    pub feature_dim: usize,
    /// Optional relu hidden layer inside every classifier.
    pub head_hidden: Option<usize>,
    /// Classes per level, coarsest first.
    pub classes_per_level: Vec<usize>,
    /// Insert gradient stops on finer slices. Turning this off is an ablation.
    pub stop_gradient: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 16,
            hidden: vec![64, 64],
            feature_dim: 32,
            head_hidden: None,
            classes_per_level: vec![4, 12],
            stop_gradient: true,
        }
    }
}

impl ModelConfig {
    pub fn levels(&self) -> usize {
        self.classes_per_level.len()
    }

    /// Input width of classifier `level` (1-based).
    pub fn head_input_dim(&self, level: usize) -> Result<usize> {
        let plan = split_plan(self.feature_dim, self.levels())?;
        Ok(plan[level - 1..].iter().sum())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

impl Linear {
    fn init(fan_in: usize, fan_out: usize, gain: f64, seed: u64, path: &[u64]) -> Linear {
        let mut rng = rng_for(seed, path);
        let std = (gain / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
            .collect();
        Linear {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
            bias: Matrix::zeros(1, fan_out),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Option<Linear>,
    pub out: Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentangledModel {
    pub config: ModelConfig,
    pub slice_plan: Vec<usize>,
    pub backbone: Vec<Linear>,
    pub heads: Vec<Head>,
}

/// Model parameters registered as leaves on one tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub vars: Vec<Var>,
}

/// Output of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub features: Var,
    pub slices: Vec<Var>,
    /// Logits per level, coarsest first. `None` for levels not requested.
    pub logits: Vec<Option<Var>>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config: ModelConfig,
    slice_plan: Vec<usize>,
    params: Vec<NamedParam>,
}

#[derive(Serialize, Deserialize)]
struct NamedParam {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DisentangledModel {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if config.classes_per_level.is_empty() || config.classes_per_level.contains(&0) {
            return Err(Error::Config("every level needs at least one class".into()));
        }
        let slice_plan = split_plan(config.feature_dim, config.levels())?;

        let mut widths = vec![config.input_dim];
        widths.extend(&config.hidden);
        widths.push(config.feature_dim);
        let backbone = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 2 < widths.len() { 2.0 } else { 1.0 };
                Linear::init(w[0], w[1], gain, seed, &[TAG_INIT, 0, i as u64])
            })
            .collect();

        let heads = (1..=config.levels())
            .map(|level| {
                let input = config.head_input_dim(level)?;
                let k = config.classes_per_level[level - 1];
                let path = |part: u64| [TAG_INIT, 1, level as u64, part];
                Ok(match config.head_hidden {
                    Some(hid) => Head {
                        hidden: Some(Linear::init(input, hid, 2.0, seed, &path(0))),
                        out: Linear::init(hid, k, 1.0, seed, &path(1)),
                    },
                    None => Head {
                        hidden: None,
                        out: Linear::init(input, k, 1.0, seed, &path(1)),
                    },
                })
            })
            .collect::<Result<_>>()?;

        Ok(DisentangledModel {
            config: config.clone(),
            slice_plan,
            backbone,
            heads,
        })
    }

    pub fn levels(&self) -> usize {
        self.heads.len()
    }

    /// Parameters in a fixed order: backbone layers, then heads.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for l in &self.backbone {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for h in &self.heads {
            if let Some(l) = &h.hidden {
                out.push(&l.weight);
                out.push(&l.bias);
            }
            out.push(&h.out.weight);
            out.push(&h.out.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for l in &mut self.backbone {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for h in &mut self.heads {
            if let Some(l) = &mut h.hidden {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
            out.push(&mut h.out.weight);
            out.push(&mut h.out.bias);
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.backbone.len() {
            out.push(format!("backbone.{i}.weight"));
            out.push(format!("backbone.{i}.bias"));
        }
        for (i, h) in self.heads.iter().enumerate() {
            if h.hidden.is_some() {
                out.push(format!("head.{}.hidden.weight", i + 1));
                out.push(format!("head.{}.hidden.bias", i + 1));
            }
            out.push(format!("head.{}.out.weight", i + 1));
            out.push(format!("head.{}.out.bias", i + 1));
        }
        out
    }

    /// Indices into [`DisentangledModel::params`] owned by classifier `level`.
    pub fn head_param_range(&self, level: usize) -> std::ops::Range<usize> {
        let mut start = 2 * self.backbone.len();
        for h in &self.heads[..level - 1] {
            start += if h.hidden.is_some() { 4 } else { 2 };
        }
        let n = if self.heads[level - 1].hidden.is_some() { 4 } else { 2 };
        start..start + n
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self.params().into_iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    /// Backbone features f = F(x).
    pub fn features(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var> {
        let (_, cols) = tape.shape(x);
        if cols != self.config.input_dim {
            return Err(Error::Dimension {
                op: "model input",
                left: tape.shape(x),
                right: (tape.shape(x).0, self.config.input_dim),
            });
        }
        let mut h = x;
        let last = self.backbone.len() - 1;
        for i in 0..self.backbone.len() {
            let z = tape.matmul(h, params.vars[2 * i])?;
            h = tape.add_row(z, params.vars[2 * i + 1])?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Splits `features` per the slice plan.
    pub fn slices(&self, tape: &mut Tape, features: Var) -> Result<Vec<Var>> {
        let mut start = 0;
        self.slice_plan
            .iter()
            .map(|&w| {
                let s = tape.slice(features, start, start + w);
                start += w;
                s
            })
            .collect()
    }

    /// Logits of classifier `level` given all slices.
    pub fn head_logits(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        slices: &[Var],
        level: usize,
    ) -> Result<Var> {
        let mut parts = vec![slices[level - 1]];
        for &finer in &slices[level..] {
            parts.push(if self.config.stop_gradient {
                tape.stop_gradient(finer)
            } else {
                finer
            });
        }
        let input = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat(&parts)?
        };
        let range = self.head_param_range(level);
        let mut h = input;
        let mut p = range.start;
        if self.heads[level - 1].hidden.is_some() {
            let z = tape.matmul(h, params.vars[p])?;
            let z = tape.add_row(z, params.vars[p + 1])?;
            h = tape.relu(z);
            p += 2;
        }
        let z = tape.matmul(h, params.vars[p])?;
        tape.add_row(z, params.vars[p + 1])
    }

    /// Forward pass computing logits only for the levels in `levels`.
    pub fn forward_levels(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: Var,
        levels: &[usize],
    ) -> Result<ForwardOutput> {
        let features = self.features(tape, params, x)?;
        let slices = self.slices(tape, features)?;
        let mut logits = vec![None; self.levels()];
        for &l in levels {
            if l == 0 || l > self.levels() {
                return Err(Error::Range(format!("no classifier for level {l}")));
            }
            logits[l - 1] = Some(self.head_logits(tape, params, &slices, l)?);
        }
        Ok(ForwardOutput {
            features,
            slices,
            logits,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &BoundParams, x: Var) -> Result<ForwardOutput> {
        let all: Vec<usize> = (1..=self.levels()).collect();
        self.forward_levels(tape, params, x, &all)
    }

    /// Logits of classifier `level` for a batch, without recording gradients.
    pub fn predict_level(&self, x: &Matrix, level: usize) -> Result<Matrix> {
        let mut tape = Tape::new();
        let params = BoundParams {
            vars: self.params().into_iter().map(|p| tape.constant(p.clone())).collect(),
        };
        let xv = tape.constant(x.clone());
        let out = self.forward_levels(&mut tape, &params, xv, &[level])?;
        Ok(tape.value(out.logits[level - 1].expect("requested")).clone())
    }

    /// Logits of every classifier from one shared backbone pass.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut tape = Tape::new();
        let params = BoundParams {
            vars: self.params().into_iter().map(|p| tape.constant(p.clone())).collect(),
        };
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &params, xv)?;
        Ok(out
            .logits
            .into_iter()
            .map(|l| tape.value(l.expect("all levels")).clone())
            .collect())
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let params = self
            .param_names()
            .into_iter()
            .zip(self.params())
            .map(|(name, p)| NamedParam {
                name,
                rows: p.rows(),
                cols: p.cols(),
                data: p.as_slice().to_vec(),
            })
            .collect();
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            slice_plan: self.slice_plan.clone(),
            params,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        let mut model = DisentangledModel::init(&file.config, 0)?;
        if model.slice_plan != file.slice_plan {
            return Err(Error::Validation("slice plan disagrees with config".into()));
        }
        let names = model.param_names();
        if names.len() != file.params.len() {
            return Err(Error::Validation("parameter count mismatch".into()));
        }
        for ((slot, name), p) in model.params_mut().into_iter().zip(names).zip(file.params) {
            if p.name != name || (p.rows, p.cols) != slot.shape() {
                return Err(Error::Validation(format!("unexpected parameter {}", p.name)));
            }
            *slot = Matrix::from_vec(p.rows, p.cols, p.data)?;
        }
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DisentangledModel::from_checkpoint_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;

    fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = rng_for(seed, &[99]);
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn one_hot(labels: &[usize], k: usize) -> Matrix {
        let mut m = Matrix::zeros(labels.len(), k);
        for (r, &c) in labels.iter().enumerate() {
            m.set(r, c, 1.0);
        }
        m
    }

    #[test]
    fn split_plans() {
        assert_eq!(split_plan(512, 2).unwrap(), vec![256, 256]);
        assert_eq!(split_plan(512, 3).unwrap(), vec![170, 170, 172]);
        assert_eq!(split_plan(2048, 3).unwrap(), vec![682, 682, 684]);
        assert_eq!(split_plan(7, 1).unwrap(), vec![7]);
        assert!(split_plan(2, 3).is_err());
    }

    #[test]
    fn default_config_head_dims() {
        let m = DisentangledModel::init(&ModelConfig::default(), 0).unwrap();
        assert_eq!(m.slice_plan, vec![16, 16]);
        assert_eq!(m.heads[0].out.weight.shape(), (32, 4));
        assert_eq!(m.heads[1].out.weight.shape(), (16, 12));
        assert_eq!(m.backbone.len(), 3);
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::default();
        let a = DisentangledModel::init(&cfg, 4).unwrap();
        let b = DisentangledModel::init(&cfg, 4).unwrap();
        let c = DisentangledModel::init(&cfg, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_hidden_is_a_linear_probe() {
        let cfg = ModelConfig {
            hidden: vec![],
            classes_per_level: vec![3],
            feature_dim: 8,
            ..ModelConfig::default()
        };
        let m = DisentangledModel::init(&cfg, 1).unwrap();
        let x = batch(5, 16, 1);
        let y = batch(5, 16, 2);
        // linearity: logits(x + y) - bias = (logits(x) - bias) + (logits(y) - bias)
        let mut xy = x.clone();
        xy.add_assign(&y);
        let z0 = m.predict_level(&Matrix::zeros(5, 16), 1).unwrap();
        let lx = m.predict_level(&x, 1).unwrap();
        let ly = m.predict_level(&y, 1).unwrap();
        let lxy = m.predict_level(&xy, 1).unwrap();
        for i in 0..lx.len() {
            let lhs = lxy.as_slice()[i] - z0.as_slice()[i];
            let rhs = lx.as_slice()[i] - z0.as_slice()[i] + ly.as_slice()[i] - z0.as_slice()[i];
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn single_level_has_no_stop_nodes() {
        let cfg = ModelConfig {
            classes_per_level: vec![5],
            ..ModelConfig::default()
        };
        let m = DisentangledModel::init(&cfg, 2).unwrap();
        let mut t = Tape::new();
        let p = m.bind(&mut t);
        let x = t.constant(batch(3, 16, 3));
        let out = m.forward(&mut t, &p, x).unwrap();
        assert!(t.nodes().iter().all(|n| !n.stop_grad));
        assert_eq!(t.shape(out.logits[0].unwrap()), (3, 5));
        assert_eq!(m.heads[0].out.weight.rows(), 32);
    }

    #[test]
    fn stops_do_not_change_forward_values() {
        let cfg = ModelConfig {
            classes_per_level: vec![2, 4, 8],
            feature_dim: 12,
            ..ModelConfig::default()
        };
        let with = DisentangledModel::init(&cfg, 3).unwrap();
        let mut without = with.clone();
        without.config.stop_gradient = false;
        let x = batch(6, 16, 8);
        assert_eq!(with.predict(&x).unwrap(), without.predict(&x).unwrap());
    }

    fn coarse_loss_grads(model: &DisentangledModel, level: usize) -> Vec<Matrix> {
        let x = batch(8, 16, 11);
        let k = model.config.classes_per_level[level - 1];
        let labels: Vec<usize> = (0..8).map(|i| i % k).collect();
        let mut t = Tape::new();
        let p = model.bind(&mut t);
        let xv = t.constant(x);
        let out = model.forward_levels(&mut t, &p, xv, &[level]).unwrap();
        let loss = t.cross_entropy(out.logits[level - 1].unwrap(), &one_hot(&labels, k)).unwrap();
        t.backward(loss).unwrap();
        p.vars.iter().map(|v| t.grad(*v).clone()).collect()
    }

    #[test]
    fn coarse_loss_leaves_finer_slices_untouched() {
        for classes in [vec![3, 6], vec![2, 4, 8]] {
            let cfg = ModelConfig {
                classes_per_level: classes.clone(),
                feature_dim: 12,
                ..ModelConfig::default()
            };
            let model = DisentangledModel::init(&cfg, 21).unwrap();
            let last = 2 * (model.backbone.len() - 1);
            let plan = model.slice_plan.clone();
            for level in 1..classes.len() {
                let grads = coarse_loss_grads(&model, level);
                let first_finer: usize = plan[..level].iter().sum();
                let w = &grads[last];
                let b = &grads[last + 1];
                for r in 0..w.rows() {
                    for c in first_finer..w.cols() {
                        assert_eq!(w.get(r, c), 0.0);
                    }
                }
                for c in first_finer..b.cols() {
                    assert_eq!(b.get(0, c), 0.0);
                }
                // finer classifiers get nothing either
                for m in level + 1..=classes.len() {
                    for i in model.head_param_range(m) {
                        assert_eq!(grads[i].max_abs(), 0.0);
                    }
                }

                let mut open = model.clone();
                open.config.stop_gradient = false;
                let grads = coarse_loss_grads(&open, level);
                let leak: f64 = (0..grads[last].rows())
                    .flat_map(|r| (first_finer..grads[last].cols()).map(move |c| (r, c)))
                    .map(|(r, c)| grads[last].get(r, c).abs())
                    .sum();
                assert!(leak > 0.0);
            }
        }
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let cfg = ModelConfig {
            input_dim: 4,
            hidden: vec![6],
            feature_dim: 6,
            classes_per_level: vec![2, 3],
            ..ModelConfig::default()
        };
        let model = DisentangledModel::init(&cfg, 5).unwrap();
        let x = batch(5, 4, 17);
        let t1 = one_hot(&[0, 1, 1, 0, 1], 2);
        let t2 = one_hot(&[0, 2, 1, 0, 2], 3);
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let report = grad_check(
            |t, vars| {
                let p = BoundParams { vars: vars.to_vec() };
                let xv = t.constant(x.clone());
                let out = model.forward(t, &p, xv)?;
                let l1 = t.cross_entropy(out.logits[0].unwrap(), &t1)?;
                let l2 = t.cross_entropy(out.logits[1].unwrap(), &t2)?;
                t.add(l1, l2)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.checked > 0);
        assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = ModelConfig {
            head_hidden: Some(5),
            ..ModelConfig::default()
        };
        let m = DisentangledModel::init(&cfg, 8).unwrap();
        let back = DisentangledModel::from_checkpoint_json(&m.to_checkpoint_json().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn input_dimension_checked() {
        let m = DisentangledModel::init(&ModelConfig::default(), 0).unwrap();
        assert!(matches!(
            m.predict_level(&Matrix::zeros(2, 3), 1),
            Err(Error::Dimension { .. })
        ));
    }
}
