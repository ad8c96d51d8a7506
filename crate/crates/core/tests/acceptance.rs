//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL
//! line each and exits non-zero if any criterion fails.

#![allow(clippy::field_reassign_with_default)]

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hiermatch::autodiff::{grad_check, Matrix, Tape};
use hiermatch::data::{
    allocate_labels, generate_synthetic, AllocationOptions, BatchIterator, ClassSizes, HierDataset, LevelSets,
    SyntheticConfig, TupleEntry, TupleSpec,
};
use hiermatch::hierarchy::LabelHierarchy;
use hiermatch::model::{BoundParams, DisentangledModel, ModelConfig};
use hiermatch::ssl::{self, SslAlgo};
use hiermatch::train::{build_iteration, run, run_baseline, BaselineKind, RunReport, TrainConfig, TrainMode};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn one_hot(labels: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), k);
    for (r, &c) in labels.iter().enumerate() {
        m.set(r, c, 1.0);
    }
    m
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn shannon(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn grad_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for m in 0..20 {
        let levels = rng.random_range(1..=3usize);
        let mut classes = vec![rng.random_range(2..=3usize)];
        for _ in 1..levels {
            let last = *classes.last().unwrap();
            classes.push(last * rng.random_range(1..=2usize) + 1);
        }
        let hidden: Vec<usize> = (0..rng.random_range(0..=1usize)).map(|_| rng.random_range(2..=64)).collect();
        let head_hidden = (hidden.is_empty() && rng.random_bool(0.5)).then(|| rng.random_range(2..=16));
        let cfg = ModelConfig {
            input_dim: rng.random_range(2..=8),
            hidden,
            feature_dim: rng.random_range(levels..=24),
            head_hidden,
            classes_per_level: classes.clone(),
            stop_gradient: rng.random_bool(0.7),
        };
        let model = DisentangledModel::init(&cfg, m).map_err(|e| e.to_string())?;
        let n = 4;
        let x = random_matrix(&mut rng, n, cfg.input_dim);
        let targets: Vec<Matrix> = classes
            .iter()
            .map(|&k| one_hot(&(0..n).map(|_| rng.random_range(0..k)).collect::<Vec<_>>(), k))
            .collect();
        let k_fine = *classes.last().unwrap();
        let soft = Matrix::from_rows(&(0..n).map(|_| random_distribution(&mut rng, k_fine)).collect::<Vec<_>>())
            .unwrap();
        let params: Vec<Matrix> = model.params().into_iter().cloned().collect();
        let report = grad_check(
            |t, vars| {
                let p = BoundParams { vars: vars.to_vec() };
                let xv = t.constant(x.clone());
                let out = model.forward(t, &p, xv)?;
                let mut total = None;
                for (h, target) in targets.iter().enumerate() {
                    let l = t.cross_entropy(out.logits[h].unwrap(), target)?;
                    total = Some(match total {
                        Some(acc) => t.add(acc, l)?,
                        None => l,
                    });
                }
                let probs = t.softmax(out.logits[levels - 1].unwrap());
                let u = t.mse(probs, &soft)?;
                t.add(total.unwrap(), u)
            },
            &params,
            1e-5,
        )
        .map_err(|e| e.to_string())?;
        ensure(report.checked > 0, || format!("model {m}: nothing checked"))?;
        worst = worst.max(report.max_rel_error);
        checked += report.checked;
        skipped += report.skipped;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e} >= 1e-4"))?;
    ensure(secs < 30.0, || format!("took {secs:.1} s (limit 30 s)"))?;
    Ok(format!(
        "max rel error {worst:.2e} over {checked} coordinates ({skipped} kink skips), {secs:.1} s"
    ))
}

/// Gradient of one coarse classifier's loss, alone, with respect to every
/// parameter of the model.
fn coarse_grads(model: &DisentangledModel, level: usize, x: &Matrix, labels: &[usize]) -> Vec<Matrix> {
    let k = model.config.classes_per_level[level - 1];
    let mut t = Tape::new();
    let p = model.bind(&mut t);
    let xv = t.constant(x.clone());
    let out = model.forward_levels(&mut t, &p, xv, &[level]).unwrap();
    let target = one_hot(&labels.iter().map(|l| l % k).collect::<Vec<_>>(), k);
    let loss = t.cross_entropy(out.logits[level - 1].unwrap(), &target).unwrap();
    t.backward(loss).unwrap();
    p.vars.iter().map(|v| t.grad(*v).clone()).collect()
}

/// Gradient entries of the last backbone layer that produce the slices finer
/// than `level`: weight columns plus bias entries.
fn finer_slice_grads(model: &DisentangledModel, grads: &[Matrix], level: usize) -> Vec<f64> {
    let last = 2 * (model.backbone.len() - 1);
    let start: usize = model.slice_plan[..level].iter().sum();
    let (w, b) = (&grads[last], &grads[last + 1]);
    let mut out = Vec::new();
    for r in 0..w.rows() {
        for c in start..w.cols() {
            out.push(w.get(r, c));
        }
    }
    for c in start..b.cols() {
        out.push(b.get(0, c));
    }
    out
}

fn gamma_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = 0;
    for classes in [vec![3, 7], vec![2, 5, 11]] {
        let h = classes.len();
        let cfg = ModelConfig {
            input_dim: 6,
            hidden: vec![16],
            feature_dim: 12,
            head_hidden: None,
            classes_per_level: classes.clone(),
            stop_gradient: true,
        };
        let x = random_matrix(&mut rng, 10, 6);
        let labels: Vec<usize> = (0..10).map(|_| rng.random_range(0..1000)).collect();
        let with = DisentangledModel::init(&cfg, 9).unwrap();
        let mut without = with.clone();
        without.config.stop_gradient = false;
        for level in 1..h {
            let blocked = finer_slice_grads(&with, &coarse_grads(&with, level, &x, &labels), level);
            ensure(blocked.iter().all(|&g| g == 0.0), || {
                format!("H={h} level {level}: finer-slice gradient not exactly zero")
            })?;
            let open = finer_slice_grads(&without, &coarse_grads(&without, level, &x, &labels), level);
            ensure(open.iter().any(|&g| g != 0.0), || {
                format!("H={h} level {level}: gradient still zero without the stop")
            })?;
            cases += 1;
        }
    }

    // the same contract through the trainer's full per-level loss
    let hierarchy = LabelHierarchy::uniform(2, &[2, 2]).unwrap();
    let mut syn = SyntheticConfig::default();
    syn.sizes = ClassSizes::Balanced { per_class: 12 };
    syn.test_per_class = 2;
    let data = generate_synthetic(&hierarchy, &syn, 4).unwrap();
    let tuple = TupleSpec::parse("16,8,8").unwrap();
    for algo in [SslAlgo::MixMatch, SslAlgo::FixMatch] {
        let mut config = TrainConfig::for_algo(algo);
        config.batch.batch_size = 6;
        config.batch.unlabeled_ratio = 2;
        let sets = allocate_labels(&data, &tuple, &AllocationOptions::default(), 0).unwrap();
        let mut cfg = config.model.clone();
        cfg.input_dim = data.dim();
        cfg.classes_per_level = sets.hierarchy.classes_per_level().to_vec();
        let batch = BatchIterator::new(&sets, &config.batch, 0).unwrap().next().unwrap();
        for stop in [true, false] {
            cfg.stop_gradient = stop;
            let model = DisentangledModel::init(&cfg, 3).unwrap();
            for level in 1..3 {
                let skip: Vec<usize> = (1..=3).filter(|&l| l != level).collect();
                let mut t = Tape::new();
                let p = model.bind(&mut t);
                let graph =
                    build_iteration(&model, &mut t, &p, &data, &sets, &batch, &config, 10, &skip).unwrap();
                t.backward(graph.total).unwrap();
                let grads: Vec<Matrix> = p.vars.iter().map(|v| t.grad(*v).clone()).collect();
                let g = finer_slice_grads(&model, &grads, level);
                let zero = g.iter().all(|&v| v == 0.0);
                ensure(zero == stop, || {
                    format!("{algo} trainer loss, level {level}, stop={stop}: zero={zero}")
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} coarse-loss cases, finer-slice gradients exactly 0 with the stop and nonzero without"))
}

fn pool_check(sets: &LevelSets, annotated: &[(usize, usize)]) -> Result<(), String> {
    let labeled_at = |h: usize| -> BTreeSet<usize> {
        annotated.iter().filter(|(_, a)| *a >= h).map(|(i, _)| *i).collect()
    };
    let u: BTreeSet<usize> = annotated.iter().filter(|(_, a)| *a == 0).map(|(i, _)| *i).collect();
    let x1 = labeled_at(1);
    for l in 1..=sets.levels() {
        let xl = labeled_at(l);
        let brute: BTreeSet<usize> = x1.difference(&xl).chain(u.iter()).copied().collect();
        let got: BTreeSet<usize> = sets.pool(l).iter().copied().collect();
        ensure(got == brute, || format!("U^{l} differs from brute force"))?;
        ensure(sets.pool(l).len() == got.len(), || format!("U^{l} has duplicates"))?;
        ensure(got.len() == x1.len() - xl.len() + u.len(), || format!("|U^{l}| breaks the size rule"))?;
    }
    Ok(())
}

fn set_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // half the cases annotate arbitrary universes directly
    for _ in 0..250 {
        let levels = rng.random_range(1..=4usize);
        let size = rng.random_range(1..=50usize);
        let mut universe: Vec<usize> = (0..80).collect();
        for i in (1..universe.len()).rev() {
            universe.swap(i, rng.random_range(0..=i));
        }
        let train: Vec<usize> = universe[..size].to_vec();
        let annotated: Vec<usize> = (0..size).map(|_| rng.random_range(0..=levels)).collect();
        let classes: Vec<usize> = (1..=levels).map(|h| h + 1).collect();
        let hierarchy = LabelHierarchy::balanced(&classes).map_err(|e| e.to_string())?;
        let truth: Vec<Vec<usize>> = (0..levels).map(|h| (0..80).map(|i| i % (h + 2)).collect()).collect();
        let sets = LevelSets::from_annotations(hierarchy, (1..=levels).collect(), train.clone(), &annotated, &truth)
            .map_err(|e| e.to_string())?;
        let pairs: Vec<(usize, usize)> = train.iter().copied().zip(annotated.iter().copied()).collect();
        pool_check(&sets, &pairs)?;
    }
    // the other half come from the tuple allocator on small datasets
    let hierarchy = LabelHierarchy::uniform(2, &[2, 2]).unwrap();
    let mut syn = SyntheticConfig::default();
    syn.sizes = ClassSizes::Balanced { per_class: 6 };
    syn.test_per_class = 1;
    syn.val_fraction = 0.0;
    let data = generate_synthetic(&hierarchy, &syn, 5).unwrap();
    let n = data.splits.train.len();
    ensure(n <= 50, || format!("allocator universe has {n} > 50 indices"))?;
    let mut done = 0;
    while done < 250 {
        let a = rng.random_range(8..=n);
        let b = rng.random_range(0..=n - a);
        let c = rng.random_range(0..=n - a - b);
        let entry = |v: usize, keep: bool| if keep { v.to_string() } else { "-".into() };
        let (keep_b, keep_c) = (rng.random_bool(0.7), rng.random_bool(0.7));
        let text = format!("{a},{},{}", entry(b, keep_b), entry(c, keep_c));
        let tuple = TupleSpec::parse(&text).map_err(|e| e.to_string())?;
        let sets = allocate_labels(&data, &tuple, &AllocationOptions::default(), done as u64)
            .map_err(|e| format!("({text}): {e}"))?;
        let finest = sets.levels();
        let pairs: Vec<(usize, usize)> = sets
            .train
            .iter()
            .map(|&i| {
                let a = (1..=finest).rev().find(|&h| sets.labeled(h).indices.contains(&i)).unwrap_or(0);
                (i, a)
            })
            .collect();
        pool_check(&sets, &pairs).map_err(|e| format!("({text}): {e}"))?;
        done += 1;
    }
    Ok("500 allocations: pools equal (X^1 \\ X^l) ∪ U with matching sizes".into())
}

fn tuple_accounting() -> Outcome {
    let hierarchy = LabelHierarchy::uniform(2, &[2, 3]).unwrap();
    let data = generate_synthetic(&hierarchy, &SyntheticConfig::default(), 6).unwrap();
    ensure(data.splits.train.len() >= 1000, || "train pool below 1000".into())?;
    let tuples = [
        "1000,-,-",
        "1000,0,-",
        "800,200,-",
        "700,200,100",
        "500,500,-",
        "40,0,-",
        "30,10,-",
    ];
    let mut config = TrainConfig::for_algo(SslAlgo::MixMatch);
    config.epochs = 1;
    config.iterations_per_epoch = 2;
    config.batch.batch_size = 8;
    for text in tuples {
        let tuple = TupleSpec::parse(text).unwrap();
        // entries run finest first; dataset level of entry i is 3 - i
        let present: Vec<usize> = (1..=3)
            .filter(|&lvl| tuple.entries()[3 - lvl].is_present())
            .collect();
        let expected: Vec<usize> = present
            .iter()
            .map(|&lvl| {
                (0..=3 - lvl)
                    .map(|i| match tuple.entries()[i] {
                        TupleEntry::Count(n) => n,
                        _ => 0,
                    })
                    .sum()
            })
            .collect();
        let sets = allocate_labels(&data, &tuple, &AllocationOptions::default(), 0).map_err(|e| e.to_string())?;
        ensure(sets.dataset_levels == present, || format!("({text}): levels {:?}", sets.dataset_levels))?;
        let counts: Vec<usize> = (1..=sets.levels()).map(|l| sets.labeled(l).len()).collect();
        ensure(counts == expected, || format!("({text}): counts {counts:?} != {expected:?}"))?;

        let report = run(&data, &tuple, &config).map_err(|e| e.to_string())?.report;
        ensure(report.labeled_counts == expected, || format!("({text}): report counts differ"))?;
        ensure(report.levels == present, || format!("({text}): report levels differ"))?;
        ensure(!report.iterations.is_empty(), || "no iteration log".into())?;
        for it in &report.iterations {
            let logged: Vec<usize> = it.levels.iter().map(|t| t.level).collect();
            ensure(logged == present, || format!("({text}): iteration logged levels {logged:?}"))?;
        }
        for e in &report.epochs {
            let logged: Vec<usize> = e.levels.iter().map(|t| t.level).collect();
            ensure(logged == present, || format!("({text}): epoch logged levels {logged:?}"))?;
        }
    }
    Ok("7 tuples: cumulative counts exact, dash levels absent from every log".into())
}

fn sharpen_mixup() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_norm = 0.0f64;
    let mut min_lambda = 1.0f64;
    for i in 0..10_000u64 {
        let k = rng.random_range(2..=20);
        let p = random_distribution(&mut rng, k);
        let q = ssl::sharpen(&p, 0.5).map_err(|e| e.to_string())?;
        let norm = (q.iter().sum::<f64>() - 1.0).abs();
        worst_norm = worst_norm.max(norm);
        ensure(norm <= 1e-9, || format!("vector {i}: sharpened sum off by {norm:e}"))?;
        ensure(shannon(&q) <= shannon(&p) + 1e-9, || format!("vector {i}: entropy increased"))?;
        ensure(argmax(&q) == argmax(&p), || format!("vector {i}: argmax moved"))?;
        let squares: Vec<f64> = p.iter().map(|v| v * v).collect();
        let s: f64 = squares.iter().sum();
        ensure(q.iter().zip(&squares).all(|(a, b)| (a - b / s).abs() <= 1e-9), || {
            format!("vector {i}: differs from p^2 / sum p^2")
        })?;

        let x1 = random_matrix(&mut rng, 1, 4);
        let x2 = random_matrix(&mut rng, 1, 4);
        let p2 = random_distribution(&mut rng, k);
        let m = ssl::mixup(&x1, &Matrix::row_vector(&p), &x2, &Matrix::row_vector(&p2), 0.75, i)
            .map_err(|e| e.to_string())?;
        min_lambda = min_lambda.min(m.lambda);
        ensure(m.lambda >= 0.5 && m.lambda <= 1.0, || format!("pair {i}: lambda {}", m.lambda))?;
        let mass = (m.p.as_slice().iter().sum::<f64>() - 1.0).abs();
        worst_norm = worst_norm.max(mass);
        ensure(mass <= 1e-9, || format!("pair {i}: mixed target sum off by {mass:e}"))?;
        let expect = m.lambda * x1.get(0, 0) + (1.0 - m.lambda) * x2.get(0, 0);
        ensure((m.x.get(0, 0) - expect).abs() <= 1e-12, || format!("pair {i}: input not convex"))?;
    }
    Ok(format!("10^4 vectors: worst normalization error {worst_norm:.1e}, min lambda {min_lambda:.4}"))
}

fn hard_dataset() -> HierDataset {
    let mut syn = SyntheticConfig::default();
    syn.geometry.noise = 0.2;
    syn.geometry.nuisance_noise = 0.4;
    syn.sizes = ClassSizes::Imbalanced { min: 4, max: 60 };
    generate_synthetic(&LabelHierarchy::uniform(4, &[3]).unwrap(), &syn, 0).unwrap()
}

fn fixmatch_masking() -> Outcome {
    let data = hard_dataset();
    let tuple = TupleSpec::parse("60,-").unwrap();
    let mut fix_acc = Vec::new();
    let mut sup_acc = Vec::new();
    let mut peak = 0.0f64;
    for seed in 0..5 {
        let mut config = TrainConfig::for_algo(SslAlgo::FixMatch);
        config.seed = seed;
        config.ssl.threshold = 1.0;
        let fix = run_baseline(BaselineKind::FixMatch, &data, Some(&tuple), &config).map_err(|e| e.to_string())?;
        let sup = run_baseline(BaselineKind::SupLimited, &data, Some(&tuple), &config).map_err(|e| e.to_string())?;
        let r = &fix.report;
        ensure(r.iterations.len() == config.total_iterations(), || "iteration log incomplete".into())?;
        for it in &r.iterations {
            for term in &it.levels {
                ensure(term.unsup == Some(0.0), || {
                    format!("seed {seed} iteration {}: L_U = {:?}", it.iteration, term.unsup)
                })?;
            }
        }
        let top = r.epochs.iter().filter_map(|e| e.max_confidence).fold(0.0, f64::max);
        ensure(top < config.ssl.threshold, || format!("seed {seed}: confidence reached {top}"))?;
        peak = peak.max(top);
        ensure((r.test_top1 - sup.report.test_top1).abs() <= 0.01, || {
            format!("seed {seed}: fixmatch {:.4} vs sup-limited {:.4}", r.test_top1, sup.report.test_top1)
        })?;
        fix_acc.push(r.test_top1);
        sup_acc.push(sup.report.test_top1);
    }
    Ok(format!(
        "L_U = 0 at every iteration, peak confidence 1 - {:.1e}; top-1 {:.4} vs sup-limited {:.4}",
        1.0 - peak,
        mean(&fix_acc),
        mean(&sup_acc)
    ))
}

/// Finest top-1 per seed for each tuple on the default two-level set.
fn trend_runs(tuples: &[(&str, TrainMode)]) -> Result<Vec<Vec<f64>>, String> {
    let data = generate_synthetic(&LabelHierarchy::uniform(4, &[3]).unwrap(), &SyntheticConfig::default(), 0)
        .map_err(|e| e.to_string())?;
    let mut out = vec![Vec::new(); tuples.len()];
    for seed in 0..5 {
        for (i, (text, mode)) in tuples.iter().enumerate() {
            let mut config = TrainConfig::for_algo(SslAlgo::MixMatch);
            config.seed = seed;
            config.mode = *mode;
            config.log_iterations = false;
            let tuple = TupleSpec::parse(text).unwrap();
            out[i].push(run(&data, &tuple, &config).map_err(|e| e.to_string())?.report.test_top1);
        }
    }
    Ok(out)
}

fn fmt_accs(xs: &[f64]) -> String {
    xs.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
}

fn coarse_labels_help(base: &[f64], hier: &[f64]) -> Outcome {
    let wins = hier.iter().zip(base).filter(|(h, b)| h > b).count();
    let gain = mean(&hier.iter().zip(base).map(|(h, b)| h - b).collect::<Vec<_>>());
    ensure(mean(hier) > mean(base), || {
        format!("mean {:.4} not above {:.4}", mean(hier), mean(base))
    })?;
    ensure(gain > 0.0 && wins >= 4, || format!("paired gain {gain:.4}, {wins}/5 wins"))?;
    Ok(format!(
        "(60,0,-) {:.4} vs (60,-,-) {:.4}, paired gain {:+.2} pp, {wins}/5 wins [{} | {}]",
        mean(hier),
        mean(base),
        100.0 * gain,
        fmt_accs(hier),
        fmt_accs(base)
    ))
}

fn fine_label_substitution(base: &[f64], sub: &[f64]) -> Outcome {
    let gap = mean(sub) - mean(base);
    ensure(gap.abs() <= 0.02, || format!("gap {:.2} pp", 100.0 * gap))?;
    Ok(format!(
        "(48,12,-) {:.4} vs (60,-,-) {:.4}, gap {:+.2} pp [{}]",
        mean(sub),
        mean(base),
        100.0 * gap,
        fmt_accs(sub)
    ))
}

fn loss_trajectory(r: &RunReport) -> Vec<u64> {
    r.iterations
        .iter()
        .flat_map(|it| {
            let mut v = vec![it.total.to_bits()];
            for t in &it.levels {
                v.push(t.sup.to_bits());
                v.push(t.unsup.unwrap_or(f64::NAN).to_bits());
            }
            v
        })
        .collect()
}

fn degenerate_equivalence() -> Outcome {
    let mut syn = SyntheticConfig::default();
    syn.sizes = ClassSizes::Balanced { per_class: 30 };
    syn.test_per_class = 10;
    let data = generate_synthetic(&LabelHierarchy::flat(6).unwrap(), &syn, 8).unwrap();
    let tuple = TupleSpec::parse("30").unwrap();
    let mut iterations = 0;
    for algo in [SslAlgo::MixMatch, SslAlgo::FixMatch] {
        let mut config = TrainConfig::for_algo(algo);
        config.epochs = 3;
        config.iterations_per_epoch = 10;
        config.batch.batch_size = 8;
        config.seed = 11;
        let mut runs = Vec::new();
        for mode in [TrainMode::HierMatch, TrainMode::SslBaseline] {
            config.mode = mode;
            runs.push(run(&data, &tuple, &config).map_err(|e| e.to_string())?.report);
        }
        let (a, b) = (loss_trajectory(&runs[0]), loss_trajectory(&runs[1]));
        ensure(!a.is_empty() && a == b, || format!("{algo}: loss trajectories differ"))?;
        ensure(runs[0].epochs == runs[1].epochs && runs[0].test == runs[1].test, || {
            format!("{algo}: epoch logs differ")
        })?;
        iterations += runs[0].iterations.len();
    }
    Ok(format!("{iterations} iterations bitwise identical across both algorithms"))
}

fn determinism() -> Outcome {
    let hierarchy = LabelHierarchy::uniform(2, &[2, 2]).unwrap();
    let mut syn = SyntheticConfig::default();
    syn.sizes = ClassSizes::Balanced { per_class: 20 };
    syn.test_per_class = 5;
    let data = generate_synthetic(&hierarchy, &syn, 9).unwrap();
    let mut compared = 0;
    for algo in [SslAlgo::MixMatch, SslAlgo::FixMatch] {
        for (text, mode) in [("24,8,8", TrainMode::HierMatch), ("24,-,-", TrainMode::SslBaseline), ("24,8,-", TrainMode::SupOnly)] {
            let mut config = TrainConfig::for_algo(algo);
            config.epochs = 3;
            config.iterations_per_epoch = 8;
            config.batch.batch_size = 8;
            config.mode = mode;
            config.seed = 5;
            let tuple = TupleSpec::parse(text).unwrap();
            let a = run(&data, &tuple, &config).map_err(|e| e.to_string())?.report.to_json().map_err(|e| e.to_string())?;
            let b = run(&data, &tuple, &config).map_err(|e| e.to_string())?.report.to_json().map_err(|e| e.to_string())?;
            ensure(a == b, || format!("{algo} {mode} ({text}): report JSON differs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} repeated runs produced byte-identical report JSON"))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("gradient correctness", grad_correctness),
        ("stop-gradient contract", gamma_contract),
        ("unlabeled pool set algebra", set_algebra),
        ("tuple accounting", tuple_accounting),
        ("sharpening and mixup properties", sharpen_mixup),
        ("fixmatch masking failure mode", fixmatch_masking),
    ];
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome, secs: f64| {
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{secs:.1} s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {n} ({name}): {detail} [{secs:.1} s]");
            }
        }
    };
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = guarded(*f);
        report(i + 1, name, outcome, t.elapsed().as_secs_f64());
    }

    let t = Instant::now();
    let trend = guarded(|| {
        trend_runs(&[
            ("60,-", TrainMode::SslBaseline),
            ("60,0", TrainMode::HierMatch),
            ("48,12", TrainMode::HierMatch),
        ])
    });
    let trend_secs = t.elapsed().as_secs_f64();
    match trend {
        Ok(runs) => {
            let within = |o: Outcome| {
                o.and_then(|d| {
                    if trend_secs < 600.0 {
                        Ok(d)
                    } else {
                        Err(format!("{d}; trend runs took {trend_secs:.0} s (limit 600 s)"))
                    }
                })
            };
            report(7, "coarse labels help", within(coarse_labels_help(&runs[0], &runs[1])), trend_secs);
            report(8, "fine-label substitution", fine_label_substitution(&runs[0], &runs[2]), 0.0);
        }
        Err(e) => {
            report(7, "coarse labels help", Err(e.clone()), trend_secs);
            report(8, "fine-label substitution", Err(e), 0.0);
        }
    }

    for (n, name, f) in [
        (9, "degenerate equivalence", degenerate_equivalence as fn() -> Outcome),
        (10, "determinism", determinism),
    ] {
        let t = Instant::now();
        let outcome = guarded(f);
        report(n, name, outcome, t.elapsed().as_secs_f64());
    }

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
