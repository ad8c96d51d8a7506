use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::dataset::HierDataset;
use crate::data::tuple::{TupleEntry, TupleSpec};
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::rng::{rng_for, Rng, TAG_ALLOC};

/// Samples labeled at one level of the run hierarchy.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Per-level labeled sets, the unlabeled set and the derived per-level
/// unlabeled pools of one run.
///
/// Levels are indexed 1..=H over the *run* hierarchy, which keeps only the
/// dataset levels present in the tuple. `dataset_levels[h-1]` names the
/// dataset level behind run level `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSets {
    pub hierarchy: LabelHierarchy,
    pub dataset_levels: Vec<usize>,
    pub train: Vec<usize>,
    labeled: Vec<LabeledSet>,
    unlabeled: Vec<usize>,
    pools: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocationOptions {
    /// Demand at least one finest-level label per finest class.
    pub min_one_per_class: bool,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        AllocationOptions {
            min_one_per_class: true,
        }
    }
}

impl LevelSets {
    /// Assembles level sets from explicit per-sample annotation levels.
    ///
    /// `annotated[i]` is the finest run level at which `train[i]` carries a
    /// label (0 = unlabeled). `truth` maps every dataset index to its label
    /// at every run level (`truth[h-1][idx]`).
    pub fn from_annotations(
        hierarchy: LabelHierarchy,
        dataset_levels: Vec<usize>,
        train: Vec<usize>,
        annotated: &[usize],
        truth: &[Vec<usize>],
    ) -> Result<Self> {
        let levels = hierarchy.levels();
        if annotated.len() != train.len() {
            return Err(Error::Argument("one annotation level per train index".into()));
        }
        let mut labeled = vec![LabeledSet::default(); levels];
        let mut unlabeled = Vec::new();
        for (&idx, &a) in train.iter().zip(annotated) {
            if a > levels {
                return Err(Error::Range(format!("annotation level {a} > {levels}")));
            }
            if a == 0 {
                unlabeled.push(idx);
            }
            for h in 1..=a {
                labeled[h - 1].indices.push(idx);
                labeled[h - 1].labels.push(truth[h - 1][idx]);
            }
        }
        let mut sets = LevelSets {
            hierarchy,
            dataset_levels,
            train,
            labeled,
            unlabeled,
            pools: Vec::new(),
        };
        sets.pools = (1..=levels)
            .map(|l| build_unlabeled_pool(&sets, l))
            .collect::<Result<_>>()?;
        Ok(sets)
    }

    /// The single-level view used by the flat baselines: only the finest
    /// labels are kept and every other train sample becomes unlabeled.
    pub fn finest_view(&self) -> Result<LevelSets> {
        let h = self.levels();
        let hierarchy = self.hierarchy.restrict(&[h])?;
        let finest = self.labeled(h);
        let size = self.train.iter().copied().max().map_or(0, |m| m + 1);
        let mut truth = vec![0usize; size];
        let mut marked = vec![false; size];
        for (&i, &c) in finest.indices.iter().zip(&finest.labels) {
            truth[i] = c;
            marked[i] = true;
        }
        let annotated: Vec<usize> = self.train.iter().map(|&i| usize::from(marked[i])).collect();
        LevelSets::from_annotations(
            hierarchy,
            vec![self.dataset_levels[h - 1]],
            self.train.clone(),
            &annotated,
            &[truth],
        )
    }

    pub fn levels(&self) -> usize {
        self.hierarchy.levels()
    }

    /// B^h with labels, for run level `h`.
    pub fn labeled(&self, level: usize) -> &LabeledSet {
        &self.labeled[level - 1]
    }

    /// B^U.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    /// U^ℓ = (B^1 \ B^ℓ) ∪ B^U, sorted ascending.
    pub fn pool(&self, level: usize) -> &[usize] {
        &self.pools[level - 1]
    }

    /// Checks nesting, the labeled/unlabeled partition of train and the
    /// pool formula.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.train.iter().copied().max().map_or(0, |m| m + 1);
        let mask_of = |idx: &[usize]| {
            let mut m = vec![false; n];
            idx.iter().for_each(|&i| m[i] = true);
            m
        };
        for h in 2..=self.levels() {
            let coarse = mask_of(&self.labeled(h - 1).indices);
            if self.labeled(h).indices.iter().any(|&i| !coarse[i]) {
                return Err(Error::Validation(format!("B^{h} is not inside B^{}", h - 1)));
            }
        }
        let b1 = mask_of(&self.labeled(1).indices);
        if self.unlabeled.iter().any(|&i| b1[i]) {
            return Err(Error::Validation("B^1 and B^U overlap".into()));
        }
        let mut both: Vec<usize> = self.labeled(1).indices.clone();
        both.extend_from_slice(&self.unlabeled);
        both.sort_unstable();
        let mut train = self.train.clone();
        train.sort_unstable();
        if both != train {
            return Err(Error::Validation("B^1 ∪ B^U differs from train".into()));
        }
        for l in 1..=self.levels() {
            if self.pool(l) != build_unlabeled_pool(self, l)?.as_slice() {
                return Err(Error::Validation(format!("U^{l} is stale")));
            }
        }
        Ok(())
    }
}

/// U^ℓ = (B^1 \ B^ℓ) ∪ B^U, ascending and without duplicates.
pub fn build_unlabeled_pool(sets: &LevelSets, level: usize) -> Result<Vec<usize>> {
    if level == 0 || level > sets.levels() {
        return Err(Error::Range(format!(
            "pool level {level} outside 1..={}",
            sets.levels()
        )));
    }
    let n = sets.train.iter().copied().max().map_or(0, |m| m + 1);
    let mut in_level = vec![false; n];
    for &i in &sets.labeled(level).indices {
        in_level[i] = true;
    }
    let mut pool: Vec<usize> = sets
        .labeled(1)
        .indices
        .iter()
        .copied()
        .filter(|&i| !in_level[i])
        .chain(sets.unlabeled.iter().copied())
        .collect();
    pool.sort_unstable();
    pool.dedup();
    Ok(pool)
}

/// Splits the dataset's train indices into per-level labeled sets following
/// `tuple`. The finest active level is filled first, then each coarser level
/// draws its extra samples from what is left. Within a level, draws rotate
/// over the classes of that level in random order so every class gets a
/// sample before any class gets a second one.
pub fn allocate_labels(
    dataset: &HierDataset,
    tuple: &TupleSpec,
    options: &AllocationOptions,
    seed: u64,
) -> Result<LevelSets> {
    let full = &dataset.hierarchy;
    let active = tuple.active_levels(full.levels())?;
    let run_hierarchy = full.restrict(&active)?;
    let train = dataset.splits.train.clone();

    let finest_k = run_hierarchy.finest_classes();
    if let TupleEntry::Count(a) = tuple.entries()[0] {
        if options.min_one_per_class && a < finest_k {
            return Err(Error::Allocation(format!(
                "{a} finest labels cannot cover {finest_k} classes"
            )));
        }
    }
    let fixed: usize = tuple
        .entries()
        .iter()
        .map(|e| match e {
            TupleEntry::Count(n) => *n,
            _ => 0,
        })
        .sum();
    if fixed > train.len() {
        return Err(Error::Allocation(format!(
            "tuple {tuple} asks for {fixed} labels but train has {}",
            train.len()
        )));
    }

    let truth: Vec<Vec<usize>> = active
        .iter()
        .map(|&l| dataset.labels_at(l))
        .collect::<Result<_>>()?;

    let mut position = vec![usize::MAX; dataset.len()];
    for (p, &i) in train.iter().enumerate() {
        position[i] = p;
    }
    let mut annotated = vec![0usize; train.len()];
    let mut taken = vec![false; train.len()];
    for run_level in (1..=active.len()).rev() {
        let entry = tuple.entry_for_level(active[run_level - 1], full.levels());
        let remaining: Vec<usize> = train
            .iter()
            .enumerate()
            .filter(|(p, _)| !taken[*p])
            .map(|(_, &i)| i)
            .collect();
        let want = match entry {
            TupleEntry::Count(n) => n,
            TupleEntry::All => remaining.len(),
            TupleEntry::Absent => unreachable!("active levels are present"),
        };
        let mut rng = rng_for(seed, &[TAG_ALLOC, active[run_level - 1] as u64]);
        let picked = stratified_pick(&remaining, &truth[run_level - 1], want, &mut rng);
        if picked.len() < want {
            return Err(Error::Allocation(format!(
                "level {} wants {want} labels, only {} train samples left",
                active[run_level - 1],
                picked.len()
            )));
        }
        for i in picked {
            let p = position[i];
            taken[p] = true;
            annotated[p] = run_level;
        }
    }

    let sets = LevelSets::from_annotations(run_hierarchy, active, train, &annotated, &truth)?;
    if options.min_one_per_class && !sets.labeled(sets.levels()).is_empty() {
        let mut seen = vec![false; finest_k];
        sets.labeled(sets.levels()).labels.iter().for_each(|&c| seen[c] = true);
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Allocation(format!(
                "finest class {c} has no train sample to label"
            )));
        }
    }
    Ok(sets)
}

fn stratified_pick(pool: &[usize], labels: &[usize], want: usize, rng: &mut Rng) -> Vec<usize> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        groups.entry(labels[i]).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    for g in &mut groups {
        g.shuffle(rng);
    }
    groups.shuffle(rng);
    let mut out = Vec::with_capacity(want);
    let mut round = 0;
    while out.len() < want {
        let before = out.len();
        for g in &groups {
            if out.len() == want {
                break;
            }
            if let Some(&i) = g.get(round) {
                out.push(i);
            }
        }
        if out.len() == before {
            break;
        }
        round += 1;
    }
    out
}
