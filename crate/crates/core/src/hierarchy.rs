//! Label trees with levels numbered from 1 (coarsest) to H (finest).

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// No level at all.
    Empty,
    /// A level with zero classes.
    EmptyLevel { level: usize },
    NonMonotone { level: usize, coarse: usize, fine: usize },
    /// Parent array length disagrees with the class count of its level.
    ParentArity { level: usize, expected: usize, found: usize },
    /// Class without a valid parent.
    Orphan { level: usize, class: usize },
    /// Coarser class that no finer class points to.
    Childless { level: usize, class: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty: hierarchy has no levels"),
            Violation::EmptyLevel { level } => write!(f, "empty level {level}"),
            Violation::NonMonotone { level, coarse, fine } => write!(
                f,
                "non-monotone: level {} has {coarse} classes but level {level} has {fine}",
                level - 1
            ),
            Violation::ParentArity {
                level,
                expected,
                found,
            } => write!(
                f,
                "parent array for level {level} has {found} entries, expected {expected}"
            ),
            Violation::Orphan { level, class } => {
                write!(f, "orphan: class {class} at level {level} has no valid parent")
            }
            Violation::Childless { level, class } => {
                write!(f, "childless: class {class} at level {level} has no children")
            }
        }
    }
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Empty | Violation::EmptyLevel { .. } => "empty",
            Violation::NonMonotone { .. } => "non-monotone",
            Violation::ParentArity { .. } => "arity",
            Violation::Orphan { .. } => "orphan",
            Violation::Childless { .. } => "childless",
        }
    }
}

/// `parents[i]` maps every class at level `i + 2` to its parent at level `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelHierarchy {
    classes_per_level: Vec<usize>,
    parents: Vec<Vec<usize>>,
}

/// On-disk layout of a hierarchy file.
#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    levels: usize,
    classes_per_level: Vec<usize>,
    parents: Vec<Vec<usize>>,
}

impl LabelHierarchy {
    /// Builds and validates a hierarchy.
    pub fn new(classes_per_level: Vec<usize>, parents: Vec<Vec<usize>>) -> Result<Self> {
        let h = LabelHierarchy {
            classes_per_level,
            parents,
        };
        let violations = h.validate();
        if violations.is_empty() {
            Ok(h)
        } else {
            Err(Error::Hierarchy(violations))
        }
    }

    /// Builds without validation; use [`LabelHierarchy::validate`] afterwards.
    pub fn new_unchecked(classes_per_level: Vec<usize>, parents: Vec<Vec<usize>>) -> Self {
        LabelHierarchy {
            classes_per_level,
            parents,
        }
    }

    /// Single-level tree.
    pub fn flat(classes: usize) -> Result<Self> {
        LabelHierarchy::new(vec![classes], vec![])
    }

    /// Every class at level i has exactly `branching[i-1]` children.
    pub fn uniform(coarsest: usize, branching: &[usize]) -> Result<Self> {
        let mut counts = vec![coarsest];
        let mut parents = Vec::new();
        for &b in branching {
            let prev = *counts.last().unwrap();
            parents.push((0..prev * b).map(|c| c / b.max(1)).collect());
            counts.push(prev * b);
        }
        LabelHierarchy::new(counts, parents)
    }

    /// Tree with the given class count per level. Parents are assigned by
    /// even contiguous blocks, so class `c` at level i+1 has parent
    /// `c * K^i / K^{i+1}`.
    pub fn balanced(classes_per_level: &[usize]) -> Result<Self> {
        let parents = classes_per_level
            .windows(2)
            .map(|w| (0..w[1]).map(|c| c * w[0] / w[1].max(1)).collect())
            .collect();
        LabelHierarchy::new(classes_per_level.to_vec(), parents)
    }

    /// Random branching: every parent keeps at least one child and the rest
    /// are scattered uniformly.
    pub fn random(classes_per_level: &[usize], seed: u64) -> Result<Self> {
        let mut parents = Vec::new();
        for (i, w) in classes_per_level.windows(2).enumerate() {
            let (coarse, fine) = (w[0], w[1]);
            if coarse > fine {
                return Err(Error::Hierarchy(vec![Violation::NonMonotone {
                    level: i + 2,
                    coarse,
                    fine,
                }]));
            }
            let mut rng = rng_for(seed, &[0x48_49_45_52, i as u64]);
            let mut map: Vec<usize> = (0..coarse).collect();
            map.extend((coarse..fine).map(|_| rng.random_range(0..coarse)));
            map.shuffle(&mut rng);
            parents.push(map);
        }
        LabelHierarchy::new(classes_per_level.to_vec(), parents)
    }

    /// Two-level analog of the CIFAR-100 superclass tree.
    pub fn cifar_two_level() -> Self {
        LabelHierarchy::uniform(20, &[5]).expect("static tree")
    }

    /// Three-level analog of the CIFAR-100 tree with 8 / 20 / 100 classes.
    pub fn cifar_three_level() -> Self {
        LabelHierarchy::balanced(&[8, 20, 100]).expect("static tree")
    }

    /// Three-level analog of the NABirds tree with 50 / 404 / 555 classes.
    pub fn nabirds_analog(seed: u64) -> Self {
        LabelHierarchy::random(&[50, 404, 555], seed).expect("static tree")
    }

    pub fn levels(&self) -> usize {
        self.classes_per_level.len()
    }

    pub fn classes_per_level(&self) -> &[usize] {
        &self.classes_per_level
    }

    pub fn finest_classes(&self) -> usize {
        *self.classes_per_level.last().unwrap_or(&0)
    }

    pub fn num_classes(&self, level: usize) -> Result<usize> {
        self.check_level(level)?;
        Ok(self.classes_per_level[level - 1])
    }

    /// Parent array mapping level `level` to `level - 1`.
    pub fn parents_of(&self, level: usize) -> Result<&[usize]> {
        self.check_level(level)?;
        if level == 1 {
            return Err(Error::Range("level 1 has no parents".into()));
        }
        Ok(&self.parents[level - 2])
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels() {
            return Err(Error::Range(format!(
                "level {level} outside 1..={}",
                self.levels()
            )));
        }
        Ok(())
    }

    /// Ancestor of `label` (a class at `fine_level`) at `target_level`.
    pub fn coarsen(&self, fine_level: usize, label: usize, target_level: usize) -> Result<usize> {
        self.check_level(fine_level)?;
        self.check_level(target_level)?;
        if target_level > fine_level {
            return Err(Error::LevelOrder {
                source_level: fine_level,
                target: target_level,
            });
        }
        if label >= self.classes_per_level[fine_level - 1] {
            return Err(Error::Range(format!(
                "class {label} does not exist at level {fine_level}"
            )));
        }
        let mut c = label;
        for level in (target_level + 1..=fine_level).rev() {
            c = self.parents[level - 2][c];
        }
        Ok(c)
    }

    /// Labels at `target_level` for every class of `fine_level`.
    pub fn coarsen_table(&self, fine_level: usize, target_level: usize) -> Result<Vec<usize>> {
        let k = self.num_classes(fine_level)?;
        (0..k).map(|c| self.coarsen(fine_level, c, target_level)).collect()
    }

    /// The tree induced on a subset of levels (1-based, strictly increasing).
    /// Parents of the kept levels are composed through the dropped ones.
    pub fn restrict(&self, levels: &[usize]) -> Result<LabelHierarchy> {
        if levels.is_empty() {
            return Err(Error::Argument("cannot restrict to zero levels".into()));
        }
        for w in levels.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Argument(format!(
                    "levels must be strictly increasing, got {levels:?}"
                )));
            }
        }
        for &l in levels {
            self.check_level(l)?;
        }
        let counts = levels.iter().map(|&l| self.classes_per_level[l - 1]).collect();
        let parents = levels
            .windows(2)
            .map(|w| self.coarsen_table(w[1], w[0]))
            .collect::<Result<_>>()?;
        LabelHierarchy::new(counts, parents)
    }

    /// All invariant violations; empty when the tree is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.classes_per_level.is_empty() {
            out.push(Violation::Empty);
            return out;
        }
        for (i, &k) in self.classes_per_level.iter().enumerate() {
            if k == 0 {
                out.push(Violation::EmptyLevel { level: i + 1 });
            }
        }
        for (i, w) in self.classes_per_level.windows(2).enumerate() {
            if w[0] > w[1] {
                out.push(Violation::NonMonotone {
                    level: i + 2,
                    coarse: w[0],
                    fine: w[1],
                });
            }
        }
        let h = self.levels();
        if self.parents.len() != h - 1 {
            out.push(Violation::ParentArity {
                level: 0,
                expected: h - 1,
                found: self.parents.len(),
            });
        }
        for level in 2..=h.min(self.parents.len() + 1) {
            let map = &self.parents[level - 2];
            let fine = self.classes_per_level[level - 1];
            let coarse = self.classes_per_level[level - 2];
            if map.len() != fine {
                out.push(Violation::ParentArity {
                    level,
                    expected: fine,
                    found: map.len(),
                });
            }
            let mut has_child = vec![false; coarse];
            for class in 0..fine {
                match map.get(class) {
                    Some(&p) if p < coarse => has_child[p] = true,
                    _ => out.push(Violation::Orphan { level, class }),
                }
            }
            for (class, ok) in has_child.iter().enumerate() {
                if !ok {
                    out.push(Violation::Childless {
                        level: level - 1,
                        class,
                    });
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let file = HierarchyFile {
            levels: self.levels(),
            classes_per_level: self.classes_per_level.clone(),
            parents: self.parents.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: HierarchyFile = serde_json::from_str(text)?;
        if file.levels != file.classes_per_level.len() {
            return Err(Error::Validation(format!(
                "levels = {} but classes_per_level has {} entries",
                file.levels,
                file.classes_per_level.len()
            )));
        }
        LabelHierarchy::new(file.classes_per_level, file.parents)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelHierarchy::from_json(&text)
    }
}
