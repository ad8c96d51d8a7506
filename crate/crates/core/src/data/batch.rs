use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::levels::LevelSets;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_for, TAG_BATCH_LABELED, TAG_BATCH_UNLABELED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatchConfig {
    pub batch_size: usize,
    /// Unlabeled samples drawn per labeled sample (μ).
    pub unlabeled_ratio: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            batch_size: 32,
            unlabeled_ratio: 1,
        }
    }
}

/// One iteration's draw for one run level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelBatch {
    pub level: usize,
    pub labeled: Vec<usize>,
    pub labels: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Endless without-replacement sampler; reshuffles after every full pass.
#[derive(Clone, Debug)]
struct Cycler {
    len: usize,
    order: Vec<usize>,
    cursor: usize,
    pass: u64,
    seed: u64,
}

impl Cycler {
    fn new(len: usize, seed: u64) -> Self {
        let mut c = Cycler {
            len,
            order: Vec::new(),
            cursor: 0,
            pass: 0,
            seed,
        };
        c.reshuffle();
        c
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.len).collect();
        self.order.shuffle(&mut rng_for(self.seed, &[self.pass]));
        self.cursor = 0;
        self.pass += 1;
    }

    fn take(&mut self, n: usize) -> Vec<usize> {
        if self.len == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor == self.len {
                self.reshuffle();
            }
            let k = (n - out.len()).min(self.len - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + k]);
            self.cursor += k;
        }
        out
    }
}

/// Per-level labeled and unlabeled streams. Each stream is keyed by the
/// dataset level it serves, so two runs that share a level also share its
/// sample order.
#[derive(Clone, Debug)]
pub struct BatchIterator<'a> {
    sets: &'a LevelSets,
    config: BatchConfig,
    labeled: Vec<Cycler>,
    unlabeled: Vec<Cycler>,
}

impl<'a> BatchIterator<'a> {
    pub fn new(sets: &'a LevelSets, config: &BatchConfig, seed: u64) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if config.unlabeled_ratio == 0 {
            return Err(Error::Config("unlabeled_ratio must be >= 1".into()));
        }
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for l in 1..=sets.levels() {
            let ds_level = sets.dataset_levels[l - 1] as u64;
            if sets.labeled(l).is_empty() {
                return Err(Error::Config(format!(
                    "level {} has no labeled samples",
                    sets.dataset_levels[l - 1]
                )));
            }
            labeled.push(Cycler::new(
                sets.labeled(l).len(),
                derive_seed(seed, &[TAG_BATCH_LABELED, ds_level]),
            ));
            unlabeled.push(Cycler::new(
                sets.pool(l).len(),
                derive_seed(seed, &[TAG_BATCH_UNLABELED, ds_level]),
            ));
        }
        Ok(BatchIterator {
            sets,
            config: config.clone(),
            labeled,
            unlabeled,
        })
    }
}

impl Iterator for BatchIterator<'_> {
    type Item = Vec<LevelBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        let b = self.config.batch_size;
        let ub = b * self.config.unlabeled_ratio;
        let mut out = Vec::with_capacity(self.sets.levels());
        for l in 1..=self.sets.levels() {
            let set = self.sets.labeled(l);
            let pos = self.labeled[l - 1].take(b);
            let pool = self.sets.pool(l);
            let upos = self.unlabeled[l - 1].take(ub);
            out.push(LevelBatch {
                level: l,
                labeled: pos.iter().map(|&p| set.indices[p]).collect(),
                labels: pos.iter().map(|&p| set.labels[p]).collect(),
                unlabeled: upos.iter().map(|&p| pool[p]).collect(),
            });
        }
        Some(out)
    }
}
