use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::hierarchy::LabelHierarchy;
use crate::rng::{rng_for, TAG_COUNTS, TAG_GEOMETRY, TAG_SAMPLES, TAG_SPLIT};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Spread of nested cluster centers.
///
/// Level-1 centers have per-coordinate standard deviation `coarse_spread`;
/// each finer level offsets from its parent by `coarse_spread * shrink^(l-1)`.
/// Centers live in the first `signal_dims` coordinates (all of them when 0).
/// Samples add noise with standard deviation `noise` on those coordinates and
/// `nuisance_noise` on the remaining ones, which carry no class information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterGeometry {
    pub coarse_spread: f64,
    pub shrink: f64,
    pub noise: f64,
    pub signal_dims: usize,
    pub nuisance_noise: f64,
}

impl Default for ClusterGeometry {
    fn default() -> Self {
        ClusterGeometry {
            coarse_spread: 0.25,
            shrink: 0.5,
            noise: 0.09,
            signal_dims: 8,
            nuisance_noise: 0.15,
        }
    }
}

impl ClusterGeometry {
    fn signal(&self, dim: usize) -> usize {
        if self.signal_dims == 0 {
            dim
        } else {
            self.signal_dims.min(dim)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ClassSizes {
    /// The same number of train-pool samples for every finest class.
    Balanced { per_class: usize },
    /// Train-pool sizes drawn uniformly from `min..=max` per finest class.
    Imbalanced { min: usize, max: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub sizes: ClassSizes,
    /// Held-out test samples per finest class, drawn on top of the train pool.
    pub test_per_class: usize,
    /// Fraction of each class's train pool carved out for validation.
    pub val_fraction: f64,
    pub geometry: ClusterGeometry,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 16,
            sizes: ClassSizes::Balanced { per_class: 100 },
            test_per_class: 50,
            val_fraction: 0.1,
            geometry: ClusterGeometry::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Checks that the three splits partition `0..n`.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n || seen[i] {
                return Err(Error::Validation(format!(
                    "index {i} is out of range or appears in two splits"
                )));
            }
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!("index {i} belongs to no split")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierDataset {
    pub features: Matrix,
    /// Ground-truth finest-level class per sample.
    pub fine_labels: Vec<usize>,
    pub splits: Splits,
    pub hierarchy: LabelHierarchy,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    n: usize,
    d: usize,
    h: usize,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    header: DatasetHeader,
    hierarchy: LabelHierarchy,
    features: Vec<f64>,
    fine_labels: Vec<usize>,
    splits: Splits,
}

impl HierDataset {
    pub fn len(&self) -> usize {
        self.fine_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Ground-truth labels of every sample at `level`.
    pub fn labels_at(&self, level: usize) -> Result<Vec<usize>> {
        let table = self.hierarchy.coarsen_table(self.hierarchy.levels(), level)?;
        Ok(self.fine_labels.iter().map(|&c| table[c]).collect())
    }

    pub fn rows(&self, indices: &[usize]) -> Matrix {
        self.features.select_rows(indices)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            header: DatasetHeader {
                format_version: DATASET_FORMAT_VERSION,
                n: self.len(),
                d: self.dim(),
                h: self.hierarchy.levels(),
                seed: self.seed,
            },
            hierarchy: self.hierarchy.clone(),
            features: self.features.as_slice().to_vec(),
            fine_labels: self.fine_labels.clone(),
            splits: self.splits.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let hd = &file.header;
        if hd.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported dataset format version {}",
                hd.format_version
            )));
        }
        if file.fine_labels.len() != hd.n || file.hierarchy.levels() != hd.h {
            return Err(Error::Validation("dataset header disagrees with body".into()));
        }
        let violations = file.hierarchy.validate();
        if !violations.is_empty() {
            return Err(Error::Hierarchy(violations));
        }
        let k = file.hierarchy.finest_classes();
        if file.fine_labels.iter().any(|&c| c >= k) {
            return Err(Error::Validation("label outside the finest level".into()));
        }
        file.splits.check_partition(hd.n)?;
        Ok(HierDataset {
            features: Matrix::from_vec(hd.n, hd.d, file.features)?,
            fine_labels: file.fine_labels,
            splits: file.splits,
            hierarchy: file.hierarchy,
            seed: hd.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        HierDataset::from_json(&text)
    }
}

/// Nested Gaussian clusters following `hierarchy`: each level-1 class is a
/// cluster and its descendants are sub-clusters inside it.
pub fn generate_synthetic(
    hierarchy: &LabelHierarchy,
    config: &SyntheticConfig,
    seed: u64,
) -> Result<HierDataset> {
    let violations = hierarchy.validate();
    if !violations.is_empty() {
        return Err(Error::Hierarchy(violations));
    }
    if config.dim < 2 {
        return Err(Error::Config(format!("dim must be >= 2, got {}", config.dim)));
    }
    if !(0.0..1.0).contains(&config.val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction {} not in [0, 1)",
            config.val_fraction
        )));
    }
    let d = config.dim;
    let g = &config.geometry;
    let sd = g.signal(d);
    let levels = hierarchy.levels();

    // centers, level by level
    let mut geo = rng_for(seed, &[TAG_GEOMETRY]);
    let mut centers: Vec<Vec<f64>> = (0..hierarchy.num_classes(1)?)
        .map(|_| padded(gaussian_vec(&mut geo, sd, g.coarse_spread), d))
        .collect();
    for level in 2..=levels {
        let scale = g.coarse_spread * g.shrink.powi(level as i32 - 1);
        let parents = hierarchy.parents_of(level)?;
        centers = parents
            .iter()
            .map(|&p| {
                let off = padded(gaussian_vec(&mut geo, sd, scale), d);
                centers[p].iter().zip(off).map(|(c, o)| c + o).collect()
            })
            .collect();
    }

    let k = hierarchy.finest_classes();
    let pool_sizes: Vec<usize> = match config.sizes {
        ClassSizes::Balanced { per_class } => {
            if per_class < 4 {
                return Err(Error::Config(format!(
                    "need at least 4 samples per finest class, got {per_class}"
                )));
            }
            vec![per_class; k]
        }
        ClassSizes::Imbalanced { min, max } => {
            if min < 4 || max < min {
                return Err(Error::Config(format!("bad class size range {min}..={max}")));
            }
            let mut rng = rng_for(seed, &[TAG_COUNTS]);
            (0..k).map(|_| rng.random_range(min..=max)).collect()
        }
    };

    let mut samples = rng_for(seed, &[TAG_SAMPLES]);
    let mut split_rng = rng_for(seed, &[TAG_SPLIT]);
    let mut data = Vec::new();
    let mut fine_labels = Vec::new();
    let mut splits = Splits::default();
    for (class, &pool) in pool_sizes.iter().enumerate() {
        let total = pool + config.test_per_class;
        let start = fine_labels.len();
        for _ in 0..total {
            let mut noise = gaussian_vec(&mut samples, sd, g.noise);
            noise.extend(gaussian_vec(&mut samples, d - sd, g.nuisance_noise));
            data.extend(centers[class].iter().zip(noise).map(|(c, n)| c + n));
            fine_labels.push(class);
        }
        let mut idx: Vec<usize> = (start..start + pool).collect();
        idx.shuffle(&mut split_rng);
        let n_val = (pool as f64 * config.val_fraction).round() as usize;
        splits.val.extend_from_slice(&idx[..n_val]);
        splits.train.extend_from_slice(&idx[n_val..]);
        splits.test.extend(start + pool..start + total);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();

    let n = fine_labels.len();
    Ok(HierDataset {
        features: Matrix::from_vec(n, d, data)?,
        fine_labels,
        splits,
        hierarchy: hierarchy.clone(),
        seed,
    })
}

fn padded(mut v: Vec<f64>, d: usize) -> Vec<f64> {
    v.resize(d, 0.0);
    v
}

fn gaussian_vec(rng: &mut impl Rng, d: usize, std: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}
