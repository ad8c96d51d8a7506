//! Synthetic hierarchical data, label allocation and batching.

mod augment;
mod batch;
mod dataset;
mod levels;
mod tuple;

pub use augment::{strong_augment, weak_augment, Augmenter};
pub use batch::{BatchConfig, BatchIterator, LevelBatch};
pub use dataset::{
    generate_synthetic, ClassSizes, ClusterGeometry, HierDataset, Splits, SyntheticConfig,
    DATASET_FORMAT_VERSION,
};
pub use levels::{allocate_labels, build_unlabeled_pool, AllocationOptions, LabeledSet, LevelSets};
pub use tuple::{TupleEntry, TupleSpec};
