//! Self-supervised data collection and dataset construction: sticky random
//! driving with collision-window filtering, example windowing at the
//! trajectory framerate, and the k-means trajectory library.

mod collect;
mod dataset;
mod library;
mod logio;

pub use collect::{collect, sample_free_pose, CollectLog, CollectParams, LogStep, RespawnMark};
pub use dataset::{
    make_dataset, read_dataset, write_dataset, Dataset, DatasetMeta, DatasetParams, Example,
};
pub use library::{build_library, read_library, write_library, TrajectoryLibrary};
pub use logio::{read_log, write_log, LOG_MAGIC};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no free spawn pose found after {0} tries")]
    NoFreePose(usize),
    #[error("k must be in 1..={max}, got {k}")]
    BadClusterCount { k: usize, max: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
}
