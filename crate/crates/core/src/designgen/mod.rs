//! Parametric truss generators, Latin hypercube sampling and dataset assembly.

mod dataset;
mod lhs;
mod models;

pub use dataset::{
    filter_against_reference, filter_worst, generate_dataset, percentile, split, Dataset, DatasetMetadata,
    GenerationSummary, Split, SplitFractions, DATASET_FORMAT_VERSION,
};
pub use lhs::latin_hypercube;
pub use models::{DesignModel, Family, BRIDGE_PANELS, SMALL_BRIDGE_PANELS};
