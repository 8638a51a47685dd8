//! Procedural pretraining corpus: dataset families with known generating
//! distributions, structural permutation variants and context/query splits.

mod family;
mod ops;
mod store;

pub use family::{
    generate_dataset, random_tasks, CorpusPlan, Family, GroundTruth, TaskSpec, MAX_FEATURES, MAX_ROWS, MIN_FEATURES,
    MIN_ROWS,
};
pub use ops::{
    cap_indices, cap_query, expand_variants, permutation_variants, split_context_query, split_indices,
    subsample_training, RowSelect, SplitSpec, DEFAULT_CONTEXT_RATIO, DEFAULT_QUERY_CAP, DEFAULT_VARIANTS,
};
pub use store::{build_corpus, entry_paths, load_corpus, materialize, variant_id, CorpusEntry, CorpusManifest, MANIFEST_FILE};
