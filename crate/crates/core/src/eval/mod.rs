//! Cross-validation, augmentation, significance testing and the experiment
//! driver that ties them to training and fusion.

mod augment;
mod experiment;
mod folds;
mod wilcoxon;

pub use augment::{augment, augment_with, AugmentParams};
pub use experiment::{
    run_experiment, Comparison, DatasetResults, ExperimentConfig, ExperimentReport, ExperimentResults,
    FoldResult, InputScaling, NamedDataset,
};
pub use folds::{kfold_split, FoldSplit};
pub use wilcoxon::{
    exact_tail_probabilities, normal_tail_probabilities, signed_ranks, wilcoxon_signed_rank,
    Method, WilcoxonResult, EXACT_MAX_N, MIN_PAIRS,
};
