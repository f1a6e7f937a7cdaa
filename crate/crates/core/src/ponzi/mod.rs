//! Ponzi contract detection: Gini inequality, opcode histograms, feature
//! vectors and a logistic-regression classifier.

pub mod features;
pub mod gini;
pub mod model;
pub mod opcodes;

use thiserror::Error;

use crate::derive::DeriveError;

pub use features::{
    extract_all_features, extract_features, feature_dim, feature_names, features_csv, parse_features_csv,
    read_features_csv, write_features_csv, FeatureTable, FeatureVector, BEHAVIOUR_FEATURES, FEATURE_LAYOUT_VERSION,
};
pub use gini::{gini, gini_f64, GiniError};
pub use model::{
    cross_validate, evaluate, gradient, labels_csv, objective, parse_labels_csv, predict, read_labels_csv, sigmoid,
    standardization, train, Confusion, CrossValidation, Evaluation, Hyperparams, Label, LabeledContract, Model,
    Prediction, Trained, THRESHOLD,
};
pub use opcodes::{assemble, disassemble, opcode_table, OpcodeHistogram, OpcodeTable, INVALID_BUCKET};

#[derive(Debug, Error)]
pub enum PonziError {
    #[error("need at least two examples of each class (ponzi {ponzi}, normal {normal})")]
    DegenerateLabels { ponzi: usize, normal: usize },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty evaluation set")]
    EmptySet,
    #[error("cannot split {n} examples into {k} folds")]
    InvalidFolds { k: usize, n: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Derive(#[from] DeriveError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
