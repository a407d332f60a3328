//! The attack models: naive Bayes (binomial and multinomial), the
//! payload-length lookup table, and least-squares length regression.

mod linear;
mod lookup;
mod naive_bayes;
mod persist;

pub use linear::{fit_linear, predict_length, LinearModel};
pub use lookup::{build_lookup, build_lookup_from_pairs, classify_length, ControlLengths, Fallback, LookupTableModel};
pub use naive_bayes::{predict_nb, train_nb, NaiveBayesModel, NbKind, Prediction};
pub use persist::{load_model, save_model, Model, ModelDocument, ModelError, MODEL_FORMAT_VERSION};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("class #{0} has no training instances")]
    ClassWithNoInstances(usize),
    #[error("instance label is not among the model's classes")]
    UnknownClass,
    #[error("feature vector kind does not match the model")]
    MixedVectorKinds,
    #[error("feature vector has {found} dimensions, vocabulary has {expected}")]
    VocabularyMismatch { expected: usize, found: usize },
    #[error("smoothing alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("regression needs at least two distinct payload lengths")]
    DegenerateFit,
    #[error("regression input is not finite")]
    NonFinite,
}
