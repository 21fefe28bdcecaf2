//! Quadratic discriminant analysis, stratified cross-validation and
//! class-weighted F1: the evaluation engine behind every selection stage.

mod cv;
mod metrics;
mod qda;

pub use cv::{cross_validate, stratified_folds, CvEngine, CvResult, FoldPlan};
pub use metrics::weighted_f1;
pub use qda::{qda_fit, qda_predict, ClassGaussian, QdaModel, DEFAULT_SHRINKAGE};
pub(crate) use qda::check_labels;
