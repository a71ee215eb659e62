//! Explainable class-specific naive Bayes.
//!
//! Class-conditional densities are kernel density estimates; each class is
//! scored only on the variables that separate it from the other classes, as
//! measured by the Hellinger distance between class densities.
//!
//! ```no_run
//! use xnb::{ClassColumn, Dataset, XnbConfig, fit_xnb};
//!
//! let data = Dataset::load_csv("train.csv", &ClassColumn::Name("class".into()))?;
//! let model = fit_xnb(&data, &XnbConfig::default())?;
//! for (class, vars) in model.classes().iter().zip(model.features()) {
//!     println!("{class}: {vars:?}");
//! }
//! # Ok::<(), xnb::Error>(())
//! ```

pub mod classifier;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod hellinger;
pub mod kde;
pub mod selection;

pub use classifier::{
    fit_fnb, fit_gnb, fit_xnb, load_model, predict_gnb, predict_xnb, save_model, FitOutput, GnbModel, Method,
    Prediction, StageTimings, XnbConfig, XnbModel,
};
pub use dataset::{stratified_kfold, ClassColumn, Dataset, FoldPlan};
pub use error::{Error, Result};
pub use evaluation::{accuracy, emit_report, evaluate_cv, EvaluationReport, ReportFormat};
pub use hellinger::{hellinger, hellinger_table, normalize_to_distribution, DiscreteDistribution, HellingerTable};
pub use kde::{bandwidth, fit_kde, kernel_eval, make_grid, BandwidthRule, KdeBank, KdeModel, KernelKind};
pub use selection::{
    discriminatory_power, explain_selection, select_class_specific, ClassFeatureMap, SelectionConfig,
};
