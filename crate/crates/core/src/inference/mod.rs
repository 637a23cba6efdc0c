//! Parameter fitting, likelihood, BIC and description lengths.

mod cache;
mod dataset;
mod description;
mod fit;

pub use cache::{FitCache, Scored, Scorer};
pub use dataset::{fmt_f64, Dataset, Provenance};
pub use description::{
    bic, description_length, log_likelihood, predicted_dl_trivial, predicted_dl_true,
    DescriptionLength,
};
pub use fit::{fit_params, FitOptions, FitResult, Fitter, Optimizer};
