//! Planted-model experiments: synthetic data, learnability trials and
//! curves, and the analytic transition noise.

mod output;
mod planted;
mod transition;
mod trial;

pub use output::{write_summary_csv, write_sweep_dat, write_trials_csv};
pub use planted::{
    benchmarks, estimate_delta2, generate_dataset, Delta2Estimate, PlantedModel, PlantedSpec,
};
pub use transition::{transition_noise_approx, transition_noise_exact};
pub use trial::{
    learnability_curve, learnability_curve_with, learnability_trial, rho_crossing, rmse,
    scaled_collapse, trial_seed, CollapsePoint, NoiseGrid, SweepCell, SweepResult, SweepSpec,
    TransitionPoint, TrialRecord, TrialSettings, DEFAULT_TOL_GAP, NON_FINITE_RESIDUAL,
};
