use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::fit::{FitOptions, FitResult, Fitter};
use crate::error::{Error, Result};
use crate::exprtree::ExprTree;
use crate::prior::{model_complexity, PriorConfig};

/// `H(m) = B(m)/2 + H_M(m)`, split into its three additive parts (nats).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptionLength {
    pub total: f64,
    /// `(N/2)(ln 2π s_y² + 1)`.
    pub fit_term: f64,
    /// `((k+1)/2) ln N`.
    pub param_penalty: f64,
    /// `H_M(m)`.
    pub model_complexity: f64,
}

impl DescriptionLength {
    pub fn unfittable(model_complexity: f64) -> Self {
        Self {
            total: f64::INFINITY,
            fit_term: f64::INFINITY,
            param_penalty: f64::NAN,
            model_complexity,
        }
    }

    /// `B(m)/2`.
    pub fn half_bic(&self) -> f64 {
        self.fit_term + self.param_penalty
    }

    pub fn from_fit(n: usize, fit: &FitResult, model_complexity: f64, floor: f64) -> Self {
        if !fit.converged || !fit.s2.is_finite() {
            return Self::unfittable(model_complexity);
        }
        let k = fit.theta.len();
        let fit_term = -log_likelihood_parts(n, fit.s2, floor);
        let param_penalty = 0.5 * (k as f64 + 1.0) * (n as f64).ln();
        Self {
            total: fit_term + param_penalty + model_complexity,
            fit_term,
            param_penalty,
            model_complexity,
        }
    }
}

fn log_likelihood_parts(n: usize, s2: f64, floor: f64) -> f64 {
    let s2 = s2.max(floor);
    -0.5 * n as f64 * ((2.0 * PI * s2).ln() + 1.0)
}

/// Gaussian log-likelihood at the MLE plug-in, `-(N/2)(ln 2π s_y² + 1)`,
/// with `s_y²` floored at `variance_floor`. `-inf` for failed fits.
pub fn log_likelihood(data: &Dataset, fit: &FitResult, variance_floor: f64) -> f64 {
    if !fit.converged || !fit.s2.is_finite() {
        return f64::NEG_INFINITY;
    }
    log_likelihood_parts(data.len(), fit.s2, variance_floor)
}

/// `B(m) = -2 ln L + (k+1) ln N`.
pub fn bic(data: &Dataset, fit: &FitResult, variance_floor: f64) -> f64 {
    let k = fit.theta.len() as f64;
    -2.0 * log_likelihood(data, fit, variance_floor) + (k + 1.0) * (data.len() as f64).ln()
}

/// Fits `tree` to `data` and returns its description length together with
/// the fit. Unfittable models get `H = +inf`.
pub fn description_length(
    data: &Dataset,
    tree: &ExprTree,
    cfg: &PriorConfig,
    opts: &FitOptions,
) -> Result<(DescriptionLength, FitResult)> {
    let hm = model_complexity(tree, cfg)?.value();
    let fit = Fitter::new(opts.clone()).fit(tree, data, None, 0);
    Ok((
        DescriptionLength::from_fit(data.len(), &fit, hm, opts.variance_floor),
        fit,
    ))
}

/// Description length of the true model under the BIC approximation:
/// `(N/2)(ln 2π⟨ε²⟩ + 1) + ((k*+1)/2) ln N + H_M(m*)`.
pub fn predicted_dl_true(n: usize, k_true: usize, hm_true: f64, eps2: f64) -> Result<f64> {
    if !(eps2 > 0.0) || !eps2.is_finite() {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {eps2}"
        )));
    }
    let n_f = n as f64;
    Ok(0.5 * n_f * ((2.0 * PI * eps2).ln() + 1.0)
        + 0.5 * (k_true as f64 + 1.0) * n_f.ln()
        + hm_true)
}

/// Description length of the constant model (`k = 1`, `H_M = 0`):
/// `(N/2)(ln 2π(⟨ε²⟩ + ⟨δ²⟩) + 1) + ln N`.
pub fn predicted_dl_trivial(n: usize, eps2: f64, delta2: f64) -> Result<f64> {
    let total = eps2 + delta2;
    if !(total > 0.0) || !total.is_finite() || eps2 < 0.0 || delta2 < 0.0 {
        return Err(Error::Domain(format!(
            "total variance must be positive, got eps2={eps2}, delta2={delta2}"
        )));
    }
    let n_f = n as f64;
    Ok(0.5 * n_f * ((2.0 * PI * total).ln() + 1.0) + n_f.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::{parse_text, OpVocabulary};

    fn fit_with(n_params: usize, s2: f64) -> FitResult {
        FitResult {
            theta: vec![0.0; n_params],
            s2,
            rss: s2,
            converged: true,
        }
    }

    fn data(n: usize) -> Dataset {
        Dataset::from_columns(vec![vec![0.0; n]], vec![0.0; n]).unwrap()
    }

    #[test]
    fn log_likelihood_examples() {
        let ll = log_likelihood(&data(2), &fit_with(0, 1.0), 1e-12);
        assert!((ll - (-2.8379)).abs() < 1e-4, "{ll}");
        let ll = log_likelihood(&data(100), &fit_with(0, 1.0), 1e-12);
        assert!((ll - (-141.894)).abs() < 1e-3, "{ll}");
        let ll = log_likelihood(&data(10), &fit_with(0, 0.0), 1e-12);
        let want = -5.0 * ((2.0 * PI * 1e-12).ln() + 1.0);
        assert!((ll - want).abs() < 1e-9);
        assert_eq!(
            log_likelihood(&data(10), &FitResult::failed(1), 1e-12),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn bic_examples() {
        let b0 = bic(&data(2), &fit_with(0, 1.0), 1e-12);
        assert!((b0 - 6.3690).abs() < 1e-4, "{b0}");
        let b1 = bic(&data(2), &fit_with(1, 1.0), 1e-12);
        assert!((b1 - 7.0621).abs() < 1e-4, "{b1}");
        assert!((b1 - b0 - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_model_description_length() {
        let v = OpVocabulary::default();
        let cfg = PriorConfig::default_for(&v);
        let d = Dataset::from_rows(&[vec![1.0], vec![3.0]], vec![1.0, 3.0]).unwrap();
        let t = parse_text("_c0", &v, 1).unwrap();
        let (dl, _) = description_length(&d, &t, &cfg, &FitOptions::default()).unwrap();
        assert!((dl.total - 3.5310).abs() < 1e-4, "{}", dl.total);
        assert!((dl.total - dl.half_bic() - dl.model_complexity).abs() < 1e-12);

        let x = parse_text("x1", &v, 1).unwrap();
        let (dlx, fit) = description_length(&d, &x, &cfg, &FitOptions::default()).unwrap();
        assert_eq!(fit.s2, 0.0);
        assert!(dlx.total.is_finite());
        assert!(dlx.total < dl.total);
    }

    #[test]
    fn analytic_examples() {
        let h = predicted_dl_true(100, 2, 3.0, 1.0).unwrap();
        assert!((h - 151.80).abs() < 5e-3, "{h}");
        let h = predicted_dl_trivial(100, 1.0, 3.0).unwrap();
        assert!((h - 215.82).abs() < 1e-2, "{h}");
        let a = predicted_dl_true(57, 1, 0.0, 0.7).unwrap();
        let b = predicted_dl_trivial(57, 0.7, 0.0).unwrap();
        assert!((a - b).abs() < 1e-12);
        let d = predicted_dl_true(100, 2, 3.0, 2.0).unwrap() - predicted_dl_true(100, 2, 3.0, 1.0).unwrap();
        assert!((d - 50.0 * 2f64.ln()).abs() < 1e-10);
        assert!(predicted_dl_true(100, 2, 3.0, 0.0).is_err());
        assert!(predicted_dl_trivial(100, 0.0, 0.0).is_err());
    }
}
