use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprtree::{evaluate, parse_text, to_text, ExprTree, OpVocabulary};
use crate::inference::{Dataset, Provenance};
use crate::prior::{model_complexity, PriorConfig};
use crate::seed::rng;

/// Attempts per point before a planted model is declared non-finite on its
/// domain.
const MAX_POINT_RETRIES: usize = 100;

/// A known generating model `y = m*(x, θ*) + ε` with its input box.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedModel {
    pub id: String,
    tree: ExprTree,
    theta: Vec<f64>,
    domain: Vec<[f64; 2]>,
}

/// Serializable description of a planted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub id: String,
    pub expression: String,
    pub theta: Vec<f64>,
    /// One interval per input dimension; defaults to `[-2, 2]` for each.
    #[serde(default)]
    pub domain: Option<Vec<[f64; 2]>>,
}

impl PlantedModel {
    pub fn new(id: impl Into<String>, tree: ExprTree, theta: Vec<f64>, domain: Vec<[f64; 2]>) -> Result<Self> {
        let id = id.into();
        if theta.len() != tree.param_count() {
            return Err(Error::Validation(format!(
                "planted model `{id}` has {} parameters but {} values were given",
                tree.param_count(),
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("planted model `{id}` has non-finite θ")));
        }
        if domain.is_empty() || domain.len() < tree.max_var() {
            return Err(Error::Validation(format!(
                "planted model `{id}` uses x{} but the domain has {} intervals",
                tree.max_var(),
                domain.len()
            )));
        }
        if domain.iter().any(|[a, b]| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::Validation(format!(
                "planted model `{id}` has an empty or non-finite domain interval"
            )));
        }
        Ok(Self { id, tree, theta, domain })
    }

    pub fn from_spec(spec: &PlantedSpec, vocab: &OpVocabulary, dim: usize) -> Result<Self> {
        let tree = parse_text(&spec.expression, vocab, dim)?;
        let domain = spec.domain.clone().unwrap_or_else(|| vec![[-2.0, 2.0]; dim]);
        if domain.len() != dim {
            return Err(Error::Validation(format!(
                "planted model `{}` domain has {} intervals, expected {dim}",
                spec.id,
                domain.len()
            )));
        }
        Self::new(spec.id.clone(), tree, spec.theta.clone(), domain)
    }

    pub fn tree(&self) -> &ExprTree {
        &self.tree
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn k(&self) -> usize {
        self.tree.param_count()
    }

    /// `Δ_M* = H_M(m*) - H_M(m^c)`, with `H_M(m^c) = 0`.
    pub fn complexity(&self, prior: &PriorConfig) -> Result<f64> {
        Ok(model_complexity(&self.tree, prior)?.value())
    }

    pub fn value(&self, x: &[f64]) -> Option<f64> {
        evaluate(&self.tree, &self.theta, x)
    }

    /// A point uniform on the domain where the model is finite.
    fn draw_point<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) -> Result<f64> {
        for _ in 0..MAX_POINT_RETRIES {
            for (xj, [a, b]) in x.iter_mut().zip(&self.domain) {
                *xj = rng.random_range(*a..*b);
            }
            if let Some(v) = self.value(x) {
                return Ok(v);
            }
        }
        Err(Error::Domain(format!(
            "planted model `{}` is not finite on its domain ({} consecutive failed draws)",
            self.id, MAX_POINT_RETRIES
        )))
    }
}

/// Draws `N` points uniformly on the domain and returns
/// `y_i = m*(x_i, θ*) + s_ε z_i` with `z_i` standard normal.
///
/// Inputs and `z` come from one stream, so datasets with the same seed and
/// different `s_ε` share both inputs and standardized noise.
pub fn generate_dataset(planted: &PlantedModel, n: usize, s_eps: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Validation("dataset size must be at least 1".into()));
    }
    if !(s_eps >= 0.0 && s_eps.is_finite()) {
        return Err(Error::Validation(format!("noise level must be finite and >= 0, got {s_eps}")));
    }
    let d = planted.dim();
    let mut r = rng(seed);
    let mut cols = vec![Vec::with_capacity(n); d];
    let mut y = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        let clean = planted.draw_point(&mut r, &mut x)?;
        let z: f64 = r.sample(StandardNormal);
        for (c, v) in cols.iter_mut().zip(&x) {
            c.push(*v);
        }
        y.push(clean + s_eps * z);
    }
    Ok(Dataset::from_columns(cols, y)?.with_provenance(Provenance {
        true_model: to_text(&planted.tree),
        theta: planted.theta.clone(),
        s_eps,
        seed,
    }))
}

/// Monte Carlo estimate of a variance with its standard error.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta2Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `⟨δ²⟩ = Var_x[m*(x, θ*)]` over the uniform domain box: the excess
/// squared error of the best constant model.
pub fn estimate_delta2(planted: &PlantedModel, n_mc: usize, seed: u64) -> Result<Delta2Estimate> {
    if n_mc < 1000 {
        return Err(Error::Validation(format!(
            "Monte Carlo sample count must be at least 1000, got {n_mc}"
        )));
    }
    let mut r = rng(seed);
    let mut x = vec![0.0; planted.dim()];
    let mut values = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        for (xj, [a, b]) in x.iter_mut().zip(&planted.domain) {
            *xj = r.random_range(*a..*b);
        }
        match planted.value(&x) {
            Some(v) => values.push(v),
            None => {
                return Err(Error::Domain(format!(
                    "planted model `{}` is not finite at {x:?}",
                    planted.id
                )))
            }
        }
    }
    let n = n_mc as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m4) = values.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d2 = (v - mean).powi(2);
        (m2 + d2, m4 + d2 * d2)
    });
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    let std_error = ((m4 - var * var).max(0.0) / n).sqrt();
    Ok(Delta2Estimate { value: var, std_error })
}

/// The two repository benchmarks with their default parameters.
///
/// The parameters and domains keep every simpler sub-model (dropping a
/// term, replacing `sin` by its argument, fixing the exponential rate to
/// one, ...) well separated from the true model, so the transition is set
/// by the constant model rather than by a near-degenerate neighbour. No
/// parameter has a parameter-free spelling (`2 x` is `(x + x)`, a rate of
/// one is `exp(x2)`), which would make a cheaper exact model.
pub mod benchmarks {
    use super::*;

    pub const MODEL_A: &str = "((_c0 * sin(x1)) + (_c1 * (x2 * x2)))";
    pub const THETA_A: [f64; 2] = [4.0, 0.6];
    pub const DOMAIN_A: [f64; 2] = [-3.0, 3.0];

    pub const MODEL_B: &str = "((_c0 * (1.0 + (x1 * x2))) * exp((x2 * _c1)))";
    pub const THETA_B: [f64; 2] = [10.0, -1.6];
    pub const DOMAIN_B: [f64; 2] = [-2.0, 2.0];

    /// `+ - * exp log sin cos sqrt abs`. Division and powers are left out:
    /// with them both benchmarks have cheaper exact rewrites.
    pub fn vocabulary() -> OpVocabulary {
        OpVocabulary::from_names(&["+", "-", "*", "exp", "log", "sin", "cos", "sqrt", "abs"])
            .expect("valid names")
    }

    pub fn specs() -> Vec<PlantedSpec> {
        vec![
            PlantedSpec {
                id: "A".into(),
                expression: MODEL_A.into(),
                theta: THETA_A.to_vec(),
                domain: Some(vec![DOMAIN_A; 2]),
            },
            PlantedSpec {
                id: "B".into(),
                expression: MODEL_B.into(),
                theta: THETA_B.to_vec(),
                domain: Some(vec![DOMAIN_B; 2]),
            },
        ]
    }

    pub fn model_a() -> PlantedModel {
        PlantedModel::from_spec(&specs()[0], &vocabulary(), 2).expect("valid benchmark")
    }

    pub fn model_b() -> PlantedModel {
        PlantedModel::from_spec(&specs()[1], &vocabulary(), 2).expect("valid benchmark")
    }
}
