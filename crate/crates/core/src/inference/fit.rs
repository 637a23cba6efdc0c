//! Maximum-likelihood parameter fitting by multi-start nonlinear least
//! squares.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::exprtree::{BatchEvaluator, ExprTree};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Damped Gauss–Newton with forward-mode derivatives.
    #[default]
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Random starts in addition to the warm start.
    pub restarts: usize,
    /// Iteration cap per local search; `None` picks the optimizer's
    /// default (200 for Levenberg–Marquardt, 2000 for Nelder–Mead).
    pub max_iters: Option<usize>,
    pub param_range: [f64; 2],
    pub variance_floor: f64,
    pub optimizer: Optimizer,
    /// Skip the remaining random starts once two starts agree on the best
    /// residual sum of squares to this relative tolerance; `0` disables.
    pub agreement_tol: f64,
    /// Levenberg–Marquardt stops when an iteration lowers the residual sum
    /// of squares by less than this fraction.
    pub ftol: f64,
}

impl FitOptions {
    pub fn validate(&self) -> crate::error::Result<()> {
        let [lo, hi] = self.param_range;
        let ok = lo.is_finite()
            && hi.is_finite()
            && lo < hi
            && self.variance_floor > 0.0
            && self.variance_floor.is_finite()
            && self.agreement_tol >= 0.0
            && self.ftol >= 0.0
            && self.max_iters != Some(0);
        if ok {
            Ok(())
        } else {
            Err(crate::error::Error::Validation(format!("invalid fit options: {self:?}")))
        }
    }

    pub fn iteration_cap(&self) -> usize {
        self.max_iters.unwrap_or(match self.optimizer {
            Optimizer::LevenbergMarquardt => 200,
            Optimizer::NelderMead => 2000,
        })
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iters: None,
            param_range: [-10.0, 10.0],
            variance_floor: 1e-12,
            optimizer: Optimizer::default(),
            agreement_tol: 1e-9,
            ftol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Vec<f64>,
    /// MLE noise variance `RSS / N`; `+inf` when no start evaluated.
    pub s2: f64,
    pub rss: f64,
    /// A finite residual sum of squares was reached.
    pub converged: bool,
}

impl FitResult {
    pub fn failed(k: usize) -> Self {
        Self {
            theta: vec![f64::NAN; k],
            s2: f64::INFINITY,
            rss: f64::INFINITY,
            converged: false,
        }
    }
}

/// Reusable fitting workspace. Not shared between threads; create one per
/// worker.
pub struct Fitter {
    opts: FitOptions,
    eval: BatchEvaluator,
    pred: Vec<f64>,
    jac: Vec<f64>,
    resid: Vec<f64>,
}

impl Fitter {
    pub fn new(opts: FitOptions) -> Self {
        Self {
            opts,
            eval: BatchEvaluator::new(),
            pred: Vec::new(),
            jac: Vec::new(),
            resid: Vec::new(),
        }
    }

    pub fn options(&self) -> &FitOptions {
        &self.opts
    }

    /// Residual sum of squares at `theta`, `+inf` when any prediction is
    /// non-finite.
    pub fn rss(&mut self, tree: &ExprTree, theta: &[f64], data: &Dataset) -> f64 {
        if !self.eval.values(tree, theta, data.columns(), &mut self.pred) {
            return f64::INFINITY;
        }
        let rss: f64 = self
            .pred
            .iter()
            .zip(data.y())
            .map(|(p, y)| (y - p) * (y - p))
            .sum();
        if rss.is_finite() {
            rss
        } else {
            f64::INFINITY
        }
    }

    /// Minimizes the residual sum of squares from one warm start (all ones
    /// when `warm` is `None`) plus `restarts` uniform random starts drawn
    /// from a generator seeded with `seed`. The lowest RSS wins.
    pub fn fit(
        &mut self,
        tree: &ExprTree,
        data: &Dataset,
        warm: Option<&[f64]>,
        seed: u64,
    ) -> FitResult {
        let k = tree.param_count();
        let n = data.len() as f64;
        if k == 0 {
            let rss = self.rss(tree, &[], data);
            return if rss.is_finite() {
                FitResult {
                    theta: Vec::new(),
                    s2: rss / n,
                    rss,
                    converged: true,
                }
            } else {
                FitResult::failed(0)
            };
        }

        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(1 + self.opts.restarts);
        starts.push(match warm {
            Some(w) if w.len() == k => w.to_vec(),
            _ => vec![1.0; k],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [lo, hi] = self.opts.param_range;
        for _ in 0..self.opts.restarts {
            starts.push((0..k).map(|_| rng.random_range(lo..=hi)).collect());
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in starts {
            let found = match self.opts.optimizer {
                Optimizer::LevenbergMarquardt => self.levenberg_marquardt(tree, data, start),
                Optimizer::NelderMead => self.nelder_mead(tree, data, start),
            };
            if let Some((theta, rss)) = found {
                match &best {
                    Some((_, b)) if (rss - b).abs() <= self.opts.agreement_tol * b.abs() => {
                        if rss < *b {
                            best = Some((theta, rss));
                        }
                        break;
                    }
                    Some((_, b)) if rss >= *b => {}
                    _ => best = Some((theta, rss)),
                }
            }
        }
        match best {
            Some((theta, rss)) => FitResult {
                theta,
                s2: rss / n,
                rss,
                converged: true,
            },
            None => FitResult::failed(k),
        }
    }

    fn residuals_and_jacobian(&mut self, tree: &ExprTree, theta: &[f64], data: &Dataset) -> f64 {
        if !self.eval.values_and_jacobian(
            tree,
            theta,
            data.columns(),
            &mut self.pred,
            &mut self.jac,
        ) {
            return f64::INFINITY;
        }
        self.resid.clear();
        self.resid
            .extend(data.y().iter().zip(&self.pred).map(|(y, p)| y - p));
        let rss: f64 = self.resid.iter().map(|r| r * r).sum();
        if rss.is_finite() {
            rss
        } else {
            f64::INFINITY
        }
    }

    fn levenberg_marquardt(
        &mut self,
        tree: &ExprTree,
        data: &Dataset,
        mut theta: Vec<f64>,
    ) -> Option<(Vec<f64>, f64)> {
        let k = theta.len();
        let n = data.len();
        let mut rss = self.residuals_and_jacobian(tree, &theta, data);
        if !rss.is_finite() {
            return None;
        }
        let mut lambda = 1e-3;
        let mut a = vec![0.0; k * k];
        let mut g = vec![0.0; k];
        let mut m = vec![0.0; k * k];
        let mut step = vec![0.0; k];
        let mut trial = vec![0.0; k];

        for _ in 0..self.opts.iteration_cap() {
            if rss <= f64::MIN_POSITIVE {
                break;
            }
            for p in 0..k {
                let jp = &self.jac[p * n..(p + 1) * n];
                g[p] = jp.iter().zip(&self.resid).map(|(j, r)| j * r).sum();
                for q in 0..=p {
                    let jq = &self.jac[q * n..(q + 1) * n];
                    let v: f64 = jp.iter().zip(jq).map(|(x, y)| x * y).sum();
                    a[p * k + q] = v;
                    a[q * k + p] = v;
                }
            }
            let max_diag = (0..k).map(|p| a[p * k + p]).fold(0.0, f64::max);
            if max_diag == 0.0 || !max_diag.is_finite() {
                break;
            }
            let gmax = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if gmax <= 1e-14 * rss.max(f64::MIN_POSITIVE).sqrt() * max_diag.sqrt() {
                break;
            }

            let mut improved = false;
            while lambda < 1e16 {
                m.copy_from_slice(&a);
                for p in 0..k {
                    let d = a[p * k + p].max(1e-12 * max_diag);
                    m[p * k + p] += lambda * d;
                }
                if !cholesky_solve(&mut m, &g, &mut step, k) {
                    lambda *= 10.0;
                    continue;
                }
                for p in 0..k {
                    trial[p] = theta[p] + step[p];
                }
                let new_rss = self.rss(tree, &trial, data);
                if new_rss < rss {
                    let gain = rss - new_rss;
                    theta.copy_from_slice(&trial);
                    lambda = (lambda * 0.3).max(1e-12);
                    let old = rss;
                    rss = self.residuals_and_jacobian(tree, &theta, data);
                    improved = gain > self.opts.ftol * old;
                    break;
                }
                lambda *= 4.0;
            }
            if !improved {
                break;
            }
        }
        Some((theta, rss))
    }

    fn nelder_mead(
        &mut self,
        tree: &ExprTree,
        data: &Dataset,
        start: Vec<f64>,
    ) -> Option<(Vec<f64>, f64)> {
        let k = start.len();
        let f0 = self.rss(tree, &start, data);
        if !f0.is_finite() {
            return None;
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
        for p in 0..k {
            let mut v = start.clone();
            v[p] += 0.1 * v[p].abs().max(1.0);
            let f = self.rss(tree, &v, data);
            simplex.push((v, f));
        }
        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut centroid = vec![0.0; k];
        for _ in 0..self.opts.iteration_cap() {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[k].1;
            if worst.is_finite() && (worst - best) <= 1e-14 * (best.abs() + 1e-300) {
                break;
            }
            centroid.fill(0.0);
            for (v, _) in &simplex[..k] {
                for p in 0..k {
                    centroid[p] += v[p] / k as f64;
                }
            }
            let towards = |s: f64, from: &[f64], c: &[f64]| -> Vec<f64> {
                c.iter().zip(from).map(|(c, w)| c + s * (w - c)).collect()
            };
            let reflected = towards(-alpha, &simplex[k].0, &centroid);
            let fr = self.rss(tree, &reflected, data);
            if fr < simplex[0].1 {
                let expanded = towards(-gamma, &simplex[k].0, &centroid);
                let fe = self.rss(tree, &expanded, data);
                simplex[k] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            } else if fr < simplex[k - 1].1 {
                simplex[k] = (reflected, fr);
            } else {
                let contracted = towards(rho, &simplex[k].0, &centroid);
                let fc = self.rss(tree, &contracted, data);
                if fc < simplex[k].1 {
                    simplex[k] = (contracted, fc);
                } else {
                    let anchor = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        let v = towards(sigma, &entry.0, &anchor);
                        let f = self.rss(tree, &v, data);
                        *entry = (v, f);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (theta, rss) = simplex.swap_remove(0);
        rss.is_finite().then_some((theta, rss))
    }
}

/// Solves `m x = b` in place for symmetric positive-definite `m`.
fn cholesky_solve(m: &mut [f64], b: &[f64], x: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = m[j * k + j];
        for p in 0..j {
            d -= m[j * k + p] * m[j * k + p];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        m[j * k + j] = d;
        for i in j + 1..k {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= m[i * k + p] * m[j * k + p];
            }
            m[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= m[i * k + p] * x[p];
        }
        x[i] = s / m[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = x[i];
        for p in i + 1..k {
            s -= m[p * k + i] * x[p];
        }
        x[i] = s / m[i * k + i];
    }
    x.iter().all(|v| v.is_finite())
}

/// Fits with default options and a fixed seed.
pub fn fit_params(tree: &ExprTree, data: &Dataset, opts: &FitOptions, seed: u64) -> FitResult {
    Fitter::new(opts.clone()).fit(tree, data, None, seed)
}
