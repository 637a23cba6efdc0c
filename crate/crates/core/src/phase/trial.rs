use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::planted::{estimate_delta2, generate_dataset, Delta2Estimate, PlantedModel};
use super::transition::{transition_noise_approx, transition_noise_exact};
use crate::error::{Error, Result};
use crate::exprtree::{canonical_key, evaluate, ExprTree, OpVocabulary};
use crate::inference::{
    predicted_dl_trivial, predicted_dl_true, Dataset, DescriptionLength, FitCache, FitOptions,
    Scored, Scorer,
};
use crate::prior::PriorConfig;
use crate::sampler::{run_chains, SamplerOptions};
use crate::seed::{label_index, split_path, split_seed};

/// Residual charged for a test point where the model is not finite.
pub const NON_FINITE_RESIDUAL: f64 = 1e6;

/// Default tolerance of the learnability gap test, in nats.
pub const DEFAULT_TOL_GAP: f64 = 1e-6;

/// Everything a trial needs besides the planted model and noise level.
#[derive(Clone, Debug)]
pub struct TrialSettings {
    pub vocab: OpVocabulary,
    pub prior: PriorConfig,
    pub fit: FitOptions,
    pub sampler: SamplerOptions,
    pub tol_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model_id: String,
    pub n: usize,
    pub s_eps: f64,
    pub replica: usize,
    pub seed: u64,
    pub learnable: bool,
    /// `H(MDL) - H(m*)`.
    pub gap: f64,
    pub h_mdl: f64,
    pub h_true: f64,
    pub rmse: f64,
    pub rmse_over_s: f64,
    pub mdl_expr: String,
}

/// Root mean squared prediction error on `data`.
pub fn rmse(tree: &ExprTree, theta: &[f64], data: &Dataset) -> f64 {
    let cols = data.columns();
    let mut x = vec![0.0; data.dim()];
    let mut sum = 0.0;
    for (i, y) in data.y().iter().enumerate() {
        for (xj, c) in x.iter_mut().zip(cols) {
            *xj = c[i];
        }
        let r = match evaluate(tree, theta, &x) {
            Some(v) if (y - v).is_finite() => y - v,
            _ => NON_FINITE_RESIDUAL,
        };
        sum += r * r;
    }
    (sum / data.len() as f64).sqrt()
}

/// Generates a training set and an independent test set, scores the true
/// structure, samples for the MDL model and compares the two.
pub fn learnability_trial(
    planted: &PlantedModel,
    n: usize,
    s_eps: f64,
    seed: u64,
    settings: &TrialSettings,
) -> Result<TrialRecord> {
    let train = generate_dataset(planted, n, s_eps, split_seed(seed, 0))?;
    let test = generate_dataset(planted, n, s_eps, split_seed(seed, 1))?;
    let cache = FitCache::new();
    let mut scorer = Scorer::new(
        &train,
        &settings.prior,
        &settings.vocab,
        &settings.fit,
        &cache,
        split_seed(seed, 2),
    )?;

    let truth = planted.tree();
    let hm = planted.complexity(&settings.prior)?;
    let fit = scorer
        .fitter_mut()
        .fit(truth, &train, Some(planted.theta()), split_seed(seed, 3));
    let dl = DescriptionLength::from_fit(n, &fit, hm, settings.fit.variance_floor);
    let h_true = dl.total;
    // The sampler reuses this fit if it reaches the true structure, so an
    // exact recovery gives a gap of exactly zero.
    scorer.seed_cache(truth, Scored { fit, dl });

    let result = run_chains(&mut scorer, &settings.vocab, &settings.sampler, split_seed(seed, 4))?;
    let mdl = result.mdl;
    let gap = mdl.h() - h_true;
    let err = rmse(&mdl.tree, &mdl.theta, &test);
    Ok(TrialRecord {
        model_id: planted.id.clone(),
        n,
        s_eps,
        replica: 0,
        seed,
        learnable: gap >= -settings.tol_gap,
        gap,
        h_mdl: mdl.h(),
        h_true,
        rmse: err,
        rmse_over_s: err / s_eps,
        mdl_expr: canonical_key(&mdl.tree),
    })
}

/// Noise levels of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseGrid {
    /// `points` log-spaced multiples of the exact transition noise.
    Relative { from: f64, to: f64, points: usize },
    /// Explicit multiples of the exact transition noise, ascending.
    Multiples { values: Vec<f64> },
    /// Fixed noise levels, shared by every model and `N`.
    Absolute { values: Vec<f64> },
}

impl Default for NoiseGrid {
    fn default() -> Self {
        NoiseGrid::Relative {
            from: 1.0 / 30.0,
            to: 10.0,
            points: 12,
        }
    }
}

impl NoiseGrid {
    /// Number of noise levels.
    pub fn len(&self) -> usize {
        match self {
            NoiseGrid::Relative { points, .. } => *points,
            NoiseGrid::Multiples { values } | NoiseGrid::Absolute { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            NoiseGrid::Relative { from, to, points } => {
                *points >= 1 && *from > 0.0 && to.is_finite() && to >= from && (*points > 1 || from == to)
            }
            NoiseGrid::Multiples { values } | NoiseGrid::Absolute { values } => {
                !values.is_empty()
                    && values.iter().all(|v| *v > 0.0 && v.is_finite())
                    && values.windows(2).all(|w| w[0] < w[1])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid noise grid {self:?}")))
        }
    }

    pub fn levels(&self, s_cross: f64) -> Result<Vec<f64>> {
        match self {
            NoiseGrid::Absolute { values } => Ok(values.clone()),
            _ if !s_cross.is_finite() => Err(Error::Validation(
                "relative noise grid needs a finite transition noise".into(),
            )),
            NoiseGrid::Multiples { values } => Ok(values.iter().map(|m| m * s_cross).collect()),
            NoiseGrid::Relative { from, to, points } => {
                if *points == 1 {
                    return Ok(vec![from * s_cross]);
                }
                let (a, b) = (from.ln(), to.ln());
                Ok((0..*points)
                    .map(|i| s_cross * (a + (b - a) * i as f64 / (*points - 1) as f64).exp())
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub n_values: Vec<usize>,
    pub noise: NoiseGrid,
    pub replicas: usize,
    /// Monte Carlo samples for `⟨δ²⟩`.
    pub n_mc: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            n_values: vec![25, 100, 400],
            noise: NoiseGrid::default(),
            replicas: 20,
            n_mc: 100_000,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::Validation("sweep needs N values of at least 2".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Validation("sweep needs at least one replica".into()));
        }
        if self.n_mc < 1000 {
            return Err(Error::Validation("n_mc must be at least 1000".into()));
        }
        self.noise.validate()
    }
}

/// Analytic transition point of one planted model at one `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub model_id: String,
    pub n: usize,
    pub delta2: Delta2Estimate,
    pub delta_m: f64,
    pub k: usize,
    pub s_cross_exact: f64,
    /// `NaN` where the approximation is undefined.
    pub s_cross_approx: f64,
}

impl TransitionPoint {
    pub fn compute(
        planted: &PlantedModel,
        prior: &PriorConfig,
        delta2: Delta2Estimate,
        n: usize,
    ) -> Result<Self> {
        let delta_m = planted.complexity(prior)?;
        let k = planted.k();
        Ok(Self {
            model_id: planted.id.clone(),
            n,
            delta2,
            delta_m,
            k,
            s_cross_exact: transition_noise_exact(delta2.value, delta_m, k, n)?,
            s_cross_approx: transition_noise_approx(delta2.value, delta_m, k, n)
                .unwrap_or(f64::NAN),
        })
    }
}

/// Aggregates of one `(model, N, s_ε)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub model_id: String,
    pub n: usize,
    pub s_eps: f64,
    pub replicas: usize,
    pub rho: f64,
    pub mean_rmse_over_s: f64,
    pub mean_h_mdl: f64,
    pub mean_h_true: f64,
    /// Expected description length of the true model at this noise.
    pub h_true_predicted: f64,
    /// Expected description length of the constant model at this noise.
    pub h_trivial_predicted: f64,
    pub s_cross_exact: f64,
    pub s_cross_approx: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub transitions: Vec<TransitionPoint>,
    /// Sorted by model, `N`, noise level, replica.
    pub trials: Vec<TrialRecord>,
    /// Sorted by model, `N`, noise level.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cells_for<'a>(&'a self, model_id: &'a str, n: usize) -> impl Iterator<Item = &'a SweepCell> + 'a {
        self.cells
            .iter()
            .filter(move |c| c.model_id == model_id && c.n == n)
    }

    /// Empirical `ρ = 1/2` crossing of one curve.
    pub fn crossing(&self, model_id: &str, n: usize) -> Option<f64> {
        let curve: Vec<(f64, f64)> = self.cells_for(model_id, n).map(|c| (c.s_eps, c.rho)).collect();
        rho_crossing(&curve)
    }
}

/// Noise at which a learnability curve drops through 1/2, interpolating
/// linearly in `ρ` against `ln s_ε` after the last point with `ρ >= 1/2`.
/// `None` when the curve never reaches 1/2 or never falls below it.
pub fn rho_crossing(curve: &[(f64, f64)]) -> Option<f64> {
    let last = curve.iter().rposition(|&(_, rho)| rho >= 0.5)?;
    let &(s0, r0) = &curve[last];
    let &(s1, r1) = curve.get(last + 1)?;
    let t = (r0 - 0.5) / (r0 - r1);
    Some((s0.ln() + t * (s1.ln() - s0.ln())).exp())
}

/// One row of a rescaled learnability curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapsePoint {
    pub model_id: String,
    pub n: usize,
    pub scaled_noise: f64,
    pub rho: f64,
}

/// Learnability against `s_ε / s_ε^×`, for overlaying curves.
pub fn scaled_collapse(result: &SweepResult) -> Vec<CollapsePoint> {
    result
        .cells
        .iter()
        .map(|c| CollapsePoint {
            model_id: c.model_id.clone(),
            n: c.n,
            scaled_noise: c.s_eps / c.s_cross_exact,
            rho: c.rho,
        })
        .collect()
}

/// Seed of one trial. Independent of the noise level, so all levels of a
/// replica share inputs and standardized noise.
pub fn trial_seed(master: u64, model_id: &str, n: usize, replica: usize) -> u64 {
    split_path(master, &[label_index(model_id), n as u64, replica as u64])
}

/// Runs the full grid of trials for every planted model. Trials run on the
/// current rayon pool; the result does not depend on scheduling.
pub fn learnability_curve(
    planted: &[PlantedModel],
    spec: &SweepSpec,
    settings: &TrialSettings,
    seed: u64,
) -> Result<SweepResult> {
    learnability_curve_with(planted, spec, settings, seed, &|_| {})
}

/// As [`learnability_curve`], calling `on_trial` as each trial finishes.
pub fn learnability_curve_with(
    planted: &[PlantedModel],
    spec: &SweepSpec,
    settings: &TrialSettings,
    seed: u64,
    on_trial: &(dyn Fn(&TrialRecord) + Sync),
) -> Result<SweepResult> {
    spec.validate()?;
    settings.sampler.validate()?;
    let mut ids = std::collections::HashSet::new();
    if let Some(p) = planted.iter().find(|p| !ids.insert(p.id.as_str())) {
        return Err(Error::Validation(format!("duplicate planted model id `{}`", p.id)));
    }

    let mut transitions = Vec::new();
    let mut work = Vec::new();
    for (mi, p) in planted.iter().enumerate() {
        let delta2 = estimate_delta2(p, spec.n_mc, split_path(seed, &[label_index(&p.id), u64::MAX]))?;
        for &n in &spec.n_values {
            let t = TransitionPoint::compute(p, &settings.prior, delta2, n)?;
            for (si, s) in spec.noise.levels(t.s_cross_exact)?.into_iter().enumerate() {
                for r in 0..spec.replicas {
                    work.push((mi, transitions.len(), si, s, r));
                }
            }
            transitions.push(t);
        }
    }

    let trials: Vec<TrialRecord> = work
        .par_iter()
        .map(|&(mi, ti, _, s, r)| {
            let p = &planted[mi];
            let n = transitions[ti].n;
            let mut rec = learnability_trial(p, n, s, trial_seed(seed, &p.id, n, r), settings)?;
            rec.replica = r;
            on_trial(&rec);
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (group, chunk) in trials.chunks(spec.replicas).enumerate() {
        let (mi, ti, _, s, _) = work[group * spec.replicas];
        let t = &transitions[ti];
        let m = chunk.len() as f64;
        let mean = |f: fn(&TrialRecord) -> f64| chunk.iter().map(f).sum::<f64>() / m;
        cells.push(SweepCell {
            model_id: planted[mi].id.clone(),
            n: t.n,
            s_eps: s,
            replicas: chunk.len(),
            rho: chunk.iter().filter(|r| r.learnable).count() as f64 / m,
            mean_rmse_over_s: mean(|r| r.rmse_over_s),
            mean_h_mdl: mean(|r| r.h_mdl),
            mean_h_true: mean(|r| r.h_true),
            h_true_predicted: predicted_dl_true(t.n, t.k, t.delta_m, s * s)?,
            h_trivial_predicted: predicted_dl_trivial(t.n, s * s, t.delta2.value)?,
            s_cross_exact: t.s_cross_exact,
            s_cross_approx: t.s_cross_approx,
        });
    }
    Ok(SweepResult {
        transitions,
        trials,
        cells,
    })
}
