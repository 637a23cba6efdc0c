use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::moves::{MoveKind, MoveSpace, TreeInfo};
use crate::error::{Error, Result};
use crate::exprtree::{canonical_key, to_text, ExprTree, ModelKey, OpVocabulary, DEFAULT_MAX_NODES};
use crate::inference::{Dataset, DescriptionLength, FitCache, FitOptions, Scored, Scorer};
use crate::prior::PriorConfig;
use crate::seed::{rng, split_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerOptions {
    pub steps: usize,
    /// Fraction of steps discarded before visit statistics are collected.
    pub burn_in: f64,
    /// Trace every `thin`-th step (plus the first and last).
    pub thin: usize,
    pub max_nodes: usize,
    /// Ladder for parallel tempering; must contain 1.0, whose chain is the
    /// output.
    pub temperatures: Vec<f64>,
    /// Count post-burn-in visits of the `T = 1` chain per model.
    pub record_visits: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            steps: 50_000,
            burn_in: 0.1,
            thin: 100,
            max_nodes: DEFAULT_MAX_NODES,
            temperatures: vec![1.0],
            record_visits: false,
        }
    }
}

impl SamplerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Validation("sampler steps must be positive".into()));
        }
        if self.thin == 0 {
            return Err(Error::Validation("trace thinning must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Validation(format!(
                "burn-in fraction must be in [0, 1), got {}",
                self.burn_in
            )));
        }
        if self.max_nodes == 0 {
            return Err(Error::Validation("max_nodes must be positive".into()));
        }
        if self.temperatures.is_empty()
            || self.temperatures.iter().any(|t| !(t.is_finite() && *t > 0.0))
        {
            return Err(Error::Validation(
                "temperatures must be a non-empty list of positive numbers".into(),
            ));
        }
        if !self.temperatures.contains(&1.0) {
            return Err(Error::Validation("temperature ladder must include 1.0".into()));
        }
        Ok(())
    }

    fn burn_in_steps(&self) -> usize {
        (self.burn_in * self.steps as f64).floor() as usize
    }
}

/// One chain: its current model, cached fit, and the best model seen.
#[derive(Clone, Debug)]
pub struct ChainState {
    info: TreeInfo,
    scored: Arc<Scored>,
    pub temperature: f64,
    best: (TreeInfo, Arc<Scored>),
    proposed: u64,
    accepted: u64,
}

impl ChainState {
    pub fn new(info: TreeInfo, scored: Arc<Scored>, temperature: f64) -> Self {
        Self {
            best: (info.clone(), scored.clone()),
            info,
            scored,
            temperature,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn tree(&self) -> &ExprTree {
        self.info.tree()
    }

    pub fn key(&self) -> ModelKey {
        self.info.key()
    }

    pub fn h(&self) -> f64 {
        self.scored.h()
    }

    pub fn scored(&self) -> &Scored {
        &self.scored
    }

    pub fn best(&self) -> (&ExprTree, &Scored) {
        (self.best.0.tree(), &self.best.1)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn note_best(&mut self) {
        if self.scored.h() < self.best.1.h() {
            self.best = (self.info.clone(), self.scored.clone());
        }
    }
}

/// Metropolis–Hastings acceptance probability
/// `min(1, exp(-ΔH/T) · q_backward/q_forward)`.
pub fn acceptance_probability(delta_h: f64, q_ratio: f64, temperature: f64) -> f64 {
    if delta_h.is_nan() || !(q_ratio > 0.0) {
        return 0.0;
    }
    let log_a = -delta_h / temperature + q_ratio.ln();
    if log_a >= 0.0 {
        1.0
    } else {
        log_a.exp()
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    /// `None` for a null move (the drawn family had no valid path).
    pub kind: Option<MoveKind>,
    pub accepted: bool,
}

/// Proposes one move and accepts or rejects it.
pub fn metropolis_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    space: &MoveSpace,
    scorer: &mut Scorer<'_>,
    rng: &mut R,
) -> StepOutcome {
    state.proposed += 1;
    let Some(proposal) = space.propose(&state.info, rng) else {
        return StepOutcome { kind: None, accepted: false };
    };
    let kind = Some(proposal.kind);
    let rejected = StepOutcome { kind, accepted: false };
    if !(proposal.q_backward > 0.0) {
        return rejected;
    }
    let theta = &state.scored.fit.theta;
    let warm: Vec<f64> = proposal
        .inherited
        .iter()
        .map(|o| o.map_or(1.0, |i| theta[i]))
        .collect();
    let scored = scorer.score_keyed(proposal.tree(), proposal.info.key(), Some(&warm));
    if !scored.h().is_finite() {
        return rejected;
    }
    let p = acceptance_probability(scored.h() - state.h(), proposal.q_ratio(), state.temperature);
    if !coin(rng, p) {
        return rejected;
    }
    state.info = proposal.info;
    state.scored = scored;
    state.accepted += 1;
    state.note_best();
    StepOutcome { kind, accepted: true }
}

fn coin<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    p >= 1.0 || rng.random::<f64>() < p
}

/// One thinned trace row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub h: f64,
    pub hm: f64,
    pub k: usize,
    pub accepted: bool,
    pub model: String,
}

/// The lowest-description-length model found.
#[derive(Clone, Debug, Serialize)]
pub struct MdlModel {
    pub expression: String,
    pub canonical: String,
    #[serde(skip)]
    pub tree: ExprTree,
    pub theta: Vec<f64>,
    pub dl: DescriptionLength,
    /// `sqrt(RSS / N)` of the fit.
    pub s_y: f64,
}

impl MdlModel {
    fn new(tree: &ExprTree, scored: &Scored) -> Self {
        Self {
            expression: to_text(tree),
            canonical: canonical_key(tree),
            tree: tree.clone(),
            theta: scored.fit.theta.clone(),
            dl: scored.dl,
            s_y: scored.fit.s2.sqrt(),
        }
    }

    pub fn h(&self) -> f64 {
        self.dl.total
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VisitCount {
    pub model: String,
    pub visits: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleResult {
    pub trace: Vec<TraceRecord>,
    pub mdl: MdlModel,
    pub steps: usize,
    /// Acceptance rate of each chain, in ladder order.
    pub acceptance: Vec<f64>,
    pub swap_rate: Option<f64>,
    /// Distinct structures fitted during the run.
    pub fits: usize,
    /// Post-burn-in visits of the `T = 1` chain, most visited first.
    pub visits: Option<Vec<VisitCount>>,
}

fn record(step: usize, state: &ChainState, accepted: bool) -> TraceRecord {
    TraceRecord {
        step,
        h: state.h(),
        hm: state.scored.dl.model_complexity,
        k: state.tree().param_count(),
        accepted,
        model: to_text(state.tree()),
    }
}

/// Samples models with a single chain at `T = 1`.
pub fn sample(
    data: &Dataset,
    vocab: &OpVocabulary,
    prior: &PriorConfig,
    fit: &FitOptions,
    opts: &SamplerOptions,
    seed: u64,
) -> Result<SampleResult> {
    let opts = SamplerOptions {
        temperatures: vec![1.0],
        ..opts.clone()
    };
    tempered_sample(data, vocab, prior, fit, &opts, seed)
}

/// Parallel tempering over `opts.temperatures`; the `T = 1` chain is
/// reported. With a single temperature this is plain Metropolis–Hastings.
pub fn tempered_sample(
    data: &Dataset,
    vocab: &OpVocabulary,
    prior: &PriorConfig,
    fit: &FitOptions,
    opts: &SamplerOptions,
    seed: u64,
) -> Result<SampleResult> {
    let cache = FitCache::new();
    let mut scorer = Scorer::new(data, prior, vocab, fit, &cache, split_seed(seed, u64::MAX))?;
    run_chains(&mut scorer, vocab, opts, seed)
}

/// Runs the chains against an existing scorer, so callers can pre-seed its
/// cache (for example with the true model of a synthetic dataset).
pub fn run_chains(
    scorer: &mut Scorer<'_>,
    vocab: &OpVocabulary,
    opts: &SamplerOptions,
    seed: u64,
) -> Result<SampleResult> {
    opts.validate()?;
    let space = MoveSpace::new(vocab, scorer.data().dim(), opts.max_nodes);
    let start = space.analyze(ExprTree::constant_model());
    let start_scored = scorer.score_keyed(start.tree(), start.key(), None);
    if !start_scored.h().is_finite() {
        return Err(Error::Runtime("the constant model could not be fitted".into()));
    }
    let mut chains: Vec<ChainState> = opts
        .temperatures
        .iter()
        .map(|&t| ChainState::new(start.clone(), start_scored.clone(), t))
        .collect();
    let mut rngs: Vec<_> = (0..chains.len()).map(|i| rng(split_seed(seed, i as u64))).collect();
    let mut swap_rng = rng(split_seed(seed, 1 << 32));
    let out = opts
        .temperatures
        .iter()
        .position(|&t| t == 1.0)
        .expect("validated");
    let burn_in = opts.burn_in_steps();
    let mut visits: HashMap<ModelKey, (ExprTree, u64)> = HashMap::new();
    let mut swaps = (0u64, 0u64);

    let mut trace = vec![record(0, &chains[out], true)];
    for step in 1..=opts.steps {
        let mut accepted_out = false;
        for (i, (chain, r)) in chains.iter_mut().zip(rngs.iter_mut()).enumerate() {
            let outcome = metropolis_step(chain, &space, scorer, r);
            if i == out {
                accepted_out = outcome.accepted;
            }
        }
        if chains.len() > 1 {
            let i = swap_rng.random_range(0..chains.len() - 1);
            let (ti, tj) = (chains[i].temperature, chains[i + 1].temperature);
            let (hi, hj) = (chains[i].h(), chains[i + 1].h());
            let log_a = (1.0 / ti - 1.0 / tj) * (hi - hj);
            swaps.0 += 1;
            if log_a >= 0.0 || swap_rng.random::<f64>() < log_a.exp() {
                swaps.1 += 1;
                let (a, b) = chains.split_at_mut(i + 1);
                let (x, y) = (&mut a[i], &mut b[0]);
                std::mem::swap(&mut x.info, &mut y.info);
                std::mem::swap(&mut x.scored, &mut y.scored);
                x.note_best();
                y.note_best();
                if i == out || i + 1 == out {
                    accepted_out = true;
                }
            }
        }
        let chain = &chains[out];
        if opts.record_visits && step > burn_in {
            visits
                .entry(chain.key())
                .or_insert_with(|| (chain.tree().clone(), 0))
                .1 += 1;
        }
        if step % opts.thin == 0 || step == opts.steps {
            trace.push(record(step, chain, accepted_out));
        }
    }

    let (best_tree, best_scored) = chains[out].best();
    let visits = opts.record_visits.then(|| {
        let mut v: Vec<VisitCount> = visits
            .into_values()
            .map(|(tree, visits)| VisitCount {
                model: canonical_key(&tree),
                visits,
            })
            .collect();
        v.sort_by(|a, b| b.visits.cmp(&a.visits).then_with(|| a.model.cmp(&b.model)));
        v
    });
    Ok(SampleResult {
        trace,
        mdl: MdlModel::new(best_tree, best_scored),
        steps: opts.steps,
        acceptance: chains.iter().map(ChainState::acceptance_rate).collect(),
        swap_rate: (chains.len() > 1).then(|| swaps.1 as f64 / swaps.0.max(1) as f64),
        fits: scorer.fits(),
        visits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::description_length;

    fn linear_data() -> Dataset {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 10.0 - 2.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * v + 0.5 + 0.05 * ((i * 7919 % 13) as f64 - 6.0))
            .collect();
        Dataset::from_columns(vec![x], y).unwrap()
    }

    #[test]
    fn acceptance_rule() {
        assert_eq!(acceptance_probability(-1.0, 1.0, 1.0), 1.0);
        assert!((acceptance_probability(2f64.ln(), 1.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((acceptance_probability(2f64.ln(), 2.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((acceptance_probability(2.0 * 2f64.ln(), 1.0, 2.0) - 0.5).abs() < 1e-12);
        assert_eq!(acceptance_probability(f64::INFINITY, 1.0, 1.0), 0.0);
        assert_eq!(acceptance_probability(-1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn chain_state_matches_fresh_scoring() {
        let data = linear_data();
        let vocab = OpVocabulary::from_names(&["+", "*"]).unwrap();
        let prior = PriorConfig::default_for(&vocab);
        let fit = FitOptions::default();
        let cache = FitCache::new();
        let mut scorer = Scorer::new(&data, &prior, &vocab, &fit, &cache, 1).unwrap();
        let space = MoveSpace::new(&vocab, 1, 9);
        let start = space.analyze(ExprTree::constant_model());
        let s0 = scorer.score(start.tree());
        let mut state = ChainState::new(start, s0, 1.0);
        let mut r = rng(5);
        for _ in 0..200 {
            metropolis_step(&mut state, &space, &mut scorer, &mut r);
            assert!(state.tree().len() <= 9);
            assert!(state.tree().uses_only(&vocab));
            assert!(state.h().is_finite());
            assert_eq!(state.key(), crate::exprtree::model_key(state.tree()));
        }
        let (dl, _) = description_length(&data, state.tree(), &prior, &fit).unwrap();
        assert!((dl.total - state.h()).abs() < 1e-6 * dl.total.abs().max(1.0));
    }

    #[test]
    fn sampler_is_deterministic_and_traces() {
        let data = linear_data();
        let vocab = OpVocabulary::from_names(&["+", "*", "sin"]).unwrap();
        let prior = PriorConfig::default_for(&vocab);
        let opts = SamplerOptions {
            steps: 301,
            thin: 50,
            max_nodes: 9,
            ..Default::default()
        };
        let a = sample(&data, &vocab, &prior, &FitOptions::default(), &opts, 9).unwrap();
        let b = sample(&data, &vocab, &prior, &FitOptions::default(), &opts, 9).unwrap();
        let steps: Vec<usize> = a.trace.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 50, 100, 150, 200, 250, 300, 301]);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.mdl.canonical, b.mdl.canonical);
        let min_trace = a.trace.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
        assert!(a.mdl.h() <= min_trace + 1e-12);
        // a straight line is easy to find
        assert!(a.mdl.h() < a.trace[0].h);
    }

    #[test]
    fn tempering_reports_unit_chain() {
        let data = linear_data();
        let vocab = OpVocabulary::from_names(&["+", "*"]).unwrap();
        let prior = PriorConfig::default_for(&vocab);
        let opts = SamplerOptions {
            steps: 200,
            thin: 20,
            max_nodes: 9,
            temperatures: vec![1.0, 2.0, 4.0],
            ..Default::default()
        };
        let r = tempered_sample(&data, &vocab, &prior, &FitOptions::default(), &opts, 3).unwrap();
        assert_eq!(r.acceptance.len(), 3);
        assert!(r.swap_rate.is_some());
        let bad = SamplerOptions {
            temperatures: vec![2.0],
            ..opts
        };
        assert!(bad.validate().unwrap_err().is_validation());
    }
}
