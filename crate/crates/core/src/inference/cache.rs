use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::dataset::Dataset;
use super::description::DescriptionLength;
use super::fit::{FitOptions, FitResult, Fitter};
use crate::error::{Error, Result};
use crate::exprtree::{fitting_form, mix, model_key, slot_order, ExprTree, ModelKey, OpVocabulary, N_OPS};
use crate::prior::PriorConfig;

/// A fitted model structure and its description length.
#[derive(Clone, Debug)]
pub struct Scored {
    pub fit: FitResult,
    pub dl: DescriptionLength,
}

impl Scored {
    pub fn h(&self) -> f64 {
        self.dl.total
    }
}

/// Fit results keyed by canonical model, with parameters stored in
/// [`slot_order`]. Get-or-insert keeps the first value; racing duplicate
/// fits are harmless.
#[derive(Default)]
pub struct FitCache {
    map: RwLock<HashMap<ModelKey, Arc<Scored>>>,
}

impl FitCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: ModelKey) -> Option<Arc<Scored>> {
        self.map.read().expect("fit cache poisoned").get(&key).cloned()
    }

    pub fn insert(&self, key: ModelKey, value: Scored) -> Arc<Scored> {
        let mut map = self.map.write().expect("fit cache poisoned");
        map.entry(key).or_insert_with(|| Arc::new(value)).clone()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("fit cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn is_identity(order: &[u16]) -> bool {
    order.iter().enumerate().all(|(i, s)| *s as usize == i)
}

fn to_canonical(mut scored: Scored, order: &[u16]) -> Scored {
    if !is_identity(order) {
        let theta = &scored.fit.theta;
        scored.fit.theta = order.iter().map(|s| theta[*s as usize]).collect();
    }
    scored
}

fn from_canonical(scored: Arc<Scored>, order: &[u16]) -> Arc<Scored> {
    if is_identity(order) {
        return scored;
    }
    let mut out = (*scored).clone();
    for (i, s) in order.iter().enumerate() {
        out.fit.theta[*s as usize] = scored.fit.theta[i];
    }
    Arc::new(out)
}

/// Scores trees against one dataset, going through a [`FitCache`].
///
/// Each structure is fitted with random starts seeded from
/// `fit_seed` and its canonical key, so the result does not depend on which
/// chain asks first (the warm start aside).
pub struct Scorer<'a> {
    data: &'a Dataset,
    prior: &'a PriorConfig,
    cache: &'a FitCache,
    fitter: Fitter,
    fit_seed: u64,
    fits: usize,
}

impl<'a> Scorer<'a> {
    pub fn new(
        data: &'a Dataset,
        prior: &'a PriorConfig,
        vocab: &OpVocabulary,
        opts: &FitOptions,
        cache: &'a FitCache,
        fit_seed: u64,
    ) -> Result<Self> {
        for op in vocab.ops() {
            if prior.get(*op).is_none() {
                return Err(Error::Validation(format!(
                    "prior has no entry for vocabulary operation `{op}`"
                )));
            }
        }
        Ok(Self {
            data,
            prior,
            cache,
            fitter: Fitter::new(opts.clone()),
            fit_seed,
            fits: 0,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn prior(&self) -> &PriorConfig {
        self.prior
    }

    /// Number of fits this scorer actually ran (cache misses).
    pub fn fits(&self) -> usize {
        self.fits
    }

    pub fn complexity(&self, counts: &[u32; N_OPS]) -> f64 {
        self.prior
            .complexity_from_counts(counts)
            .expect("vocabulary covered by prior")
    }

    pub fn score(&mut self, tree: &ExprTree) -> Arc<Scored> {
        let key = model_key(tree);
        self.score_keyed(tree, key, None)
    }

    /// Scores with a precomputed key and an optional warm start.
    pub fn score_keyed(
        &mut self,
        tree: &ExprTree,
        key: ModelKey,
        warm: Option<&[f64]>,
    ) -> Arc<Scored> {
        if let Some(hit) = self.cache.get(key) {
            return from_canonical(hit, &slot_order(tree));
        }
        // fit a fixed representative so the result cannot depend on how the
        // caller happened to number or order things
        let (canon, order) = fitting_form(tree);
        let warm: Option<Vec<f64>> = warm.map(|w| order.iter().map(|s| w[*s as usize]).collect());
        let scored = self.fit_uncached(&canon, key, warm.as_deref());
        from_canonical(self.cache.insert(key, scored), &order)
    }

    fn fit_uncached(&mut self, tree: &ExprTree, key: ModelKey, warm: Option<&[f64]>) -> Scored {
        self.fits += 1;
        let hm = self.complexity(&tree.op_counts_dense());
        let fit = self
            .fitter
            .fit(tree, self.data, warm, mix(self.fit_seed ^ key.0));
        let dl = DescriptionLength::from_fit(
            self.data.len(),
            &fit,
            hm,
            self.fitter.options().variance_floor,
        );
        Scored { fit, dl }
    }

    /// Stores an externally computed score (for example, the true model
    /// fitted from its known parameters).
    pub fn seed_cache(&self, tree: &ExprTree, scored: Scored) -> Arc<Scored> {
        let order = slot_order(tree);
        from_canonical(self.cache.insert(model_key(tree), to_canonical(scored, &order)), &order)
    }

    pub fn fitter_mut(&mut self) -> &mut Fitter {
        &mut self.fitter
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::{evaluate, parse_text};

    #[test]
    fn equivalent_trees_get_parameters_in_their_own_order() {
        let vocab = OpVocabulary::default();
        let prior = PriorConfig::default_for(&vocab);
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![-2.0 + 0.1 * i as f64, 1.5 - 0.07 * i as f64]).collect();
        let y = xs.iter().map(|x| 3.0 * x[0].sin() + 0.5 * x[1] * x[1]).collect();
        let data = Dataset::from_rows(&xs, y).unwrap();
        let cache = FitCache::new();
        let mut scorer = Scorer::new(&data, &prior, &vocab, &FitOptions::default(), &cache, 1).unwrap();
        let a = parse_text("((_c0 * sin(x1)) + (_c1 * (x2 * x2)))", &vocab, 2).unwrap();
        let b = parse_text("(((x2 * x2) * _c0) + (_c1 * sin(x1)))", &vocab, 2).unwrap();
        let sa = scorer.score(&a);
        let sb = scorer.score(&b);
        assert_eq!(scorer.fits(), 1);
        assert_eq!(sa.h(), sb.h());
        assert!((sa.fit.theta[0] - 3.0).abs() < 1e-6 && (sb.fit.theta[1] - 3.0).abs() < 1e-6);
        for x in &xs {
            let va = evaluate(&a, &sa.fit.theta, x).unwrap();
            let vb = evaluate(&b, &sb.fit.theta, x).unwrap();
            assert!((va - vb).abs() < 1e-9);
        }
    }
}
