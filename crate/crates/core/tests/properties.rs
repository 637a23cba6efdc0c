use closedform::exprtree::{
    canonical_form, canonical_key, evaluate, model_key, parse_text, slot_order, to_text, ExprTree,
    Node, Op, OpVocabulary, CATALOG,
};
use closedform::inference::{
    fit_params, predicted_dl_true, Dataset, FitCache, FitOptions, Fitter, Scorer,
};
use closedform::prior::{model_complexity, OpPrior, PriorConfig};
use closedform::sampler::{
    enumerate_structures, metropolis_step, sample, ChainState, MoveSpace, SamplerOptions,
};
use closedform::seed::rng;
use proptest::prelude::*;
use proptest::sample::select;

const DIM: usize = 3;

#[derive(Clone, Debug)]
enum Shape {
    Var(u16),
    Param(u16),
    Const(f64),
    Unary(Op, Box<Shape>),
    Binary(Op, Box<Shape>, Box<Shape>),
}

fn full_vocab() -> OpVocabulary {
    OpVocabulary::new(CATALOG).unwrap()
}

fn ops_of_arity(arity: usize) -> Vec<Op> {
    CATALOG.iter().copied().filter(|o| o.arity() == arity).collect()
}

fn shape(depth: u32, size: u32) -> impl Strategy<Value = Shape> {
    let leaf = prop_oneof![
        (1..=DIM as u16).prop_map(Shape::Var),
        // few labels, so shared slots are common
        (0u16..4).prop_map(Shape::Param),
        (-5.0f64..5.0).prop_map(Shape::Const),
    ];
    leaf.prop_recursive(depth, size, 2, |inner| {
        prop_oneof![
            (select(ops_of_arity(1)), inner.clone())
                .prop_map(|(op, a)| Shape::Unary(op, Box::new(a))),
            (select(ops_of_arity(2)), inner.clone(), inner)
                .prop_map(|(op, a, b)| Shape::Binary(op, Box::new(a), Box::new(b))),
        ]
    })
}

/// Preorder nodes; `flip` says whether to swap the arguments of each
/// commutative node in turn.
fn flatten(s: &Shape, flip: &mut dyn FnMut() -> bool, out: &mut Vec<Node>) {
    match s {
        Shape::Var(j) => out.push(Node::Var(*j)),
        Shape::Param(c) => out.push(Node::Param(*c)),
        Shape::Const(v) => out.push(Node::Const(*v)),
        Shape::Unary(op, a) => {
            out.push(Node::Op(*op));
            flatten(a, flip, out);
        }
        Shape::Binary(op, a, b) => {
            out.push(Node::Op(*op));
            let (a, b) = if op.is_commutative() && flip() { (b, a) } else { (a, b) };
            flatten(a, flip, out);
            flatten(b, flip, out);
        }
    }
}

/// Relabels parameter slots `0..k` by first appearance.
fn renumber(nodes: &mut [Node]) -> usize {
    let mut seen: Vec<u16> = Vec::new();
    for n in nodes.iter_mut() {
        if let Node::Param(c) = n {
            let new = match seen.iter().position(|s| s == c) {
                Some(i) => i,
                None => {
                    seen.push(*c);
                    seen.len() - 1
                }
            };
            *c = new as u16;
        }
    }
    seen.len()
}

fn build(s: &Shape) -> ExprTree {
    let mut nodes = Vec::new();
    flatten(s, &mut || false, &mut nodes);
    renumber(&mut nodes);
    ExprTree::from_preorder(nodes, DIM).unwrap()
}

/// The same model written differently: commutative arguments swapped per
/// `mask` and slots relabelled by `perm_seed`.
fn rewrite(s: &Shape, mask: &[bool], perm_seed: u64) -> ExprTree {
    let mut bits = mask.iter().copied().cycle();
    let mut nodes = Vec::new();
    flatten(s, &mut || bits.next().unwrap_or(false), &mut nodes);
    let k = renumber(&mut nodes);
    let mut perm: Vec<u16> = (0..k as u16).collect();
    let mut r = rng(perm_seed);
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
    for n in nodes.iter_mut() {
        if let Node::Param(c) = n {
            *c = perm[*c as usize];
        }
    }
    ExprTree::from_preorder(nodes, DIM).unwrap()
}

fn same_value(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()),
        (None, None) => true,
        _ => false,
    }
}

fn grid_data(n: usize, f: impl Fn(&[f64]) -> f64) -> Dataset {
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            vec![4.0 * t - 2.0, (7.0 * t).sin(), 1.0 + t * t]
        })
        .collect();
    let y = xs.iter().map(|x| f(x)).collect();
    Dataset::from_rows(&xs, y).unwrap()
}

fn prior_from(vocab: &OpVocabulary, hyper: &[(f64, f64)]) -> PriorConfig {
    let entries = vocab
        .ops()
        .iter()
        .zip(hyper)
        .map(|(&op, &(alpha, beta))| (op, OpPrior { alpha, beta }));
    PriorConfig::from_entries(vocab, entries).unwrap()
}

fn hyperparameters() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..5.0, 0.01f64..1.0), CATALOG.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn text_round_trip(s in shape(6, 40)) {
        let t = build(&s);
        let text = to_text(&t);
        let back = parse_text(&text, &full_vocab(), DIM).unwrap();
        prop_assert_eq!(&back, &t, "{}", text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn evaluation_is_finite_or_none(
        s in shape(6, 40),
        theta in prop::collection::vec(-10.0f64..10.0, 4),
        x in prop::collection::vec(-10.0f64..10.0, DIM),
    ) {
        let t = build(&s);
        if let Some(v) = evaluate(&t, &theta[..t.param_count()], &x) {
            prop_assert!(v.is_finite());
        }
    }

    #[test]
    fn key_ignores_slot_numbering_and_argument_order(
        s in shape(5, 30),
        mask in prop::collection::vec(any::<bool>(), 1..8),
        perm_seed in any::<u64>(),
    ) {
        let t = build(&s);
        let u = rewrite(&s, &mask, perm_seed);
        prop_assert_eq!(model_key(&t), model_key(&u));
        prop_assert_eq!(canonical_key(&t), canonical_key(&u));
        let c = canonical_form(&t);
        prop_assert_eq!(&canonical_form(&c), &c);
        prop_assert_eq!(model_key(&c), model_key(&t));
    }

    #[test]
    fn slot_order_carries_parameters_between_equivalent_trees(
        s in shape(5, 30),
        mask in prop::collection::vec(any::<bool>(), 1..8),
        perm_seed in any::<u64>(),
        shared in prop::collection::vec(-3.0f64..3.0, 4),
        x in prop::collection::vec(-2.0f64..2.0, DIM),
    ) {
        let t = build(&s);
        let u = rewrite(&s, &mask, perm_seed);
        let k = t.param_count();
        let (ot, ou) = (slot_order(&t), slot_order(&u));
        prop_assert_eq!(ot.len(), k);
        let (mut theta_t, mut theta_u) = (vec![0.0; k], vec![0.0; k]);
        for i in 0..k {
            theta_t[ot[i] as usize] = shared[i];
            theta_u[ou[i] as usize] = shared[i];
        }
        prop_assert!(same_value(evaluate(&t, &theta_t, &x), evaluate(&u, &theta_u, &x)));
    }

    #[test]
    fn op_counts_cover_internal_nodes(s in shape(6, 40)) {
        let t = build(&s);
        let total: usize = t.count_ops(&full_vocab()).values().sum();
        prop_assert_eq!(total, t.internal_count());
    }

    #[test]
    fn adding_an_operation_raises_complexity(
        s in shape(5, 30),
        op in select(CATALOG.to_vec()),
        hyper in hyperparameters(),
    ) {
        let vocab = full_vocab();
        let prior = prior_from(&vocab, &hyper);
        let t = build(&s);
        let mut nodes = vec![Node::Op(op)];
        nodes.extend_from_slice(t.nodes());
        if op.arity() == 2 {
            nodes.push(Node::Var(1));
        }
        let bigger = ExprTree::from_preorder(nodes, DIM).unwrap();
        let before = model_complexity(&t, &prior).unwrap().value();
        let after = model_complexity(&bigger, &prior).unwrap().value();
        prop_assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn linear_complexity_scales_with_alpha(
        s in shape(5, 30),
        alphas in prop::collection::vec(0.01f64..5.0, CATALOG.len()),
    ) {
        let vocab = full_vocab();
        let once: Vec<_> = alphas.iter().map(|&a| (a, 0.0)).collect();
        let twice: Vec<_> = alphas.iter().map(|&a| (2.0 * a, 0.0)).collect();
        let t = build(&s);
        let h1 = model_complexity(&t, &prior_from(&vocab, &once)).unwrap().value();
        let h2 = model_complexity(&t, &prior_from(&vocab, &twice)).unwrap().value();
        prop_assert!((h2 - 2.0 * h1).abs() <= 1e-12 * h2.abs().max(1.0));
        prop_assert_eq!(h1 == 0.0, t.internal_count() == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn op_free_models_minimize_complexity(hyper in hyperparameters()) {
        let vocab = OpVocabulary::from_names(&["+", "*", "sin"]).unwrap();
        let prior = prior_from(&vocab, &hyper);
        let trees = enumerate_structures(&vocab, 2, 5, 100_000).unwrap();
        let hm: Vec<f64> = trees
            .iter()
            .map(|t| model_complexity(t, &prior).unwrap().value())
            .collect();
        let min = hm.iter().cloned().fold(f64::INFINITY, f64::min);
        for (t, h) in trees.iter().zip(&hm) {
            prop_assert_eq!(*h == min, t.internal_count() == 0, "{}", to_text(t));
        }
    }

    #[test]
    fn fitting_never_degrades_the_start(
        s in shape(3, 10),
        warm in prop::collection::vec(-3.0f64..3.0, 4),
        seed in any::<u64>(),
    ) {
        let data = grid_data(24, |x| 1.5 * x[0] - (2.0 * x[1]).cos() + 0.3 * x[2]);
        let t = build(&s);
        let warm = &warm[..t.param_count()];
        let mut fitter = Fitter::new(FitOptions::default());
        let start = fitter.rss(&t, warm, &data);
        let fit = fitter.fit(&t, &data, Some(warm), seed);
        if start.is_finite() {
            prop_assert!(fit.rss <= start * (1.0 + 1e-12), "{} > {}", fit.rss, start);
        }
    }

    #[test]
    fn description_length_ignores_slot_numbering(
        s in shape(3, 10),
        mask in prop::collection::vec(any::<bool>(), 1..8),
        perm_seed in any::<u64>(),
    ) {
        let data = grid_data(24, |x| x[0] * x[0] + (x[1] * x[2]).sin());
        let vocab = full_vocab();
        let prior = PriorConfig::default_for(&vocab);
        let opts = FitOptions::default();
        let (ca, cb) = (FitCache::new(), FitCache::new());
        let mut a = Scorer::new(&data, &prior, &vocab, &opts, &ca, 9).unwrap();
        let mut b = Scorer::new(&data, &prior, &vocab, &opts, &cb, 9).unwrap();
        let t = build(&s);
        let u = rewrite(&s, &mask, perm_seed);
        let (ha, hb) = (a.score(&t).h(), b.score(&u).h());
        prop_assert!(ha == hb || (ha.is_nan() && hb.is_nan()), "{ha} vs {hb}");
    }

    #[test]
    fn description_length_matches_the_closed_form(s in shape(3, 10)) {
        let data = grid_data(30, |x| 2.0 * x[0] + x[1] * x[2]);
        let vocab = full_vocab();
        let prior = PriorConfig::default_for(&vocab);
        let cache = FitCache::new();
        let mut scorer = Scorer::new(&data, &prior, &vocab, &FitOptions::default(), &cache, 1).unwrap();
        let t = build(&s);
        let scored = scorer.score(&t);
        if scored.fit.s2.is_finite() && scored.fit.s2 > 1e-12 {
            let hm = model_complexity(&t, &prior).unwrap().value();
            let expect = predicted_dl_true(data.len(), t.param_count(), hm, scored.fit.s2).unwrap();
            prop_assert!((scored.h() - expect).abs() < 1e-6, "{} vs {}", scored.h(), expect);
        }
    }

    #[test]
    fn constant_model_is_mean_and_biased_variance(
        y in prop::collection::vec(-100.0f64..100.0, 2..60),
        offset in -1e3f64..1e3,
    ) {
        let y: Vec<f64> = y.iter().map(|v| v + offset).collect();
        let n = y.len() as f64;
        let xs: Vec<Vec<f64>> = (0..y.len()).map(|i| vec![i as f64]).collect();
        let data = Dataset::from_rows(&xs, y.clone()).unwrap();
        let fit = fit_params(&ExprTree::constant_model(), &data, &FitOptions::default(), 3);
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((fit.theta[0] - mean).abs() <= 1e-10 * mean.abs().max(var.sqrt()).max(1e-300));
        prop_assert!((fit.s2 - var).abs() <= 1e-10 * var.max(1e-300));
    }

    #[test]
    fn best_so_far_never_increases(seed in any::<u64>()) {
        let data = grid_data(30, |x| 2.0 * x[0] + (3.0 * x[1]).sin());
        let vocab = OpVocabulary::from_names(&["+", "-", "*", "sin"]).unwrap();
        let prior = PriorConfig::default_for(&vocab);
        let cache = FitCache::new();
        let mut scorer = Scorer::new(&data, &prior, &vocab, &FitOptions::default(), &cache, seed).unwrap();
        let space = MoveSpace::new(&vocab, DIM, 20);
        let start = space.analyze(ExprTree::constant_model());
        let scored = scorer.score(start.tree());
        let mut state = ChainState::new(start, scored, 1.0);
        let mut r = rng(seed);
        let mut best = state.best().1.h();
        for _ in 0..300 {
            metropolis_step(&mut state, &space, &mut scorer, &mut r);
            let now = state.best().1.h();
            prop_assert!(now <= best);
            prop_assert!(now <= state.h());
            best = now;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>()) {
        let data = grid_data(20, |x| x[0] * x[2]);
        let vocab = OpVocabulary::from_names(&["+", "*", "exp"]).unwrap();
        let prior = PriorConfig::default_for(&vocab);
        let opts = SamplerOptions { steps: 400, thin: 10, max_nodes: 15, ..Default::default() };
        let run = || sample(&data, &vocab, &prior, &FitOptions::default(), &opts, seed).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(&a.mdl.expression, &b.mdl.expression);
        prop_assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn tiny_grammar_proposals_are_reversible() {
    let vocab = OpVocabulary::from_names(&["+", "*"]).unwrap();
    let space = MoveSpace::new(&vocab, 1, 5);
    let trees = enumerate_structures(&vocab, 1, 5, 1000).unwrap();
    let mut pairs = 0;
    for t in trees {
        let from = space.analyze(t);
        for (to, q) in space.neighbours(&from) {
            assert!(q > 0.0);
            assert!(to.tree().len() <= 5);
            assert!(
                space.proposal_probability(&to, &from) > 0.0,
                "{} -> {} has no reverse",
                to_text(from.tree()),
                to_text(to.tree())
            );
            pairs += 1;
        }
    }
    assert!(pairs > 100, "{pairs}");
}
