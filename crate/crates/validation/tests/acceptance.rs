//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Reference values are recomputed here from their closed forms
//! rather than taken from the library under test.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use closedform::exprtree::{ExprTree, OpVocabulary};
use closedform::inference::{description_length, Dataset, FitOptions};
use closedform::phase::{
    benchmarks, learnability_curve_with, transition_noise_approx, transition_noise_exact,
    SweepCell, SweepResult,
};
use closedform::prior::PriorConfig;
use closedform::sampler::{enumerate_models, sample, SamplerOptions};
use closedform_validation::{relative_error, total_variation, Protocol, Scoreboard};
use rand::Rng;

fn main() {
    let protocol = Protocol::from_env();
    println!(
        "protocol: {} ({} replicas, {} steps, ladder {:?})",
        if protocol.full { "full" } else { "reduced" },
        protocol.replicas,
        protocol.steps,
        protocol.temperatures
    );
    let mut board = Scoreboard::default();

    formula_oracles(&mut board);
    sampler_exactness(&mut board);
    let clock = Instant::now();
    let sweep = run_sweep(&protocol);
    println!("sweep finished in {:.0?}", clock.elapsed());
    learnable_phase(&mut board, &sweep);
    unlearnable_phase(&mut board, &sweep);
    transition_bound(&mut board, &sweep);
    prediction_optimality(&mut board, &sweep);
    description_length_tracking(&mut board, &sweep);
    determinism(&mut board);

    let failed = board.failures();
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: {} failing: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}

// s×² = ⟨δ²⟩ / ((p(m^c)/p(m*))^(2/N) N^((k-1)/N) - 1), written with powf
fn exact_oracle(delta2: f64, delta_m: f64, k: usize, n: usize) -> f64 {
    let n = n as f64;
    let ratio = delta_m.exp();
    (delta2 / (ratio.powf(2.0 / n) * n.powf((k as f64 - 1.0) / n) - 1.0)).sqrt()
}

fn approx_oracle(delta2: f64, delta_m: f64, k: usize, n: usize) -> f64 {
    let n = n as f64;
    (delta2 * n / (2.0 * delta_m + (k as f64 - 1.0) * n.ln())).sqrt()
}

fn formula_oracles(board: &mut Scoreboard) {
    // constant model on {1, 3}: mean 2, biased variance 1, k = 1, N = 2
    let y = [1.0, 3.0];
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let s2 = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let k = 1.0;
    let oracle = n / 2.0 * ((2.0 * PI * s2).ln() + 1.0) + (k + 1.0) / 2.0 * n.ln();
    let data = Dataset::from_columns(vec![vec![0.0, 1.0]], y.to_vec()).unwrap();
    let vocab = OpVocabulary::from_names(&["+", "*"]).unwrap();
    let prior = PriorConfig::default_for(&vocab);
    let (dl, _) =
        description_length(&data, &ExprTree::constant_model(), &prior, &FitOptions::default())
            .unwrap();
    let ok_dl = (dl.total - 3.5310).abs() <= 1e-4 && (dl.total - oracle).abs() <= 1e-9;

    let exact = transition_noise_exact(4.0, 2.0, 3, 100).unwrap();
    let approx = transition_noise_approx(4.0, 2.0, 3, 100).unwrap();
    let ok_ref = relative_error(exact, 5.322) <= 1e-3
        && relative_error(approx, 5.503) <= 1e-3
        && relative_error(exact, exact_oracle(4.0, 2.0, 3, 100)) <= 1e-9
        && relative_error(approx, approx_oracle(4.0, 2.0, 3, 100)) <= 1e-12;

    let mut worst = (0.0, 0, 0.0, 0);
    for n in [100, 200, 500, 1_000, 2_000, 5_000, 10_000] {
        for dm in [0.5, 1.0, 2.0, 3.0, 4.0, 5.0] {
            for k in 2..=6 {
                let e = transition_noise_exact(1.0, dm, k, n).unwrap();
                let a = transition_noise_approx(1.0, dm, k, n).unwrap();
                let err = relative_error(a, e);
                if err > worst.0 {
                    worst = (err, n, dm, k);
                }
            }
        }
    }
    let ok_grid = worst.0 <= 0.05;

    board.record(
        "1 formula oracles",
        ok_dl && ok_ref && ok_grid,
        &format!(
            "H(constant | 1,3) = {:.5} (oracle {oracle:.5}); s× exact {exact:.4}, approx {approx:.4}; \
             worst approx error {:.2}% at N={}, Δ_M={}, k={} (limit 5%)",
            dl.total,
            100.0 * worst.0,
            worst.1,
            worst.2,
            worst.3
        ),
    );
}

fn sampler_exactness(board: &mut Scoreboard) {
    let vocab = OpVocabulary::from_names(&["+", "*"]).unwrap();
    let prior = PriorConfig::default_for(&vocab);
    let fit = FitOptions::default();
    let opts = SamplerOptions {
        steps: 1_000_000,
        burn_in: 0.1,
        thin: 1_000_000,
        max_nodes: 5,
        record_visits: true,
        ..SamplerOptions::default()
    };
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for ds in 0..5u64 {
        let mut r = closedform::seed::rng(1_000 + ds);
        let (a, b, c) = (r.random_range(-2.0..2.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..15).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| a + b * v + c * v * v + r.random_range(-0.5..0.5))
            .collect();
        let data = Dataset::from_columns(vec![x], y).unwrap();
        let exact = enumerate_models(&data, &vocab, &prior, &fit, 5, 100_000, ds).unwrap();
        let p: HashMap<String, f64> = exact.iter().map(|m| (m.model.clone(), m.posterior)).collect();
        let visits = sample(&data, &vocab, &prior, &fit, &opts, ds).unwrap().visits.unwrap();
        let total = visits.iter().map(|v| v.visits).sum::<u64>() as f64;
        let q: HashMap<String, f64> = visits
            .iter()
            .map(|v| (v.model.clone(), v.visits as f64 / total))
            .collect();
        let tv = total_variation(&p, &q);
        worst = worst.max(tv);
        details.push(format!("{tv:.4}"));
    }
    board.record(
        "2 sampler exactness",
        worst < 0.05,
        &format!("TV per dataset [{}] (limit 0.05)", details.join(", ")),
    );
}

fn run_sweep(protocol: &Protocol) -> SweepResult {
    let planted = [benchmarks::model_a(), benchmarks::model_b()];
    let result = learnability_curve_with(
        &planted,
        &protocol.sweep(),
        &protocol.settings(),
        20_240_601,
        &|_| {},
    )
    .unwrap();
    println!("model  N    s/s×    rho   rmse/s  H(MDL)     H(true)    Eq.7       Eq.8");
    for c in &result.cells {
        println!(
            "{:<6} {:<4} {:<7.3} {:<5.2} {:<7.3} {:<10.2} {:<10.2} {:<10.2} {:<10.2}",
            c.model_id,
            c.n,
            multiple(c),
            c.rho,
            c.mean_rmse_over_s,
            c.mean_h_mdl,
            c.mean_h_true,
            c.h_true_predicted,
            c.h_trivial_predicted
        );
    }
    result
}

fn multiple(c: &SweepCell) -> f64 {
    c.s_eps / c.s_cross_exact
}

fn cell_at<'a>(sweep: &'a SweepResult, id: &'a str, n: usize, m: f64) -> &'a SweepCell {
    sweep
        .cells_for(id, n)
        .find(|c| relative_error(multiple(c), m) < 1e-9)
        .expect("grid contains the level")
}

const MODELS: [&str; 2] = ["A", "B"];

fn learnable_phase(board: &mut Scoreboard, sweep: &SweepResult) {
    let rhos: Vec<f64> = MODELS.iter().map(|id| cell_at(sweep, id, 400, 1.0 / 30.0).rho).collect();
    board.record(
        "3 learnable phase",
        rhos.iter().all(|&r| r >= 0.9),
        &format!("N=400, s = s×/30: rho A {:.2}, B {:.2} (need >= 0.9)", rhos[0], rhos[1]),
    );
}

fn unlearnable_phase(board: &mut Scoreboard, sweep: &SweepResult) {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in MODELS {
        let c = cell_at(sweep, id, 400, 5.0);
        let err = relative_error(c.mean_h_mdl, c.h_trivial_predicted);
        ok &= c.rho <= 0.1 && err <= 0.05;
        parts.push(format!("{id}: rho {:.2}, H off trivial by {:.2}%", c.rho, 100.0 * err));
    }
    board.record(
        "4 unlearnable phase",
        ok,
        &format!("N=400, s = 5 s×: {} (need rho <= 0.1, 5%)", parts.join("; ")),
    );
}

fn transition_bound(board: &mut Scoreboard, sweep: &SweepResult) {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in MODELS {
        let mut previous = 0.0;
        let mut ratios = Vec::new();
        for &n in &[25, 100, 400] {
            let s_cross = sweep.cells_for(id, n).next().unwrap().s_cross_exact;
            match sweep.crossing(id, n) {
                Some(s) => {
                    let ratio = s / s_cross;
                    ok &= (0.3..=1.1).contains(&ratio) && s > previous;
                    previous = s;
                    ratios.push(format!("{ratio:.2}"));
                }
                None => {
                    ok = false;
                    ratios.push("none".into());
                }
            }
        }
        parts.push(format!("{id} [{}]", ratios.join(", ")));
    }
    board.record(
        "5 transition bound",
        ok,
        &format!("crossing / s× at N = 25, 100, 400: {} (need [0.3, 1.1], rising in N)", parts.join("; ")),
    );
}

fn prediction_optimality(board: &mut Scoreboard, sweep: &SweepResult) {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in MODELS {
        let cells: Vec<&SweepCell> = sweep.cells_for(id, 100).collect();
        let tails: Vec<String> = cells
            .iter()
            .filter(|c| multiple(c) <= 0.25 || multiple(c) >= 4.0)
            .map(|c| {
                ok &= (0.9..=1.3).contains(&c.mean_rmse_over_s);
                format!("{:.2}", c.mean_rmse_over_s)
            })
            .collect();
        let peak = cells
            .iter()
            .max_by(|a, b| a.mean_rmse_over_s.total_cmp(&b.mean_rmse_over_s))
            .unwrap();
        ok &= (1.0 / 3.0..=3.0).contains(&multiple(peak));
        parts.push(format!(
            "{id}: tails [{}], peak {:.2} at {:.2} s×",
            tails.join(", "),
            peak.mean_rmse_over_s,
            multiple(peak)
        ));
    }
    board.record(
        "6 prediction optimality",
        ok,
        &format!("N=100, RMSE/s: {} (need [0.9, 1.3], peak within 3x)", parts.join("; ")),
    );
}

fn description_length_tracking(board: &mut Scoreboard, sweep: &SweepResult) {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in MODELS {
        let mut worst_tail: f64 = 0.0;
        let mut worst_excess = f64::NEG_INFINITY;
        for c in sweep.cells_for(id, 100) {
            let bound = c.h_true_predicted.min(c.h_trivial_predicted);
            let scale = bound.abs();
            if multiple(c) <= 0.25 || multiple(c) >= 4.0 {
                worst_tail = worst_tail.max((c.mean_h_mdl - bound).abs() / scale);
            }
            worst_excess = worst_excess.max((c.mean_h_mdl - bound) / scale);
        }
        ok &= worst_tail <= 0.05 && worst_excess <= 0.02;
        parts.push(format!(
            "{id}: tails off by {:.2}%, worst excess {:.2}%",
            100.0 * worst_tail,
            100.0 * worst_excess
        ));
    }
    board.record(
        "7 description length tracking",
        ok,
        &format!("N=100 vs min(Eq.7, Eq.8): {} (need 5%, 2%)", parts.join("; ")),
    );
}

fn determinism(board: &mut Scoreboard) {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{
  "seed": 77,
  "dimension": 2,
  "vocabulary": ["+", "-", "*", "exp", "log", "sin", "cos", "sqrt", "abs"],
  "planted": [
    {{"id": "A", "expression": "{}", "theta": {:?}, "domain": [{:?}, {:?}]}},
    {{"id": "B", "expression": "{}", "theta": {:?}, "domain": [{:?}, {:?}]}}
  ],
  "sampler": {{"steps": 400, "thin": 100, "max_nodes": 15, "temperatures": [1.0, 4.0]}},
  "sweep": {{"n_values": [25, 50], "replicas": 2, "n_mc": 5000,
            "noise": {{"multiples": {{"values": [0.25, 1.0, 4.0]}}}}}}
}}"#,
        benchmarks::MODEL_A,
        benchmarks::THETA_A,
        benchmarks::DOMAIN_A,
        benchmarks::DOMAIN_A,
        benchmarks::MODEL_B,
        benchmarks::THETA_B,
        benchmarks::DOMAIN_B,
        benchmarks::DOMAIN_B,
    );
    let path = dir.path().join("sweep.json");
    std::fs::write(&path, config).unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let code = closedform_cli::run_from_args([
            "closedform",
            "sweep",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let read = |f: &str| std::fs::read(out.join(f)).unwrap_or_default();
        (code, read("trials.csv"), read("summary.csv"))
    };
    let first = run("first");
    let second = run("second");
    let ok = first.0 == 0 && !first.1.is_empty() && !first.2.is_empty() && first == second;
    board.record(
        "8 determinism",
        ok,
        &format!(
            "two sweeps: exit {} / {}, trials.csv {} bytes, summary.csv {} bytes, identical: {}",
            first.0,
            second.0,
            first.1.len(),
            first.2.len(),
            first == second
        ),
    );
}
