use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use closedform::config::RunConfig;
use closedform::exprtree::{evaluate, parse_text, OpVocabulary};
use closedform::inference::{fmt_f64, Dataset};
use closedform::phase::{
    estimate_delta2, learnability_curve_with, rmse, scaled_collapse, transition_noise_approx,
    transition_noise_exact, write_summary_csv, write_sweep_dat, write_trials_csv, TransitionPoint,
};
use closedform::sampler::{enumerate_models, tempered_sample, write_trace_csv};
use closedform::seed::{label_index, split_path};
use serde::{Deserialize, Serialize};

use crate::InvalidInput;

fn output_dir(cfg: Option<&RunConfig>, out: Option<&Path>) -> anyhow::Result<PathBuf> {
    let dir = match (out, cfg.and_then(|c| c.output_dir.as_ref().map(|d| c.resolve(d)))) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => d,
        (None, None) => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_data(path: &Path, dim: usize) -> anyhow::Result<Dataset> {
    let data = Dataset::read_csv(path).map_err(|e| InvalidInput(format!("{}: {e}", path.display())))?;
    if data.dim() != dim {
        return Err(InvalidInput(format!(
            "{} has {} input columns but the config declares dimension {dim}",
            path.display(),
            data.dim()
        ))
        .into());
    }
    Ok(data)
}

fn data_path(cfg: &RunConfig, flag: Option<&Path>) -> anyhow::Result<PathBuf> {
    match (flag, &cfg.data) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(cfg.resolve(p)),
        (None, None) => Err(InvalidInput("no data file: pass --data or set `data` in the config".into()).into()),
    }
}

/// What `discover` writes and `predict` reads.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub expression: String,
    #[serde(default)]
    pub canonical: Option<String>,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub vocabulary: Option<OpVocabulary>,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub description_length: Option<closedform::inference::DescriptionLength>,
    #[serde(default)]
    pub s_y: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub acceptance: Option<Vec<f64>>,
    #[serde(default)]
    pub fits: Option<usize>,
}

pub fn discover(cfg: &RunConfig, data: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let data = read_data(&data_path(cfg, data)?, cfg.dimension)?;
    let prior = cfg.prior_config()?;
    let result = tempered_sample(&data, &cfg.vocabulary, &prior, &cfg.fit, &cfg.sampler, cfg.seed)?;
    let dir = output_dir(Some(cfg), out)?;

    let mut trace = create(&dir, "trace.csv")?;
    write_trace_csv(&result.trace, &mut trace)?;
    trace.flush()?;

    let mdl = &result.mdl;
    let report = Report {
        expression: mdl.expression.clone(),
        canonical: Some(mdl.canonical.clone()),
        theta: Some(mdl.theta.clone()),
        vocabulary: Some(cfg.vocabulary.clone()),
        dimension: Some(cfg.dimension),
        n: Some(data.len()),
        description_length: Some(mdl.dl),
        s_y: Some(mdl.s_y),
        seed: Some(cfg.seed),
        steps: Some(result.steps),
        acceptance: Some(result.acceptance.clone()),
        fits: Some(result.fits),
    };
    let mut f = create(&dir, "report.json")?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    writeln!(f)?;
    f.flush()?;

    println!("MDL model: {}", mdl.expression);
    println!("theta: [{}]", mdl.theta.iter().map(|t| fmt_f64(*t)).collect::<Vec<_>>().join(", "));
    println!(
        "H = {} (B/2 = {}, H_M = {}), s_y = {}",
        fmt_f64(mdl.dl.total),
        fmt_f64(mdl.dl.half_bic()),
        fmt_f64(mdl.dl.model_complexity),
        fmt_f64(mdl.s_y)
    );
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: Option<&Path>, plot: bool) -> anyhow::Result<()> {
    let planted = cfg.planted_models()?;
    if planted.is_empty() {
        return Err(InvalidInput("sweep needs at least one planted model".into()).into());
    }
    let settings = cfg.trial_settings()?;
    let dir = output_dir(Some(cfg), out)?;

    let total = planted.len() * cfg.sweep.n_values.len() * cfg.sweep.replicas * cfg.sweep.noise.len();
    let done = AtomicUsize::new(0);
    let report = |_: &closedform::phase::TrialRecord| {
        let d = done.fetch_add(1, Ordering::Relaxed) + 1;
        if d.is_multiple_of((total / 20).max(1)) || d == total {
            eprintln!("{d}/{total} trials");
        }
    };
    let result = learnability_curve_with(&planted, &cfg.sweep, &settings, cfg.seed, &report)?;

    let mut f = create(&dir, "trials.csv")?;
    write_trials_csv(&result.trials, &mut f)?;
    f.flush()?;
    let mut f = create(&dir, "summary.csv")?;
    write_summary_csv(&result, &mut f)?;
    f.flush()?;
    if plot {
        let mut f = create(&dir, "sweep.dat")?;
        write_sweep_dat(&result, &mut f)?;
        f.flush()?;
        let mut f = create(&dir, "collapse.dat")?;
        writeln!(f, "# model N scaled_noise rho")?;
        for p in scaled_collapse(&result) {
            writeln!(f, "{} {} {} {}", p.model_id, p.n, fmt_f64(p.scaled_noise), fmt_f64(p.rho))?;
        }
        f.flush()?;
    }

    for t in &result.transitions {
        let crossing = result
            .crossing(&t.model_id, t.n)
            .map_or("none".to_string(), |c| format!("{c:.4}"));
        println!(
            "{} N={}: s_cross exact {:.4}, empirical rho=1/2 crossing {}",
            t.model_id, t.n, t.s_cross_exact, crossing
        );
    }
    Ok(())
}

struct TransitionRow {
    model_id: String,
    n: usize,
    delta2: f64,
    delta2_se: f64,
    delta_m: f64,
    k: usize,
    exact: f64,
    approx: Option<f64>,
}

fn transition_rows(cfg: &RunConfig) -> anyhow::Result<Vec<TransitionRow>> {
    let ns = cfg.transition_n_values();
    if let Some(inp) = &cfg.transition.inputs {
        return ns
            .iter()
            .map(|&n| {
                Ok(TransitionRow {
                    model_id: "inputs".into(),
                    n,
                    delta2: inp.delta2,
                    delta2_se: 0.0,
                    delta_m: inp.delta_m,
                    k: inp.k,
                    exact: transition_noise_exact(inp.delta2, inp.delta_m, inp.k, n)?,
                    approx: transition_noise_approx(inp.delta2, inp.delta_m, inp.k, n).ok(),
                })
            })
            .collect();
    }
    let planted = cfg.planted_models()?;
    if planted.is_empty() {
        return Err(InvalidInput("transition needs planted models or `transition.inputs`".into()).into());
    }
    let prior = cfg.prior_config()?;
    let mut rows = Vec::new();
    for p in &planted {
        // same stream as the sweep, so both report identical values
        let delta2 = estimate_delta2(p, cfg.sweep.n_mc, split_path(cfg.seed, &[label_index(&p.id), u64::MAX]))?;
        for &n in ns {
            let t = TransitionPoint::compute(p, &prior, delta2, n)?;
            rows.push(TransitionRow {
                model_id: t.model_id,
                n,
                delta2: delta2.value,
                delta2_se: delta2.std_error,
                delta_m: t.delta_m,
                k: t.k,
                exact: t.s_cross_exact,
                approx: Some(t.s_cross_approx).filter(|a| a.is_finite()),
            });
        }
    }
    Ok(rows)
}

pub fn transition(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let rows = transition_rows(cfg)?;
    let mut text = String::from(
        "model_id,N,delta2,delta2_std_error,delta_m,k,s_eps_cross_exact,s_eps_cross_approx,relative_difference\n",
    );
    for r in &rows {
        let (exact, rel) = if r.exact.is_infinite() {
            ("infinite (trivial true model)".to_string(), "undefined".to_string())
        } else {
            let rel = r.approx.map_or("undefined".into(), |a| fmt_f64((a - r.exact) / r.exact));
            (fmt_f64(r.exact), rel)
        };
        let approx = r.approx.map_or("undefined".into(), fmt_f64);
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.model_id,
            r.n,
            fmt_f64(r.delta2),
            fmt_f64(r.delta2_se),
            fmt_f64(r.delta_m),
            r.k,
            exact,
            approx,
            rel
        ));
    }
    print!("{text}");
    if out.is_some() || cfg.output_dir.is_some() {
        let dir = output_dir(Some(cfg), out)?;
        std::fs::write(dir.join("transition.csv"), &text)?;
    }
    Ok(())
}

pub fn enumerate(cfg: &RunConfig, data: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let data = read_data(&data_path(cfg, data)?, cfg.dimension)?;
    let prior = cfg.prior_config()?;
    let models = enumerate_models(
        &data,
        &cfg.vocabulary,
        &prior,
        &cfg.fit,
        cfg.enumerate.max_nodes,
        cfg.enumerate.limit,
        cfg.seed,
    )?;
    let dir = output_dir(Some(cfg), out)?;
    let mut f = create(&dir, "enumeration.csv")?;
    writeln!(f, "rank,model,H,half_bic,H_M,posterior,mdl,theta")?;
    for (i, m) in models.iter().enumerate() {
        let theta: Vec<String> = m.theta.iter().map(|t| fmt_f64(*t)).collect();
        writeln!(
            f,
            "{},\"{}\",{},{},{},{},{},\"{}\"",
            i + 1,
            m.model,
            fmt_f64(m.h()),
            fmt_f64(m.dl.half_bic()),
            fmt_f64(m.dl.model_complexity),
            fmt_f64(m.posterior),
            i == 0,
            theta.join(" ")
        )?;
    }
    f.flush()?;
    if let Some(best) = models.first() {
        println!("{} models; MDL model {} with H = {}", models.len(), best.model, fmt_f64(best.h()));
    }
    Ok(())
}

pub fn predict(report_path: &Path, data: &Path, out: Option<&Path>, s_eps: Option<f64>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(report_path)
        .map_err(|e| InvalidInput(format!("cannot read report {}: {e}", report_path.display())))?;
    let report: Report = serde_json::from_str(&text)
        .map_err(|e| InvalidInput(format!("malformed report {}: {e}", report_path.display())))?;
    let theta = report
        .theta
        .ok_or_else(|| InvalidInput("report has no fitted parameters (`theta`)".into()))?;
    let vocab = report.vocabulary.unwrap_or_default();
    let test = Dataset::read_csv(data).map_err(|e| InvalidInput(format!("{}: {e}", data.display())))?;
    let dim = report.dimension.unwrap_or(test.dim());
    if dim != test.dim() {
        return Err(InvalidInput(format!(
            "model has dimension {dim} but {} has {} input columns",
            data.display(),
            test.dim()
        ))
        .into());
    }
    let tree = parse_text(&report.expression, &vocab, dim)?;
    if tree.param_count() != theta.len() {
        return Err(InvalidInput(format!(
            "model has {} parameters but the report gives {}",
            tree.param_count(),
            theta.len()
        ))
        .into());
    }
    if let Some(s) = s_eps {
        if !(s > 0.0 && s.is_finite()) {
            return Err(InvalidInput("--s-eps must be positive".into()).into());
        }
    }

    let dir = output_dir(None, out)?;
    let mut f = create(&dir, "predictions.csv")?;
    let header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    writeln!(f, "{},y,y_hat", header.join(","))?;
    for i in 0..test.len() {
        let x = test.row(i);
        let y_hat = evaluate(&tree, &theta, &x).unwrap_or(f64::NAN);
        let cells: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(f, "{},{},{}", cells.join(","), fmt_f64(test.y()[i]), fmt_f64(y_hat))?;
    }
    f.flush()?;

    let err = rmse(&tree, &theta, &test);
    println!("rmse {}", fmt_f64(err));
    if let Some(s) = s_eps {
        println!("rmse_over_s {}", fmt_f64(err / s));
    }
    Ok(())
}
