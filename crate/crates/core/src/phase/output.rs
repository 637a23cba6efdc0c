use std::io::Write;

use super::trial::{SweepResult, TrialRecord};
use crate::error::Result;
use crate::inference::fmt_f64;

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// One row per trial.
pub fn write_trials_csv<W: Write>(trials: &[TrialRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "model_id,N,s_eps,replica,seed,learnable,gap,H_mdl,H_true,rmse,rmse_over_s,mdl_expr"
    )?;
    for t in trials {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            quoted(&t.model_id),
            t.n,
            fmt_f64(t.s_eps),
            t.replica,
            t.seed,
            t.learnable,
            fmt_f64(t.gap),
            fmt_f64(t.h_mdl),
            fmt_f64(t.h_true),
            fmt_f64(t.rmse),
            fmt_f64(t.rmse_over_s),
            quoted(&t.mdl_expr)
        )?;
    }
    Ok(())
}

/// One row per `(model, N, s_ε)` cell.
pub fn write_summary_csv<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    writeln!(
        out,
        "model_id,N,s_eps,rho,mean_rmse_over_s,s_eps_cross_exact,s_eps_cross_approx"
    )?;
    for c in &result.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            quoted(&c.model_id),
            c.n,
            fmt_f64(c.s_eps),
            fmt_f64(c.rho),
            fmt_f64(c.mean_rmse_over_s),
            fmt_f64(c.s_cross_exact),
            fmt_f64(c.s_cross_approx)
        )?;
    }
    Ok(())
}

/// Gnuplot data: one indexed block per `(model, N)` curve.
pub fn write_sweep_dat<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    let mut current: Option<(&str, usize)> = None;
    for c in &result.cells {
        if current != Some((c.model_id.as_str(), c.n)) {
            if current.is_some() {
                writeln!(out, "\n")?;
            }
            writeln!(
                out,
                "# model {} N {} s_cross_exact {} s_cross_approx {}",
                c.model_id,
                c.n,
                fmt_f64(c.s_cross_exact),
                fmt_f64(c.s_cross_approx)
            )?;
            writeln!(
                out,
                "# s_eps s_eps_scaled rho mean_rmse_over_s mean_H_mdl mean_H_true H_true_predicted H_trivial_predicted"
            )?;
            current = Some((c.model_id.as_str(), c.n));
        }
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            fmt_f64(c.s_eps),
            fmt_f64(c.s_eps / c.s_cross_exact),
            fmt_f64(c.rho),
            fmt_f64(c.mean_rmse_over_s),
            fmt_f64(c.mean_h_mdl),
            fmt_f64(c.mean_h_true),
            fmt_f64(c.h_true_predicted),
            fmt_f64(c.h_trivial_predicted)
        )?;
    }
    Ok(())
}
