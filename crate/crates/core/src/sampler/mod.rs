//! Metropolis–Hastings sampling over closed-form models, exhaustive
//! enumeration of small model spaces, and trace output.

mod chain;
mod enumerate;
mod moves;

use std::io::Write;

pub use chain::{
    acceptance_probability, metropolis_step, run_chains, sample, tempered_sample, ChainState,
    MdlModel, SampleResult, SamplerOptions, StepOutcome, TraceRecord, VisitCount,
};
pub use enumerate::{
    enumerate_models, enumerate_structures, EnumeratedModel, DEFAULT_ENUMERATION_LIMIT,
};
pub use moves::{MoveKind, MoveProposal, MoveSpace, PathCounts, TreeInfo};

use crate::error::Result;
use crate::inference::fmt_f64;

/// Writes the trace as CSV: `step,H,H_M,k,accepted,model`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRecord], mut out: W) -> Result<()> {
    writeln!(out, "step,H,H_M,k,accepted,model")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},\"{}\"",
            r.step,
            fmt_f64(r.h),
            fmt_f64(r.hm),
            r.k,
            r.accepted,
            r.model
        )?;
    }
    Ok(())
}
