//! Output helpers: atomic JSON/CSV writes into the run directory.

use anyhow::Context;
use helimag::minimize::MinimizeTrace;
use helimag::LaminateRealization;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Serialize to pretty JSON and rename into place so readers never observe
/// a half-written file.
pub fn write_json_atomic<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).context("cannot create temp file")?;
    serde_json::to_writer_pretty(&mut tmp, value).context("serialization failed")?;
    tmp.write_all(b"\n")?;
    tmp.persist(dir.join(name))
        .with_context(|| format!("cannot write {}", name))?;
    Ok(())
}

/// Layer table of a sampled laminate: one row per layer with its material.
pub fn write_realization_csv(
    dir: &Path,
    name: &str,
    real: &LaminateRealization,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = csv::Writer::from_writer(&tmp);
        w.write_record(["breakpoint", "phase_index", "a", "kappa", "m_sat"])?;
        for (j, &phase) in real.phase_index.iter().enumerate() {
            let p = &real.table.phases[phase];
            w.write_record([
                real.breakpoints[j].to_string(),
                phase.to_string(),
                p.a.to_string(),
                p.kappa.to_string(),
                p.m_sat.to_string(),
            ])?;
        }
        w.flush()?;
    }
    tmp.persist(dir.join(name))
        .with_context(|| format!("cannot write {}", name))?;
    Ok(())
}

pub fn write_trace_csv(dir: &Path, name: &str, trace: &MinimizeTrace) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = csv::Writer::from_writer(&tmp);
        w.write_record(["iter", "energy", "grad_norm", "step"])?;
        for s in &trace.steps {
            w.write_record([
                s.iter.to_string(),
                s.energy.to_string(),
                s.grad_norm.to_string(),
                s.step.to_string(),
            ])?;
        }
        w.flush()?;
    }
    tmp.persist(dir.join(name))
        .with_context(|| format!("cannot write {}", name))?;
    Ok(())
}
