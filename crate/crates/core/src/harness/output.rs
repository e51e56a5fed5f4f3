//! Files written by the experiments.

use serde::Serialize;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::experiments::{ConvergenceReport, EnsembleResult, SimulationResult, UniquenessReport};
use super::HarnessError;
use crate::dynamics::State;
use crate::spectral::{write_snapshot, ScalarField};

/// One row per item, header from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    use std::io::Write;
    writeln!(f)?;
    Ok(())
}

fn write_field(path: &Path, f: &ScalarField) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(&mut w, f)?;
    Ok(())
}

/// Writes `{n,c,ux,uy}_<step>.ksns` into `dir`.
pub fn write_state_snapshots(dir: &Path, state: &State, step: usize) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (name, f) in [("n", &state.n), ("c", &state.c), ("ux", &state.u.x), ("uy", &state.u.y)] {
        let p = dir.join(format!("{name}_{step:06}.ksns"));
        write_field(&p, f)?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_simulation(out: &Path, r: &SimulationResult) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    write_csv(&out.join("diagnostics.csv"), &r.trajectory.records)?;
    let snaps = out.join("snapshots");
    for s in &r.trajectory.checkpoints {
        let step = (s.time / r.trajectory.dt).round() as usize;
        write_state_snapshots(&snaps, s, step)?;
    }
    write_json(&out.join("summary.json"), &r.summary)
}

pub fn write_ensemble(out: &Path, r: &EnsembleResult) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    for (i, recs) in r.member_records.iter().enumerate() {
        let dir = out.join(format!("member_{i:04}"));
        fs::create_dir_all(&dir)?;
        write_csv(&dir.join("diagnostics.csv"), recs)?;
    }
    write_csv(&out.join("ensemble.csv"), &r.stats)?;
    write_json(&out.join("summary.json"), &r.summary)
}

pub fn write_convergence(out: &Path, r: &ConvergenceReport) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    write_csv(&out.join("convergence.csv"), &r.levels)?;
    write_json(&out.join("summary.json"), r)
}

pub fn write_uniqueness(out: &Path, r: &UniquenessReport) -> Result<(), HarnessError> {
    fs::create_dir_all(out)?;
    write_csv(&out.join("uniqueness.csv"), &r.rows)?;
    write_json(&out.join("summary.json"), r)
}
