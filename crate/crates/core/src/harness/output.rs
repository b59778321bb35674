//! Machine-readable outputs: CSV and JSON writers.
//!
//! Files are created exclusively — an existing file is an error, never
//! silently overwritten. Floats print via Rust's shortest-round-trip
//! formatting, so equal bit patterns always produce equal bytes and
//! deterministic runs produce byte-identical files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::eval::TransferRow;
use super::experiments::AggregatePoint;
use super::train::CurveRow;
use crate::marl::UpdateStats;

/// Create a file that must not already exist.
pub fn create_new(path: &Path) -> io::Result<File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    File::options().write(true).create_new(true).open(path).map_err(|e| {
        io::Error::new(e.kind(), format!("refusing to overwrite or create {}: {e}", path.display()))
    })
}

/// Serialize a value as pretty JSON into a fresh file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = BufWriter::new(create_new(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

pub const CURVE_HEADER: &str =
    "seed,env_steps,mean_episode_reward,std_episode_reward,success_pct,mean_t,mean_collisions";

/// Incrementally written learning-curve CSV (rows stream in during long
/// runs, so partial progress is on disk).
pub struct CurveCsv {
    file: File,
}

impl CurveCsv {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut file = create_new(path)?;
        writeln!(file, "{CURVE_HEADER}")?;
        Ok(CurveCsv { file })
    }

    pub fn append(&mut self, r: &CurveRow) -> io::Result<()> {
        writeln!(
            self.file,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.env_steps,
            r.mean_episode_reward,
            r.std_episode_reward,
            r.success_pct,
            r.mean_t,
            r.mean_collisions
        )?;
        self.file.flush()
    }
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> io::Result<()> {
    let mut csv = CurveCsv::create(path)?;
    for row in rows {
        csv.append(row)?;
    }
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, points: &[AggregatePoint]) -> io::Result<()> {
    let mut w = BufWriter::new(create_new(path)?);
    writeln!(w, "env_steps,mean_episode_reward,std_episode_reward")?;
    for p in points {
        writeln!(w, "{},{},{}", p.env_steps, p.mean_episode_reward, p.std_episode_reward)?;
    }
    w.flush()
}

pub fn write_updates_csv(path: &Path, updates: &[(u64, UpdateStats)]) -> io::Result<()> {
    let mut w = BufWriter::new(create_new(path)?);
    writeln!(
        w,
        "update,env_steps,policy_loss,value_loss,entropy,clip_fraction,approx_kl,grad_norm"
    )?;
    for (i, (steps, s)) in updates.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            i + 1,
            steps,
            s.policy_loss,
            s.value_loss,
            s.entropy,
            s.clip_fraction,
            s.approx_kl,
            s.grad_norm
        )?;
    }
    w.flush()
}

pub fn write_transfer_csv(path: &Path, rows: &[TransferRow]) -> io::Result<()> {
    let mut w = BufWriter::new(create_new(path)?);
    writeln!(w, "m,reward_per_agent,mean_t,collisions_per_agent,success_pct,episodes")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.m, r.reward_per_agent, r.mean_t, r.collisions_per_agent, r.success_pct, r.episodes
        )?;
    }
    w.flush()
}
