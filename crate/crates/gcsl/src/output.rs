//! Output directories, CSV files and the `run.json` manifest.

use std::path::{Path, PathBuf};
use std::process::Command;

use gcsl_core::eval::EvalReport;
use gcsl_core::oracle::BoundReport;
use gcsl_core::trainer::MetricsRow;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EPISODES_FILE: &str = "eval_episodes.csv";
pub const BOUND_REPORT_FILE: &str = "bound_report.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "policy.ckpt";

/// Creates `dir`, refusing to reuse a non-empty directory unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::Config(format!(
                "{} exists and is not a directory",
                dir.display()
            )));
        }
        let mut entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Refuses to replace an existing file unless `force`; creates parents.
pub fn prepare_out_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(CliError::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct MetricsRecord {
    env_steps: usize,
    median_final_distance: f64,
    success_ratio: f64,
    mean_training_loss: f64,
}

/// Streams metrics rows to disk as they arrive.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            inner: csv::Writer::from_path(path)?,
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(MetricsRecord {
            env_steps: row.env_steps,
            median_final_distance: row.median_final_distance,
            success_ratio: row.success_ratio,
            mean_training_loss: row.mean_training_loss,
        })?;
        self.inner.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Serialize)]
struct EpisodeRecord {
    goal: String,
    final_distance: f64,
    success: u8,
}

pub fn write_episodes(path: &Path, report: &EvalReport) -> Result<()> {
    write_rows(
        path,
        report.episodes.iter().map(|e| EpisodeRecord {
            goal: join(&e.goal),
            final_distance: e.final_distance,
            success: e.success as u8,
        }),
    )
}

#[derive(Serialize)]
struct BoundRecord {
    seed: u64,
    j: f64,
    j_surr: f64,
    j_gcsl: f64,
    relabeled_log_likelihood: f64,
    alpha: f64,
    c2: f64,
    penalty: f64,
    p_wrong: f64,
    tv_right_wrong: f64,
    wrong_term: f64,
    gap: f64,
    gap_bound: f64,
    gap_degenerate: bool,
    normalized: bool,
    lower_bound_holds: bool,
    relabel_holds: bool,
    decomposition_holds: bool,
    gap_holds: bool,
    passed: bool,
}

pub fn write_bound_report(path: &Path, rows: &[(u64, BoundReport)]) -> Result<()> {
    write_rows(
        path,
        rows.iter().map(|(seed, r)| BoundRecord {
            seed: *seed,
            j: r.j,
            j_surr: r.j_surr,
            j_gcsl: r.j_gcsl,
            relabeled_log_likelihood: r.relabeled_log_likelihood,
            alpha: r.alpha,
            c2: r.c2,
            penalty: r.penalty,
            p_wrong: r.gap.p_wrong,
            tv_right_wrong: r.gap.tv_right_wrong,
            wrong_term: r.gap.wrong_term,
            gap: r.gap.gap,
            gap_bound: r.gap.gap_bound,
            gap_degenerate: r.gap.degenerate,
            normalized: r.normalized,
            lower_bound_holds: r.lower_bound_holds,
            relabel_holds: r.relabel_holds,
            decomposition_holds: r.decomposition_holds,
            gap_holds: r.gap.holds,
            passed: r.passed(),
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub hidden_size: usize,
    pub grad_steps: usize,
    pub final_success_ratio: f64,
    pub final_median_distance: f64,
}

pub fn write_sweep(path: &Path, rows: &[SweepRecord]) -> Result<()> {
    write_rows(path, rows.iter().copied())
}

/// `git describe --always --dirty`, or `unknown` outside a repository.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

pub fn write_manifest(dir: &Path, command: &str, config: &RunConfig) -> Result<()> {
    let mut cfg = serde_json::Map::new();
    for (k, v) in config.pairs() {
        cfg.insert(k.to_string(), serde_json::Value::String(v));
    }
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "git_describe": git_describe(),
        "seed": config.seed(),
        "config": cfg,
    });
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}
