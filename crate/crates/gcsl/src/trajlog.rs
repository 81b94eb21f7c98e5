//! Plain-text trajectory logs, one trajectory per line:
//!
//! ```text
//! seed<TAB>goal<TAB>states<TAB>actions
//! ```
//!
//! Vectors are space-separated numbers; `states` is a comma-separated list
//! of such vectors (`T + 1` of them) and `actions` a comma-separated list
//! of `T` action indices. Lines starting with `#` and blank lines are
//! skipped. Floats are written in shortest round-trip form, so a log reads
//! back bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use gcsl_core::buffer::Trajectory;
use gcsl_core::env::GoalEnv;

use crate::error::{CliError, Result};

fn push_vec(out: &mut String, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{x:?}").unwrap();
    }
}

pub fn format_trajectory(tr: &Trajectory) -> String {
    let mut line = format!("{}\t", tr.seed);
    push_vec(&mut line, &tr.commanded_goal);
    line.push('\t');
    for (i, s) in tr.states.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        push_vec(&mut line, s);
    }
    line.push('\t');
    for (i, a) in tr.actions.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        write!(line, "{a}").unwrap();
    }
    line
}

fn parse_vec(field: &str) -> std::result::Result<Vec<f64>, String> {
    field
        .split_whitespace()
        .map(|x| {
            x.parse::<f64>()
                .map_err(|_| format!("`{x}` is not a number"))
        })
        .collect()
}

/// Parses one non-comment line. `iteration` is stored in the trajectory.
pub fn parse_trajectory(line: &str, iteration: u64) -> std::result::Result<Trajectory, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!(
            "expected 4 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let seed = fields[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad seed `{}`", fields[0]))?;
    let commanded_goal = parse_vec(fields[1])?;
    let states = fields[2]
        .split(',')
        .map(parse_vec)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let actions = fields[3]
        .split(',')
        .map(|a| {
            a.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad action `{a}`"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let tr = Trajectory {
        states,
        actions,
        commanded_goal,
        seed,
        iteration,
    };
    tr.validate().map_err(|e| e.to_string())?;
    Ok(tr)
}

pub fn parse_log(text: &str) -> std::result::Result<Vec<Trajectory>, (usize, String)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(
            parse_trajectory(line.trim_end_matches('\r'), out.len() as u64)
                .map_err(|e| (i + 1, e))?,
        );
    }
    Ok(out)
}

pub fn write_log(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut text = String::from("# seed\tgoal\tstates\tactions\n");
    for tr in trajectories {
        text.push_str(&format_trajectory(tr));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_log(&text).map_err(|(line, message)| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Reads a log and checks every trajectory against `env`: horizon, state
/// dimension, action range and (for deterministic steps) the dynamics.
pub fn load_demos(path: &Path, env: &dyn GoalEnv) -> Result<Vec<Trajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let spec = env.spec();
    let mut out = Vec::new();
    let mut rng = gcsl_core::rng::RngStreams::new(0).stream("replay");
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tr = parse_trajectory(line.trim_end_matches('\r'), out.len() as u64)
            .map_err(|e| parse_err(i + 1, e))?;
        if tr.horizon() != spec.horizon {
            return Err(parse_err(
                i + 1,
                format!(
                    "horizon {} differs from the environment's {}",
                    tr.horizon(),
                    spec.horizon
                ),
            ));
        }
        for t in 0..tr.horizon() {
            if tr.states[t].len() != spec.state_dim || tr.actions[t] >= spec.action_count {
                return Err(parse_err(
                    i + 1,
                    format!("step {t} does not fit the environment"),
                ));
            }
            if env.as_finite().is_none_or(|m| m.is_deterministic()) {
                let next = env
                    .step(&tr.states[t], tr.actions[t], &mut rng)
                    .map_err(|e| parse_err(i + 1, e.to_string()))?;
                let drift = next
                    .iter()
                    .zip(&tr.states[t + 1])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if drift > 1e-9 {
                    return Err(parse_err(
                        i + 1,
                        format!("step {t} is inconsistent with the environment dynamics"),
                    ));
                }
            }
        }
        out.push(tr);
    }
    Ok(out)
}
