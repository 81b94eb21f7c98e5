//! Binary policy checkpoints.
//!
//! MLP (`GCSL1`): the magic bytes, `u32` layer count, one `u32` per layer
//! size, `u32` horizon length (0 for time-invariant policies), then every
//! parameter as a little-endian `f64`, layer by layer, weights row-major
//! (`out x in`) followed by biases.
//!
//! Tabular (`GCST1`): the magic bytes, `u32` state count, `u32` action
//! count, `u32` horizon length (0 if none), `f64` smoothing, then the raw
//! count table as little-endian `f64`.

use std::path::Path;

use gcsl_core::env::GoalEnv;
use gcsl_core::policy::{MlpPolicy, Policy, StateEncoder, TabularPolicy};

use crate::error::{CliError, Result};

pub const MLP_MAGIC: &[u8; 5] = b"GCSL1";
pub const TABULAR_MAGIC: &[u8; 5] = b"GCST1";

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Mlp(MlpPolicy),
    Tabular(TabularPolicy),
}

impl Checkpoint {
    pub fn policy(&self) -> &dyn Policy {
        match self {
            Checkpoint::Mlp(p) => p,
            Checkpoint::Tabular(p) => p,
        }
    }
}

pub fn encode_mlp(policy: &MlpPolicy) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * policy.parameter_count());
    out.extend_from_slice(MLP_MAGIC);
    out.extend_from_slice(&(policy.dims().len() as u32).to_le_bytes());
    for &d in policy.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(policy.horizon_len().unwrap_or(0) as u32).to_le_bytes());
    for p in policy.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn encode_tabular(policy: &TabularPolicy) -> Vec<u8> {
    let counts = policy.raw_counts();
    let mut out = Vec::with_capacity(32 + 8 * counts.len());
    out.extend_from_slice(TABULAR_MAGIC);
    for v in [
        policy.state_count(),
        policy.action_count(),
        policy.horizon_len().unwrap_or(0),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&policy.smoothing().to_le_bytes());
    for c in counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> std::result::Result<(), String> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.bytes.len() - self.pos))
        }
    }
}

/// Decodes either checkpoint kind. MLP inputs are encoded with `env`'s
/// state features.
pub fn decode(bytes: &[u8], env: &dyn GoalEnv) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(5)?;
    if magic == MLP_MAGIC {
        let n = r.u32()?;
        if !(2..=64).contains(&n) {
            return Err(format!("implausible layer count {n}"));
        }
        let dims = (0..n)
            .map(|_| r.u32())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let horizon = r.u32()?;
        let count: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let params = r.f64s(count)?;
        r.finish()?;
        let encoder = StateEncoder::for_env(env).map_err(|e| e.to_string())?;
        MlpPolicy::from_parameters(dims, params, (horizon > 0).then_some(horizon), encoder)
            .map(Checkpoint::Mlp)
            .map_err(|e| e.to_string())
    } else if magic == TABULAR_MAGIC {
        let (s, a, h) = (r.u32()?, r.u32()?, r.u32()?);
        let smoothing = r.f64()?;
        let slices = if h > 0 { h + 1 } else { 1 };
        let counts = r.f64s(s * s * slices * a)?;
        r.finish()?;
        TabularPolicy::from_counts(s, a, (h > 0).then_some(h), smoothing, counts)
            .map(Checkpoint::Tabular)
            .map_err(|e| e.to_string())
    } else {
        Err("not a policy checkpoint (bad magic)".into())
    }
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let bytes = match checkpoint {
        Checkpoint::Mlp(p) => encode_mlp(p),
        Checkpoint::Tabular(p) => encode_tabular(p),
    };
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path, env: &dyn GoalEnv) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, env).map_err(|message| CliError::Format {
        path: path.to_path_buf(),
        message,
    })
}
