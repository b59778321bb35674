//! Binary checkpoint persistence.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SWCK" | u32 version | u64 seed | u64 env_steps
//! | config TOML (len-prefixed UTF-8)
//! | u32 array count | arrays: name (len-prefixed), u32 ndim, u64 dims…, f64 values…
//! | u8 has_adam | (u64 adam steps, m arrays, v arrays — same shapes, no names)
//! | u8 has_reward_norm | (JSON blob) | u8 has_value_norm | (JSON blob)
//! ```
//!
//! Values are full 64-bit, so save → load → save round-trips bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;

use crate::config::TrainConfig;
use crate::marl::RunningNorm;

const MAGIC: &[u8; 4] = b"SWCK";
const VERSION: u32 = 1;

/// Everything a training run needs to resume or evaluate: parameters by
/// name, optimizer moments, normalizer states, and the exact configuration.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub env_steps: u64,
    /// Parameter arrays in registration order.
    pub params: Vec<(String, ArrayD<f64>)>,
    /// `(step count, first moments, second moments)` aligned with `params`.
    pub adam: Option<(u64, Vec<ArrayD<f64>>, Vec<ArrayD<f64>>)>,
    pub reward_norm: Option<RunningNorm>,
    pub value_norm: Option<RunningNorm>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("corrupt checkpoint at field `{field}`: {reason}")]
    Corrupt { field: &'static str, reason: String },
}

fn corrupt(field: &'static str, reason: impl ToString) -> CheckpointError {
    CheckpointError::Corrupt { field, reason: reason.to_string() }
}

// ---- primitive writers/readers ---------------------------------------------

fn write_bytes(w: &mut impl Write, field: &'static str, b: &[u8]) -> Result<(), CheckpointError> {
    w.write_all(&(b.len() as u64).to_le_bytes())?;
    w.write_all(b)?;
    let _ = field;
    Ok(())
}

fn read_u32(r: &mut impl Read, field: &'static str) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| corrupt(field, e))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, field: &'static str) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| corrupt(field, e))?;
    Ok(u64::from_le_bytes(b))
}

fn read_u8(r: &mut impl Read, field: &'static str) -> Result<u8, CheckpointError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(|e| corrupt(field, e))?;
    Ok(b[0])
}

fn read_bytes(r: &mut impl Read, field: &'static str) -> Result<Vec<u8>, CheckpointError> {
    let len = read_u64(r, field)? as usize;
    // Guard against absurd lengths from corrupt files before allocating.
    if len > 1 << 32 {
        return Err(corrupt(field, format!("implausible length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| corrupt(field, e))?;
    Ok(buf)
}

fn write_array(
    w: &mut impl Write,
    field: &'static str,
    a: &ArrayD<f64>,
) -> Result<(), CheckpointError> {
    w.write_all(&(a.ndim() as u32).to_le_bytes())?;
    for &d in a.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    // Row-major traversal regardless of the array's memory order.
    for &v in a.iter() {
        w.write_all(&v.to_bits().to_le_bytes())?;
    }
    let _ = field;
    Ok(())
}

fn read_array(r: &mut impl Read, field: &'static str) -> Result<ArrayD<f64>, CheckpointError> {
    let ndim = read_u32(r, field)? as usize;
    if ndim > 8 {
        return Err(corrupt(field, format!("implausible rank {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(read_u64(r, field)? as usize);
    }
    let len: usize = dims.iter().product();
    if len > 1 << 28 {
        return Err(corrupt(field, format!("implausible element count {len}")));
    }
    let mut vals = Vec::with_capacity(len);
    for _ in 0..len {
        vals.push(f64::from_bits(read_u64(r, field)?));
    }
    ArrayD::from_shape_vec(ndarray::IxDyn(&dims), vals).map_err(|e| corrupt(field, e))
}

fn write_norm(
    w: &mut impl Write,
    field: &'static str,
    n: &Option<RunningNorm>,
) -> Result<(), CheckpointError> {
    match n {
        None => w.write_all(&[0u8])?,
        Some(n) => {
            w.write_all(&[1u8])?;
            let blob = serde_json::to_vec(n).map_err(|e| corrupt(field, e))?;
            write_bytes(w, field, &blob)?;
        }
    }
    Ok(())
}

fn read_norm(
    r: &mut impl Read,
    field: &'static str,
) -> Result<Option<RunningNorm>, CheckpointError> {
    match read_u8(r, field)? {
        0 => Ok(None),
        1 => {
            let blob = read_bytes(r, field)?;
            serde_json::from_slice(&blob).map(Some).map_err(|e| corrupt(field, e))
        }
        other => Err(corrupt(field, format!("bad presence flag {other}"))),
    }
}

impl Checkpoint {
    /// Serialize to bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut w = Vec::new();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.env_steps.to_le_bytes())?;
        write_bytes(&mut w, "config", self.config.to_toml().as_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, arr) in &self.params {
            write_bytes(&mut w, "param name", name.as_bytes())?;
            write_array(&mut w, "param array", arr)?;
        }
        match &self.adam {
            None => w.write_all(&[0u8])?,
            Some((steps, m, v)) => {
                if m.len() != self.params.len() || v.len() != self.params.len() {
                    return Err(corrupt("adam", "moment count differs from parameter count"));
                }
                w.write_all(&[1u8])?;
                w.write_all(&steps.to_le_bytes())?;
                for arr in m.iter().chain(v) {
                    write_array(&mut w, "adam moments", arr)?;
                }
            }
        }
        write_norm(&mut w, "reward_norm", &self.reward_norm)?;
        write_norm(&mut w, "value_norm", &self.value_norm)?;
        Ok(w)
    }

    /// Deserialize from bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r, "version")?;
        if version != VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let seed = read_u64(&mut r, "seed")?;
        let env_steps = read_u64(&mut r, "env_steps")?;
        let config_text = String::from_utf8(read_bytes(&mut r, "config")?)
            .map_err(|e| corrupt("config", e))?;
        let config = TrainConfig::from_toml(&config_text).map_err(|e| corrupt("config", e))?;
        let n_params = read_u32(&mut r, "param count")? as usize;
        if n_params > 1 << 20 {
            return Err(corrupt("param count", format!("implausible count {n_params}")));
        }
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = String::from_utf8(read_bytes(&mut r, "param name")?)
                .map_err(|e| corrupt("param name", e))?;
            let arr = read_array(&mut r, "param array")?;
            params.push((name, arr));
        }
        let adam = match read_u8(&mut r, "adam flag")? {
            0 => None,
            1 => {
                let steps = read_u64(&mut r, "adam steps")?;
                let mut m = Vec::with_capacity(n_params);
                for _ in 0..n_params {
                    m.push(read_array(&mut r, "adam moments")?);
                }
                let mut v = Vec::with_capacity(n_params);
                for _ in 0..n_params {
                    v.push(read_array(&mut r, "adam moments")?);
                }
                Some((steps, m, v))
            }
            other => return Err(corrupt("adam flag", format!("bad presence flag {other}"))),
        };
        let reward_norm = read_norm(&mut r, "reward_norm")?;
        let value_norm = read_norm(&mut r, "value_norm")?;
        if !r.is_empty() {
            return Err(corrupt("trailer", format!("{} unexpected trailing bytes", r.len())));
        }
        Ok(Checkpoint { config, seed, env_steps, params, adam, reward_norm, value_norm })
    }

    /// Write to a file. Refuses to overwrite an existing file.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if path.exists() {
            return Err(CheckpointError::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("refusing to overwrite {}", path.display()),
            )));
        }
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Install checkpointed arrays into a freshly built parameter store. Names
/// and shapes must match one-to-one, in order — a mismatch means the
/// checkpoint was produced by a structurally different model.
pub fn apply_params(
    store: &mut crate::tensor::params::ParamStore,
    params: &[(String, ArrayD<f64>)],
) -> Result<(), CheckpointError> {
    if store.len() != params.len() {
        return Err(corrupt(
            "params",
            format!("{} arrays in checkpoint, model has {}", params.len(), store.len()),
        ));
    }
    for (i, (name, arr)) in params.iter().enumerate() {
        if store.names[i] != *name {
            return Err(corrupt(
                "params",
                format!("array {i} is `{}`, model expects `{}`", name, store.names[i]),
            ));
        }
        if store.values[i].shape() != arr.shape() {
            return Err(corrupt(
                "params",
                format!(
                    "`{name}` has shape {:?}, model expects {:?}",
                    arr.shape(),
                    store.values[i].shape()
                ),
            ));
        }
        store.values[i] = arr.clone();
    }
    Ok(())
}
