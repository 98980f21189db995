//! Binary model snapshots.
//!
//! Layout: 8-byte magic, u32 format version, u32 header length, JSON header
//! (architecture and hyperparameters), u64 parameter count, raw little-endian
//! f64 parameters, 4-byte end marker. Every multi-byte integer is
//! little-endian. The payload is the flat parameter vector in the model's
//! canonical order, so a round-trip is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CateModel, LinearCateModel, Mode, TrainedModel};
use crate::rng::Rng;

const MAGIC: &[u8; 8] = b"CATESNAP";
const END: &[u8; 4] = b"DONE";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Header {
    Network { t_dim: usize, x_dim: usize, mode: Mode, contrastive_weight: f64, margin: f64 },
    Linear { t_dim: usize, x_dim: usize },
}

fn flat_params(model: &TrainedModel) -> Vec<f64> {
    match model {
        TrainedModel::Network(m) => m.params(),
        TrainedModel::Linear(m) => {
            let mut v = m.w_t.clone();
            v.extend_from_slice(&m.w_x);
            v.push(m.bias);
            v
        }
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let header = match model {
        TrainedModel::Network(m) => Header::Network {
            t_dim: m.t_dim(),
            x_dim: m.x_dim(),
            mode: m.mode,
            contrastive_weight: m.contrastive_weight,
            margin: m.margin,
        },
        TrainedModel::Linear(m) => Header::Linear { t_dim: m.w_t.len(), x_dim: m.w_x.len() },
    };
    let header_json = serde_json::to_vec(&header)?;
    let params = flat_params(model);

    let mut buf = Vec::with_capacity(24 + header_json.len() + params.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in &params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    buf.extend_from_slice(END);
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Integrity("snapshot is truncated".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let data = fs::read(path)?;
    let mut c = Cursor { data: &data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Integrity(format!("'{}' is not a model snapshot", path.display())));
    }
    let version = c.take_u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Version { found: version, expected: SNAPSHOT_VERSION });
    }
    let header_len = c.take_u32()? as usize;
    let header: Header = serde_json::from_slice(c.take(header_len)?)?;
    let n_params = c.take_u64()?;
    // guard the multiply: a corrupt count must not overflow usize
    if n_params > ((data.len() - c.pos) / 8) as u64 {
        return Err(Error::Integrity("snapshot is truncated".into()));
    }
    let raw = c.take(n_params as usize * 8)?;
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    if c.take(4)? != END {
        return Err(Error::Integrity("snapshot end marker missing".into()));
    }
    if c.pos != data.len() {
        return Err(Error::Integrity("snapshot has trailing bytes".into()));
    }

    match header {
        Header::Network { t_dim, x_dim, mode, contrastive_weight, margin } => {
            // the rng only seeds placeholder weights; set_params overwrites all
            let mut rng = Rng::seed_from(0);
            let mut m = CateModel::new(t_dim, x_dim, mode, contrastive_weight, margin, &mut rng)?;
            if params.len() != m.param_count() {
                return Err(Error::Integrity(format!(
                    "snapshot holds {} parameters, architecture needs {}",
                    params.len(),
                    m.param_count()
                )));
            }
            m.set_params(&params)?;
            Ok(TrainedModel::Network(m))
        }
        Header::Linear { t_dim, x_dim } => {
            if params.len() != t_dim + x_dim + 1 {
                return Err(Error::Integrity(format!(
                    "snapshot holds {} parameters, linear model needs {}",
                    params.len(),
                    t_dim + x_dim + 1
                )));
            }
            Ok(TrainedModel::Linear(LinearCateModel {
                w_t: params[..t_dim].to_vec(),
                w_x: params[t_dim..t_dim + x_dim].to_vec(),
                bias: params[t_dim + x_dim],
            }))
        }
    }
}
