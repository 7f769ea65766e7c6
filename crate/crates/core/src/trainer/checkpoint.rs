//! `DMLP` checkpoints: magic, version u16, u32 config length, JSON config,
//! then each layer's weights (row-major) followed by its biases, all f32 LE.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{MlpConfig, MlpModel, Network};
use crate::io::{read_bytes, write_atomic, ByteCursor};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"DMLP";
const VERSION: u16 = 1;

pub fn to_bytes(model: &MlpModel) -> Vec<u8> {
    let config = serde_json::to_vec(&model.config).expect("config serializes");
    let mut out = Vec::with_capacity(10 + config.len() + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    for layer in &model.network.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let mut cur = ByteCursor::new(bytes);
    if cur.take(4)? != MAGIC {
        return Err(Error::Format(
            "not a classifier checkpoint (bad magic)".into(),
        ));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let len = cur.u32()? as usize;
    let config: MlpConfig = serde_json::from_slice(cur.take(len)?)
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    config.validate()?;
    let mut network = Network::<f32>::zeros(&config.widths());
    for layer in &mut network.layers {
        let (rows, cols) = layer.weights.dim();
        layer.weights = Array2::from_shape_vec((rows, cols), cur.f32s(rows * cols)?)
            .expect("length matches shape");
        layer.bias = Array1::from(cur.f32s(rows)?);
    }
    if !cur.is_at_end() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    if !network.is_finite() {
        return Err(Error::Format(
            "checkpoint holds non-finite parameters".into(),
        ));
    }
    Ok(MlpModel { config, network })
}

/// Written through a temp file and rename.
pub fn save_checkpoint(model: &MlpModel, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    from_bytes(&read_bytes(path)?)
}
