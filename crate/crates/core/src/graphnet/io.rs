use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams, TENSOR_NAMES};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SCLW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Hyperparameters stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainConfig>,
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Binary tensor file: magic, version, count, then per tensor its name,
/// shape and little-endian row-major values.
pub fn encode_weights(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_parameters() * 8);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(TENSOR_NAMES.len() as u32).to_le_bytes());
    for (name, t) in TENSOR_NAMES.iter().zip(params.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u64).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, what: &str) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            scene: None,
            message: format!("{what} at byte offset {}", self.at),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(self.fail("unexpected end of file"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8], config: &ModelConfig, path: &Path) -> Result<ModelParams> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(4)? != WEIGHTS_MAGIC {
        r.at = 0;
        return Err(r.fail("bad magic"));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(r.fail(&format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    if count != TENSOR_NAMES.len() {
        return Err(r.fail(&format!("expected {} tensors, found {count}", TENSOR_NAMES.len())));
    }
    let mut params = ModelParams::zeros(config);
    let shapes = ModelParams::shapes(config);
    for (k, dst) in params.tensors_mut().into_iter().enumerate() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| r.fail("tensor name is not UTF-8"))?;
        if name != TENSOR_NAMES[k] {
            return Err(r.fail(&format!("expected tensor {}, found {name}", TENSOR_NAMES[k])));
        }
        let ndim = r.u32()?;
        if ndim != 2 {
            return Err(r.fail(&format!("tensor {name} has {ndim} dimensions")));
        }
        let dims = (r.u64()? as usize, r.u64()? as usize);
        if dims != shapes[k] {
            return Err(r.fail(&format!("tensor {name} has shape {dims:?}, config expects {:?}", shapes[k])));
        }
        let raw = r.take(dims.0 * dims.1 * 8)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        *dst = Array2::from_shape_vec(dims, values).expect("shape checked");
    }
    if r.at != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    Ok(params)
}

pub fn save_weights(path: &Path, params: &ModelParams, training: Option<&TrainConfig>) -> Result<()> {
    fs::write(path, encode_weights(params)).map_err(|e| Error::io(path, e))?;
    let side = Sidecar {
        model: params.config.clone(),
        training: training.cloned(),
    };
    let sp = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&side).map_err(|e| Error::json(&sp, None, e))?;
    text.push('\n');
    fs::write(&sp, text).map_err(|e| Error::io(&sp, e))
}

pub fn load_weights(path: &Path) -> Result<(ModelParams, Sidecar)> {
    let sp = sidecar_path(path);
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&sp, None, e))?;
    side.model.validate()?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode_weights(&bytes, &side.model, path)?;
    Ok((params, side))
}
