//! Binary weight files: an 8-byte magic, a little-endian u32 version, the
//! architecture header, a u64 weight count and the weights as
//! little-endian f64. Hyperparameters go to a JSON sidecar next to it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::network::{Architecture, ModelState};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"BFUSECK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hyperparameter sidecar written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub architecture: Architecture,
    pub hyper: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit the header")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode<T: Real>(state: &ModelState<T>) -> Result<Vec<u8>> {
    let a = &state.arch;
    let w = state.flatten();
    let mut out = Vec::with_capacity(64 + 8 * w.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut out, a.input)?;
    put_u32(&mut out, a.hidden.len())?;
    for h in &a.hidden {
        put_u32(&mut out, *h)?;
    }
    put_u32(&mut out, a.params)?;
    for v in a.feature_internal.iter().chain(&a.feature_out) {
        put_u32(&mut out, *v)?;
    }
    out.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for x in w {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Malformed {
                path: self.path.into(),
                message: format!("truncated at byte {}", self.at),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

pub fn decode<T: Real>(bytes: &[u8], path: &Path) -> Result<ModelState<T>> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::Malformed {
            path: path.into(),
            message: "not a checkpoint (bad magic bytes)".into(),
        });
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::SchemaVersion {
            path: path.into(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let input = r.u32()?;
    let n_hidden = r.u32()?;
    if n_hidden > 64 {
        return Err(Error::Malformed {
            path: path.into(),
            message: format!("implausible hidden layer count {n_hidden}"),
        });
    }
    let hidden = (0..n_hidden).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let params = r.u32()?;
    let feature_internal = [r.u32()?, r.u32()?, r.u32()?];
    let feature_out = [r.u32()?, r.u32()?, r.u32()?];
    let arch = Architecture {
        input,
        hidden,
        params,
        feature_internal,
        feature_out,
    };
    arch.validate()?;
    let count = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    if count != arch.weight_count() {
        return Err(Error::Malformed {
            path: path.into(),
            message: format!("header declares {count} weights, architecture needs {}", arch.weight_count()),
        });
    }
    if bytes.len() - r.at != 8 * count {
        return Err(Error::Malformed {
            path: path.into(),
            message: format!("expected {} payload bytes, found {}", 8 * count, bytes.len() - r.at),
        });
    }
    let weights = r.bytes[r.at..]
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    ModelState::from_flat(arch, weights)
}

pub fn save_checkpoint<T: Real>(path: &Path, state: &ModelState<T>, hyper: serde_json::Value) -> Result<()> {
    fs::write(path, encode(state)?).map_err(|e| Error::io(path, e))?;
    let side = Sidecar {
        schema_version: CHECKPOINT_VERSION,
        architecture: state.arch.clone(),
        hyper,
    };
    let sp = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    fs::write(&sp, text + "\n").map_err(|e| Error::io(sp, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<ModelState<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::ModelDims;
    use crate::synth::FeatureDims;

    fn state() -> ModelState<f64> {
        ModelState::init(Architecture::toy(&ModelDims::toy(), FeatureDims::toy()), 4).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let s = state();
        save_checkpoint(&p, &s, serde_json::json!({"lr": 0.001})).unwrap();
        let back: ModelState<f64> = load_checkpoint(&p).unwrap();
        assert_eq!(back, s);
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!(side.architecture, s.arch);
        let size = fs::metadata(&p).unwrap().len() as usize;
        assert_eq!(size, 8 + 4 + 4 * (2 + 2 + 1 + 6) + 8 + 8 * s.arch.weight_count());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let s = state();
        let bytes = encode(&s).unwrap();
        let p = Path::new("x.ckpt");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode::<f64>(&bad, p), Err(Error::Malformed { .. })));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(decode::<f64>(&bad, p), Err(Error::SchemaVersion { found: 9, .. })));
        assert!(matches!(decode::<f64>(&bytes[..bytes.len() - 3], p), Err(Error::Malformed { .. })));
    }
}
