//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "SDAGRIN\0"
//! version  u32      1
//! config   u32 length + UTF-8 TOML of the model configuration
//! blocks   u32 count, then per block:
//!            u32 name length + UTF-8 name, u64 rows, u64 cols, rows*cols f64
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

use super::model::Model;
use super::params::{ModelConfig, ParamStore};

pub const MAGIC: &[u8; 8] = b"SDAGRIN\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let cfg = model.config().to_toml();
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(cfg.as_bytes());
    let store = model.params();
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.names().iter().zip(store.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let cfg_text = r.string("configuration")?;
    let config: ModelConfig = toml::from_str(&cfg_text)
        .map_err(|e| Error::Checkpoint(format!("configuration: {}", e.message())))?;
    let count = r.u32("block count")? as usize;
    let mut names = Vec::with_capacity(count);
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = r.string("block name")?;
        let rows = r.u64("block rows")? as usize;
        let cols = r.u64("block cols")? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint(format!("block `{name}` has an impossible shape")))?;
        let raw = r.take(n.saturating_mul(8), "block values")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor2::new(rows, cols, data)
            .map_err(|_| Error::Checkpoint(format!("block `{name}` holds non-finite values")))?;
        names.push(name);
        tensors.push(t);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last block".into()));
    }
    Model::from_params(config, ParamStore::new(names, tensors)?)
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let cfg = ModelConfig {
            nodes: 3,
            window: 4,
            heads: 2,
            head_dim: 2,
            d_state: 3,
            d_spatial: 2,
            diffusion_order: 2,
            fusion_hidden: 4,
        };
        Model::new(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = decode(&encode(&m)).unwrap();
        assert_eq!(back.config(), m.config());
        assert_eq!(back.params(), m.params());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save(&path, &m).unwrap();
        assert_eq!(load(&path).unwrap().params(), m.params());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&model());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(decode(&bad).unwrap_err().to_string().contains("version"));
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn rejects_shape_mismatch_against_config() {
        let m = model();
        let mut cfg = m.config().clone();
        cfg.d_state = 4;
        let other = Model::new(cfg.clone(), 1).unwrap();
        // Splice the second model's config text into the first model's blocks.
        let mut bytes = encode(&other);
        let header = 8 + 4 + 4 + cfg.to_toml().len();
        let orig = encode(&m);
        let orig_header = 8 + 4 + 4 + m.config().to_toml().len();
        bytes.truncate(header);
        bytes.extend_from_slice(&orig[orig_header..]);
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
        assert!(err.to_string().contains("shape"), "{err}");
    }
}
