//! Binary checkpoint container.
//!
//! ```text
//! magic "ASETCKPT" | u32 version
//! u32 len | architecture JSON (len bytes)
//! u32 count
//! count × { u32 name_len | name | u8 group tag | u32 rank | rank × u32 dim | numel × f64 }
//! ```
//!
//! All integers and floats little-endian. Optimizer state is not stored.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{ArchitectureConfig, Group, ParamEntry, ParameterStore};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ASETCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParameterStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let arch = serde_json::to_vec(store.arch())?;
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(&arch);
    out.extend_from_slice(&(store.entries().len() as u32).to_le_bytes());
    for e in store.entries() {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.group.tag());
        out.extend_from_slice(&(e.value.shape().len() as u32).to_le_bytes());
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("unexpected end of data at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<ParameterStore> {
    let bad = |detail: String| Error::format("checkpoint", origin, detail);
    let mut r = Reader { bytes, pos: 0 };
    if r.bytes(8).map_err(bad)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32().map_err(bad)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let arch_len = r.u32().map_err(bad)? as usize;
    let arch: ArchitectureConfig = serde_json::from_slice(r.bytes(arch_len).map_err(bad)?)?;
    let count = r.u32().map_err(bad)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32().map_err(bad)? as usize;
        let name = std::str::from_utf8(r.bytes(name_len).map_err(bad)?)
            .map_err(|e| bad(e.to_string()))?
            .to_string();
        let tag = r.bytes(1).map_err(bad)?[0];
        let group = Group::from_tag(tag).ok_or_else(|| bad(format!("unknown group tag {tag}")))?;
        let rank = r.u32().map_err(bad)? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>().map_err(bad)?;
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| r.f64()).collect::<std::result::Result<Vec<_>, _>>().map_err(bad)?;
        let value = Tensor::new(shape, data)?;
        entries.push(ParamEntry {
            name,
            group,
            m: Tensor::zeros(value.shape()),
            v: Tensor::zeros(value.shape()),
            value,
        });
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    arch.validate()?;
    ParameterStore::from_entries(arch, entries)
}

pub fn save_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(store)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> ArchitectureConfig {
        ArchitectureConfig {
            channels: 2,
            window: 40,
            conv_filters: vec![3, 3],
            dense_hidden: vec![5],
            ..ArchitectureConfig::default()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let store = ParameterStore::init(&arch(), &Group::ALL, 17).unwrap();
        let bytes = encode_checkpoint(&store).unwrap();
        let back = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, store);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn group_subset_survives() {
        let store = ParameterStore::init(&arch(), &[Group::ThetaEnc, Group::Omega], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&store, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert!(!back.has_group(Group::ThetaDec));
        assert!(back.entries().iter().all(|e| !e.name.starts_with("dec.")));
    }

    #[test]
    fn corruption_detected() {
        let store = ParameterStore::init(&arch(), &Group::ALL, 1).unwrap();
        let mut bytes = encode_checkpoint(&store).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3], Path::new("m")).is_err());
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes, Path::new("m")).is_err());
    }
}
