//! Binary checkpoint container.
//!
//! Layout: the line `ACTORSCENE-CHECKPOINT`, one line of JSON header, then
//! every tensor as little-endian `f64` in header order. The header lists
//! named sections, each with `(name, shape, offset, len)` per tensor, where
//! `offset` and `len` count bytes into the blob area. Serialization is
//! deterministic, so equal contents give equal bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const MAGIC: &str = "ACTORSCENE-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    /// Echo of the configuration that produced the checkpoint.
    pub config: Value,
    /// Free-form bookkeeping (counters, metrics).
    pub meta: Value,
    pub sections: Vec<Section>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: Value,
    pub meta: Value,
    sections: Vec<(String, Vec<(String, Tensor)>)>,
}

impl Checkpoint {
    pub fn new(config: Value, meta: Value) -> Self {
        Checkpoint {
            config,
            meta,
            sections: Vec::new(),
        }
    }

    pub fn add_section(&mut self, name: &str, tensors: Vec<(String, Tensor)>) -> Result<()> {
        if self.sections.iter().any(|(n, _)| n == name) {
            return Err(Error::Contract(format!("duplicate checkpoint section `{name}`")));
        }
        self.sections.push((name.to_string(), tensors));
        Ok(())
    }

    /// Every parameter of `store`, in registration order.
    pub fn add_store(&mut self, name: &str, store: &ParamStore) -> Result<()> {
        let tensors = store.params().iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        self.add_section(name, tensors)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn section(&self, name: &str) -> Result<&[(String, Tensor)]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")))
    }

    pub fn section_names(&self) -> Vec<&str> {
        self.sections.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Copies a section into `store`, requiring identical names, order and
    /// shapes.
    pub fn load_store(&self, name: &str, store: &mut ParamStore) -> Result<()> {
        let tensors = self.section(name)?;
        if tensors.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "section `{name}` holds {} tensors, model expects {}",
                tensors.len(),
                store.len()
            )));
        }
        for ((tn, t), p) in tensors.iter().zip(store.params_mut()?) {
            if *tn != p.name || t.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{tn}` {:?} does not fit parameter `{}` {:?}",
                    t.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut sections = Vec::with_capacity(self.sections.len());
        let mut blob: Vec<u8> = Vec::new();
        for (name, tensors) in &self.sections {
            let mut entries = Vec::with_capacity(tensors.len());
            for (tn, t) in tensors {
                let offset = blob.len();
                for v in t.data() {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
                entries.push(TensorEntry {
                    name: tn.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    len: blob.len() - offset,
                });
            }
            sections.push(Section {
                name: name.clone(),
                tensors: entries,
            });
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            meta: self.meta.clone(),
            sections,
        };
        let mut out = Vec::with_capacity(blob.len() + 4096);
        out.extend_from_slice(MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(serde_json::to_string(&header)?.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let magic_end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing magic line"))?;
        if &bytes[..magic_end] != MAGIC.as_bytes() {
            return Err(bad("not an actorscene checkpoint"));
        }
        let rest = &bytes[magic_end + 1..];
        let header_end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header: Header = serde_json::from_slice(&rest[..header_end])?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let blob = &rest[header_end + 1..];
        let mut expected = 0usize;
        let mut sections = Vec::with_capacity(header.sections.len());
        for s in header.sections {
            let mut tensors = Vec::with_capacity(s.tensors.len());
            for e in s.tensors {
                let numel: usize = e.shape.iter().product();
                if e.offset != expected || e.len != numel * 8 || e.offset + e.len > blob.len() {
                    return Err(Error::Checkpoint(format!("tensor `{}` has an inconsistent extent", e.name)));
                }
                expected += e.len;
                let data = blob[e.offset..e.offset + e.len]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                tensors.push((e.name, Tensor::new(e.shape, data)?));
            }
            sections.push((s.name, tensors));
        }
        if expected != blob.len() {
            return Err(bad("trailing bytes after the last tensor"));
        }
        Ok(Checkpoint {
            config: header.config,
            meta: header.meta,
            sections,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        // write-then-rename so a crash never leaves a truncated checkpoint
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use serde_json::json;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new(json!({"embed_dim": 8}), json!({"epoch": 3, "loss": 0.125}));
        let r = RngStream::new(1, 2);
        c.add_section("model", vec![("a".into(), r.uniform_tensor(&[2, 3], -1.0, 1.0)), ("b".into(), Tensor::scalar(f64::MIN_POSITIVE))])
            .unwrap();
        c.add_section("aggregation", vec![("weights".into(), r.split(1).uniform_tensor(&[13, 12], -1.0, 1.0))])
            .unwrap();
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.section_names(), vec!["model", "aggregation"]);
    }

    #[test]
    fn header_is_a_single_json_line() {
        let bytes = sample().to_bytes().unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let mut lines = text.split('\n');
        assert_eq!(lines.next(), Some(MAGIC));
        let h: Header = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(h.sections[0].tensors[1].offset, 48);
        assert_eq!(h.sections[0].tensors[1].len, 8);
        assert_eq!(h.sections[1].tensors[0].offset, 56);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(matches!(Checkpoint::from_bytes(b"hello\n{}\n"), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn store_round_trip_and_mismatch() {
        let mut s = ParamStore::new();
        s.register("x", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        s.register("y", Tensor::zeros(&[2, 2])).unwrap();
        let mut c = Checkpoint::new(Value::Null, Value::Null);
        c.add_store("model", &s).unwrap();
        let mut t = s.clone();
        t.params_mut().unwrap()[0].value = Tensor::vector(vec![9.0, 9.0]).unwrap();
        c.load_store("model", &mut t).unwrap();
        assert_eq!(t.content_hash(), s.content_hash());
        let mut other = ParamStore::new();
        other.register("x", Tensor::zeros(&[3])).unwrap();
        other.register("y", Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(c.load_store("model", &mut other), Err(Error::Checkpoint(_))));
        assert!(c.load_store("missing", &mut t).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ckpt");
        sample().write(&p).unwrap();
        assert_eq!(Checkpoint::read(&p).unwrap(), sample());
    }
}
