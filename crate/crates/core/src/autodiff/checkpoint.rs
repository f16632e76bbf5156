//! Binary parameter container.
//!
//! Layout (little endian):
//!
//! | field        | size                   |
//! |--------------|------------------------|
//! | magic `RKCK` | 4                      |
//! | version      | u16 (= 1)              |
//! | reserved     | u16                    |
//! | header len   | u32                    |
//! | header       | UTF-8 `key=value` lines|
//! | tensor count | u32                    |
//!
//! then per tensor: name length (u16), name bytes, rank (u8), dims (u32
//! each), and `product(dims)` f32 values.

use std::collections::BTreeMap;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RKCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("checkpoint", reason)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut header = String::new();
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(bad(format!("header entry `{k}` cannot be encoded")));
            }
            header.push_str(&format!("{k}={v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len()).map_err(|_| bad("tensor name too long"))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::try_from(t.shape().len()).map_err(|_| bad("tensor rank too large"))?);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        r.u16()?;
        let header_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(header_len)?).map_err(|_| bad("header is not UTF-8"))?;
        let mut header = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad header line `{line}`")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| bad("tensor name is not UTF-8"))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| bad("tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { header, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
