//! Parameter checkpoints.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! b"ALTN1"                      magic
//! [u8; 32]                      SHA-256 of the model spec descriptor
//! u32                           tensor count
//! repeated:
//!   u32 name_len, name (UTF-8)
//!   u32 ndim, u64 × ndim dims
//!   f64 × numel payload
//! ```
//!
//! The text export is one header line `ALTN1 <digest-hex>` followed by one
//! line per tensor: `name<TAB>d0xd1<TAB>v0 v1 ...`. Values use Rust's
//! shortest round-trip formatting, so parsing the text back is lossless.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};

pub const MAGIC: &[u8; 5] = b"ALTN1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub digest: [u8; 32],
    pub tensors: Vec<(String, Tensor)>,
}

pub fn spec_digest(descriptor: &str) -> [u8; 32] {
    Sha256::digest(descriptor.as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(Error::format("checkpoint", "digest must be 64 hex characters"));
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(descriptor: &str, tensors: Vec<(String, Tensor)>) -> Self {
        Self {
            digest: spec_digest(descriptor),
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let digest: [u8; 32] = r.take(32)?.try_into().unwrap();
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::format("checkpoint", e.to_string()))?
                .to_owned();
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = r
                .take(numel.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "overflow"))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != buf.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self { digest, tensors })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("ALTN1 {}\n", hex(&self.digest));
        for (name, t) in &self.tensors {
            let shape: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
            let values: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&format!("{name}\t{}\t{}\n", shape.join("x"), values.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("checkpoint text", "empty"))?;
        let digest = match header.split_once(' ') {
            Some(("ALTN1", d)) => unhex(d.trim())?,
            _ => return Err(Error::format("checkpoint text", "bad header")),
        };
        let mut tensors = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = |m: &str| Error::format("checkpoint text", format!("line {}: {m}", i + 2));
            let mut parts = line.split('\t');
            let (Some(name), Some(shape), values) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("expected name, shape and values"));
            };
            let shape = shape
                .split('x')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|e| bad(&e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let data = values
                .unwrap_or("")
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| bad(&e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            tensors.push((name.to_owned(), Tensor::new(shape, data)?));
        }
        Ok(Self { digest, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}
