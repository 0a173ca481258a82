//! Binary container for checkpoints and simulator snapshots.
//!
//! Byte layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes   "CLRLCONT"
//! version   u32       1
//! count     u32       number of entries
//! entry * count:
//!   name_len  u16
//!   name      name_len bytes, UTF-8
//!   kind      u8        0 = float64 array, 1 = raw bytes
//!   ndim      u8
//!   dims      ndim * u64
//!   payload   float64: prod(dims) * 8 bytes (IEEE-754 LE, row-major)
//!             bytes:   dims[0] bytes
//! crc32     u32       CRC-32 (IEEE) of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use clothrl_core::approximator::NamedArray;

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 8] = b"CLRLCONT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    entries: Vec<(String, Payload)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn push_array(&mut self, a: NamedArray) {
        self.entries.push((a.name, Payload::F64 { shape: a.shape, data: a.data }));
    }

    pub fn push_arrays(&mut self, arrays: impl IntoIterator<Item = NamedArray>) {
        for a in arrays {
            self.push_array(a);
        }
    }

    pub fn push_vector(&mut self, name: &str, data: Vec<f64>) {
        self.entries.push((name.into(), Payload::F64 { shape: vec![data.len()], data }));
    }

    pub fn push_bytes(&mut self, name: &str, bytes: Vec<u8>) {
        self.entries.push((name.into(), Payload::Bytes(bytes)));
    }

    pub fn get(&self, name: &str) -> Option<&Payload> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        match self.get(name) {
            Some(Payload::F64 { data, .. }) => Ok(data),
            Some(Payload::Bytes(_)) => Err(HarnessError::Format(format!("entry {name} holds bytes, not floats"))),
            None => Err(HarnessError::Format(format!("missing entry {name}"))),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8]> {
        match self.get(name) {
            Some(Payload::Bytes(b)) => Ok(b),
            Some(Payload::F64 { .. }) => Err(HarnessError::Format(format!("entry {name} holds floats, not bytes"))),
            None => Err(HarnessError::Format(format!("missing entry {name}"))),
        }
    }

    /// Float arrays, as named arrays, in insertion order.
    pub fn arrays(&self) -> Vec<NamedArray> {
        self.entries
            .iter()
            .filter_map(|(n, p)| match p {
                Payload::F64 { shape, data } => Some(NamedArray {
                    name: n.clone(),
                    shape: shape.clone(),
                    data: data.clone(),
                }),
                Payload::Bytes(_) => None,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let count = u32::try_from(self.entries.len()).map_err(|_| HarnessError::Format("too many entries".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, payload) in &self.entries {
            let len = u16::try_from(name.len()).map_err(|_| HarnessError::Format(format!("entry name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match payload {
                Payload::F64 { shape, data } => {
                    if shape.iter().product::<usize>() != data.len() {
                        return Err(HarnessError::Format(format!("entry {name}: shape {shape:?} does not match {} values", data.len())));
                    }
                    let ndim = u8::try_from(shape.len()).map_err(|_| HarnessError::Format(format!("entry {name} has too many dimensions")))?;
                    out.push(0);
                    out.push(ndim);
                    for &d in shape {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for v in data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Payload::Bytes(b) => {
                    out.push(1);
                    out.push(1);
                    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
                    out.extend_from_slice(b);
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 12 {
            return Err(HarnessError::Format("container truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(HarnessError::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(HarnessError::Format("not a clothrl container".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(HarnessError::Format(format!("unsupported container version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| HarnessError::Format("entry name is not UTF-8".into()))?
                .to_owned();
            let kind = r.u8()?;
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(usize::try_from(r.u64()?).map_err(|_| HarnessError::Format("dimension overflow".into()))?);
            }
            let payload = match kind {
                0 => {
                    let n = shape
                        .iter()
                        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                        .ok_or_else(|| HarnessError::Format(format!("entry {name}: size overflow")))?;
                    let raw = r.take(n.checked_mul(8).ok_or_else(|| HarnessError::Format("size overflow".into()))?)?;
                    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    Payload::F64 { shape, data }
                }
                1 if ndim == 1 => Payload::Bytes(r.take(shape[0])?.to_vec()),
                _ => return Err(HarnessError::Format(format!("entry {name}: unknown kind {kind}"))),
            };
            entries.push((name, payload));
        }
        if r.pos != body.len() {
            return Err(HarnessError::Format("trailing bytes after last entry".into()));
        }
        Ok(Self { entries })
    }

    /// Writes atomically: a temporary sibling file is renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
        f.write_all(&bytes).and_then(|_| f.sync_all()).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| HarnessError::Format("container truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
