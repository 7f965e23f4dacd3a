//! Flat little-endian tensor container shared by dataset caches, memory
//! snapshots and model checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"SVRB"  u32 version  u32 meta_len  meta_len bytes of JSON metadata
//! u32 n_blocks
//! per block: u32 name_len, name (UTF-8), u8 dtype (4 = f32, 8 = f64),
//!            u32 ndim, ndim x u64 dims, prod(dims) little-endian values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SVRB";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<usize>,
    /// Values widened to f64. For `F32` blocks these are exactly representable as f32.
    pub values: Vec<f64>,
}

impl Block {
    pub fn f32(name: impl Into<String>, dims: Vec<usize>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dtype: DType::F32,
            dims,
            values,
        }
    }

    pub fn f64(name: impl Into<String>, dims: Vec<usize>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dtype: DType::F64,
            dims,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta)?;
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            let expected: usize = b.dims.iter().product();
            if expected != b.values.len() {
                return Err(Error::Shape(format!(
                    "block {} has dims {:?} but {} values",
                    b.name,
                    b.dims,
                    b.values.len()
                )));
            }
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(b.dtype.code());
            out.extend_from_slice(&(b.dims.len() as u32).to_le_bytes());
            for &d in &b.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match b.dtype {
                DType::F32 => b
                    .values
                    .iter()
                    .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                DType::F64 => b
                    .values
                    .iter()
                    .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let meta_len = r.u32()? as usize;
        let meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| e.to_string())?;
        let n_blocks = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| e.to_string())?;
            let dtype = match r.take(1)?[0] {
                4 => DType::F32,
                8 => DType::F64,
                other => return Err(format!("unknown dtype code {other}")),
            };
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let count: usize = dims.iter().product();
            let values = match dtype {
                DType::F32 => r
                    .take(count * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                DType::F64 => r
                    .take(count * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            blocks.push(Block {
                name,
                dtype,
                dims,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Container { meta, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err("unexpected end of file".into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_input_is_rejected() {
        let c = Container {
            meta: serde_json::json!({"k": 1}),
            blocks: vec![Block::f32("x", vec![2, 2], vec![1.0, 2.0, 3.0, 4.5])],
        };
        let bytes = c.to_bytes().unwrap();
        assert_eq!(Container::from_bytes(&bytes).unwrap(), c);
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Container::from_bytes(b"NOPE").is_err());
    }

    #[test]
    fn dims_must_match_values() {
        let c = Container {
            meta: serde_json::Value::Null,
            blocks: vec![Block::f64("x", vec![3], vec![1.0])],
        };
        assert!(c.to_bytes().is_err());
    }
}
