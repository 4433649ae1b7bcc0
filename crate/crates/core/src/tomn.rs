//! `TOMN` tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"TOMN" | version: u16 | rank: u8 | dims: rank x u32 | payload
//! ```
//!
//! The payload is row-major. Float tensors store `f32`; masks store one `u8`
//! per element. The element type is recovered from the payload length.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TOMN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TomnData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomnTensor {
    pub dims: Vec<usize>,
    pub data: TomnData,
}

impl TomnTensor {
    pub fn f32(dims: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            dims,
            data: TomnData::F32(data),
        }
    }

    pub fn u8(dims: Vec<usize>, data: Vec<u8>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            dims,
            data: TomnData::U8(data),
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + 4 * self.numel());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match &self.data {
            TomnData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TomnData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 7 || &bytes[..4] != MAGIC {
            return Err("bad magic".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let rank = bytes[6] as usize;
        let header = 7 + 4 * rank;
        if bytes.len() < header {
            return Err("truncated header".into());
        }
        let dims: Vec<usize> = bytes[7..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let numel: usize = dims.iter().product();
        let payload = &bytes[header..];
        let data = if payload.len() == 4 * numel {
            TomnData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        } else if payload.len() == numel {
            TomnData::U8(payload.to_vec())
        } else {
            return Err(format!(
                "payload of {} bytes does not match {numel} elements",
                payload.len()
            ));
        };
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: path.to_path_buf(),
            },
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes).map_err(|message| Error::Tomn {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn into_f32(self, path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
        match self.data {
            TomnData::F32(v) => Ok((self.dims, v)),
            TomnData::U8(_) => Err(Error::Tomn {
                path: path.to_path_buf(),
                message: "expected f32 payload, found u8".into(),
            }),
        }
    }

    pub fn into_u8(self, path: &Path) -> Result<(Vec<usize>, Vec<u8>)> {
        match self.data {
            TomnData::U8(v) => Ok((self.dims, v)),
            TomnData::F32(_) => Err(Error::Tomn {
                path: path.to_path_buf(),
                message: "expected u8 payload, found f32".into(),
            }),
        }
    }
}
