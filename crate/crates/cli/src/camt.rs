//! CAMT: a minimal little-endian dense tensor container.
//!
//! Layout: `b"CAMT"`, version `u16`, dtype `u8`, rank `u8`, `rank` dims as
//! `u32`, then the row-major payload. Dtype 0 is float32, 1 is float64.

use std::path::Path;

use thiserror::Error;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"CAMT";
pub const VERSION: u16 = 1;
const HEADER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CamtError {
    #[error("not a CAMT file (bad magic)")]
    BadMagic,
    #[error("unsupported CAMT version {0}")]
    Version(u16),
    #[error("unknown dtype code {0}")]
    Dtype(u8),
    #[error("file truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("payload has {got} values but dims {dims:?} need {need}")]
    Shape {
        dims: Vec<usize>,
        need: usize,
        got: usize,
    },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("rank {0} exceeds 255 or a dimension exceeds u32")]
    TooLarge(usize),
}

/// A dense tensor. Values are held as `f64`; `dtype` decides the stored width.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    /// Float32 tensors reject values that overflow to infinity when narrowed.
    pub fn new(dtype: Dtype, dims: Vec<usize>, data: Vec<f64>) -> Result<Self, CamtError> {
        if dims.len() > 255 || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(CamtError::TooLarge(dims.len()));
        }
        let need: usize = dims.iter().product();
        if need != data.len() {
            return Err(CamtError::Shape {
                dims,
                need,
                got: data.len(),
            });
        }
        let bad = match dtype {
            Dtype::F32 => data.iter().position(|&v| !(v as f32).is_finite()),
            Dtype::F64 => data.iter().position(|v| !v.is_finite()),
        };
        if let Some(i) = bad {
            return Err(CamtError::NonFinite(i));
        }
        Ok(Self { dtype, dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(HEADER + 4 * self.dims.len() + self.dtype.size() * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            match self.dtype {
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CamtError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(CamtError::Truncated {
                    need: n,
                    have: bytes.len(),
                })
            } else {
                Ok(())
            }
        };
        need(HEADER)?;
        if &bytes[..4] != MAGIC {
            return Err(CamtError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(CamtError::Version(version));
        }
        let dtype = Dtype::from_code(bytes[6]).ok_or(CamtError::Dtype(bytes[6]))?;
        let rank = bytes[7] as usize;
        need(HEADER + 4 * rank)?;
        let dims: Vec<usize> = bytes[HEADER..HEADER + 4 * rank]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or(CamtError::TooLarge(rank))?;
        let start = HEADER + 4 * rank;
        let end = count
            .checked_mul(dtype.size())
            .and_then(|n| n.checked_add(start))
            .ok_or(CamtError::TooLarge(rank))?;
        need(end)?;
        if bytes.len() > end {
            return Err(CamtError::Trailing(bytes.len() - end));
        }
        let payload = &bytes[start..end];
        let data: Vec<f64> = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CamtError::NonFinite(i));
        }
        Ok(Self { dtype, dims, data })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::read(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| CliError::read(path, e))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::write(path, e))
    }
}
