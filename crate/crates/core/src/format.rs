//! Fixed 64-byte little-endian header shared by the block-style binary files
//! (`SNPB` snapshot blocks, `SUBD` subdomain files, `CONS` consolidated time
//! steps, `RMAP` remapped blocks).
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic                                   |
//! | 4      | 4    | u32 version (= 1)                       |
//! | 8      | 1    | u8 dtype code (1 = f32, 2 = f64)        |
//! | 9      | 4    | u32 block_id                            |
//! | 13     | 8    | u64 row_count                           |
//! | 21     | 8    | u64 n_cols                              |
//! | 29     | 8    | u64 row_offset                          |
//! | 37     | 16   | 2 x f64 y-range                         |
//! | 53     | 8    | 2 x u32 extra (RMAP: n_steps, n_vars)   |
//! | 61     | 3    | zero padding                            |

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 64;
pub const FORMAT_VERSION: u32 = 1;

pub const MAGIC_BLOCK: [u8; 4] = *b"SNPB";
pub const MAGIC_SUBDOMAIN: [u8; 4] = *b"SUBD";
pub const MAGIC_CONSOLIDATED: [u8; 4] = *b"CONS";
pub const MAGIC_REMAP: [u8; 4] = *b"RMAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Dtype::F32),
            2 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(Dtype::F32),
            "f64" => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockHeader {
    pub magic: [u8; 4],
    pub version: u32,
    pub dtype: Dtype,
    pub block_id: u32,
    pub row_count: u64,
    pub n_cols: u64,
    pub row_offset: u64,
    pub y_range: (f64, f64),
    pub extra: [u32; 2],
}

impl BlockHeader {
    pub fn new(magic: [u8; 4], dtype: Dtype) -> Self {
        Self {
            magic,
            version: FORMAT_VERSION,
            dtype,
            block_id: 0,
            row_count: 0,
            n_cols: 0,
            row_offset: 0,
            y_range: (0.0, 0.0),
            extra: [0, 0],
        }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8] = self.dtype.code();
        b[9..13].copy_from_slice(&self.block_id.to_le_bytes());
        b[13..21].copy_from_slice(&self.row_count.to_le_bytes());
        b[21..29].copy_from_slice(&self.n_cols.to_le_bytes());
        b[29..37].copy_from_slice(&self.row_offset.to_le_bytes());
        b[37..45].copy_from_slice(&self.y_range.0.to_le_bytes());
        b[45..53].copy_from_slice(&self.y_range.1.to_le_bytes());
        b[53..57].copy_from_slice(&self.extra[0].to_le_bytes());
        b[57..61].copy_from_slice(&self.extra[1].to_le_bytes());
        b
    }

    pub fn decode(b: &[u8; HEADER_LEN], expected_magic: [u8; 4], path: &Path) -> Result<Self> {
        if b[0..4] != expected_magic {
            return Err(Error::format(
                path,
                None,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&b[0..4]),
                    String::from_utf8_lossy(&expected_magic)
                ),
            ));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        let block_id = u32_at(9);
        if version != FORMAT_VERSION {
            return Err(Error::format(path, Some(block_id), format!("unsupported version {version}")));
        }
        let dtype = Dtype::from_code(b[8])
            .ok_or_else(|| Error::format(path, Some(block_id), format!("unknown dtype code {}", b[8])))?;
        Ok(Self {
            magic: expected_magic,
            version,
            dtype,
            block_id,
            row_count: u64_at(13),
            n_cols: u64_at(21),
            row_offset: u64_at(29),
            y_range: (f64_at(37), f64_at(45)),
            extra: [u32_at(53), u32_at(57)],
        })
    }

    pub fn payload_len(&self) -> u64 {
        self.row_count * self.n_cols * self.dtype.width() as u64
    }

    pub fn read_from(reader: &mut impl Read, expected_magic: [u8; 4], path: &Path) -> Result<Self> {
        let mut b = [0u8; HEADER_LEN];
        reader
            .read_exact(&mut b)
            .map_err(|_| Error::format(path, None, "file shorter than 64-byte header"))?;
        Self::decode(&b, expected_magic, path)
    }
}

/// Append `values` in the given dtype, little-endian.
pub fn write_values(w: &mut impl Write, dtype: Dtype, values: &[f64]) -> std::io::Result<()> {
    match dtype {
        Dtype::F64 => {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in values {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn decode_values(dtype: Dtype, bytes: &[u8], out: &mut [f64]) {
    match dtype {
        Dtype::F64 => {
            for (o, c) in out.iter_mut().zip(bytes.chunks_exact(8)) {
                *o = f64::from_le_bytes(c.try_into().unwrap());
            }
        }
        Dtype::F32 => {
            for (o, c) in out.iter_mut().zip(bytes.chunks_exact(4)) {
                *o = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
        }
    }
}

/// Read exactly `out.len()` values.
pub fn read_values(r: &mut impl Read, dtype: Dtype, out: &mut [f64], scratch: &mut Vec<u8>) -> std::io::Result<()> {
    scratch.resize(out.len() * dtype.width(), 0);
    r.read_exact(scratch)?;
    decode_values(dtype, scratch, out);
    Ok(())
}
