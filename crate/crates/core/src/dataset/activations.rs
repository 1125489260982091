// SPDX-License-Identifier: MIT OR Apache-2.0

//! Residual-stream activation dumps in the `OACT` format.
//!
//! Layout (little-endian): magic `OACT`, version `u32 = 1`, layer `u16`,
//! row count `u64`, column count `u32`, the row-major `f32` matrix, then
//! one `(game u32, timestep u16)` pair per row.

use std::path::Path;

use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::diffcompute::Tensor2D;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OACT";
const VERSION: u32 = 1;

/// Where an activation row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowRef {
    pub game: u32,
    pub timestep: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub layer: u16,
    pub vectors: Tensor2D<f32>,
    pub alignment: Vec<RowRef>,
}

impl ActivationSet {
    pub fn new(layer: u16, vectors: Tensor2D<f32>, alignment: Vec<RowRef>) -> Result<Self> {
        if vectors.rows() != alignment.len() {
            return Err(Error::LengthMismatch {
                left: vectors.rows(),
                right: alignment.len(),
            });
        }
        Ok(ActivationSet {
            layer,
            vectors,
            alignment,
        })
    }

    pub fn rows(&self) -> usize {
        self.vectors.rows()
    }

    pub fn cols(&self) -> usize {
        self.vectors.cols()
    }

    /// The subset of rows whose game satisfies `keep`, order preserved.
    pub fn filter_games(&self, keep: impl Fn(u32) -> bool) -> ActivationSet {
        let idx: Vec<usize> = (0..self.rows())
            .filter(|&i| keep(self.alignment[i].game))
            .collect();
        ActivationSet {
            layer: self.layer,
            vectors: self.vectors.select_rows(&idx),
            alignment: idx.iter().map(|&i| self.alignment[i]).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC)
            .u32(VERSION)
            .u16(self.layer)
            .u64(self.rows() as u64)
            .u32(self.cols() as u32)
            .f32s(self.vectors.data());
        for r in &self.alignment {
            w.u32(r.game).u16(r.timestep);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ActivationSet> {
        let mut r = ByteReader::new(bytes, "activations");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let layer = r.u16()?;
        let rows = r.u64()?;
        let cols = r.u32()? as u64;
        // Payload size implied by the header must match what is on disk.
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(rows.checked_mul(6)?));
        if expected != Some(r.remaining() as u64) {
            return Err(Error::TruncatedFile(format!(
                "activations: header says {rows}x{cols}, payload has {} bytes",
                r.remaining()
            )));
        }
        let (rows, cols) = (rows as usize, cols as usize);
        let data = r.f32s(rows * cols)?;
        let mut alignment = Vec::with_capacity(rows);
        for _ in 0..rows {
            alignment.push(RowRef {
                game: r.u32()?,
                timestep: r.u16()?,
            });
        }
        r.finish()?;
        ActivationSet::new(layer, Tensor2D::from_vec(rows, cols, data)?, alignment)
    }
}

pub fn write_activations(set: &ActivationSet, path: &Path) -> Result<()> {
    crate::binio::write_file(path, &set.to_bytes())
}

pub fn read_activations(path: &Path) -> Result<ActivationSet> {
    ActivationSet::from_bytes(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ActivationSet {
        let v = Tensor2D::from_fn(3, 4, |r, c| (r as f32 - 1.5) * (c as f32 + 0.1));
        let a = (0..3)
            .map(|i| RowRef {
                game: i / 2,
                timestep: i as u16,
            })
            .collect();
        ActivationSet::new(2, v, a).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        assert_eq!(ActivationSet::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn corrupt_magic() {
        let mut b = sample().to_bytes();
        b[1] = b'X';
        assert!(matches!(ActivationSet::from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn header_payload_disagreement() {
        let mut b = sample().to_bytes();
        // Bump the row count from 3 to 4.
        b[10] = 4;
        assert!(matches!(
            ActivationSet::from_bytes(&b),
            Err(Error::TruncatedFile(_))
        ));
        let b = sample().to_bytes();
        assert!(matches!(
            ActivationSet::from_bytes(&b[..b.len() - 2]),
            Err(Error::TruncatedFile(_))
        ));
    }

    #[test]
    fn misaligned_construction() {
        let v = Tensor2D::zeros(2, 2);
        assert!(ActivationSet::new(1, v, vec![]).is_err());
    }
}
