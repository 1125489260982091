// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `OCKP` checkpoint container.
//!
//! Layout (little-endian): magic `OCKP`, version `u32 = 1`, section count
//! `u32`, then per section: name length `u16`, UTF-8 name, rank `u8`,
//! `rank` dimensions as `u32`, and the `f32` payload. Integer metadata is
//! stored as raw 32-bit words inside an `f32` payload (see
//! [`Section::words`]) so the container stays a single element type.

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor2D;
use crate::binio::{read_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Section {
    pub fn tensor(name: impl Into<String>, t: &Tensor2D<f32>) -> Section {
        Section {
            name: name.into(),
            dims: vec![t.rows() as u32, t.cols() as u32],
            data: t.data().to_vec(),
        }
    }

    pub fn vector(name: impl Into<String>, v: &[f32]) -> Section {
        Section {
            name: name.into(),
            dims: vec![v.len() as u32],
            data: v.to_vec(),
        }
    }

    /// A rank-1 section holding raw `u32` words bit-for-bit.
    pub fn words(name: impl Into<String>, words: &[u32]) -> Section {
        Section {
            name: name.into(),
            dims: vec![words.len() as u32],
            data: words.iter().map(|&w| f32::from_bits(w)).collect(),
        }
    }

    pub fn as_words(&self) -> Vec<u32> {
        self.data.iter().map(|x| x.to_bits()).collect()
    }

    pub fn to_tensor(&self) -> Result<Tensor2D<f32>> {
        let (r, c) = match self.dims.as_slice() {
            [n] => (1, *n as usize),
            [r, c] => (*r as usize, *c as usize),
            other => {
                return Err(Error::Format(format!(
                    "section {} has rank {}, expected 1 or 2",
                    self.name,
                    other.len()
                )))
            }
        };
        Tensor2D::from_vec(r, c, self.data.clone())
    }
}

/// Splits a `u64` into low and high words.
pub fn u64_words(v: u64) -> [u32; 2] {
    [v as u32, (v >> 32) as u32]
}

pub fn words_u64(lo: u32, hi: u32) -> u64 {
    u64::from(lo) | (u64::from(hi) << 32)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn push(&mut self, s: Section) -> &mut Self {
        self.sections.push(s);
        self
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no section {name}")))
    }

    pub fn from_params(params: &ParamStore<f32>) -> Checkpoint {
        Checkpoint {
            sections: params
                .iter()
                .map(|p| Section::tensor(p.name.clone(), &p.value))
                .collect(),
        }
    }

    /// Loads every section named like a parameter in `template` into a
    /// copy of it; shapes must match.
    pub fn restore_params(&self, template: &ParamStore<f32>) -> Result<ParamStore<f32>> {
        let mut out = template.clone();
        for p in out.iter_mut() {
            let t = self.section(&p.name)?.to_tensor()?;
            if t.shape() != p.value.shape() {
                return Err(Error::shape(format!(
                    "checkpoint section {} is {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t;
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC).u32(VERSION).u32(self.sections.len() as u32);
        for s in &self.sections {
            w.u16(s.name.len() as u16)
                .bytes(s.name.as_bytes())
                .u8(s.dims.len() as u8);
            for &d in &s.dims {
                w.u32(d);
            }
            w.f32s(&s.data);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = ByteReader::new(bytes, "checkpoint");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let count = r.u32()?;
        let mut sections = Vec::with_capacity(count.min(4096) as usize);
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Format(format!("section name: {e}")))?
                .to_string();
            let rank = r.u8()?;
            let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let n = n.ok_or_else(|| Error::Format(format!("section {name} is too large")))?;
            let data = r.f32s(n)?;
            sections.push(Section { name, dims, data });
        }
        r.finish()?;
        Ok(Checkpoint { sections })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::binio::write_file(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_metadata() {
        let mut c = Checkpoint::new();
        let t = Tensor2D::from_vec(2, 2, vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE]).unwrap();
        c.push(Section::tensor("w", &t));
        let seed = 0xDEAD_BEEF_0123_4567u64;
        let [lo, hi] = u64_words(seed);
        c.push(Section::words("meta", &[7, lo, hi, 0x7FC0_0001]));
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.section("w").unwrap().to_tensor().unwrap(), t);
        let w = back.section("meta").unwrap().as_words();
        assert_eq!(words_u64(w[1], w[2]), seed);
        assert_eq!(w[3], 0x7FC0_0001);
    }

    #[test]
    fn corrupt_files() {
        let mut c = Checkpoint::new();
        c.push(Section::vector("b", &[1.0, 2.0]));
        let mut bytes = c.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
        let bytes = c.to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedFile(_))
        ));
    }
}
