//! Binary snapshot container.
//!
//! Layout (little-endian), 64-byte header:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `LERAYSNP`                        |
//! | 8      | 4    | version (u32, currently 1)              |
//! | 12     | 4    | dim (u32)                               |
//! | 16     | 4    | n (u32)                                 |
//! | 20     | 4    | components (u32)                        |
//! | 24     | 8    | box length L (f64)                      |
//! | 32     | 8    | alpha (f64)                             |
//! | 40     | 8    | time (f64)                              |
//! | 48     | 4    | rank code (u32: 0 scalar, 1 vector, 2 tensor) |
//! | 52     | 12   | reserved, zero                          |
//!
//! Payload: `components * n^dim` f64 physical-space values, component-major,
//! grid index row-major (last axis fastest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use leraylab::{Grid, Rank, SpectralField};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"LERAYSNP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub dim: usize,
    pub n: usize,
    pub components: usize,
    pub box_length: f64,
    pub alpha: f64,
    pub time: f64,
    pub rank: Rank,
}

fn rank_code(r: Rank) -> u32 {
    match r {
        Rank::Scalar => 0,
        Rank::Vector => 1,
        Rank::Tensor => 2,
    }
}

fn rank_from(code: u32) -> Option<Rank> {
    match code {
        0 => Some(Rank::Scalar),
        1 => Some(Rank::Vector),
        2 => Some(Rank::Tensor),
        _ => None,
    }
}

pub fn write_snapshot(path: &Path, field: &SpectralField, alpha: f64, time: f64) -> Result<(), SnapshotError> {
    let grid = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(grid.dim() as u32)?;
    w.write_u32::<LittleEndian>(grid.n() as u32)?;
    w.write_u32::<LittleEndian>(field.num_components() as u32)?;
    w.write_f64::<LittleEndian>(grid.box_length())?;
    w.write_f64::<LittleEndian>(alpha)?;
    w.write_f64::<LittleEndian>(time)?;
    w.write_u32::<LittleEndian>(rank_code(field.rank()))?;
    w.write_all(&[0u8; 12])?;
    for comp in field.physical() {
        for x in comp {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Corrupt(msg.into())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, SpectralField), SnapshotError> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    if len < HEADER_LEN as u64 {
        return Err(corrupt(format!("file has {len} bytes, shorter than the header")));
    }
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let components = r.read_u32::<LittleEndian>()? as usize;
    let box_length = r.read_f64::<LittleEndian>()?;
    let alpha = r.read_f64::<LittleEndian>()?;
    let time = r.read_f64::<LittleEndian>()?;
    let rank = rank_from(r.read_u32::<LittleEndian>()?).ok_or_else(|| corrupt("bad rank code"))?;
    let mut reserved = [0u8; 12];
    r.read_exact(&mut reserved)?;
    let grid = Grid::new(dim, n, box_length).map_err(|e| corrupt(e.to_string()))?;
    if rank.components(dim) != components {
        return Err(corrupt(format!("{components} components do not match a {} field in {dim}D", rank.name())));
    }
    let expected = HEADER_LEN as u64 + (components * grid.len() * 8) as u64;
    if len != expected {
        return Err(corrupt(format!("payload size mismatch: {len} bytes, expected {expected}")));
    }
    let mut values = vec![vec![0.0; grid.len()]; components];
    for comp in values.iter_mut() {
        r.read_f64_into::<LittleEndian>(comp)?;
    }
    if values.iter().flatten().any(|x| !x.is_finite()) {
        return Err(corrupt("non-finite payload value"));
    }
    let field = SpectralField::from_physical(&grid, rank, &values).map_err(|e| corrupt(e.to_string()))?;
    let header = SnapshotHeader {
        dim,
        n,
        components,
        box_length,
        alpha,
        time,
        rank,
    };
    Ok((header, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn round_trip_is_exact_in_physical_space() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(3, 8, 2.0 * PI).unwrap();
        let f = SpectralField::random(&g, Rank::Vector, 3);
        let p = dir.path().join("u.bin");
        write_snapshot(&p, &f, 0.9, 0.5).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), (HEADER_LEN + 3 * 512 * 8) as u64);
        let (h, back) = read_snapshot(&p).unwrap();
        assert_eq!((h.dim, h.n, h.components, h.alpha, h.time), (3, 8, 3, 0.9, 0.5));
        let (a, b) = (f.physical(), back.physical());
        let err = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = a.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(err <= 1e-15 * scale, "{err}");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 8, 2.0 * PI).unwrap();
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &SpectralField::random(&g, Rank::Scalar, 1), 1.0, 1.0).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_snapshot(&p), Err(SnapshotError::Corrupt(_))));
        std::fs::write(&p, b"not a snapshot at all, definitely not sixty-four bytes long......").unwrap();
        assert!(matches!(read_snapshot(&p), Err(SnapshotError::Corrupt(_))));
    }
}
