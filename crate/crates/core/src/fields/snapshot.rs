//! Binary field snapshots (`.nlsf`).
//!
//! Little-endian layout: magic `"NLSF"`, `version: u32`, `d: u32`, `n: u32`,
//! `l: f64`, `t: f64`, then `n^d` interleaved `(re: f64, im: f64)` samples.
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use super::field::ComplexField;
use super::grid::Grid;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NLSF";
const VERSION: u32 = 1;

/// Raw snapshot record; `n` is not required to be a grid-admissible size,
/// which lets the same container hold radial tables.
pub struct SnapshotRecord {
    pub d: u32,
    pub n: u32,
    pub l: f64,
    pub t: f64,
    pub values: Vec<Complex64>,
}

pub fn write_record(path: &Path, rec: &SnapshotRecord) -> Result<()> {
    let expected = (rec.n as usize).pow(rec.d);
    if rec.values.len() != expected {
        return Err(Error::SnapshotFormat(format!(
            "value count {} does not match n^d = {}",
            rec.values.len(),
            expected
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(rec.d)?;
    w.write_u32::<LittleEndian>(rec.n)?;
    w.write_f64::<LittleEndian>(rec.l)?;
    w.write_f64::<LittleEndian>(rec.t)?;
    for z in &rec.values {
        w.write_f64::<LittleEndian>(z.re)?;
        w.write_f64::<LittleEndian>(z.im)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<SnapshotRecord> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::SnapshotFormat(format!(
            "bad magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::SnapshotFormat(format!("unknown version {version}")));
    }
    let d = r.read_u32::<LittleEndian>()?;
    let n = r.read_u32::<LittleEndian>()?;
    let l = r.read_f64::<LittleEndian>()?;
    let t = r.read_f64::<LittleEndian>()?;
    let count = (n as usize).pow(d);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        values.push(Complex64::new(re, im));
    }
    Ok(SnapshotRecord { d, n, l, t, values })
}

/// Persist a field together with its time stamp.
pub fn save_field(path: &Path, field: &ComplexField, t: f64) -> Result<()> {
    let g = field.grid();
    write_record(
        path,
        &SnapshotRecord {
            d: g.dim() as u32,
            n: g.points_per_axis() as u32,
            l: g.half_width(),
            t,
            values: field.values().to_vec(),
        },
    )
}

/// Load a field snapshot, rebuilding its grid.
pub fn load_field(path: &Path) -> Result<(ComplexField, f64)> {
    let rec = read_record(path)?;
    let grid = Grid::new(rec.d as usize, rec.l, rec.n as usize)?;
    let field = field_from_record(&grid, rec.values)?;
    Ok((field, rec.t))
}

fn field_from_record(grid: &Arc<Grid>, values: Vec<Complex64>) -> Result<ComplexField> {
    ComplexField::from_values(grid, values)
}
