//! Bit-exact file formats.
//!
//! Fields use the DDF1 binary layout: 4 ASCII magic bytes `DDF1`, u32 LE rows,
//! u32 LE cols, u8 boundary code (0 = Dirichlet, 1 = Periodic), 3 zero padding
//! bytes, then rows*cols f64 LE values in row-major order (row index = y).
//! Readers reject wrong magic, bad boundary codes, and truncated payloads.
//!
//! Observation sets and model manifests are JSON; see the owning modules for
//! the schemas.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{DdisError, Result};
use crate::grf::ObservationSet;
use crate::grid::{Boundary, Field, GridSpec};

const MAGIC: &[u8; 4] = b"DDF1";

/// Writes a field in DDF1 format.
pub fn write_field(path: &Path, f: &Field) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field_to(&mut w, f)
}

pub fn write_field_to<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    let r = f.grid().resolution() as u32;
    w.write_all(MAGIC)?;
    w.write_all(&r.to_le_bytes())?;
    w.write_all(&r.to_le_bytes())?;
    let code: u8 = match f.grid().boundary() {
        Boundary::Dirichlet => 0,
        Boundary::Periodic => 1,
    };
    w.write_all(&[code, 0, 0, 0])?;
    for v in f.values().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a DDF1 field file.
pub fn read_field(path: &Path) -> Result<Field> {
    let file = fs::File::open(path)?;
    let mut r = std::io::BufReader::new(file);
    read_field_from(&mut r)
}

pub fn read_field_from<R: Read>(r: &mut R) -> Result<Field> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| DdisError::Format("truncated DDF1 header".into()))?;
    if &magic != MAGIC {
        return Err(DdisError::Format(format!(
            "bad magic {:?}, expected DDF1",
            magic
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| DdisError::Format("truncated DDF1 header".into()))?;
    let rows = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)
        .map_err(|_| DdisError::Format("truncated DDF1 header".into()))?;
    let cols = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)
        .map_err(|_| DdisError::Format("truncated DDF1 header".into()))?;
    let boundary = match buf4[0] {
        0 => Boundary::Dirichlet,
        1 => Boundary::Periodic,
        c => return Err(DdisError::Format(format!("unknown boundary code {c}"))),
    };
    if rows != cols {
        return Err(DdisError::Format(format!(
            "non-square field {rows}x{cols}"
        )));
    }
    let mut values = Array2::zeros((rows, cols));
    let mut buf8 = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf8)
            .map_err(|_| DdisError::Format("truncated DDF1 payload".into()))?;
        *v = f64::from_le_bytes(buf8);
    }
    let grid = GridSpec::new(rows, boundary)?;
    Field::new(grid, values)
}

#[derive(Serialize, Deserialize)]
struct ObsPoint {
    index: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct ObsFile {
    resolution: usize,
    boundary: Boundary,
    noise_sigma: f64,
    points: Vec<ObsPoint>,
}

/// Writes an observation set as JSON.
pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    let file = ObsFile {
        resolution: obs.grid().resolution(),
        boundary: obs.grid().boundary(),
        noise_sigma: obs.noise_sigma(),
        points: obs
            .indices()
            .iter()
            .zip(obs.values())
            .map(|(&index, &value)| ObsPoint { index, value })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Reads an observation set from JSON.
pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    let file: ObsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let grid = GridSpec::new(file.resolution, file.boundary)?;
    let (indices, values) = file.points.iter().map(|p| (p.index, p.value)).unzip();
    ObservationSet::new(grid, indices, values, file.noise_sigma)
}
