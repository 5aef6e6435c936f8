//! Binary snapshot and CSV serialization of complex fields.
//!
//! Snapshot layout (all little-endian):
//!
//! ```text
//! magic   4 bytes  "HVQ1"
//! dims    u32
//! per axis: min f64, max f64, points u64, boundary u8 (0 = box, 1 = periodic)
//! lambda  f64
//! time    f64
//! data    points… × (re f64, im f64), row-major (last axis fastest)
//! ```

use super::{AxisSpec, Boundary, ComplexField, FieldError, Grid, ScalarField};
use crate::{Complex, Scalar};
use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 4] = b"HVQ1";

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected HVQ1")]
    BadMagic,
    #[error("bad boundary flag {0}")]
    BadBoundary(u8),
    #[error("grid error: {0}")]
    Grid(#[from] FieldError),
}

pub fn write_snapshot<T: Scalar, W: Write>(
    w: &mut W,
    psi: &ComplexField<T>,
    lambda: T,
    time: T,
) -> Result<(), SnapshotError> {
    let grid = psi.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    for ax in grid.axes() {
        w.write_all(&ax.min.to_f64().unwrap().to_le_bytes())?;
        w.write_all(&ax.max.to_f64().unwrap().to_le_bytes())?;
        w.write_all(&(ax.points as u64).to_le_bytes())?;
        let flag: u8 = match ax.boundary {
            Boundary::Box => 0,
            Boundary::Periodic => 1,
        };
        w.write_all(&[flag])?;
    }
    w.write_all(&lambda.to_f64().unwrap().to_le_bytes())?;
    w.write_all(&time.to_f64().unwrap().to_le_bytes())?;
    for z in psi.data() {
        w.write_all(&z.re.to_f64().unwrap().to_le_bytes())?;
        w.write_all(&z.im.to_f64().unwrap().to_le_bytes())?;
    }
    Ok(())
}

#[derive(Debug)]
pub struct Snapshot<T> {
    pub psi: ComplexField<T>,
    pub lambda: T,
    pub time: T,
}

pub fn read_snapshot<T: Scalar, R: Read>(r: &mut R) -> Result<Snapshot<T>, SnapshotError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let dims = u32::from_le_bytes(u32b) as usize;
    let mut axes = Vec::with_capacity(dims);
    for _ in 0..dims {
        let min = read_f64(r)?;
        let max = read_f64(r)?;
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b)?;
        let points = u64::from_le_bytes(u64b) as usize;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let boundary = match flag[0] {
            0 => Boundary::Box,
            1 => Boundary::Periodic,
            other => return Err(SnapshotError::BadBoundary(other)),
        };
        axes.push(AxisSpec {
            min: T::lit(min),
            max: T::lit(max),
            points,
            boundary,
        });
    }
    let lambda = T::lit(read_f64(r)?);
    let time = T::lit(read_f64(r)?);
    let grid = Grid::new(axes)?;
    let mut data = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = T::lit(read_f64(r)?);
        let im = T::lit(read_f64(r)?);
        data.push(Complex::new(re, im));
    }
    Ok(Snapshot {
        psi: ComplexField::from_data(grid, data),
        lambda,
        time,
    })
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, SnapshotError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// CSV export: one node per row, coordinates then re/im.
pub fn write_complex_csv<T: Scalar, W: Write>(
    w: &mut W,
    psi: &ComplexField<T>,
) -> Result<(), io::Error> {
    let grid = psi.grid();
    for a in 0..grid.dim() {
        write!(w, "q{},", a + 1)?;
    }
    writeln!(w, "re,im")?;
    let mut q = vec![T::zero(); grid.dim()];
    for (flat, z) in psi.data().iter().enumerate() {
        grid.coords_into(flat, &mut q);
        for c in &q {
            write!(w, "{:e},", c)?;
        }
        writeln!(w, "{:e},{:e}", z.re, z.im)?;
    }
    Ok(())
}

/// CSV export: one node per row, coordinates then the value.
pub fn write_scalar_csv<T: Scalar, W: Write>(
    w: &mut W,
    field: &ScalarField<T>,
    value_name: &str,
) -> Result<(), io::Error> {
    let grid = field.grid();
    for a in 0..grid.dim() {
        write!(w, "q{},", a + 1)?;
    }
    writeln!(w, "{value_name}")?;
    let mut q = vec![T::zero(); grid.dim()];
    for (flat, v) in field.data().iter().enumerate() {
        grid.coords_into(flat, &mut q);
        for c in &q {
            write!(w, "{:e},", c)?;
        }
        writeln!(w, "{:e}", v)?;
    }
    Ok(())
}
