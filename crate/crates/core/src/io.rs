//! On-disk formats: a little-endian binary layout for field data (the
//! canonical interchange form between CLI runs) and JSON for reports.
//!
//! Single-field layout: `[dim u64][N u64][L f64][components u64]` followed
//! by `components * N^dim` physical samples (f64, row-major within each
//! component, components concatenated). Space-time layout inserts
//! `[slices u64][times f64 * slices]` after the component count, followed by
//! one block of component data per slice.

use crate::error::{Error, Result};
use crate::field::{FieldData, SpaceTimeField};
use crate::grid::Grid;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::BadFieldFile("truncated header".into()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::BadFieldFile("truncated data".into()))?;
    Ok(f64::from_le_bytes(buf))
}

fn write_components<F: FieldData>(w: &mut impl Write, field: &F) -> Result<()> {
    for phys in field.to_physical() {
        for z in phys.iter() {
            write_f64(w, z.re)?;
        }
    }
    Ok(())
}

fn read_components<F: FieldData>(r: &mut impl Read, grid: Grid) -> Result<F> {
    let count = F::component_count(grid.dim());
    let shape = IxDyn(&grid.shape());
    let mut comps = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(grid.cell_count());
        for _ in 0..grid.cell_count() {
            data.push(Complex64::new(read_f64(r)?, 0.0));
        }
        comps.push(
            ArrayD::from_shape_vec(shape.clone(), data)
                .map_err(|e| Error::BadFieldFile(e.to_string()))?,
        );
    }
    Ok(F::from_physical(grid, comps))
}

fn read_grid_header(r: &mut impl Read, expected_components: impl Fn(usize) -> usize) -> Result<(Grid, u64)> {
    let dim = read_u64(r)? as usize;
    let size = read_u64(r)? as usize;
    let box_len = read_f64(r)?;
    let grid = Grid::new(dim, size, box_len)
        .map_err(|e| Error::BadFieldFile(format!("bad grid header: {e}")))?;
    let components = read_u64(r)?;
    if components as usize != expected_components(dim) {
        return Err(Error::BadFieldFile(format!(
            "expected {} components for dimension {dim}, file has {components}",
            expected_components(dim)
        )));
    }
    Ok((grid, components))
}

pub fn save_field<F: FieldData>(path: impl AsRef<Path>, field: &F) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    write_u64(&mut w, grid.dim() as u64)?;
    write_u64(&mut w, grid.size() as u64)?;
    write_f64(&mut w, grid.box_len())?;
    write_u64(&mut w, F::component_count(grid.dim()) as u64)?;
    write_components(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_field<F: FieldData>(path: impl AsRef<Path>) -> Result<F> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, _) = read_grid_header(&mut r, F::component_count)?;
    let field = read_components(&mut r, grid)?;
    let mut trailer = [0u8; 1];
    if r.read(&mut trailer)? != 0 {
        return Err(Error::BadFieldFile("trailing bytes after field data".into()));
    }
    Ok(field)
}

pub fn save_space_time<F: FieldData>(
    path: impl AsRef<Path>,
    field: &SpaceTimeField<F>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    write_u64(&mut w, grid.dim() as u64)?;
    write_u64(&mut w, grid.size() as u64)?;
    write_f64(&mut w, grid.box_len())?;
    write_u64(&mut w, F::component_count(grid.dim()) as u64)?;
    write_u64(&mut w, field.len() as u64)?;
    for &t in field.times() {
        write_f64(&mut w, t)?;
    }
    for slice in field.slices() {
        write_components(&mut w, slice)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_space_time<F: FieldData>(path: impl AsRef<Path>) -> Result<SpaceTimeField<F>> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, _) = read_grid_header(&mut r, F::component_count)?;
    let slices = read_u64(&mut r)? as usize;
    if slices == 0 {
        return Err(Error::BadFieldFile("space-time field with zero slices".into()));
    }
    let mut times = Vec::with_capacity(slices);
    for _ in 0..slices {
        times.push(read_f64(&mut r)?);
    }
    let mut data = Vec::with_capacity(slices);
    for _ in 0..slices {
        data.push(read_components::<F>(&mut r, grid)?);
    }
    SpaceTimeField::new(times, data)
        .map_err(|e| Error::BadFieldFile(format!("inconsistent time samples: {e}")))
}

/// Pretty-printed JSON for reports and diagnostics.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use ndarray::IxDyn;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("tentflow-io-{name}-{}", std::process::id()));
        p
    }

    #[test]
    fn field_round_trip_preserves_real_fields() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let mut v = VectorField::zeros(grid);
        v.comp_mut(0)[IxDyn(&[1, 3])] = Complex64::new(0.4, -0.2);
        v.comp_mut(1)[IxDyn(&[2, 2])] = Complex64::new(-1.0, 0.7);
        v.hermitian_symmetrize();
        let path = temp_path("roundtrip");
        save_field(&path, &v).unwrap();
        let back: VectorField = load_field(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert!(v.max_coeff_diff(&back) < 1e-13);
    }

    #[test]
    fn space_time_round_trip() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let mut a = VectorField::zeros(grid);
        a.comp_mut(0)[IxDyn(&[1, 0])] = Complex64::new(0.25, 0.0);
        a.hermitian_symmetrize();
        let b = a.scaled(0.5);
        let f = SpaceTimeField::new(vec![0.1, 0.4], vec![a, b]).unwrap();
        let path = temp_path("st");
        save_space_time(&path, &f).unwrap();
        let back: SpaceTimeField<VectorField> = load_space_time(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(back.times(), f.times());
        assert!(f.max_coeff_diff(&back) < 1e-13);
    }

    #[test]
    fn load_rejects_wrong_component_count() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let v = VectorField::zeros(grid);
        let path = temp_path("badcount");
        save_field(&path, &v).unwrap();
        let res: Result<crate::field::ScalarField> = load_field(&path);
        std::fs::remove_file(&path).unwrap();
        assert!(matches!(res, Err(Error::BadFieldFile(_))));
    }

    #[test]
    fn load_rejects_truncation() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let v = VectorField::zeros(grid);
        let path = temp_path("trunc");
        save_field(&path, &v).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let res: Result<VectorField> = load_field(&path);
        std::fs::remove_file(&path).unwrap();
        assert!(matches!(res, Err(Error::BadFieldFile(_))));
    }
}
