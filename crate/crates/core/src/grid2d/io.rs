use super::Grid;
use crate::error::{Error, Result};
use std::path::Path;

fn write_matrix(path: &Path, grid: &Grid, cols: usize, rows: usize, values: &[f64]) -> Result<()> {
    if values.len() != cols * rows {
        return Err(Error::InvalidArgument(format!(
            "matrix has {} values, expected {}",
            values.len(),
            cols * rows
        )));
    }
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    w.write_record(["nx", "ny", "hx", "hy"])?;
    w.write_record([
        grid.nx.to_string(),
        grid.ny.to_string(),
        format!("{:e}", grid.hx),
        format!("{:e}", grid.hy),
    ])?;
    for row in values.chunks(cols) {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Node field as an `(ny + 1) x (nx + 1)` row-major matrix, bottom row first.
pub fn write_node_matrix_csv(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    write_matrix(path, grid, grid.nx + 1, grid.ny + 1, values)
}

/// Cell field as an `ny x nx` row-major matrix, bottom row first.
pub fn write_cell_matrix_csv(path: &Path, grid: &Grid, values: &[f64]) -> Result<()> {
    write_matrix(path, grid, grid.nx, grid.ny, values)
}

/// Reads a matrix written by the functions above: `(nx, ny, hx, hy, values)`.
pub fn read_matrix_csv(path: &Path) -> Result<(usize, usize, f64, f64, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_path(path)?;
    let mut records = r.records();
    let meta = records
        .next()
        .ok_or_else(|| Error::InvalidArgument("missing grid metadata row".into()))??;
    let parse = |s: &str| -> Result<f64> { s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{s}`: {e}"))) };
    let nx = parse(&meta[0])? as usize;
    let ny = parse(&meta[1])? as usize;
    let hx = parse(&meta[2])?;
    let hy = parse(&meta[3])?;
    let mut values = Vec::new();
    for rec in records {
        for field in rec?.iter() {
            values.push(parse(field)?);
        }
    }
    Ok((nx, ny, hx, hy, values))
}
