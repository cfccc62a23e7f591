//! CSV snapshot and time-series persistence.
//!
//! Snapshots use the header `x[,y[,z]],value`, one row per cell center in
//! lexicographic cell-index order. Floats are written with the shortest
//! round-trip decimal representation, so a read followed by a write is
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::grid::{Grid, ScalarField};
use crate::{Error, Result};

fn fmt_f64(x: f64) -> String {
    // `Display` for f64 is the shortest decimal that round-trips.
    format!("{x}")
}

pub fn snapshot_to_string(field: &ScalarField) -> String {
    let g = &field.grid;
    let axes = g.axes();
    let mut s = String::new();
    let header = match axes {
        1 => "x,value",
        2 => "x,y,value",
        _ => "x,y,z,value",
    };
    s.push_str(header);
    s.push('\n');
    for (i, &v) in field.values.iter().enumerate() {
        let c = g.center(i);
        for x in c.iter().take(axes) {
            let _ = write!(s, "{},", fmt_f64(*x));
        }
        let _ = writeln!(s, "{}", fmt_f64(v));
    }
    s
}

pub fn write_snapshot(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, snapshot_to_string(field))?;
    Ok(())
}

/// Read a snapshot written by [`write_snapshot`] back onto its grid.
/// The row order must match the grid's lexicographic cell order.
pub fn read_snapshot(path: &Path, grid: Grid) -> Result<ScalarField> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(grid.cell_count());
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        let last = line
            .rsplit(',')
            .next()
            .ok_or_else(|| Error::Config(format!("snapshot line {lineno}: empty")))?;
        let v: f64 = last
            .parse()
            .map_err(|e| Error::Config(format!("snapshot line {lineno}: {e}")))?;
        values.push(v);
    }
    if values.len() != grid.cell_count() {
        return Err(Error::DimensionMismatch(format!(
            "snapshot has {} cells, grid expects {}",
            values.len(),
            grid.cell_count()
        )));
    }
    Ok(ScalarField { grid, values })
}

/// Incremental CSV table writer with a fixed header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    buf: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = String::new();
        buf.push_str(&header.join(","));
        buf.push('\n');
        CsvTable { buf, columns: header.len() }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.columns);
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                self.buf.push(',');
            }
            let _ = write!(self.buf, "{}", fmt_f64(*v));
        }
        self.buf.push('\n');
    }

    /// Row with a leading string cell (for verdict-style tables).
    pub fn push_row_tagged(&mut self, values: &[f64], tag: &str) {
        for v in values {
            let _ = write!(self.buf, "{},", fmt_f64(*v));
        }
        self.buf.push_str(tag);
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.buf)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let g = Grid::full_box(2, 6, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] * 13.7).sin() * (x[1] + 0.1234567890123));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("snap.csv");
        write_snapshot(&p, &u).unwrap();
        let back = read_snapshot(&p, g).unwrap();
        for (a, b) in u.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // writing again reproduces identical bytes
        let s1 = fs::read(&p).unwrap();
        write_snapshot(&p, &back).unwrap();
        let s2 = fs::read(&p).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn snapshot_header_matches_dimension() {
        let g = Grid::full_box(3, 4, 1.0).unwrap();
        let u = ScalarField::zeros(g);
        let s = snapshot_to_string(&u);
        assert!(s.starts_with("x,y,z,value\n"));
    }
}
