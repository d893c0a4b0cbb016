//! Uniform cell-centered grids on axis-aligned rectangles and field snapshots.
//!
//! Cells are numbered row-major with `x` fastest: `idx = ix + nx * iy`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    lengths: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(&spec.cells, &spec.lengths)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        Self {
            cells: g.cells[..g.dim].to_vec(),
            lengths: g.lengths[..g.dim].to_vec(),
        }
    }
}

impl Grid {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(1..=2).contains(&dim) || lengths.len() != dim {
            return Err(Error::Config(format!(
                "grid needs 1 or 2 axes with matching lengths (got {} cells, {} lengths)",
                cells.len(),
                lengths.len()
            )));
        }
        if cells.iter().any(|&n| n < 2) {
            return Err(Error::Config("each axis needs at least 2 cells".into()));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config("axis lengths must be positive".into()));
        }
        let mut c = [1, 1];
        let mut l = [1.0, 1.0];
        c[..dim].copy_from_slice(cells);
        l[..dim].copy_from_slice(lengths);
        Ok(Self {
            dim,
            cells: c,
            lengths: l,
        })
    }

    pub fn line(n: usize, length: f64) -> Self {
        Self::new(&[n], &[length]).expect("valid 1D grid")
    }

    pub fn rect(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self::new(&[nx, ny], &[lx, ly]).expect("valid 2D grid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    /// One in 1D.
    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn min_h(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^N`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).product()
    }

    /// `|Omega|`.
    pub fn measure(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.cells[0] * iy
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    /// Cell center; the second coordinate is zero in 1D.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (ix, iy) = self.coords(idx);
        let x = (ix as f64 + 0.5) * self.h(0);
        let y = if self.dim == 2 {
            (iy as f64 + 0.5) * self.h(1)
        } else {
            0.0
        };
        [x, y]
    }

    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(|i| self.center(i))
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.centers().map(f).collect()
    }

    /// Doubles the cell count along every axis.
    pub fn refined(&self) -> Self {
        let cells: Vec<usize> = self.cells().iter().map(|n| 2 * n).collect();
        Self::new(&cells, self.lengths()).expect("refinement stays valid")
    }

    /// `sum_cells f h^N`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }
}

/// A single species' cell values at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub grid: Grid,
    pub time: f64,
    pub species: usize,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let join = |v: &[String]| v.join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "dim {}", g.dim());
        let _ = writeln!(out, "cells {}", join(&g.cells().iter().map(|c| c.to_string()).collect::<Vec<_>>()));
        let _ = writeln!(out, "lengths {}", join(&g.lengths().iter().map(|l| format!("{l:e}")).collect::<Vec<_>>()));
        let _ = writeln!(out, "time {:e}", self.time);
        let _ = writeln!(out, "species {}", self.species);
        for v in &self.values {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("snapshot: {msg}"));
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected '{key}'")));
            }
            Ok(parts.map(str::to_owned).collect())
        };
        let parse_f = |s: &String| s.parse::<f64>().map_err(|_| bad("bad number"));
        let parse_u = |s: &String| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let dim = header("dim")?.first().ok_or_else(|| bad("missing dim")).and_then(parse_u)?;
        let cells = header("cells")?.iter().map(parse_u).collect::<Result<Vec<_>>>()?;
        let lengths = header("lengths")?.iter().map(parse_f).collect::<Result<Vec<_>>>()?;
        let time = header("time")?.first().ok_or_else(|| bad("missing time")).and_then(parse_f)?;
        let species = header("species")?
            .first()
            .ok_or_else(|| bad("missing species"))
            .and_then(parse_u)?;
        if cells.len() != dim {
            return Err(bad("cells do not match dim"));
        }
        let grid = Grid::new(&cells, &lengths)?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != grid.len() {
            return Err(bad(&format!("expected {} values, found {}", grid.len(), values.len())));
        }
        Ok(Self {
            grid,
            time,
            species,
            values,
        })
    }

    /// Several snapshots written one after another.
    pub fn parse_all(text: &str) -> Result<Vec<Self>> {
        let mut blocks: Vec<String> = Vec::new();
        for line in text.lines() {
            if line.starts_with("dim ") || blocks.is_empty() {
                blocks.push(String::new());
            }
            let b = blocks.last_mut().expect("a block was pushed");
            b.push_str(line);
            b.push('\n');
        }
        blocks.iter().map(|b| Self::parse(b)).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let g = Grid::rect(4, 2, 2.0, 1.0);
        assert_eq!(g.len(), 8);
        assert_eq!(g.h(0), 0.5);
        assert_eq!(g.cell_volume(), 0.25);
        assert_eq!(g.center(g.index(1, 1)), [0.75, 0.75]);
        assert_eq!(g.coords(5), (1, 1));
        let l = Grid::line(4, 1.0);
        assert_eq!(l.ny(), 1);
        assert_eq!(l.center(0), [0.125, 0.0]);
        assert!(Grid::new(&[1], &[1.0]).is_err());
        assert!(Grid::new(&[4, 4, 4], &[1.0, 1.0, 1.0]).is_err());
        assert!(Grid::new(&[4], &[0.0]).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let grid = Grid::rect(3, 2, 1.0, 0.5);
        let snap = Snapshot {
            grid: grid.clone(),
            time: 0.125,
            species: 2,
            values: vec![0.1, 1.0 / 3.0, 2.0, 1e-300, 0.0, 7.5],
        };
        let text = snap.to_text();
        assert!(text.starts_with("dim 2\ncells 3 2\n"));
        assert_eq!(Snapshot::parse(&text).unwrap(), snap);
        assert!(Snapshot::parse(&text.replace("cells 3 2", "cells 3 3")).is_err());
    }
}
