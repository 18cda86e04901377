use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_COVERAGE_GRID: usize = 100;

#[derive(Debug, Clone, PartialEq)]
struct Grid {
    lo: [f64; 2],
    hi: [f64; 2],
    n: usize,
}

impl Grid {
    fn cell_1d(&self, d: usize, v: f64) -> Option<usize> {
        let (lo, hi) = (self.lo[d], self.hi[d]);
        if !(v >= lo && v <= hi) {
            return None;
        }
        if hi == lo {
            return Some(0);
        }
        let t = ((v - lo) / (hi - lo) * self.n as f64).floor() as usize;
        Some(t.min(self.n - 1))
    }

    fn cell(&self, x: f64, y: f64) -> Option<usize> {
        Some(self.cell_1d(0, x)? * self.n + self.cell_1d(1, y)?)
    }
}

fn finite_rows(m: &DMatrix<f64>) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..m.nrows())
        .map(|r| (m[(r, 0)], m[(r, 1)]))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
}

fn check_columns(m: &DMatrix<f64>) -> Result<()> {
    if m.ncols() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: m.ncols(),
        });
    }
    Ok(())
}

/// Incremental form of [`coverage`]: the ground-truth grid is fixed once
/// and model points can be marked in batches.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    grid: Grid,
    gt_cells: Vec<bool>,
    occupied: usize,
    hit: Vec<bool>,
}

impl CoverageGrid {
    pub fn new(gt: &DMatrix<f64>, grid_n: usize) -> Result<Self> {
        check_columns(gt)?;
        if grid_n == 0 {
            return Err(Error::InvalidArgument("coverage grid needs at least one cell".into()));
        }
        let mut grid = Grid {
            lo: [f64::INFINITY; 2],
            hi: [f64::NEG_INFINITY; 2],
            n: grid_n,
        };
        for (x, y) in finite_rows(gt) {
            for (d, v) in [x, y].into_iter().enumerate() {
                grid.lo[d] = grid.lo[d].min(v);
                grid.hi[d] = grid.hi[d].max(v);
            }
        }
        if !(grid.lo[0] <= grid.hi[0]) {
            return Err(Error::EmptyPointSet);
        }
        let mut gt_cells = vec![false; grid_n * grid_n];
        for (x, y) in finite_rows(gt) {
            gt_cells[grid.cell(x, y).expect("gt points lie inside their own bounds")] = true;
        }
        let occupied = gt_cells.iter().filter(|c| **c).count();
        Ok(CoverageGrid {
            grid,
            gt_cells,
            occupied,
            hit: vec![false; grid_n * grid_n],
        })
    }

    /// Marks every finite model point inside the ground-truth bounds.
    pub fn mark(&mut self, model: &DMatrix<f64>) -> Result<()> {
        check_columns(model)?;
        for (x, y) in finite_rows(model) {
            if let Some(c) = self.grid.cell(x, y) {
                self.hit[c] = true;
            }
        }
        Ok(())
    }

    pub fn percent(&self) -> f64 {
        let explored = self.gt_cells.iter().zip(&self.hit).filter(|(g, h)| **g && **h).count();
        100.0 * explored as f64 / self.occupied as f64
    }

    /// Indices of marked cells, for checkpointing.
    pub fn hit_cells(&self) -> Vec<u32> {
        (0..self.hit.len()).filter(|c| self.hit[*c]).map(|c| c as u32).collect()
    }

    pub fn restore_hits(&mut self, cells: &[u32]) {
        for &c in cells {
            if let Some(h) = self.hit.get_mut(c as usize) {
                *h = true;
            }
        }
    }
}

/// Percentage of ground-truth-occupied cells of a `grid_n x grid_n` grid
/// over the first two columns that also hold at least one model point.
/// Grid bounds come from the ground truth; model points outside them are
/// ignored.
pub fn coverage(gt: &DMatrix<f64>, model: &DMatrix<f64>, grid_n: usize) -> Result<f64> {
    check_columns(model)?;
    let mut grid = CoverageGrid::new(gt, grid_n)?;
    if finite_rows(model).next().is_none() {
        return Err(Error::EmptyPointSet);
    }
    grid.mark(model)?;
    Ok(grid.percent())
}
