//! The common lattice every simulation is remapped onto, partitioned into
//! row blocks along y.

use std::path::Path;

use crate::config::FlatConfig;
use crate::error::{ensure, Error, Result};
use crate::store::BlockSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct CommonGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub delta: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub block_rows: usize,
    pub blocks: Vec<BlockSpec>,
}

/// Number of lattice points from `lo` to `hi` at spacing `delta`.
fn lattice_count(lo: f64, hi: f64, delta: f64) -> usize {
    // Relative slack absorbs representation error in e.g. 31.0 / 0.0125.
    ((hi - lo) / delta * (1.0 + 1e-12)).floor() as usize + 1
}

impl CommonGrid {
    pub fn build(x_range: (f64, f64), y_range: (f64, f64), delta: f64, target_block_rows: usize) -> Result<Self> {
        ensure!(delta > 0.0 && delta.is_finite(), Validation, "grid spacing must be positive, got {delta}");
        for (name, (lo, hi)) in [("x", x_range), ("y", y_range)] {
            ensure!(lo.is_finite() && hi.is_finite() && lo < hi, Validation, "degenerate {name}-range [{lo}, {hi}]");
            ensure!(delta <= hi - lo, Validation, "spacing {delta} exceeds {name}-range extent {}", hi - lo);
        }
        ensure!(target_block_rows >= 1, Validation, "block rows must be at least 1");
        let n_x = lattice_count(x_range.0, x_range.1, delta);
        let n_y = lattice_count(y_range.0, y_range.1, delta);
        let mut grid = Self {
            x_lo: x_range.0,
            x_hi: x_range.1,
            y_lo: y_range.0,
            y_hi: y_range.1,
            delta,
            n_x,
            n_y,
            block_rows: target_block_rows,
            blocks: Vec::new(),
        };
        let mut start = 0;
        while start < n_y {
            let end = (start + target_block_rows).min(n_y);
            grid.blocks.push(BlockSpec {
                block_id: grid.blocks.len() as u32,
                y_lo: grid.y_at(start) - delta / 2.0,
                y_hi: grid.y_at(end) - delta / 2.0,
                row_count: ((end - start) * n_x) as u64,
                row_offset: (start * n_x) as u64,
            });
            start = end;
        }
        Ok(grid)
    }

    /// Total number of grid points, D.
    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.delta
    }

    pub fn y_at(&self, j: usize) -> f64 {
        self.y_lo + j as f64 * self.delta
    }

    /// Coordinates of the grid point at a global (natural-order) row.
    pub fn point(&self, row: usize) -> (f64, f64) {
        (self.x_at(row % self.n_x), self.y_at(row / self.n_x))
    }

    /// Grid-row (y index) range covered by a block.
    pub fn block_y_rows(&self, block_id: u32) -> std::ops::Range<usize> {
        let b = &self.blocks[block_id as usize];
        let start = b.row_offset as usize / self.n_x;
        start..start + b.row_count as usize / self.n_x
    }

    /// Points of a block in natural order.
    pub fn block_points(&self, block_id: u32) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.blocks[block_id as usize].row_count as usize);
        for j in self.block_y_rows(block_id) {
            for i in 0..self.n_x {
                out.push((self.x_at(i), self.y_at(j)));
            }
        }
        out
    }

    /// Bounding box `(x_min, x_max, y_min, y_max)` of a block's points.
    pub fn block_bbox(&self, block_id: u32) -> (f64, f64, f64, f64) {
        let rows = self.block_y_rows(block_id);
        (self.x_at(0), self.x_at(self.n_x - 1), self.y_at(rows.start), self.y_at(rows.end - 1))
    }

    pub fn to_config(&self) -> FlatConfig {
        let mut c = FlatConfig::default();
        c.set("x_lo", self.x_lo);
        c.set("x_hi", self.x_hi);
        c.set("y_lo", self.y_lo);
        c.set("y_hi", self.y_hi);
        c.set("delta", self.delta);
        c.set("block_rows", self.block_rows);
        c
    }

    pub const CONFIG_KEYS: [&'static str; 6] = ["x_lo", "x_hi", "y_lo", "y_hi", "delta", "block_rows"];

    pub fn from_config(c: &FlatConfig) -> Result<Self> {
        c.check_known(&Self::CONFIG_KEYS)?;
        Self::build(
            (c.require("x_lo")?, c.require("x_hi")?),
            (c.require("y_lo")?, c.require("y_hi")?),
            c.require("delta")?,
            c.or("block_rows", 40usize)?,
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_config(&FlatConfig::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config().to_text()).map_err(|e| Error::io(path, e))
    }

    /// The grid used for the jet/HE campaign: x in [-31.5, -0.5], y in
    /// [0.0063, 10.99], spacing 0.0125, 40 grid rows per block.
    pub fn reference() -> Self {
        Self::build((-31.5, -0.5), (0.0063, 10.99), 0.0125, 40).expect("reference grid is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::validate_specs;

    #[test]
    fn reference_grid_counts() {
        let g = CommonGrid::reference();
        assert_eq!((g.n_x, g.n_y), (2481, 879));
        assert_eq!(g.len(), 2_180_799);
        assert_eq!(g.blocks.len(), 22);
        for b in &g.blocks[..21] {
            assert_eq!(b.row_count, 99_240);
        }
        assert_eq!(g.blocks[21].row_count, 39 * 2481);
        validate_specs(&g.blocks).unwrap();
        assert_eq!(g.blocks.iter().map(|b| b.row_count).sum::<u64>(), 2_180_799);
    }

    #[test]
    fn tiny_grid() {
        let g = CommonGrid::build((0.0, 1.0), (0.0, 1.0), 0.5, 2).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.blocks.len(), 2);
        assert_eq!(g.block_points(1), vec![(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(g.point(4), (0.5, 0.5));
    }

    #[test]
    fn spacing_larger_than_extent() {
        assert!(CommonGrid::build((0.0, 1.0), (0.0, 1.0), 2.0, 2).is_err());
        assert!(CommonGrid::build((1.0, 1.0), (0.0, 1.0), 0.1, 2).is_err());
    }

    #[test]
    fn config_round_trip() {
        let g = CommonGrid::build((-4.9, -0.1), (0.01, 3.99), 0.02, 25).unwrap();
        let back = CommonGrid::from_config(&FlatConfig::parse(&g.to_config().to_text()).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
