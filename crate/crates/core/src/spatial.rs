//! Uniform-bin index for exact nearest-neighbour queries over near-lattice
//! points. Ties are broken towards the lexicographically smallest (y, x)
//! source coordinate, then the lowest source index.

pub struct NearestIndex<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cell_start: Vec<u32>,
    items: Vec<u32>,
}

#[inline]
fn better(cand: (f64, f64, f64, usize), best: (f64, f64, f64, usize)) -> bool {
    // (distance², y, x, index)
    cand.0 < best.0 || (cand.0 == best.0 && (cand.1, cand.2, cand.3) < (best.1, best.2, best.3))
}

impl<'a> NearestIndex<'a> {
    /// `cell_hint` should be about the point spacing.
    pub fn new(xs: &'a [f64], ys: &'a [f64], cell_hint: f64) -> Self {
        assert_eq!(xs.len(), ys.len());
        let n = xs.len();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            x0 = x0.min(xs[i]);
            x1 = x1.max(xs[i]);
            y0 = y0.min(ys[i]);
            y1 = y1.max(ys[i]);
        }
        if n == 0 {
            (x0, x1, y0, y1) = (0.0, 0.0, 0.0, 0.0);
        }
        let extent = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
        let mut cell = if cell_hint > 0.0 { cell_hint } else { extent };
        // keep the bin array proportional to the point count
        let max_cells = 4 * n + 16;
        loop {
            let nx = ((x1 - x0) / cell).floor() as usize + 1;
            let ny = ((y1 - y0) / cell).floor() as usize + 1;
            if nx.saturating_mul(ny) <= max_cells {
                break;
            }
            cell *= 2.0;
        }
        let nx = ((x1 - x0) / cell).floor() as usize + 1;
        let ny = ((y1 - y0) / cell).floor() as usize + 1;
        let mut idx = Self {
            xs,
            ys,
            x0,
            y0,
            cell,
            nx,
            ny,
            cell_start: vec![0; nx * ny + 1],
            items: vec![0; n],
        };
        let cells: Vec<usize> = (0..n).map(|i| idx.cell_of(xs[i], ys[i])).collect();
        for &c in &cells {
            idx.cell_start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            idx.cell_start[c + 1] += idx.cell_start[c];
        }
        let mut fill = idx.cell_start.clone();
        for (i, &c) in cells.iter().enumerate() {
            idx.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        idx
    }

    fn axis_cell(&self, v: f64, origin: f64, n: usize) -> usize {
        let k = ((v - origin) / self.cell).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> usize {
        self.axis_cell(y, self.y0, self.ny) * self.nx + self.axis_cell(x, self.x0, self.nx)
    }

    fn scan_cell(&self, cx: usize, cy: usize, qx: f64, qy: f64, best: &mut Option<(f64, f64, f64, usize)>) {
        let c = cy * self.nx + cx;
        for &i in &self.items[self.cell_start[c] as usize..self.cell_start[c + 1] as usize] {
            let i = i as usize;
            let (dx, dy) = (self.xs[i] - qx, self.ys[i] - qy);
            let cand = (dx * dx + dy * dy, self.ys[i], self.xs[i], i);
            if best.is_none_or(|b| better(cand, b)) {
                *best = Some(cand);
            }
        }
    }

    /// Index of the nearest point, or `None` for an empty index.
    pub fn nearest(&self, qx: f64, qy: f64) -> Option<usize> {
        if self.xs.is_empty() {
            return None;
        }
        let cx = self.axis_cell(qx, self.x0, self.nx) as isize;
        let cy = self.axis_cell(qy, self.y0, self.ny) as isize;
        let mut best = None;
        let max_ring = self.nx.max(self.ny) as isize;
        for r in 0..=max_ring {
            for dy in -r..=r {
                let y = cy + dy;
                if y < 0 || y >= self.ny as isize {
                    continue;
                }
                let edge_row = dy == -r || dy == r;
                let mut dx = -r;
                while dx <= r {
                    let x = cx + dx;
                    if x >= 0 && x < self.nx as isize {
                        self.scan_cell(x as usize, y as usize, qx, qy, &mut best);
                    }
                    dx += if edge_row || dx == r { 1 } else { 2 * r };
                }
            }
            // Every cell not yet scanned lies at least r cells away, i.e. at
            // distance >= r * cell. Stop once the best is strictly closer.
            if let Some((d2, ..)) = best {
                let bound = r as f64 * self.cell;
                if d2 < bound * bound {
                    break;
                }
            }
        }
        best.map(|b| b.3)
    }
}

/// Exhaustive scan with the same tie rule.
pub fn nearest_brute_force(xs: &[f64], ys: &[f64], qx: f64, qy: f64) -> Option<usize> {
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for i in 0..xs.len() {
        let (dx, dy) = (xs[i] - qx, ys[i] - qy);
        let cand = (dx * dx + dy * dy, ys[i], xs[i], i);
        if best.is_none_or(|b| better(cand, b)) {
            best = Some(cand);
        }
    }
    best.map(|b| b.3)
}
