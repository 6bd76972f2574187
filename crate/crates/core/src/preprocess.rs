//! Alignment, cropping, and 1-nearest-neighbour remapping of consolidated
//! time steps onto the common grid.

use std::fs::File;
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::config::FlatConfig;
use crate::error::{ensure, Error, Result};
use crate::format::{self, BlockHeader, Dtype, HEADER_LEN, MAGIC_CONSOLIDATED, MAGIC_REMAP};
use crate::grid::CommonGrid;
use crate::ingest::{self, query_subdomains_in_range, TimestepSummary};
use crate::parallel;
use crate::points::PointTable;
use crate::spatial::NearestIndex;

pub const DEFAULT_CROP: (f64, f64) = (-32.0, 0.0);

/// Margin around a block used when selecting source points, in grid spacings.
pub const DEFAULT_MARGIN_CELLS: f64 = 4.0;

/// Per-simulation x-shift plus the shared crop window.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignSpec {
    pub x_shift: f64,
    pub crop: (f64, f64),
}

impl AlignSpec {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut c = FlatConfig::default();
        c.set("x_shift", self.x_shift);
        c.set("crop_lo", self.crop.0);
        c.set("crop_hi", self.crop.1);
        std::fs::write(path, c.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let c = FlatConfig::read(path)?;
        c.check_known(&["x_shift", "crop_lo", "crop_hi"])?;
        Ok(Self {
            x_shift: c.require("x_shift")?,
            crop: (c.require("crop_lo")?, c.require("crop_hi")?),
        })
    }
}

fn check_crop(crop: (f64, f64)) -> Result<()> {
    ensure!(crop.0 < crop.1, Validation, "crop range [{}, {}] is empty", crop.0, crop.1);
    Ok(())
}

/// Shift x so the domain's right edge sits at 0 and keep points whose
/// shifted x lies in `crop` (inclusive). Order is preserved.
pub fn align_and_crop(points: &PointTable, x_max: f64, crop: (f64, f64)) -> Result<PointTable> {
    Ok(align_and_crop_indexed(points, x_max, crop)?.0)
}

/// As [`align_and_crop`], also returning the kept source row indices.
pub fn align_and_crop_indexed(points: &PointTable, x_max: f64, crop: (f64, f64)) -> Result<(PointTable, Vec<usize>)> {
    check_crop(crop)?;
    ensure!(x_max.is_finite(), Data, "domain x_max is not finite");
    let mut out = PointTable::new(points.n_vars());
    let mut kept = Vec::new();
    for i in 0..points.len() {
        let (x, y) = (points.x[i], points.y[i]);
        ensure!(!x.is_nan() && !y.is_nan(), Data, "NaN coordinate at point {i}");
        let xs = x - x_max;
        if xs >= crop.0 && xs <= crop.1 {
            out.push(xs, y, points.vars(i));
            kept.push(i);
        }
    }
    Ok((out, kept))
}

/// Align and crop one consolidated time step, keeping subdomain grouping and
/// rebuilding its summary.
pub fn align_step(table: &PointTable, summary: &TimestepSummary, x_max: f64, crop: (f64, f64)) -> Result<(PointTable, TimestepSummary)> {
    let mut out = PointTable::new(table.n_vars());
    let mut sizes = Vec::with_capacity(summary.subdomains.len());
    for e in &summary.subdomains {
        let part = align_and_crop(&table.slice(e.start_row as usize, e.n_points as usize), x_max, crop)?;
        sizes.push(part.len());
        out.extend_from(&part);
    }
    let s = TimestepSummary::from_groups(&out, &sizes);
    Ok((out, s))
}

/// Align and crop every consolidated step of one simulation. The shift is
/// taken from the first step's right edge and reused for all steps.
pub fn preprocess_simulation(ingested_dir: &Path, out_dir: &Path, crop: (f64, f64), jobs: usize) -> Result<AlignSpec> {
    check_crop(crop)?;
    let steps = ingest::list_consolidated_steps(ingested_dir)?;
    ensure!(!steps.is_empty(), Validation, "{} has no consolidated time steps", ingested_dir.display());
    let (first, _) = ingest::read_consolidated(ingested_dir, steps[0])?;
    let (_, x_max, _, _) = first.bbox();
    ensure!(x_max.is_finite(), Data, "first time step of {} has no points", ingested_dir.display());
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    parallel::try_map_indexed(jobs, steps.len(), |i| {
        let (table, summary) = ingest::read_consolidated(ingested_dir, steps[i])?;
        let (aligned, s) = align_step(&table, &summary, x_max, crop)?;
        ingest::write_consolidated(out_dir, steps[i], &aligned, &s)
    })?;
    let spec = AlignSpec { x_shift: x_max, crop };
    spec.write(&out_dir.join("align.cfg"))?;
    Ok(spec)
}

fn expanded_bbox(grid: &CommonGrid, block_id: u32, margin: f64) -> (f64, f64, f64, f64) {
    let (x0, x1, y0, y1) = grid.block_bbox(block_id);
    (x0 - margin, x1 + margin, y0 - margin, y1 + margin)
}

/// For every grid point of `block_id`, the index of its nearest source.
///
/// Fails with a coverage error if no source lies in the block's box expanded
/// by `margin`, or if the sources' own bounding box, expanded by `margin`,
/// does not cover the block (which would mean extrapolating).
pub fn nearest_sources(xs: &[f64], ys: &[f64], grid: &CommonGrid, block_id: u32, margin: f64) -> Result<Vec<usize>> {
    ensure!((block_id as usize) < grid.blocks.len(), Validation, "block {block_id} not in grid");
    ensure!(margin >= 0.0, Validation, "margin must be non-negative");
    let (ex0, ex1, ey0, ey1) = expanded_bbox(grid, block_id, margin);
    let (mut sx0, mut sx1, mut sy0, mut sy1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut inside = 0usize;
    for i in 0..xs.len() {
        sx0 = sx0.min(xs[i]);
        sx1 = sx1.max(xs[i]);
        sy0 = sy0.min(ys[i]);
        sy1 = sy1.max(ys[i]);
        if xs[i] >= ex0 && xs[i] <= ex1 && ys[i] >= ey0 && ys[i] <= ey1 {
            inside += 1;
        }
    }
    if inside == 0 {
        return Err(Error::Coverage(format!("no source point within {margin} of block {block_id}")));
    }
    let (bx0, bx1, by0, by1) = grid.block_bbox(block_id);
    if sx0 - margin > bx0 || sx1 + margin < bx1 || sy0 - margin > by0 || sy1 + margin < by1 {
        return Err(Error::Coverage(format!(
            "sources [{sx0}, {sx1}] x [{sy0}, {sy1}] (+/- {margin}) do not cover block {block_id} [{bx0}, {bx1}] x [{by0}, {by1}]"
        )));
    }
    let index = NearestIndex::new(xs, ys, grid.delta);
    Ok(grid
        .block_points(block_id)
        .into_iter()
        .map(|(x, y)| index.nearest(x, y).expect("non-empty sources"))
        .collect())
}

/// Value of variable `var` at each grid point of the block, taken from the
/// Euclidean-nearest source point.
pub fn remap_1nn(sources: &PointTable, var: usize, grid: &CommonGrid, block_id: u32, margin: f64) -> Result<Vec<f64>> {
    ensure!(var < sources.n_vars(), Validation, "variable {var} out of range ({} variables)", sources.n_vars());
    let nn = nearest_sources(&sources.x, &sources.y, grid, block_id, margin)?;
    Ok(nn.into_iter().map(|i| sources.value(i, var)).collect())
}

/// Reads selected row ranges from a consolidated file without loading all of it.
struct ConsolidatedRows {
    file: BufReader<File>,
    path: PathBuf,
    n_vars: usize,
    n_rows: u64,
    scratch: Vec<u8>,
}

impl ConsolidatedRows {
    fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut file = BufReader::new(f);
        let h = BlockHeader::read_from(&mut file, MAGIC_CONSOLIDATED, path)?;
        if h.dtype != Dtype::F64 || h.n_cols < 2 {
            return Err(Error::format(path, None, "consolidated files hold f64 rows [x, y, vars...]"));
        }
        Ok(Self {
            file,
            path: path.to_path_buf(),
            n_vars: h.n_cols as usize - 2,
            n_rows: h.row_count,
            scratch: Vec::new(),
        })
    }

    fn read_range(&mut self, start: u64, len: u64, out: &mut PointTable) -> Result<()> {
        if start + len > self.n_rows {
            return Err(Error::format(&self.path, None, format!("rows {start}..{} past end ({})", start + len, self.n_rows)));
        }
        let width = (2 + self.n_vars) as u64 * 8;
        self.file
            .seek(SeekFrom::Start(HEADER_LEN as u64 + start * width))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut row = vec![0.0; 2 + self.n_vars];
        for _ in 0..len {
            format::read_values(&mut self.file, Dtype::F64, &mut row, &mut self.scratch)
                .map_err(|e| Error::format(&self.path, None, format!("truncated: {e}")))?;
            out.push(row[0], row[1], &row[2..]);
        }
        Ok(())
    }
}

/// Source points for one block at one step: rows of the subdomains that
/// intersect the expanded block box, filtered to that box.
fn extract_block_sources(path: &Path, summary: &TimestepSummary, bbox: (f64, f64, f64, f64)) -> Result<PointTable> {
    let (x0, x1, y0, y1) = bbox;
    let mut reader = ConsolidatedRows::open(path)?;
    let mut raw = PointTable::new(reader.n_vars);
    for id in query_subdomains_in_range(summary, (x0, x1), (y0, y1)) {
        let e = &summary.subdomains[id as usize];
        reader.read_range(e.start_row, e.n_points, &mut raw)?;
    }
    let mut out = PointTable::new(raw.n_vars());
    for i in 0..raw.len() {
        if raw.x[i] >= x0 && raw.x[i] <= x1 && raw.y[i] >= y0 && raw.y[i] <= y1 {
            out.push(raw.x[i], raw.y[i], raw.vars(i));
        }
    }
    Ok(out)
}

pub fn remap_file_name(block_id: u32) -> String {
    format!("block_{block_id:03}.rmap")
}

/// One remapped block of one simulation: grid points in natural order, with
/// columns `x, y` then every variable at every step (step-major:
/// column `2 + step * n_vars + var`).
#[derive(Debug, Clone, PartialEq)]
pub struct RemapBlock {
    pub header: BlockHeader,
    /// `row_count x (2 + n_steps * n_vars)`, row-major.
    pub data: Vec<f64>,
}

impl RemapBlock {
    pub fn n_steps(&self) -> usize {
        self.header.extra[0] as usize
    }

    pub fn n_vars(&self) -> usize {
        self.header.extra[1] as usize
    }

    pub fn n_cols(&self) -> usize {
        self.header.n_cols as usize
    }

    pub fn value(&self, row: usize, step: usize, var: usize) -> f64 {
        self.data[row * self.n_cols() + 2 + step * self.n_vars() + var]
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(&self.header.encode()).map_err(|e| Error::io(path, e))?;
        format::write_values(&mut w, Dtype::F64, &self.data).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = RemapReader::open(path)?;
        let mut data = vec![0.0; r.header.row_count as usize * r.header.n_cols as usize];
        for row in data.chunks_exact_mut(r.header.n_cols as usize) {
            r.read_row(row)?;
        }
        Ok(Self { header: r.header, data })
    }
}

/// Sequential row reader for `RMAP` files.
pub struct RemapReader {
    pub header: BlockHeader,
    input: BufReader<File>,
    path: PathBuf,
    scratch: Vec<u8>,
}

impl RemapReader {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut input = BufReader::with_capacity(1 << 20, f);
        let header = BlockHeader::read_from(&mut input, MAGIC_REMAP, path)?;
        let ok = header.n_cols == 2 + header.extra[0] as u64 * header.extra[1] as u64
            && len == HEADER_LEN as u64 + header.payload_len();
        if !ok {
            return Err(Error::format(path, Some(header.block_id), "RMAP header inconsistent with file size"));
        }
        Ok(Self {
            header,
            input,
            path: path.to_path_buf(),
            scratch: Vec::new(),
        })
    }

    pub fn read_row(&mut self, row: &mut [f64]) -> Result<()> {
        format::read_values(&mut self.input, self.header.dtype, row, &mut self.scratch)
            .map_err(|e| Error::format(&self.path, Some(self.header.block_id), format!("truncated: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemapReport {
    pub n_steps: usize,
    pub n_vars: usize,
    pub blocks: usize,
}

/// Remap every time step of one aligned simulation onto every block of
/// `grid`, writing `block_NNN.rmap` files into `out_dir`.
///
/// All steps must carry identical coordinates in identical order, so the
/// nearest-neighbour map is computed once per block and applied to every step.
pub fn remap_simulation(aligned_dir: &Path, grid: &CommonGrid, margin: f64, out_dir: &Path, jobs: usize) -> Result<RemapReport> {
    let steps = ingest::list_consolidated_steps(aligned_dir)?;
    ensure!(!steps.is_empty(), Validation, "{} has no consolidated time steps", aligned_dir.display());
    let summaries = steps
        .iter()
        .map(|&s| TimestepSummary::read(&ingest::consolidated_paths(aligned_dir, s).1))
        .collect::<Result<Vec<_>>>()?;
    for (k, s) in summaries.iter().enumerate().skip(1) {
        ensure!(
            s == &summaries[0],
            Validation,
            "time step {} has a different subdomain layout than step {}; coordinates must match across steps",
            steps[k],
            steps[0]
        );
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let n_vars_seen = parallel::try_map_indexed(jobs, grid.blocks.len(), |b| {
        let block_id = b as u32;
        let bbox = expanded_bbox(grid, block_id, margin);
        let mut per_step = Vec::with_capacity(steps.len());
        for (k, &step) in steps.iter().enumerate() {
            let path = ingest::consolidated_paths(aligned_dir, step).0;
            let src = extract_block_sources(&path, &summaries[k], bbox)?;
            if let Some(first) = per_step.first() {
                let first: &PointTable = first;
                ensure!(
                    first.x == src.x && first.y == src.y,
                    Validation,
                    "coordinates of time step {step} differ from step {} in block {block_id}",
                    steps[0]
                );
            }
            per_step.push(src);
        }
        let coords = &per_step[0];
        let nn = nearest_sources(&coords.x, &coords.y, grid, block_id, margin)?;
        let n_vars = coords.n_vars();
        let n_cols = 2 + n_vars * steps.len();
        let points = grid.block_points(block_id);
        let mut data = Vec::with_capacity(points.len() * n_cols);
        for (p, &src) in points.iter().zip(&nn) {
            data.push(p.0);
            data.push(p.1);
            for table in &per_step {
                data.extend_from_slice(table.vars(src));
            }
        }
        let spec = &grid.blocks[b];
        let mut header = BlockHeader::new(MAGIC_REMAP, Dtype::F64);
        header.block_id = block_id;
        header.row_count = spec.row_count;
        header.n_cols = n_cols as u64;
        header.row_offset = spec.row_offset;
        header.y_range = (spec.y_lo, spec.y_hi);
        header.extra = [steps.len() as u32, n_vars as u32];
        RemapBlock { header, data }.write(&out_dir.join(remap_file_name(block_id)))?;
        Ok::<_, Error>(n_vars)
    })?;
    Ok(RemapReport {
        n_steps: steps.len(),
        n_vars: n_vars_seen[0],
        blocks: grid.blocks.len(),
    })
}
