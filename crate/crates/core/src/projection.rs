//! Johnson-Lindenstrauss dimension bound, streaming very-sparse random
//! projection of a block matrix, and distortion evaluation.
//!
//! Entries of the `d x D` matrix `R` are
//! `sqrt(s) * {+1 w.p. 1/(2s), 0 w.p. 1 - 1/s, -1 w.p. 1/(2s)}`, each drawn
//! from a counter-based hash of `(seed, i, j)`, so any column of `R` can be
//! generated on demand. The projection is `(1/sqrt(d)) R X`, which preserves
//! squared distances in expectation. Neither `R` nor `X` is materialised: each
//! row of `X` is read once and its outer product with the matching column of
//! `R` is added to the accumulator.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::format::{self, Dtype};
use crate::matrix::DenseColumns;
use crate::rng::{hash3, unit_f64};
use crate::store::BlockMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JLParams {
    pub epsilon: f64,
    pub n_points: usize,
    pub d_min: usize,
}

/// Smallest integer `d >= 4 ln(N) / (eps^2/2 - eps^3/3)`.
pub fn jl_dimension(epsilon: f64, n_points: usize) -> Result<JLParams> {
    ensure!(epsilon > 0.0 && epsilon < 1.0, Validation, "epsilon must be in (0, 1), got {epsilon}");
    ensure!(n_points >= 2, Validation, "need at least 2 points, got {n_points}");
    let denom = epsilon * epsilon / 2.0 - epsilon.powi(3) / 3.0;
    let bound = 4.0 * (n_points as f64).ln() / denom;
    Ok(JLParams {
        epsilon,
        n_points,
        d_min: bound.ceil() as usize,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Sparse,
    /// `R = I` with `d = D` and no scaling; an exact isometry for testing.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRPSpec {
    pub d: usize,
    pub source_dim: usize,
    pub s: f64,
    pub seed: u64,
    pub kind: ProjectionKind,
}

impl SparseRPSpec {
    pub fn new(d: usize, source_dim: usize, s: f64, seed: u64) -> Result<Self> {
        ensure!(d >= 1, Validation, "reduced dimension must be at least 1");
        ensure!(source_dim >= 1, Validation, "source dimension must be at least 1");
        ensure!(s >= 1.0 && s.is_finite(), Validation, "sparsity s must be >= 1, got {s}");
        Ok(Self {
            d,
            source_dim,
            s,
            seed,
            kind: ProjectionKind::Sparse,
        })
    }

    /// `s = sqrt(D)`.
    pub fn very_sparse(d: usize, source_dim: usize, seed: u64) -> Result<Self> {
        Self::new(d, source_dim, (source_dim as f64).sqrt().max(1.0), seed)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            d: dim,
            source_dim: dim,
            s: 1.0,
            seed: 0,
            kind: ProjectionKind::Identity,
        }
    }

    /// Entry `r_ij` of R (row i < d, column j < D), without the 1/sqrt(d) scale.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self.kind {
            ProjectionKind::Identity => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
            ProjectionKind::Sparse => {
                let u = unit_f64(hash3(self.seed, i as u64, j as u64));
                let p = 1.0 / (2.0 * self.s);
                if u < p {
                    self.s.sqrt()
                } else if u < 2.0 * p {
                    -self.s.sqrt()
                } else {
                    0.0
                }
            }
        }
    }

    /// Nonzero entries of column `j` of R as `(row, value)`.
    pub fn column_nonzeros(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self.kind {
            ProjectionKind::Identity => out.push((j, 1.0)),
            ProjectionKind::Sparse => {
                for i in 0..self.d {
                    let v = self.entry(i, j);
                    if v != 0.0 {
                        out.push((i, v));
                    }
                }
            }
        }
    }

    /// Factor applied to `R X`.
    pub fn scale(&self) -> f64 {
        match self.kind {
            ProjectionKind::Identity => 1.0,
            ProjectionKind::Sparse => 1.0 / (self.d as f64).sqrt(),
        }
    }

    fn kind_code(&self) -> u8 {
        match self.kind {
            ProjectionKind::Sparse => 0,
            ProjectionKind::Identity => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMatrix {
    pub spec: SparseRPSpec,
    /// `d x N`, one column per snapshot.
    pub values: DenseColumns,
}

#[derive(Debug, Clone, Default)]
pub struct ProjectOptions {
    pub jobs: usize,
    /// Upper bound on accumulator memory (all live partial buffers), in bytes.
    pub memory_budget: Option<usize>,
}

/// Row-major `d x N` accumulator fed one source row at a time.
struct Accumulator<'a> {
    spec: &'a SparseRPSpec,
    n: usize,
    acc: Vec<f64>,
    nz: Vec<(usize, f64)>,
}

impl<'a> Accumulator<'a> {
    fn new(spec: &'a SparseRPSpec, n: usize) -> Self {
        Self {
            spec,
            n,
            acc: vec![0.0; spec.d * n],
            nz: Vec::new(),
        }
    }

    fn add_row(&mut self, j: usize, row: &[f64]) {
        self.spec.column_nonzeros(j, &mut self.nz);
        for &(i, r) in &self.nz {
            let out = &mut self.acc[i * self.n..(i + 1) * self.n];
            for (o, x) in out.iter_mut().zip(row) {
                *o += r * x;
            }
        }
    }
}

fn finish(spec: &SparseRPSpec, n: usize, acc: &[f64]) -> DenseColumns {
    let scale = spec.scale();
    let d = spec.d;
    let mut out = DenseColumns::zeros(d, n);
    for i in 0..d {
        for c in 0..n {
            out.as_mut_slice()[c * d + i] = acc[i * n + c] * scale;
        }
    }
    out
}

/// Project a block matrix with R defined by `spec`, streaming each block once.
pub fn project_stream(m: &BlockMatrix, spec: &SparseRPSpec, opts: &ProjectOptions) -> Result<ProjectedMatrix> {
    let big_d = m.n_rows() as usize;
    let n = m.n_cols();
    ensure!(
        spec.source_dim == big_d,
        Dimension,
        "projection expects D = {}, store has {big_d} rows",
        spec.source_dim
    );
    if spec.kind == ProjectionKind::Identity {
        ensure!(spec.d == big_d, Dimension, "identity projection needs d = D");
    }
    let live = crate::parallel::effective_jobs(opts.jobs).min(m.specs().len()) + 1;
    let need = spec.d.saturating_mul(n).saturating_mul(8).saturating_mul(live);
    if let Some(budget) = opts.memory_budget {
        ensure!(
            need <= budget,
            Validation,
            "accumulation needs {need} bytes ({live} buffers of {}x{n}), budget is {budget}",
            spec.d
        );
    }
    let total = m.fold_blocks(
        opts.jobs,
        vec![0.0; spec.d * n],
        |b, reader| {
            let mut acc = Accumulator::new(spec, n);
            let mut row = vec![0.0; n];
            let mut j = b.row_offset as usize;
            while reader.read_row(&mut row)? {
                acc.add_row(j, &row);
                j += 1;
            }
            Ok(acc.acc)
        },
        |mut total, part| {
            for (t, p) in total.iter_mut().zip(&part) {
                *t += p;
            }
            total
        },
    )?;
    Ok(ProjectedMatrix {
        spec: spec.clone(),
        values: finish(spec, n, &total),
    })
}

/// In-memory projection of a `D x N` matrix, same arithmetic as [`project_stream`]
/// with a single block.
pub fn project_columns(x: &DenseColumns, spec: &SparseRPSpec) -> Result<DenseColumns> {
    ensure!(spec.source_dim == x.rows(), Dimension, "projection expects D = {}, got {}", spec.source_dim, x.rows());
    let n = x.cols();
    let mut acc = Accumulator::new(spec, n);
    let mut row = vec![0.0; n];
    for j in 0..x.rows() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = x.get(j, c);
        }
        acc.add_row(j, &row);
    }
    Ok(finish(spec, n, &acc.acc))
}

const PROJ_MAGIC: [u8; 4] = *b"PROJ";
const PROJ_HEADER: usize = 64;

impl ProjectedMatrix {
    /// `PROJ` file: 64-byte header {magic, u32 version, u8 dtype, u8 kind,
    /// u64 d @16, u64 N @24, u64 seed @32, f64 s @40, u64 D @48}, then the
    /// d x N payload column-major.
    pub fn write(&self, path: &Path, dtype: Dtype) -> Result<()> {
        let mut h = [0u8; PROJ_HEADER];
        h[0..4].copy_from_slice(&PROJ_MAGIC);
        h[4..8].copy_from_slice(&format::FORMAT_VERSION.to_le_bytes());
        h[8] = dtype.code();
        h[9] = self.spec.kind_code();
        h[16..24].copy_from_slice(&(self.spec.d as u64).to_le_bytes());
        h[24..32].copy_from_slice(&(self.values.cols() as u64).to_le_bytes());
        h[32..40].copy_from_slice(&self.spec.seed.to_le_bytes());
        h[40..48].copy_from_slice(&self.spec.s.to_le_bytes());
        h[48..56].copy_from_slice(&(self.spec.source_dim as u64).to_le_bytes());
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(&h).map_err(|e| Error::io(path, e))?;
        format::write_values(&mut w, dtype, self.values.as_slice()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut h = [0u8; PROJ_HEADER];
        r.read_exact(&mut h).map_err(|_| Error::format(path, None, "shorter than PROJ header"))?;
        if h[0..4] != PROJ_MAGIC {
            return Err(Error::format(path, None, "bad magic, expected PROJ"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let dtype = Dtype::from_code(h[8]).ok_or_else(|| Error::format(path, None, "bad dtype"))?;
        let kind = match h[9] {
            0 => ProjectionKind::Sparse,
            1 => ProjectionKind::Identity,
            k => return Err(Error::format(path, None, format!("bad projection kind {k}"))),
        };
        let (d, n) = (u64_at(16) as usize, u64_at(24) as usize);
        let spec = SparseRPSpec {
            d,
            source_dim: u64_at(48) as usize,
            s: f64::from_le_bytes(h[40..48].try_into().unwrap()),
            seed: u64_at(32),
            kind,
        };
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != d * n * dtype.width() {
            return Err(Error::format(path, None, format!("payload {} bytes, expected {}", bytes.len(), d * n * dtype.width())));
        }
        let mut data = vec![0.0; d * n];
        format::decode_values(dtype, &bytes, &mut data);
        Ok(Self {
            spec,
            values: DenseColumns::from_col_major(d, n, data)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionRow {
    pub ref_col: usize,
    pub other_col: usize,
    pub orig: f64,
    pub proj: f64,
    /// `proj / orig`; `None` when the original distance is zero.
    pub ratio: Option<f64>,
}

/// Original vs projected distances from each reference column to every column.
/// The original distances come from a single streaming pass over `m`.
pub fn distortion_report(m: &BlockMatrix, p: &ProjectedMatrix, reference_columns: &[usize], jobs: usize) -> Result<Vec<DistortionRow>> {
    let n = m.n_cols();
    ensure!(p.values.cols() == n, Dimension, "projected matrix has {} columns, store has {n}", p.values.cols());
    for &r in reference_columns {
        ensure!(r < n, Validation, "reference column {r} out of range (N = {n})");
    }
    let k = reference_columns.len();
    let sq = m.fold_blocks(
        jobs,
        vec![0.0; k * n],
        |_, reader| {
            let mut acc = vec![0.0; k * n];
            let mut row = vec![0.0; n];
            while reader.read_row(&mut row)? {
                for (a, &rc) in reference_columns.iter().enumerate() {
                    let base = row[rc];
                    for (o, x) in acc[a * n..(a + 1) * n].iter_mut().zip(&row) {
                        *o += (base - x) * (base - x);
                    }
                }
            }
            Ok(acc)
        },
        |mut t, part| {
            for (a, b) in t.iter_mut().zip(&part) {
                *a += b;
            }
            t
        },
    )?;
    let mut out = Vec::with_capacity(k * n);
    for (a, &rc) in reference_columns.iter().enumerate() {
        for j in 0..n {
            let orig = sq[a * n + j].sqrt();
            let proj = crate::matrix::distance(p.values.column(rc), p.values.column(j));
            out.push(DistortionRow {
                ref_col: rc,
                other_col: j,
                orig,
                proj,
                ratio: (orig > 0.0).then(|| proj / orig),
            });
        }
    }
    Ok(out)
}

pub fn distortion_csv(rows: &[DistortionRow]) -> String {
    let mut s = String::from("ref_col,other_col,orig,proj,ratio\n");
    for r in rows {
        let ratio = r.ratio.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{ratio}\n", r.ref_col, r.other_col, r.orig, r.proj));
    }
    s
}

/// Fraction of non-flagged pairs whose ratio lies in `[lo, hi]`.
pub fn fraction_within(rows: &[DistortionRow], lo: f64, hi: f64) -> f64 {
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return 1.0;
    }
    ratios.iter().filter(|&&r| r >= lo && r <= hi).count() as f64 / ratios.len() as f64
}
