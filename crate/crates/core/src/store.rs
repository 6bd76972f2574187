//! Block-partitioned snapshot matrix on disk.
//!
//! A store is a directory holding one `block_NNN.snpb` file per row block.
//! Each block file is a 64-byte [`BlockHeader`] followed by `row_count x
//! n_cols` little-endian values in row-major order, so streaming rows is
//! sequential I/O. Concatenating the blocks in id order gives the full
//! `D x N` snapshot matrix with rows in natural (y, then x) grid order.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{ensure, Error, Result};
use crate::format::{self, BlockHeader, Dtype, HEADER_LEN, MAGIC_BLOCK};
use crate::parallel;

pub use crate::index::{IndexEntry, OutcomeLabel, SimMetadata, SnapshotIndex};

/// Row range of the snapshot matrix owned by one block file.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub block_id: u32,
    /// Half-open y-range `[y_lo, y_hi)` of the grid rows in this block.
    pub y_lo: f64,
    pub y_hi: f64,
    pub row_count: u64,
    pub row_offset: u64,
}

impl BlockSpec {
    /// Blocks for a matrix with no grid: y-ranges are the row ranges.
    pub fn from_row_counts(counts: &[u64]) -> Vec<BlockSpec> {
        let mut offset = 0;
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let s = BlockSpec {
                    block_id: i as u32,
                    y_lo: offset as f64,
                    y_hi: (offset + c) as f64,
                    row_count: c,
                    row_offset: offset,
                };
                offset += c;
                s
            })
            .collect()
    }

    pub fn rows(&self) -> std::ops::Range<u64> {
        self.row_offset..self.row_offset + self.row_count
    }
}

pub fn validate_specs(specs: &[BlockSpec]) -> Result<()> {
    ensure!(!specs.is_empty(), Validation, "a store needs at least one block");
    let mut offset = 0u64;
    for (i, s) in specs.iter().enumerate() {
        ensure!(s.block_id as usize == i, Validation, "block at position {i} has id {}", s.block_id);
        ensure!(s.row_count > 0, Validation, "block {i} has no rows");
        ensure!(
            s.row_offset == offset,
            Validation,
            "block {i} starts at row {} but previous blocks end at row {offset}",
            s.row_offset
        );
        ensure!(
            s.y_lo.is_finite() && s.y_hi.is_finite() && s.y_lo < s.y_hi,
            Validation,
            "block {i} has an empty or invalid y-range [{}, {})",
            s.y_lo,
            s.y_hi
        );
        if i > 0 {
            let prev = &specs[i - 1];
            ensure!(
                prev.y_hi <= s.y_lo,
                Validation,
                "block {i} y-range [{}, {}) overlaps or precedes block {} [{}, {})",
                s.y_lo,
                s.y_hi,
                i - 1,
                prev.y_lo,
                prev.y_hi
            );
        }
        offset += s.row_count;
    }
    Ok(())
}

/// Handle to an on-disk block matrix. Cheap to clone; holds no open files.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    dir: PathBuf,
    specs: Vec<BlockSpec>,
    n_cols: usize,
    dtype: Dtype,
}

pub fn block_file_name(block_id: u32) -> String {
    format!("block_{block_id:03}.snpb")
}

impl BlockMatrix {
    /// Create zero-filled block files under `dir`.
    pub fn create(dir: impl AsRef<Path>, specs: Vec<BlockSpec>, n_cols: usize, dtype: Dtype) -> Result<Self> {
        validate_specs(&specs)?;
        ensure!(n_cols >= 1, Validation, "n_cols must be at least 1");
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let m = Self {
            dir,
            specs,
            n_cols,
            dtype,
        };
        for s in &m.specs {
            let path = m.block_path(s.block_id);
            let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(&m.header_for(s).encode()).map_err(|e| Error::io(&path, e))?;
            // set_len zero-fills, and all-zero bits are 0.0 in both dtypes.
            f.set_len(HEADER_LEN as u64 + m.block_payload_len(s))
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(m)
    }

    /// Open an existing store, validating every block header and file size.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mut specs = Vec::new();
        let mut n_cols = None;
        let mut dtype = None;
        loop {
            let id = specs.len() as u32;
            let path = dir.join(block_file_name(id));
            if !path.exists() {
                break;
            }
            let mut f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            let h = BlockHeader::read_from(&mut f, MAGIC_BLOCK, &path)
                .map_err(|e| with_block(e, id))?;
            if h.block_id != id {
                return Err(Error::format(&path, Some(id), format!("header says block {}", h.block_id)));
            }
            let len = f.metadata().map_err(|e| Error::io(&path, e))?.len();
            if len != HEADER_LEN as u64 + h.payload_len() {
                return Err(Error::format(
                    &path,
                    Some(id),
                    format!("file is {len} bytes, header implies {}", HEADER_LEN as u64 + h.payload_len()),
                ));
            }
            match (n_cols, dtype) {
                (None, None) => {
                    n_cols = Some(h.n_cols as usize);
                    dtype = Some(h.dtype);
                }
                (Some(n), Some(d)) if n == h.n_cols as usize && d == h.dtype => {}
                _ => return Err(Error::format(&path, Some(id), "n_cols or dtype differs from block 0")),
            }
            specs.push(BlockSpec {
                block_id: id,
                y_lo: h.y_range.0,
                y_hi: h.y_range.1,
                row_count: h.row_count,
                row_offset: h.row_offset,
            });
        }
        if specs.is_empty() {
            return Err(Error::format(dir.join(block_file_name(0)), Some(0), "no block files found"));
        }
        validate_specs(&specs).map_err(|e| Error::format(&dir, None, e.to_string()))?;
        Ok(Self {
            dir,
            specs,
            n_cols: n_cols.unwrap(),
            dtype: dtype.unwrap(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn specs(&self) -> &[BlockSpec] {
        &self.specs
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> u64 {
        self.specs.iter().map(|s| s.row_count).sum()
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn block_path(&self, block_id: u32) -> PathBuf {
        self.dir.join(block_file_name(block_id))
    }

    /// Path of the optional snapshot index stored alongside the blocks.
    pub fn index_path(&self) -> PathBuf {
        self.dir.join("index.csv")
    }

    pub fn load_index(&self) -> Result<Option<SnapshotIndex>> {
        let p = self.index_path();
        if !p.exists() {
            return Ok(None);
        }
        let idx = SnapshotIndex::read(&p)?;
        ensure!(idx.len() == self.n_cols, Validation, "index has {} entries, store has {} columns", idx.len(), self.n_cols);
        Ok(Some(idx))
    }

    fn header_for(&self, s: &BlockSpec) -> BlockHeader {
        let mut h = BlockHeader::new(MAGIC_BLOCK, self.dtype);
        h.block_id = s.block_id;
        h.row_count = s.row_count;
        h.n_cols = self.n_cols as u64;
        h.row_offset = s.row_offset;
        h.y_range = (s.y_lo, s.y_hi);
        h
    }

    fn block_payload_len(&self, s: &BlockSpec) -> u64 {
        s.row_count * self.n_cols as u64 * self.dtype.width() as u64
    }

    fn spec(&self, block_id: u32) -> Result<&BlockSpec> {
        self.specs
            .get(block_id as usize)
            .ok_or_else(|| Error::Validation(format!("block {block_id} out of range (store has {})", self.specs.len())))
    }

    fn open_checked(&self, block_id: u32, write: bool) -> Result<File> {
        let s = self.spec(block_id)?;
        let path = self.block_path(block_id);
        let mut f = OpenOptions::new()
            .read(true)
            .write(write)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let h = BlockHeader::read_from(&mut f, MAGIC_BLOCK, &path).map_err(|e| with_block(e, block_id))?;
        if h != self.header_for(s) {
            return Err(Error::format(&path, Some(block_id), "header does not match store layout"));
        }
        let len = f.metadata().map_err(|e| Error::io(&path, e))?.len();
        let want = HEADER_LEN as u64 + self.block_payload_len(s);
        if len != want {
            return Err(Error::format(&path, Some(block_id), format!("file is {len} bytes, expected {want}")));
        }
        Ok(f)
    }

    /// Write one column's values for one block (strided writes).
    pub fn write_column_block(&self, block_id: u32, column: usize, values: &[f64]) -> Result<()> {
        let s = self.spec(block_id)?;
        ensure!(column < self.n_cols, Validation, "column {column} out of range (n_cols = {})", self.n_cols);
        ensure!(
            values.len() as u64 == s.row_count,
            Dimension,
            "block {block_id} has {} rows, got {} values",
            s.row_count,
            values.len()
        );
        let path = self.block_path(block_id);
        let mut f = self.open_checked(block_id, true)?;
        let w = self.dtype.width() as u64;
        let mut buf = Vec::with_capacity(8);
        for (r, v) in values.iter().enumerate() {
            let pos = HEADER_LEN as u64 + (r as u64 * self.n_cols as u64 + column as u64) * w;
            buf.clear();
            format::write_values(&mut buf, self.dtype, std::slice::from_ref(v)).unwrap();
            f.seek(SeekFrom::Start(pos))
                .and_then(|_| f.write_all(&buf))
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_column_block(&self, block_id: u32, column: usize) -> Result<Vec<f64>> {
        ensure!(column < self.n_cols, Validation, "column {column} out of range (n_cols = {})", self.n_cols);
        let s = self.spec(block_id)?;
        let mut out = Vec::with_capacity(s.row_count as usize);
        self.stream_block_rows(block_id, |_, row| out.push(row[column]))?;
        Ok(out)
    }

    /// Full column of length D in natural order.
    pub fn read_column(&self, column: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_rows() as usize);
        for s in &self.specs {
            out.extend(self.read_column_block(s.block_id, column)?);
        }
        Ok(out)
    }

    /// Replace a whole block from a row-major buffer.
    pub fn write_block(&self, block_id: u32, row_major: &[f64]) -> Result<()> {
        let mut w = self.row_writer(block_id)?;
        let n = self.n_cols;
        ensure!(row_major.len() % n == 0, Dimension, "buffer length {} not a multiple of n_cols {n}", row_major.len());
        for row in row_major.chunks_exact(n) {
            w.push_row(row)?;
        }
        w.finish()
    }

    /// Sequential writer that rewrites block `block_id` one row at a time.
    pub fn row_writer(&self, block_id: u32) -> Result<BlockRowWriter> {
        let s = self.spec(block_id)?.clone();
        let path = self.block_path(block_id);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(f);
        out.write_all(&self.header_for(&s).encode()).map_err(|e| Error::io(&path, e))?;
        Ok(BlockRowWriter {
            out,
            path,
            dtype: self.dtype,
            n_cols: self.n_cols,
            expected: s.row_count,
            written: 0,
            block_id,
        })
    }

    pub fn block_reader(&self, block_id: u32) -> Result<BlockRowReader> {
        let s = self.spec(block_id)?;
        let f = self.open_checked(block_id, false)?;
        Ok(BlockRowReader {
            input: BufReader::with_capacity(1 << 20, f),
            path: self.block_path(block_id),
            dtype: self.dtype,
            n_cols: self.n_cols,
            remaining: s.row_count,
            block_id,
            scratch: Vec::new(),
        })
    }

    /// Visit the rows of one block in order; the callback gets the local row index.
    pub fn stream_block_rows(&self, block_id: u32, mut visit: impl FnMut(usize, &[f64])) -> Result<()> {
        let mut reader = self.block_reader(block_id)?;
        let mut row = vec![0.0; self.n_cols];
        let mut r = 0;
        while reader.read_row(&mut row)? {
            visit(r, &row);
            r += 1;
        }
        Ok(())
    }

    /// Visit every row of the matrix in global order.
    pub fn stream_rows(&self, mut visit: impl FnMut(u64, &[f64])) -> Result<()> {
        for s in &self.specs {
            let off = s.row_offset;
            self.stream_block_rows(s.block_id, |r, row| visit(off + r as u64, row))?;
        }
        Ok(())
    }

    /// Run `f` once per block (possibly on several threads) and return the
    /// per-block results in block order.
    pub fn map_blocks<R, F>(&self, jobs: usize, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&BlockSpec, &mut BlockRowReader) -> Result<R> + Sync,
    {
        parallel::try_map_indexed(jobs, self.specs.len(), |b| {
            let mut reader = self.block_reader(b as u32)?;
            f(&self.specs[b], &mut reader)
        })
    }
}

impl BlockMatrix {
    /// Map every block to a partial result and fold the partials into `acc`
    /// strictly in block order. At most `jobs` partials are alive at once,
    /// and the result does not depend on `jobs`.
    pub fn fold_blocks<R, A, F, G>(&self, jobs: usize, mut acc: A, map: F, mut reduce: G) -> Result<A>
    where
        R: Send,
        F: Fn(&BlockSpec, &mut BlockRowReader) -> Result<R> + Sync,
        G: FnMut(A, R) -> A,
    {
        let wave = parallel::effective_jobs(jobs).max(1);
        let n = self.specs.len();
        let mut start = 0;
        while start < n {
            let end = (start + wave).min(n);
            let partials = parallel::try_map_indexed(jobs, end - start, |k| {
                let b = start + k;
                let mut reader = self.block_reader(b as u32)?;
                map(&self.specs[b], &mut reader)
            })?;
            for p in partials {
                acc = reduce(acc, p);
            }
            start = end;
        }
        Ok(acc)
    }
}

fn with_block(e: Error, block_id: u32) -> Error {
    match e {
        Error::Format { path, msg, .. } => Error::Format {
            path,
            block_id: Some(block_id),
            msg,
        },
        other => other,
    }
}

pub struct BlockRowReader {
    input: BufReader<File>,
    path: PathBuf,
    dtype: Dtype,
    n_cols: usize,
    remaining: u64,
    block_id: u32,
    scratch: Vec<u8>,
}

impl BlockRowReader {
    /// Fill `row` with the next row; returns `false` at end of block.
    pub fn read_row(&mut self, row: &mut [f64]) -> Result<bool> {
        if self.remaining == 0 {
            return Ok(false);
        }
        debug_assert_eq!(row.len(), self.n_cols);
        format::read_values(&mut self.input, self.dtype, row, &mut self.scratch)
            .map_err(|e| Error::format(&self.path, Some(self.block_id), format!("truncated payload: {e}")))?;
        self.remaining -= 1;
        Ok(true)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }
}

pub struct BlockRowWriter {
    out: BufWriter<File>,
    path: PathBuf,
    dtype: Dtype,
    n_cols: usize,
    expected: u64,
    written: u64,
    block_id: u32,
}

impl BlockRowWriter {
    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        ensure!(row.len() == self.n_cols, Dimension, "row has {} values, expected {}", row.len(), self.n_cols);
        ensure!(
            self.written < self.expected,
            Validation,
            "block {} already holds its {} rows",
            self.block_id,
            self.expected
        );
        format::write_values(&mut self.out, self.dtype, row).map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        ensure!(
            self.written == self.expected,
            Validation,
            "block {} got {} rows, expected {}",
            self.block_id,
            self.written,
            self.expected
        );
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Read every row of a store into memory (tests and small matrices only).
pub fn read_dense_row_major(m: &BlockMatrix) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(m.n_rows() as usize * m.n_cols());
    m.stream_rows(|_, row| out.extend_from_slice(row))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blocks() -> Vec<BlockSpec> {
        BlockSpec::from_row_counts(&[10, 10])
    }

    #[test]
    fn create_gives_zero_store_and_reopens() {
        let dir = tempfile::tempdir().unwrap();
        let m = BlockMatrix::create(dir.path(), two_blocks(), 3, Dtype::F64).unwrap();
        assert_eq!(m.n_rows(), 20);
        let dense = read_dense_row_major(&m).unwrap();
        assert_eq!(dense.len(), 60);
        assert!(dense.iter().all(|&v| v == 0.0));
        let again = BlockMatrix::open(dir.path()).unwrap();
        assert_eq!(again.specs(), m.specs());
        assert_eq!(again.n_cols(), 3);
    }

    #[test]
    fn unordered_blocks_rejected() {
        let mut specs = two_blocks();
        specs.swap(0, 1);
        specs[0].block_id = 0;
        specs[1].block_id = 1;
        let dir = tempfile::tempdir().unwrap();
        let err = BlockMatrix::create(dir.path(), specs, 3, Dtype::F64).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn overlapping_y_ranges_rejected() {
        let mut specs = two_blocks();
        specs[1].y_lo = 5.0;
        assert!(validate_specs(&specs).is_err());
    }

    #[test]
    fn column_round_trip_both_dtypes() {
        for dtype in [Dtype::F64, Dtype::F32] {
            let dir = tempfile::tempdir().unwrap();
            let m = BlockMatrix::create(dir.path(), BlockSpec::from_row_counts(&[3, 2]), 4, dtype).unwrap();
            m.write_column_block(0, 0, &[1.0, 2.0, 3.0]).unwrap();
            m.write_column_block(1, 3, &[0.5, -0.25]).unwrap();
            assert_eq!(m.read_column_block(0, 0).unwrap(), vec![1.0, 2.0, 3.0]);
            assert_eq!(m.read_column(3).unwrap(), vec![0.0, 0.0, 0.0, 0.5, -0.25]);
            // other columns untouched
            assert_eq!(m.read_column(1).unwrap(), vec![0.0; 5]);
        }
    }

    #[test]
    fn length_mismatch_and_bad_column() {
        let dir = tempfile::tempdir().unwrap();
        let m = BlockMatrix::create(dir.path(), BlockSpec::from_row_counts(&[10]), 2, Dtype::F64).unwrap();
        assert!(matches!(m.write_column_block(0, 0, &[1.0; 5]), Err(Error::Dimension(_))));
        assert!(matches!(m.write_column_block(0, 2, &[1.0; 10]), Err(Error::Validation(_))));
    }

    #[test]
    fn stream_visits_rows_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let m = BlockMatrix::create(dir.path(), two_blocks(), 3, Dtype::F64).unwrap();
        let mut seen = Vec::new();
        m.stream_rows(|i, row| {
            assert_eq!(row.len(), 3);
            seen.push(i)
        })
        .unwrap();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn truncated_block_reports_block_id() {
        let dir = tempfile::tempdir().unwrap();
        let m = BlockMatrix::create(dir.path(), two_blocks(), 3, Dtype::F64).unwrap();
        let p = m.block_path(1);
        let f = OpenOptions::new().write(true).open(&p).unwrap();
        f.set_len(HEADER_LEN as u64 + 17).unwrap();
        let err = m.stream_rows(|_, _| {}).unwrap_err();
        match err {
            Error::Format { block_id, .. } => assert_eq!(block_id, Some(1)),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(BlockMatrix::open(dir.path()), Err(Error::Format { block_id: Some(1), .. })));
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = BlockMatrix::create(dir.path(), two_blocks(), 3, Dtype::F64).unwrap();
        let p = m.block_path(0);
        let mut f = OpenOptions::new().write(true).open(&p).unwrap();
        f.write_all(b"XXXX").unwrap();
        drop(f);
        assert!(matches!(m.stream_rows(|_, _| {}), Err(Error::Format { block_id: Some(0), .. })));
    }
}
