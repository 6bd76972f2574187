use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::format::{self, BlockHeader, Dtype};

/// Scattered points with `n_vars` values each, stored column-wise for the
/// coordinates and row-major for the variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointTable {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `len() x n_vars`, row-major.
    pub values: Vec<f64>,
    n_vars: usize,
}

impl PointTable {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            ..Default::default()
        }
    }

    pub fn with_capacity(n_vars: usize, n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            values: Vec::with_capacity(n * n_vars),
            n_vars,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn push(&mut self, x: f64, y: f64, vars: &[f64]) {
        debug_assert_eq!(vars.len(), self.n_vars);
        self.x.push(x);
        self.y.push(y);
        self.values.extend_from_slice(vars);
    }

    pub fn vars(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_vars..(i + 1) * self.n_vars]
    }

    pub fn value(&self, i: usize, var: usize) -> f64 {
        self.values[i * self.n_vars + var]
    }

    pub fn extend_from(&mut self, other: &PointTable) {
        debug_assert_eq!(other.n_vars, self.n_vars);
        self.x.extend_from_slice(&other.x);
        self.y.extend_from_slice(&other.y);
        self.values.extend_from_slice(&other.values);
    }

    /// Rows `start..start+len`.
    pub fn slice(&self, start: usize, len: usize) -> PointTable {
        PointTable {
            x: self.x[start..start + len].to_vec(),
            y: self.y[start..start + len].to_vec(),
            values: self.values[start * self.n_vars..(start + len) * self.n_vars].to_vec(),
            n_vars: self.n_vars,
        }
    }

    /// Bounding box `(x_min, x_max, y_min, y_max)`, NaN for an empty table.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        if self.is_empty() {
            return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        let fold = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
        };
        let (x0, x1) = fold(&self.x);
        let (y0, y1) = fold(&self.y);
        (x0, x1, y0, y1)
    }

    /// True when points are sorted by (y, x).
    pub fn is_natural_order(&self) -> bool {
        (1..self.len()).all(|i| (self.y[i - 1], self.x[i - 1]) <= (self.y[i], self.x[i]))
    }

    pub fn check_finite(&self) -> Result<()> {
        for i in 0..self.len() {
            ensure!(
                self.x[i].is_finite() && self.y[i].is_finite(),
                Data,
                "non-finite coordinate at point {i}: ({}, {})",
                self.x[i],
                self.y[i]
            );
        }
        ensure!(self.values.iter().all(|v| v.is_finite()), Data, "non-finite variable value");
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("x,y");
        for v in 0..self.n_vars {
            let _ = write!(s, ",var{v}");
        }
        s.push('\n');
        for i in 0..self.len() {
            let _ = write!(s, "{},{}", self.x[i], self.y[i]);
            for v in self.vars(i) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(origin, None, "empty CSV"))?
            .1;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 2 || cols[0] != "x" || cols[1] != "y" {
            return Err(Error::format(origin, None, format!("expected header x,y,var0,..., got {header:?}")));
        }
        for (k, c) in cols[2..].iter().enumerate() {
            if *c != format!("var{k}") {
                return Err(Error::format(origin, None, format!("column {} should be var{k}, got {c}", k + 2)));
            }
        }
        let n_vars = cols.len() - 2;
        let mut t = PointTable::new(n_vars);
        let mut vars = vec![0.0; n_vars];
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != n_vars + 2 {
                return Err(Error::format(origin, None, format!("line {}: {} fields, expected {}", ln + 1, f.len(), n_vars + 2)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(origin, None, format!("line {}: bad number {s:?}", ln + 1)))
            };
            for (k, v) in vars.iter_mut().enumerate() {
                *v = num(f[k + 2])?;
            }
            t.push(num(f[0])?, num(f[1])?, &vars);
        }
        Ok(t)
    }

    /// Write as a binary record file: header then rows `[x, y, vars...]` in f64.
    pub fn write_binary(&self, path: &Path, mut header: BlockHeader) -> Result<()> {
        header.dtype = Dtype::F64;
        header.row_count = self.len() as u64;
        header.n_cols = 2 + self.n_vars as u64;
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        w.write_all(&header.encode()).map_err(io)?;
        let mut row = Vec::with_capacity(2 + self.n_vars);
        for i in 0..self.len() {
            row.clear();
            row.push(self.x[i]);
            row.push(self.y[i]);
            row.extend_from_slice(self.vars(i));
            format::write_values(&mut w, Dtype::F64, &row).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_binary(path: &Path, magic: [u8; 4]) -> Result<(Self, BlockHeader)> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let h = BlockHeader::read_from(&mut r, magic, path)?;
        ensure_format(h.n_cols >= 2, path, "record files need at least x and y columns")?;
        let n_vars = h.n_cols as usize - 2;
        let n = h.row_count as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() as u64 != h.payload_len() {
            return Err(Error::format(
                path,
                Some(h.block_id),
                format!("payload is {} bytes, header implies {}", bytes.len(), h.payload_len()),
            ));
        }
        let mut flat = vec![0.0; n * (2 + n_vars)];
        format::decode_values(h.dtype, &bytes, &mut flat);
        let mut t = PointTable::with_capacity(n_vars, n);
        for row in flat.chunks_exact(2 + n_vars) {
            t.push(row[0], row[1], &row[2..]);
        }
        Ok((t, h))
    }
}

fn ensure_format(cond: bool, path: &Path, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::format(path, None, msg))
    }
}
