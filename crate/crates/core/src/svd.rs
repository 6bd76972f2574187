//! Per-snapshot SVD weights via the method of snapshots: accumulate the
//! Gram matrix `G = X^T X` block by block, eigendecompose it as
//! `G = V S^2 V^T`, and form `W = S V^T`. The left singular vectors are never
//! stored; `u_k = X v_k / s_k` is recomputed on the fly when needed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ensure, Error, Result};
use crate::format;
use crate::matrix::DenseColumns;
use crate::store::BlockMatrix;

/// Relative eigenvalue cutoff below which a mode is treated as rank deficient.
pub const EIGEN_RELATIVE_CUTOFF: f64 = 1e-12;

/// `X^T X` as an N x N matrix, reduced over blocks in block order.
pub fn gram_matrix(m: &BlockMatrix, jobs: usize) -> Result<DenseColumns> {
    let n = m.n_cols();
    let g = m.fold_blocks(
        jobs,
        vec![0.0; n * n],
        |_, reader| {
            let mut acc = vec![0.0; n * n];
            let mut row = vec![0.0; n];
            while reader.read_row(&mut row)? {
                for i in 0..n {
                    let xi = row[i];
                    if xi == 0.0 {
                        continue;
                    }
                    let dst = &mut acc[i * n + i..(i + 1) * n];
                    for (a, &xj) in dst.iter_mut().zip(&row[i..]) {
                        *a += xi * xj;
                    }
                }
            }
            Ok(acc)
        },
        |mut t, p| {
            t.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
            t
        },
    )?;
    Ok(symmetric_from_upper(n, g))
}

/// Gram matrix of an in-memory `D x N` matrix.
pub fn gram_of_columns(x: &DenseColumns) -> DenseColumns {
    let n = x.cols();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            g[i * n + j] = x.column(i).iter().zip(x.column(j)).map(|(a, b)| a * b).sum();
        }
    }
    symmetric_from_upper(n, g)
}

fn symmetric_from_upper(n: usize, mut g: Vec<f64>) -> DenseColumns {
    for i in 0..n {
        for j in 0..i {
            g[i * n + j] = g[j * n + i];
        }
    }
    DenseColumns::from_col_major(n, n, g).expect("square")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    /// Modes x N. Column i holds the weights of snapshot i, row k is mode k.
    pub weights: DenseColumns,
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    /// Modes whose eigenvalue was clamped to zero.
    pub rank_deficient: Vec<bool>,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.weights.cols()
    }

    /// Weights restricted to the leading `modes` modes.
    pub fn truncated(&self, modes: usize) -> DenseColumns {
        self.weights.truncate_rows(modes)
    }

    /// Right singular vector k recovered as `w_k / s_k`; `None` for clamped modes.
    pub fn right_vector(&self, k: usize) -> Option<Vec<f64>> {
        let s = self.singular_values[k];
        if self.rank_deficient[k] || s == 0.0 {
            return None;
        }
        Some((0..self.n()).map(|i| self.weights.get(k, i) / s).collect())
    }
}

/// Eigendecomposition of a symmetric positive semidefinite Gram matrix.
/// Each right singular vector is signed so its first nonzero entry is positive.
pub fn weights_from_gram(g: &DenseColumns) -> Result<WeightMatrix> {
    let n = g.rows();
    ensure!(g.cols() == n, Dimension, "Gram matrix must be square, got {}x{}", n, g.cols());
    ensure!(g.is_finite(), Data, "Gram matrix contains non-finite values");
    let scale = g.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (g.get(i, j), g.get(j, i));
            ensure!(
                (a - b).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE),
                Validation,
                "Gram matrix is not symmetric at ({i},{j}): {a} vs {b}"
            );
        }
    }
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (g.get(i, j) + g.get(j, i)));
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let lmax = order.first().map_or(0.0, |&k| eig.eigenvalues[k].max(0.0));

    let mut weights = DenseColumns::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut rank_deficient = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        let clamped = lmax == 0.0 || lambda < EIGEN_RELATIVE_CUTOFF * lmax;
        let s = if clamped { 0.0 } else { lambda.sqrt() };
        singular_values.push(s);
        rank_deficient.push(clamped);
        let v = eig.eigenvectors.column(src);
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let sign = match v.iter().find(|x| x.abs() > 1e-12 * vmax) {
            Some(&x) if x < 0.0 => -1.0,
            _ => 1.0,
        };
        for i in 0..n {
            weights.as_mut_slice()[i * n + k] = s * sign * v[i];
        }
    }
    Ok(WeightMatrix {
        weights,
        singular_values,
        rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    /// `||x_i - sum_{k < K} u_k w_ki||` per snapshot.
    pub residuals: Vec<f64>,
    pub modes_used: Vec<usize>,
    /// Requested modes left out because their singular value is zero.
    pub modes_skipped: Vec<usize>,
}

/// Rank-`k_modes` reconstruction residual of every snapshot, streaming the
/// store once.
pub fn reconstruct_check(m: &BlockMatrix, w: &WeightMatrix, k_modes: usize, jobs: usize) -> Result<ReconstructionReport> {
    let n = m.n_cols();
    ensure!(w.n() == n, Dimension, "weights cover {} snapshots, store has {n}", w.n());
    ensure!(k_modes >= 1 && k_modes <= n, Validation, "k_modes must be in 1..={n}, got {k_modes}");
    let mut modes_used = Vec::new();
    let mut modes_skipped = Vec::new();
    // Columns of `vs` are v_k / s_k, so a row of X times vs gives the row of U.
    let mut vs = Vec::new();
    for k in 0..k_modes {
        match w.right_vector(k) {
            Some(v) => {
                let s = w.singular_values[k];
                vs.extend(v.iter().map(|x| x / s));
                modes_used.push(k);
            }
            None => modes_skipped.push(k),
        }
    }
    let kk = modes_used.len();
    let sq = m.fold_blocks(
        jobs,
        vec![0.0; n],
        |_, reader| {
            let mut acc = vec![0.0; n];
            let mut row = vec![0.0; n];
            let mut u = vec![0.0; kk];
            while reader.read_row(&mut row)? {
                for (a, uk) in u.iter_mut().enumerate() {
                    *uk = row.iter().zip(&vs[a * n..(a + 1) * n]).map(|(x, v)| x * v).sum();
                }
                for i in 0..n {
                    let wcol = w.weights.column(i);
                    let approx: f64 = modes_used.iter().zip(&u).map(|(&k, uk)| uk * wcol[k]).sum();
                    let r = row[i] - approx;
                    acc[i] += r * r;
                }
            }
            Ok(acc)
        },
        |mut t, p| {
            t.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
            t
        },
    )?;
    Ok(ReconstructionReport {
        residuals: sq.into_iter().map(f64::sqrt).collect(),
        modes_used,
        modes_skipped,
    })
}

const WGTS_MAGIC: [u8; 4] = *b"WGTS";

impl WeightMatrix {
    /// `WGTS` file: 64-byte header {magic, u32 version, u64 N @16, u64 modes @24},
    /// then the modes x N weights column-major, then the singular values.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut h = [0u8; format::HEADER_LEN];
        h[0..4].copy_from_slice(&WGTS_MAGIC);
        h[4..8].copy_from_slice(&format::FORMAT_VERSION.to_le_bytes());
        h[16..24].copy_from_slice(&(self.n() as u64).to_le_bytes());
        h[24..32].copy_from_slice(&(self.weights.rows() as u64).to_le_bytes());
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wr = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        wr.write_all(&h).map_err(io)?;
        format::write_values(&mut wr, format::Dtype::F64, self.weights.as_slice()).map_err(io)?;
        format::write_values(&mut wr, format::Dtype::F64, &self.singular_values).map_err(io)?;
        wr.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut h = [0u8; format::HEADER_LEN];
        r.read_exact(&mut h).map_err(|_| Error::format(path, None, "shorter than WGTS header"))?;
        if h[0..4] != WGTS_MAGIC {
            return Err(Error::format(path, None, "bad magic, expected WGTS"));
        }
        let n = u64::from_le_bytes(h[16..24].try_into().unwrap()) as usize;
        let modes = u64::from_le_bytes(h[24..32].try_into().unwrap()) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let expect = (modes * n + modes) * 8;
        if bytes.len() != expect {
            return Err(Error::format(path, None, format!("payload {} bytes, expected {expect}", bytes.len())));
        }
        let mut vals = vec![0.0; modes * n + modes];
        format::decode_values(format::Dtype::F64, &bytes, &mut vals);
        let singular_values = vals.split_off(modes * n);
        Ok(Self {
            weights: DenseColumns::from_col_major(modes, n, vals)?,
            rank_deficient: singular_values.iter().map(|&s| s == 0.0).collect(),
            singular_values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::distance;

    #[test]
    fn gram_examples() {
        let x = DenseColumns::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]]).unwrap();
        let g = gram_of_columns(&x);
        assert_eq!(g.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let v = [1.0, -2.0, 0.5];
        let x = DenseColumns::from_columns(&[v.to_vec(), v.iter().map(|a| 2.0 * a).collect()]).unwrap();
        let g = gram_of_columns(&x);
        let nv = 5.25;
        assert_eq!(g.as_slice(), &[nv, 2.0 * nv, 2.0 * nv, 4.0 * nv]);
    }

    #[test]
    fn identity_weights() {
        let g = gram_of_columns(&DenseColumns::from_columns(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let w = weights_from_gram(&g).unwrap();
        assert_eq!(w.singular_values, vec![1.0, 1.0]);
        let mut abs: Vec<f64> = w.weights.as_slice().iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        assert!(abs[..2].iter().all(|v| v.abs() < 1e-12) && abs[2..].iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let c = vec![3.0, 1.0, -2.0];
        let x = DenseColumns::from_columns(&[c.clone(), c]).unwrap();
        let w = weights_from_gram(&gram_of_columns(&x)).unwrap();
        assert_eq!(w.singular_values[1], 0.0);
        assert!(w.rank_deficient[1]);
        assert_eq!(w.weights.column(0), w.weights.column(1));
        assert!(w.weights.get(0, 0) > 0.0);
    }

    #[test]
    fn weights_preserve_distances_and_energy() {
        let cols: Vec<Vec<f64>> = (0..6).map(|j| (0..40).map(|i| ((i * 7 + j * 13) as f64).sin()).collect()).collect();
        let x = DenseColumns::from_columns(&cols).unwrap();
        let g = gram_of_columns(&x);
        let w = weights_from_gram(&g).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let a = distance(x.column(i), x.column(j));
                let b = distance(w.weights.column(i), w.weights.column(j));
                assert!((a - b).abs() <= 1e-8 * a.max(1.0));
            }
        }
        let energy: f64 = w.singular_values.iter().map(|s| s * s).sum();
        let trace: f64 = (0..6).map(|i| g.get(i, i)).sum();
        assert!((energy - trace).abs() < 1e-9 * trace);
        assert!(w.singular_values.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn rejects_asymmetric() {
        let g = DenseColumns::from_col_major(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(weights_from_gram(&g).is_err());
    }
}
