//! Agglomerative clustering over a precomputed Euclidean distance matrix,
//! with Lance-Williams updates for single, complete, average and Ward linkage.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::format;
use crate::labels::ClusterAssignment;
use crate::matrix::{distance, DenseColumns};
use crate::store::BlockMatrix;

/// Symmetric distances with zero diagonal, stored as the strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl DistanceMatrix {
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Result<Self> {
        ensure!(upper.len() == n * n.saturating_sub(1) / 2, Dimension, "{} entries for N = {n}", upper.len());
        ensure!(upper.iter().all(|v| v.is_finite() && *v >= 0.0), Data, "distances must be finite and nonnegative");
        Ok(Self { n, upper })
    }

    /// Euclidean distances between the columns of an in-memory matrix.
    pub fn from_columns(x: &DenseColumns) -> Result<Self> {
        ensure!(x.is_finite(), Data, "matrix contains non-finite values");
        let n = x.cols();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(distance(x.column(i), x.column(j)));
            }
        }
        Ok(Self { n, upper })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Less => self.upper[tri_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.upper[tri_index(self.n, j, i)],
        }
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Streams the store once; each block contributes per-pair squared partial
/// sums, reduced in block order.
pub fn pairwise_distances(m: &BlockMatrix, jobs: usize) -> Result<DistanceMatrix> {
    let n = m.n_cols();
    let len = n * n.saturating_sub(1) / 2;
    let sq = m.fold_blocks(
        jobs,
        vec![0.0; len],
        |_, reader| {
            let mut acc = vec![0.0; len];
            let mut row = vec![0.0; n];
            while reader.read_row(&mut row)? {
                let mut k = 0;
                for i in 0..n {
                    let xi = row[i];
                    for &xj in &row[i + 1..] {
                        acc[k] += (xi - xj) * (xi - xj);
                        k += 1;
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
    DistanceMatrix::from_upper(n, sq.into_iter().map(f64::sqrt).collect())
}

const DIST_MAGIC: [u8; 4] = *b"DIST";
const METRIC_EUCLIDEAN: u8 = 1;

impl DistanceMatrix {
    /// `DIST` file: 64-byte header {magic, u32 version, u8 metric @8, u64 N @16},
    /// then the strict upper triangle row by row as f64.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut h = [0u8; format::HEADER_LEN];
        h[0..4].copy_from_slice(&DIST_MAGIC);
        h[4..8].copy_from_slice(&format::FORMAT_VERSION.to_le_bytes());
        h[8] = METRIC_EUCLIDEAN;
        h[16..24].copy_from_slice(&(self.n as u64).to_le_bytes());
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(&h).map_err(|e| Error::io(path, e))?;
        format::write_values(&mut w, format::Dtype::F64, &self.upper).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut h = [0u8; format::HEADER_LEN];
        r.read_exact(&mut h).map_err(|_| Error::format(path, None, "shorter than DIST header"))?;
        if h[0..4] != DIST_MAGIC {
            return Err(Error::format(path, None, "bad magic, expected DIST"));
        }
        if h[8] != METRIC_EUCLIDEAN {
            return Err(Error::format(path, None, format!("unknown metric code {}", h[8])));
        }
        let n = u64::from_le_bytes(h[16..24].try_into().unwrap()) as usize;
        let len = n * n.saturating_sub(1) / 2;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != len * 8 {
            return Err(Error::format(path, None, format!("payload {} bytes, expected {}", bytes.len(), len * 8)));
        }
        let mut upper = vec![0.0; len];
        format::decode_values(format::Dtype::F64, &bytes, &mut upper);
        Self::from_upper(n, upper).map_err(|e| Error::format(path, None, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Single,
    Complete,
    Average,
    Ward,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            _ => Err(Error::Validation(format!("unknown linkage {s:?} (single, complete, average, ward)"))),
        }
    }
}

/// One agglomeration. Leaves are nodes `0..N`; the cluster created at step
/// `s` is node `N + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    /// Linkage distance, or the increase in error sum of squares for Ward.
    pub dissimilarity: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
    pub monotonic: bool,
}

impl Dendrogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,left,right,dissimilarity,size\n");
        for (k, m) in self.merges.iter().enumerate() {
            let _ = writeln!(s, "{k},{},{},{},{}", m.left, m.right, m.dissimilarity, m.size);
        }
        s
    }

    fn labels_after(&self, steps: usize) -> ClusterAssignment {
        let n = self.n_leaves;
        let mut parent: Vec<usize> = (0..n + self.merges.len()).collect();
        for (k, m) in self.merges[..steps].iter().enumerate() {
            parent[m.left] = n + k;
            parent[m.right] = n + k;
        }
        let root = |mut i: usize| {
            while parent[i] != i {
                i = parent[i];
            }
            i
        };
        let roots: Vec<usize> = (0..n).map(root).collect();
        ClusterAssignment::compact(&roots)
    }

    /// Labels with `nc` clusters, numbered by first appearance in column order.
    pub fn cut(&self, nc: usize) -> Result<ClusterAssignment> {
        ensure!(nc >= 1 && nc <= self.n_leaves, Validation, "nc must be in 1..={}, got {nc}", self.n_leaves);
        Ok(self.labels_after(self.n_leaves - nc))
    }

    /// Apply merges in order while their dissimilarity is at most `threshold`.
    pub fn cut_by_threshold(&self, threshold: f64) -> ClusterAssignment {
        let steps = self.merges.iter().take_while(|m| m.dissimilarity <= threshold).count();
        self.labels_after(steps)
    }
}

/// Full agglomeration down to one cluster.
pub fn dendrogram(d: &DistanceMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = d.n();
    ensure!(n >= 1, Validation, "empty distance matrix");
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = d.get(i, j);
            w[i * n + j] = if linkage == Linkage::Ward { v * v } else { v };
        }
    }
    // Slot i holds the cluster whose node id is node[i].
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let v = w[a * n + b];
                let (l, r) = (node[a].min(node[b]), node[a].max(node[b]));
                let better = match best {
                    None => true,
                    Some((bv, bl, br, _, _)) => v < bv || (v == bv && (l, r) < (bl, br)),
                };
                if better {
                    best = Some((v, l, r, a, b));
                }
            }
        }
        let (v, l, r, a, b) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &k in &active {
            if k == a || k == b {
                continue;
            }
            let (dak, dbk) = (w[a * n + k], w[b * n + k]);
            let nk = size[k] as f64;
            let nv = match linkage {
                Linkage::Single => dak.min(dbk),
                Linkage::Complete => dak.max(dbk),
                Linkage::Average => (na * dak + nb * dbk) / (na + nb),
                Linkage::Ward => ((na + nk) * dak + (nb + nk) * dbk - nk * v) / (na + nb + nk),
            };
            w[a * n + k] = nv;
            w[k * n + a] = nv;
        }
        size[a] += size[b];
        node[a] = n + step;
        active.retain(|&s| s != b);
        merges.push(Merge {
            left: l,
            right: r,
            dissimilarity: if linkage == Linkage::Ward { v / 2.0 } else { v },
            size: size[a],
        });
    }
    let monotonic = merges.windows(2).all(|p| p[1].dissimilarity >= p[0].dissimilarity);
    Ok(Dendrogram {
        n_leaves: n,
        merges,
        monotonic,
    })
}

pub fn hcluster(d: &DistanceMatrix, linkage: Linkage, nc: usize) -> Result<(ClusterAssignment, Dendrogram)> {
    ensure!(nc >= 1 && nc <= d.n(), Validation, "nc must be in 1..={}, got {nc}", d.n());
    let dendro = dendrogram(d, linkage)?;
    Ok((dendro.cut(nc)?, dendro))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> DenseColumns {
        DenseColumns::from_row_major(1, xs.len(), xs).unwrap()
    }

    #[test]
    fn triangle_indexing() {
        let x = DenseColumns::from_columns(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        let d = DistanceMatrix::from_columns(&x).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(2, 0), 1.0);
        assert_eq!(d.get(1, 1), 0.0);
    }

    #[test]
    fn small_line_any_linkage() {
        let d = DistanceMatrix::from_columns(&line(&[0.0, 1.0, 10.0])).unwrap();
        for l in [Linkage::Single, Linkage::Complete, Linkage::Average, Linkage::Ward] {
            let (a, dendro) = hcluster(&d, l, 2).unwrap();
            assert_eq!(a.labels, vec![0, 0, 1]);
            assert_eq!(dendro.merges.len(), 2);
            assert_eq!(dendro.merges[1].size, 3);
        }
    }

    #[test]
    fn ward_reports_ess_increment() {
        let d = DistanceMatrix::from_columns(&line(&[0.0, 2.0])).unwrap();
        let (_, dendro) = hcluster(&d, Linkage::Ward, 1).unwrap();
        assert_eq!(dendro.merges[0].dissimilarity, 2.0);
    }

    #[test]
    fn ties_prefer_smallest_node_pair() {
        let d = DistanceMatrix::from_columns(&line(&[0.0, 1.0, 2.0, 3.0])).unwrap();
        let dendro = dendrogram(&d, Linkage::Single).unwrap();
        assert_eq!((dendro.merges[0].left, dendro.merges[0].right), (0, 1));
        assert_eq!((dendro.merges[1].left, dendro.merges[1].right), (2, 3));
        assert_eq!((dendro.merges[2].left, dendro.merges[2].right), (4, 5));
    }

    #[test]
    fn threshold_cut_and_csv() {
        let d = DistanceMatrix::from_columns(&line(&[0.0, 1.0, 10.0, 11.5])).unwrap();
        let dendro = dendrogram(&d, Linkage::Complete).unwrap();
        assert_eq!(dendro.cut_by_threshold(2.0).labels, vec![0, 0, 1, 1]);
        assert_eq!(dendro.cut_by_threshold(0.5).n_clusters, 4);
        assert!(dendro.to_csv().starts_with("step,left,right,dissimilarity,size\n0,0,1,1,2\n"));
        assert!(dendro.monotonic);
    }

    #[test]
    fn bad_input() {
        let d = DistanceMatrix::from_columns(&line(&[0.0, 1.0])).unwrap();
        assert!(hcluster(&d, Linkage::Ward, 3).is_err());
        assert!(hcluster(&d, Linkage::Ward, 0).is_err());
        assert!("median".parse::<Linkage>().is_err());
    }

    #[test]
    fn dist_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DistanceMatrix::from_columns(&line(&[0.0, 1.5, 4.0, -2.0])).unwrap();
        let p = dir.path().join("d.dist");
        d.write(&p).unwrap();
        assert_eq!(DistanceMatrix::read(&p).unwrap(), d);
    }
}
