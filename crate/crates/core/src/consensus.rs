//! Consensus matrices over k-means ensembles: value histograms, cluster
//! extraction by connected components, reordering, small-cluster merging and
//! manual label overrides.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::labels::ClusterAssignment;

/// Symmetric N x N co-assignment fractions, stored as exact counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusMatrix {
    n: usize,
    counts: Vec<u32>,
    pub repetitions: u32,
    pub nc: u32,
    /// Free-form run tag, e.g. which projection produced the ensemble.
    pub tag: String,
}

impl ConsensusMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.count(i, j) as f64 / self.repetitions as f64
    }

    /// Row-major values.
    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.repetitions as f64).collect()
    }

    /// Build directly from counts (row-major); used for constructed matrices.
    pub fn from_counts(n: usize, counts: Vec<u32>, repetitions: u32) -> Result<Self> {
        ensure!(repetitions >= 1, Validation, "repetitions must be at least 1");
        ensure!(counts.len() == n * n, Dimension, "{} counts for a {n}x{n} matrix", counts.len());
        for i in 0..n {
            ensure!(counts[i * n + i] == repetitions, Validation, "diagonal entry {i} is not 1");
            for j in 0..n {
                let c = counts[i * n + j];
                ensure!(c <= repetitions, Validation, "entry ({i},{j}) exceeds repetitions");
                ensure!(c == counts[j * n + i], Validation, "entry ({i},{j}) is not symmetric");
            }
        }
        Ok(Self {
            n,
            counts,
            repetitions,
            nc: 0,
            tag: String::new(),
        })
    }
}

/// Entry (i, j) = number of runs with `label(i) == label(j)`, over the number of runs.
pub fn build_consensus(runs: &[ClusterAssignment]) -> Result<ConsensusMatrix> {
    ensure!(!runs.is_empty(), Validation, "consensus needs at least one assignment");
    let n = runs[0].len();
    for (r, a) in runs.iter().enumerate() {
        ensure!(a.len() == n, Dimension, "run {r} has {} labels, run 0 has {n}", a.len());
    }
    let mut counts = vec![0u32; n * n];
    for a in runs {
        for i in 0..n {
            let li = a.labels[i];
            counts[i * n + i] += 1;
            for j in i + 1..n {
                if a.labels[j] == li {
                    counts[i * n + j] += 1;
                    counts[j * n + i] += 1;
                }
            }
        }
    }
    Ok(ConsensusMatrix {
        n,
        counts,
        repetitions: runs.len() as u32,
        nc: runs.iter().map(|a| a.n_clusters).max().unwrap_or(0) as u32,
        tag: String::new(),
    })
}

/// Share of entries at 0.0, 0.1, ..., 1.0, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusHistogram {
    pub pct: [f64; 11],
    pub counted: u64,
}

/// Off-diagonal entries of the full matrix, each rounded to the nearest tenth.
pub fn histogram(c: &ConsensusMatrix) -> ConsensusHistogram {
    let mut bins = [0u64; 11];
    for i in 0..c.n {
        for j in 0..c.n {
            if i != j {
                bins[(c.get(i, j) * 10.0).round() as usize] += 1;
            }
        }
    }
    let counted: u64 = bins.iter().sum();
    let mut pct = [0.0; 11];
    if counted > 0 {
        for (p, b) in pct.iter_mut().zip(bins) {
            *p = 100.0 * b as f64 / counted as f64;
        }
    }
    ConsensusHistogram { pct, counted }
}

/// Minimum combined share of the 0.0 and 1.0 bins for an ensemble to count as stable.
pub const STABLE_EXTREME_PCT: f64 = 95.0;

impl ConsensusHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,pct\n");
        for (b, p) in self.pct.iter().enumerate() {
            let _ = writeln!(s, "{:.1},{p:.4}", b as f64 / 10.0);
        }
        s
    }

    pub fn extreme_pct(&self) -> f64 {
        self.pct[0] + self.pct[10]
    }

    /// True when nearly all pairs are always or never together.
    pub fn is_stable(&self, min_extreme_pct: f64) -> bool {
        self.extreme_pct() >= min_extreme_pct
    }
}

/// Connected components of the graph with an edge wherever `c(i,j) >= threshold`.
/// Components are discovered by scanning rows in ascending order and
/// labelled in discovery order.
pub fn extract_clusters(c: &ConsensusMatrix, threshold: f64) -> Result<ClusterAssignment> {
    ensure!(threshold > 0.0 && threshold <= 1.0, Validation, "threshold must be in (0, 1], got {threshold}");
    let n = c.n;
    let min_count = threshold * c.repetitions as f64;
    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if labels[j] == usize::MAX && c.count(i, j) as f64 >= min_count - 1e-9 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    ClusterAssignment::new(labels, next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reordered {
    /// `perm[k]` is the original column placed at position k.
    pub perm: Vec<usize>,
    /// Row-major `P C P^T`.
    pub values: Vec<f64>,
}

/// Group columns by label, keeping original order within a label.
pub fn reorder_by_cluster(c: &ConsensusMatrix, a: &ClusterAssignment) -> Result<Reordered> {
    ensure!(a.len() == c.n, Dimension, "assignment has {} labels, matrix is {}x{}", a.len(), c.n, c.n);
    let mut perm: Vec<usize> = (0..c.n).collect();
    perm.sort_by_key(|&i| a.labels[i]);
    let n = c.n;
    let mut values = vec![0.0; n * n];
    for (r, &pi) in perm.iter().enumerate() {
        for (s, &pj) in perm.iter().enumerate() {
            values[r * n + s] = c.get(pi, pj);
        }
    }
    Ok(Reordered { perm, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallClusterRecord {
    /// Label in the input assignment.
    pub label: usize,
    pub size: usize,
    /// Input label of the most strongly connected other cluster.
    pub best_target: Option<usize>,
    pub best_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    /// Labels after merging; emptied labels are removed and the rest shifted
    /// down, keeping their relative order.
    pub assignment: ClusterAssignment,
    pub merged: Vec<SmallClusterRecord>,
    /// Below the strength threshold.
    pub unmerged: Vec<SmallClusterRecord>,
    /// Best mean exactly 0.5: left for a human to decide.
    pub ambiguous: Vec<SmallClusterRecord>,
}

impl MergeOutcome {
    pub fn report_csv(&self) -> String {
        let mut s = String::from("label,size,status,best_target,best_mean\n");
        for (status, list) in [("merged", &self.merged), ("unmerged", &self.unmerged), ("ambiguous", &self.ambiguous)] {
            for r in list {
                let t = r.best_target.map(|t| t.to_string()).unwrap_or_default();
                let _ = writeln!(s, "{},{},{status},{t},{}", r.label, r.size, r.best_mean);
            }
        }
        s
    }
}

fn mean_between(c: &ConsensusMatrix, a: &[usize], b: &[usize]) -> f64 {
    let mut total = 0u64;
    for &i in a {
        for &j in b {
            total += c.count(i, j) as u64;
        }
    }
    total as f64 / (a.len() * b.len()) as f64 / c.repetitions as f64
}

/// Merge every cluster with fewer than `min_size` members into the cluster
/// it has the highest mean consensus with, when that mean reaches
/// `strong_threshold`. Small clusters are visited in label order and see the
/// effect of earlier merges.
pub fn merge_small_clusters(c: &ConsensusMatrix, a: &ClusterAssignment, min_size: usize, strong_threshold: f64) -> Result<MergeOutcome> {
    ensure!(min_size >= 1, Validation, "min_size must be at least 1");
    ensure!(
        strong_threshold > 0.0 && strong_threshold <= 1.0,
        Validation,
        "strong_threshold must be in (0, 1], got {strong_threshold}"
    );
    ensure!(a.len() == c.n, Dimension, "assignment has {} labels, matrix is {}x{}", a.len(), c.n, c.n);
    let mut labels = a.labels.clone();
    let mut out = MergeOutcome {
        assignment: a.clone(),
        merged: Vec::new(),
        unmerged: Vec::new(),
        ambiguous: Vec::new(),
    };
    for k in 0..a.n_clusters {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if members.is_empty() || members.len() >= min_size {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for t in 0..a.n_clusters {
            if t == k {
                continue;
            }
            let other: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == t).collect();
            if other.is_empty() {
                continue;
            }
            let m = mean_between(c, &members, &other);
            if best.map_or(true, |(_, bm)| m > bm) {
                best = Some((t, m));
            }
        }
        let rec = SmallClusterRecord {
            label: k,
            size: members.len(),
            best_target: best.map(|b| b.0),
            best_mean: best.map_or(0.0, |b| b.1),
        };
        match best {
            Some((_, m)) if (m - 0.5).abs() < 1e-12 => out.ambiguous.push(rec),
            Some((t, m)) if m >= strong_threshold - 1e-12 => {
                members.iter().for_each(|&i| labels[i] = t);
                out.merged.push(rec);
            }
            _ => out.unmerged.push(rec),
        }
    }
    if !out.merged.is_empty() {
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        let remap: Vec<usize> = (0..a.n_clusters).map(|l| used.range(..l).count()).collect();
        labels.iter_mut().for_each(|l| *l = remap[*l]);
        out.assignment = ClusterAssignment::new(labels, used.len())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelMove {
    pub column: usize,
    pub new_label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditRecord {
    pub column: usize,
    pub old_label: usize,
    pub new_label: usize,
}

/// Apply manual reassignments; returns the new assignment and one audit record per move.
pub fn override_labels(a: &ClusterAssignment, moves: &[LabelMove]) -> Result<(ClusterAssignment, Vec<AuditRecord>)> {
    let mut seen = BTreeSet::new();
    let mut labels = a.labels.clone();
    let mut audit = Vec::with_capacity(moves.len());
    for m in moves {
        ensure!(m.column < a.len(), Validation, "column {} out of range (N = {})", m.column, a.len());
        ensure!(m.new_label < a.n_clusters, Validation, "label {} is not below nc = {}", m.new_label, a.n_clusters);
        ensure!(seen.insert(m.column), Validation, "column {} listed more than once", m.column);
        audit.push(AuditRecord {
            column: m.column,
            old_label: labels[m.column],
            new_label: m.new_label,
        });
        labels[m.column] = m.new_label;
    }
    Ok((ClusterAssignment::new(labels, a.n_clusters)?, audit))
}

/// `column,new_label` rows with a header.
pub fn parse_moves(text: &str, origin: &Path) -> Result<Vec<LabelMove>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format(origin, None, format!("line {}: expected column,new_label", ln + 1));
        let (c, l) = line.trim().split_once(',').ok_or_else(bad)?;
        out.push(LabelMove {
            column: c.trim().parse().map_err(|_| bad())?,
            new_label: l.trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn audit_csv(records: &[AuditRecord]) -> String {
    let mut s = String::from("column,old_label,new_label\n");
    for r in records {
        let _ = writeln!(s, "{},{},{}", r.column, r.old_label, r.new_label);
    }
    s
}

const CONS2_MAGIC: [u8; 5] = *b"CONS2";
const CONS2_HEADER: usize = 64;

impl ConsensusMatrix {
    /// Dense CSV of values, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}", self.get(i, j));
            }
            s.push('\n');
        }
        s
    }

    /// Binary `CONS2`: 64-byte header {magic, u32 version @8, u64 N @16,
    /// u32 repetitions @24, u32 nc @28, tag (utf-8, zero padded) @32..64},
    /// then N x N little-endian u32 counts row-major.
    pub fn write(&self, path: &Path) -> Result<()> {
        ensure!(self.tag.len() <= 32, Validation, "tag longer than 32 bytes");
        let mut h = [0u8; CONS2_HEADER];
        h[0..5].copy_from_slice(&CONS2_MAGIC);
        h[8..12].copy_from_slice(&crate::format::FORMAT_VERSION.to_le_bytes());
        h[16..24].copy_from_slice(&(self.n as u64).to_le_bytes());
        h[24..28].copy_from_slice(&self.repetitions.to_le_bytes());
        h[28..32].copy_from_slice(&self.nc.to_le_bytes());
        h[32..32 + self.tag.len()].copy_from_slice(self.tag.as_bytes());
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(&h).map_err(|e| Error::io(path, e))?;
        for c in &self.counts {
            w.write_all(&c.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut h = [0u8; CONS2_HEADER];
        r.read_exact(&mut h).map_err(|_| Error::format(path, None, "shorter than CONS2 header"))?;
        if h[0..5] != CONS2_MAGIC {
            return Err(Error::format(path, None, "bad magic, expected CONS2"));
        }
        let n = u64::from_le_bytes(h[16..24].try_into().unwrap()) as usize;
        let reps = u32::from_le_bytes(h[24..28].try_into().unwrap());
        let nc = u32::from_le_bytes(h[28..32].try_into().unwrap());
        let tag_end = h[32..].iter().position(|&b| b == 0).map_or(64, |p| 32 + p);
        let tag = String::from_utf8(h[32..tag_end].to_vec()).map_err(|_| Error::format(path, None, "tag is not utf-8"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != n * n * 4 {
            return Err(Error::format(path, None, format!("payload {} bytes, expected {}", bytes.len(), n * n * 4)));
        }
        let counts = bytes.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
        let mut m = Self::from_counts(n, counts, reps).map_err(|e| Error::format(path, None, e.to_string()))?;
        m.nc = nc;
        m.tag = tag;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn asg(l: &[usize]) -> ClusterAssignment {
        ClusterAssignment::new(l.to_vec(), l.iter().max().map_or(0, |m| m + 1)).unwrap()
    }

    fn binary(n: usize, edges: &[(usize, usize)]) -> ConsensusMatrix {
        let mut c = vec![0u32; n * n];
        for i in 0..n {
            c[i * n + i] = 1;
        }
        for &(i, j) in edges {
            c[i * n + j] = 1;
            c[j * n + i] = 1;
        }
        ConsensusMatrix::from_counts(n, c, 1).unwrap()
    }

    #[test]
    fn counts_pairs() {
        let mut runs = vec![asg(&[0, 0, 1]); 9];
        runs.push(asg(&[0, 1, 1]));
        let c = build_consensus(&runs).unwrap();
        assert_eq!(c.get(0, 1), 0.9);
        assert_eq!(c.get(1, 2), 0.1);
        assert_eq!(c.get(2, 2), 1.0);
        let one = build_consensus(&[asg(&[0, 1, 0])]).unwrap();
        assert!(one.values().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(build_consensus(&[asg(&[0, 1]), asg(&[0])]).is_err());
    }

    #[test]
    fn histogram_cases() {
        let ones = build_consensus(&[asg(&[0, 0, 0, 0])]).unwrap();
        assert_eq!(histogram(&ones).pct[10], 100.0);
        let half = build_consensus(&[asg(&[0, 0, 1, 1])]).unwrap();
        // 4 of 12 off-diagonal entries are 1.
        let h = histogram(&half);
        assert!((h.pct[10] - 100.0 / 3.0).abs() < 1e-12);
        assert!((h.pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        assert!(h.to_csv().starts_with("value,pct\n0.0,"));
    }

    #[test]
    fn extraction_is_transitive() {
        let c = binary(3, &[(0, 1), (1, 2)]);
        assert_eq!(extract_clusters(&c, 1.0).unwrap().labels, vec![0, 0, 0]);
        let blocks = binary(5, &[(0, 1), (2, 3)]);
        assert_eq!(extract_clusters(&blocks, 1.0).unwrap().labels, vec![0, 0, 1, 1, 2]);
        assert!(extract_clusters(&blocks, 0.0).is_err());
    }

    #[test]
    fn reorder_groups_labels() {
        let a = asg(&[0, 1, 0, 1]);
        let c = build_consensus(&[a.clone()]).unwrap();
        let r = reorder_by_cluster(&c, &a).unwrap();
        assert_eq!(r.perm, vec![0, 2, 1, 3]);
        let expect = [1., 1., 0., 0., 1., 1., 0., 0., 0., 0., 1., 1., 0., 0., 1., 1.];
        assert_eq!(r.values, expect);
        let sorted = asg(&[0, 0, 1]);
        let c2 = build_consensus(&[sorted.clone()]).unwrap();
        assert_eq!(reorder_by_cluster(&c2, &sorted).unwrap().perm, vec![0, 1, 2]);
    }

    fn ten_runs(n: usize, pattern: impl Fn(usize) -> Vec<usize>) -> ConsensusMatrix {
        let runs: Vec<_> = (0..10).map(|r| ClusterAssignment::compact(&pattern(r))).collect();
        let _ = n;
        build_consensus(&runs).unwrap()
    }

    #[test]
    fn merges_strongly_connected_small_cluster() {
        // Columns 0..6 always together; 6,7 join them in 7 of 10 runs.
        let c = ten_runs(8, |r| (0..8).map(|i| if i >= 6 && r >= 7 { 1 } else { 0 }).collect());
        let a = asg(&[0, 0, 0, 0, 0, 0, 1, 1]);
        let out = merge_small_clusters(&c, &a, 3, 0.7).unwrap();
        assert_eq!(out.merged.len(), 1);
        assert_eq!(out.assignment.labels, vec![0; 8]);
        // Same with 3 of 10: stays separate.
        let weak = ten_runs(8, |r| (0..8).map(|i| if i >= 6 && r >= 3 { 1 } else { 0 }).collect());
        let out = merge_small_clusters(&weak, &a, 3, 0.7).unwrap();
        assert_eq!(out.unmerged.len(), 1);
        assert_eq!(out.assignment, a);
    }

    #[test]
    fn half_is_ambiguous_and_big_clusters_are_untouched() {
        let c = ten_runs(6, |r| (0..6).map(|i| if i >= 4 && r >= 5 { 1 } else { 0 }).collect());
        let a = asg(&[0, 0, 0, 0, 1, 1]);
        let out = merge_small_clusters(&c, &a, 3, 0.4).unwrap();
        assert_eq!(out.ambiguous.len(), 1);
        assert_eq!(out.assignment, a);
        let noop = merge_small_clusters(&c, &a, 2, 0.4).unwrap();
        assert_eq!(noop.assignment, a);
        assert!(noop.merged.is_empty() && noop.unmerged.is_empty());
    }

    #[test]
    fn overrides_touch_only_listed_columns() {
        let a = asg(&[0, 1, 2, 3, 1, 1]);
        let (same, audit) = override_labels(&a, &[]).unwrap();
        assert_eq!(same, a);
        assert!(audit.is_empty());
        let (b, audit) = override_labels(&a, &[LabelMove { column: 5, new_label: 3 }]).unwrap();
        assert_eq!(audit, vec![AuditRecord { column: 5, old_label: 1, new_label: 3 }]);
        assert_eq!(b.labels, vec![0, 1, 2, 3, 1, 3]);
        let dup = [LabelMove { column: 1, new_label: 0 }, LabelMove { column: 1, new_label: 2 }];
        assert!(override_labels(&a, &dup).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = build_consensus(&[asg(&[0, 1, 1]), asg(&[0, 0, 1])]).unwrap();
        c.tag = "a".into();
        let p = dir.path().join("c.cons2");
        c.write(&p).unwrap();
        assert_eq!(ConsensusMatrix::read(&p).unwrap(), c);
    }

    proptest! {
        #[test]
        fn bounds_and_reorder_isometry(runs in prop::collection::vec(prop::collection::vec(0usize..4, 12), 1..6)) {
            let runs: Vec<_> = runs.iter().map(|l| ClusterAssignment::compact(l)).collect();
            let c = build_consensus(&runs).unwrap();
            for i in 0..12 {
                prop_assert_eq!(c.get(i, i), 1.0);
                for j in 0..12 {
                    let v = c.get(i, j);
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert_eq!(v, c.get(j, i));
                }
            }
            let r = reorder_by_cluster(&c, &runs[0]).unwrap();
            for a in 0..12 {
                for b in 0..12 {
                    prop_assert_eq!(r.values[a * 12 + b], c.get(r.perm[a], r.perm[b]));
                }
            }
            let mut x = c.values();
            let mut y = r.values.clone();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            prop_assert_eq!(x, y);
        }
    }
}
