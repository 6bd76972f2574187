//! Cluster labels per snapshot, their CSV forms, and permutation-invariant
//! comparison.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::index::SnapshotIndex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_clusters) {
            return Err(Error::Validation(format!("label {l} at column {i} is not below n_clusters = {n_clusters}")));
        }
        Ok(Self { labels, n_clusters })
    }

    /// Labels renumbered by first appearance in column order; empty labels dropped.
    pub fn compact(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let out: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            labels: out,
            n_clusters: map.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn to_csv(&self, index: Option<&SnapshotIndex>) -> Result<String> {
        if let Some(idx) = index {
            ensure!(idx.len() == self.len(), Dimension, "index has {} entries, assignment has {}", idx.len(), self.len());
        }
        let mut s = String::from("column,sim_key,time_step,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            match index.and_then(|x| x.entry(i)) {
                Some(e) => writeln!(s, "{i},{},{},{l}", e.sim_key, e.time_step),
                None => writeln!(s, "{i},,,{l}"),
            }
            .unwrap();
        }
        Ok(s)
    }

    /// Parse a labels CSV; `n_clusters` is one more than the largest label.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut labels = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            let bad = || Error::format(origin, None, format!("line {}: bad labels row {line:?}", ln + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            let col: usize = f[0].parse().map_err(|_| bad())?;
            if col != labels.len() {
                return Err(Error::format(origin, None, format!("line {}: column {col} out of order", ln + 1)));
            }
            labels.push(f[3].parse().map_err(|_| bad())?);
        }
        let n = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { labels, n_clusters: n })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }
}

/// Wide CSV of an ensemble: `column,rep0,rep1,...`.
pub fn ensemble_to_csv(runs: &[ClusterAssignment]) -> String {
    let mut s = String::from("column");
    for r in 0..runs.len() {
        let _ = write!(s, ",rep{r}");
    }
    s.push('\n');
    let n = runs.first().map_or(0, ClusterAssignment::len);
    for i in 0..n {
        let _ = write!(s, "{i}");
        for r in runs {
            let _ = write!(s, ",{}", r.labels[i]);
        }
        s.push('\n');
    }
    s
}

pub fn ensemble_from_csv(text: &str, origin: &Path) -> Result<Vec<ClusterAssignment>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format(origin, None, "empty ensemble file"))?;
    let reps = header.trim().split(',').count().saturating_sub(1);
    if reps == 0 {
        return Err(Error::format(origin, None, "ensemble file has no repetitions"));
    }
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); reps];
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != reps + 1 {
            return Err(Error::format(origin, None, format!("bad ensemble row {line:?}")));
        }
        for r in 0..reps {
            cols[r].push(
                f[r + 1]
                    .parse()
                    .map_err(|_| Error::format(origin, None, format!("bad label in {line:?}")))?,
            );
        }
    }
    Ok(cols
        .into_iter()
        .map(|labels| {
            let n = labels.iter().max().map_or(0, |m| m + 1);
            ClusterAssignment { labels, n_clusters: n }
        })
        .collect())
}

/// Pair-counting agreement (Rand index): the fraction of snapshot pairs on
/// which two labelings agree about "same cluster" vs "different cluster".
/// Invariant under relabeling of either side.
pub fn pair_agreement(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / (n as u64 * (n as u64 - 1) / 2) as f64
}
