//! Per-snapshot cluster reports and per-cluster mean snapshots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ensure, Result};
use crate::index::SnapshotIndex;
use crate::labels::ClusterAssignment;
use crate::store::BlockMatrix;

/// `sim_key,time_step,he_length,label`, one row per snapshot in column order.
pub fn emit_report(a: &ClusterAssignment, index: &SnapshotIndex) -> Result<String> {
    ensure!(
        a.len() == index.len(),
        Dimension,
        "assignment has {} labels, index has {} snapshots",
        a.len(),
        index.len()
    );
    let mut s = String::from("sim_key,time_step,he_length,label\n");
    for (e, l) in index.entries().iter().zip(&a.labels) {
        let he = index.sim(&e.sim_key).map_or(f64::NAN, |m| m.he_length);
        let _ = writeln!(s, "{},{},{he},{l}", e.sim_key, e.time_step);
    }
    Ok(s)
}

/// `label,size`, one row per cluster.
pub fn size_summary(a: &ClusterAssignment) -> String {
    let mut s = String::from("label,size\n");
    for (k, n) in a.sizes().iter().enumerate() {
        let _ = writeln!(s, "{k},{n}");
    }
    s
}

/// Write a block matrix in `out` whose column k is the mean of the member
/// snapshots of cluster k (zero for an empty cluster).
pub fn cluster_means(m: &BlockMatrix, a: &ClusterAssignment, out: &Path, jobs: usize) -> Result<BlockMatrix> {
    let n = m.n_cols();
    ensure!(a.len() == n, Dimension, "assignment has {} labels, store has {n} columns", a.len());
    let nc = a.n_clusters;
    ensure!(nc >= 1, Validation, "assignment has no clusters");
    let sizes = a.sizes();
    let means = BlockMatrix::create(out, m.specs().to_vec(), nc, m.dtype())?;
    m.map_blocks(jobs, |spec, reader| {
        let mut w = means.row_writer(spec.block_id)?;
        let mut row = vec![0.0; n];
        let mut acc = vec![0.0; nc];
        while reader.read_row(&mut row)? {
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (x, &l) in row.iter().zip(&a.labels) {
                acc[l] += x;
            }
            for (v, &s) in acc.iter_mut().zip(&sizes) {
                if s > 0 {
                    *v /= s as f64;
                }
            }
            w.push_row(&acc)?;
        }
        w.finish()
    })?;
    Ok(means)
}
