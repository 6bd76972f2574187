//! Merge the remapped per-simulation blocks of one variable into the block
//! snapshot matrix. Columns are ordered by simulation key, then time step.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::format::Dtype;
use crate::grid::CommonGrid;
use crate::index::{SimMetadata, SnapshotIndex};
use crate::parallel;
use crate::preprocess::{remap_file_name, RemapReader};
use crate::store::BlockMatrix;

/// Build the snapshot matrix for variable `var` from `remap_root/<sim_key>/`.
pub fn assemble(
    remap_root: &Path,
    sims: &BTreeMap<String, SimMetadata>,
    grid: &CommonGrid,
    var: usize,
    out: &Path,
    dtype: Dtype,
    jobs: usize,
) -> Result<(BlockMatrix, SnapshotIndex)> {
    ensure!(!sims.is_empty(), Validation, "no simulations to assemble");
    let keys: Vec<&String> = sims.keys().collect();
    let mut layout = Vec::with_capacity(keys.len());
    for k in &keys {
        let r = RemapReader::open(&remap_root.join(k).join(remap_file_name(0)))?;
        let (n_steps, n_vars) = (r.header.extra[0] as usize, r.header.extra[1] as usize);
        ensure!(var < n_vars, Validation, "variable {var} requested but {k} has {n_vars} variables");
        layout.push(n_steps);
    }
    let index = SnapshotIndex::sequential(
        &keys
            .iter()
            .zip(&layout)
            .map(|(k, &n)| ((*k).clone(), n as u32, sims[*k].clone()))
            .collect::<Vec<_>>(),
    )?;
    let n_cols = index.len();
    let store = BlockMatrix::create(out, grid.blocks.clone(), n_cols, dtype)?;
    parallel::try_map_indexed(jobs, grid.blocks.len(), |b| {
        let block_id = b as u32;
        let spec = &grid.blocks[b];
        let mut readers = Vec::with_capacity(keys.len());
        for (k, &n_steps) in keys.iter().zip(&layout) {
            let path = remap_root.join(k).join(remap_file_name(block_id));
            let r = RemapReader::open(&path)?;
            let h = &r.header;
            if h.block_id != block_id || h.row_count != spec.row_count || h.row_offset != spec.row_offset {
                return Err(Error::format(&path, Some(block_id), "remapped block does not match the grid block"));
            }
            if h.extra[0] as usize != n_steps {
                return Err(Error::format(&path, Some(block_id), format!("{} steps here, {n_steps} in block 0", h.extra[0])));
            }
            readers.push(r);
        }
        let points = grid.block_points(block_id);
        let mut writer = store.row_writer(block_id)?;
        let mut out_row = Vec::with_capacity(n_cols);
        let mut bufs: Vec<Vec<f64>> = readers.iter().map(|r| vec![0.0; r.header.n_cols as usize]).collect();
        for &(gx, gy) in &points {
            out_row.clear();
            for (s, r) in readers.iter_mut().enumerate() {
                let row = &mut bufs[s];
                r.read_row(row)?;
                ensure!(
                    row[0] == gx && row[1] == gy,
                    Validation,
                    "{}: block {block_id} row at ({}, {}) but grid point is ({gx}, {gy})",
                    keys[s],
                    row[0],
                    row[1]
                );
                let n_vars = r.header.extra[1] as usize;
                out_row.extend((0..layout[s]).map(|t| row[2 + t * n_vars + var]));
            }
            writer.push_row(&out_row)?;
        }
        writer.finish()
    })?;
    index.write(&store.index_path())?;
    grid.write(&out.join("grid.cfg"))?;
    Ok((store, index))
}
