//! Consolidation of per-subdomain output files into one file per time step.
//!
//! Input layout: `<sim_key>/t<step>/sub<id>.csv` (header `x,y,var0,...`) or
//! `sub<id>.bin` (a `SUBD` record file). Output per step: `t<step>.cons`
//! (`CONS` record file, rows are subdomain 0's points, then subdomain 1's,
//! ...) and `t<step>.summary.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{ensure, Error, Result};
use crate::format::{BlockHeader, Dtype, MAGIC_CONSOLIDATED, MAGIC_SUBDOMAIN};
use crate::index::check_key;
use crate::parallel;
use crate::points::PointTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainFile {
    pub sim_key: String,
    pub time_step: u32,
    pub subdomain_id: u32,
    pub points: PointTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainExtent {
    pub subdomain_id: u32,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub start_row: u64,
    pub n_points: u64,
}

impl SubdomainExtent {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start_row as usize..(self.start_row + self.n_points) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimestepSummary {
    pub subdomains: Vec<SubdomainExtent>,
}

const SUMMARY_HEADER: &str = "subdomain_id,x_min,x_max,y_min,y_max,start_row,n_points";

impl TimestepSummary {
    /// Summary for a table whose rows are grouped by subdomain with the given sizes.
    pub fn from_groups(table: &PointTable, sizes: &[usize]) -> Self {
        let mut start = 0usize;
        let subdomains = sizes
            .iter()
            .enumerate()
            .map(|(id, &n)| {
                let (x_min, x_max, y_min, y_max) = table.slice(start, n).bbox();
                let e = SubdomainExtent {
                    subdomain_id: id as u32,
                    x_min,
                    x_max,
                    y_min,
                    y_max,
                    start_row: start as u64,
                    n_points: n as u64,
                };
                start += n;
                e
            })
            .collect();
        Self { subdomains }
    }

    pub fn total_points(&self) -> u64 {
        self.subdomains.iter().map(|s| s.n_points).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER}\n");
        for e in &self.subdomains {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.subdomain_id, e.x_min, e.x_max, e.y_min, e.y_max, e.start_row, e.n_points
            );
        }
        s
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SUMMARY_HEADER) {
            return Err(Error::format(origin, None, "missing summary header"));
        }
        let mut subdomains = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.trim().split(',').collect();
            let bad = || Error::format(origin, None, format!("bad summary row {line:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let fl = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let int = |s: &str| s.parse::<u64>().map_err(|_| bad());
            subdomains.push(SubdomainExtent {
                subdomain_id: int(f[0])? as u32,
                x_min: fl(f[1])?,
                x_max: fl(f[2])?,
                y_min: fl(f[3])?,
                y_max: fl(f[4])?,
                start_row: int(f[5])?,
                n_points: int(f[6])?,
            });
        }
        let s = Self { subdomains };
        let mut start = 0;
        for e in &s.subdomains {
            if e.start_row != start {
                return Err(Error::format(origin, None, format!("subdomain {} start_row {} != {start}", e.subdomain_id, e.start_row)));
            }
            start += e.n_points;
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Concatenate subdomain files (any order on input) in subdomain-id order.
pub fn consolidate_timestep(files: &[SubdomainFile]) -> Result<(PointTable, TimestepSummary)> {
    ensure!(!files.is_empty(), Validation, "no subdomain files to consolidate");
    let first = &files[0];
    let n_vars = first.points.n_vars();
    let mut by_id: BTreeMap<u32, &SubdomainFile> = BTreeMap::new();
    for f in files {
        ensure!(
            f.sim_key == first.sim_key && f.time_step == first.time_step,
            Validation,
            "subdomain {} belongs to {}/t{}, expected {}/t{}",
            f.subdomain_id,
            f.sim_key,
            f.time_step,
            first.sim_key,
            first.time_step
        );
        ensure!(
            f.points.n_vars() == n_vars,
            Validation,
            "subdomain {} has {} variables, subdomain {} has {n_vars}",
            f.subdomain_id,
            f.points.n_vars(),
            first.subdomain_id
        );
        ensure!(by_id.insert(f.subdomain_id, f).is_none(), Validation, "duplicate subdomain id {}", f.subdomain_id);
    }
    for id in 0..files.len() as u32 {
        ensure!(by_id.contains_key(&id), Validation, "missing subdomain id {id}");
    }
    let total = files.iter().map(|f| f.points.len()).sum();
    let mut table = PointTable::with_capacity(n_vars, total);
    let mut sizes = Vec::with_capacity(files.len());
    for f in by_id.values() {
        f.points.check_finite()?;
        ensure!(
            f.points.is_natural_order(),
            Data,
            "subdomain {} points are not in (y, x) order",
            f.subdomain_id
        );
        table.extend_from(&f.points);
        sizes.push(f.points.len());
    }
    let summary = TimestepSummary::from_groups(&table, &sizes);
    Ok((table, summary))
}

/// Subdomains whose bounding box intersects the closed query box.
pub fn query_subdomains_in_range(s: &TimestepSummary, x_range: (f64, f64), y_range: (f64, f64)) -> Vec<u32> {
    s.subdomains
        .iter()
        .filter(|e| {
            e.n_points > 0
                && e.x_min <= x_range.1
                && e.x_max >= x_range.0
                && e.y_min <= y_range.1
                && e.y_max >= y_range.0
        })
        .map(|e| e.subdomain_id)
        .collect()
}

pub fn subdomain_file_name(id: u32, binary: bool) -> String {
    format!("sub{id}.{}", if binary { "bin" } else { "csv" })
}

pub fn step_dir_name(step: u32) -> String {
    format!("t{step:04}")
}

fn parse_prefixed(name: &str, prefix: &str) -> Option<u32> {
    name.strip_prefix(prefix)?.parse().ok()
}

pub fn write_subdomain_file(dir: &Path, f: &SubdomainFile, binary: bool) -> Result<PathBuf> {
    let path = dir.join(subdomain_file_name(f.subdomain_id, binary));
    if binary {
        let mut h = BlockHeader::new(MAGIC_SUBDOMAIN, Dtype::F64);
        h.block_id = f.subdomain_id;
        h.row_offset = f.time_step as u64;
        let (_, _, y0, y1) = f.points.bbox();
        h.y_range = (y0, y1);
        f.points.write_binary(&path, h)?;
    } else {
        std::fs::write(&path, f.points.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(path)
}

/// Read `sub<id>.(csv|bin)` from a `t<step>` directory of simulation `sim_key`.
pub fn read_subdomain_file(path: &Path, sim_key: &str, time_step: u32) -> Result<SubdomainFile> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let id = parse_prefixed(name, "sub")
        .ok_or_else(|| Error::format(path, None, "file name must be sub<id>.csv or sub<id>.bin"))?;
    let points = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            PointTable::parse_csv(&text, path)?
        }
        Some("bin") => {
            let (t, h) = PointTable::read_binary(path, MAGIC_SUBDOMAIN)?;
            if h.block_id != id {
                return Err(Error::format(path, Some(h.block_id), format!("header subdomain id {} != file name id {id}", h.block_id)));
            }
            t
        }
        _ => return Err(Error::format(path, None, "unknown subdomain file extension")),
    };
    Ok(SubdomainFile {
        sim_key: sim_key.to_string(),
        time_step,
        subdomain_id: id,
        points,
    })
}

/// Time-step directories `t<step>` under a simulation directory, sorted by step.
pub fn list_step_dirs(sim_dir: &Path) -> Result<Vec<(u32, PathBuf)>> {
    let mut steps = Vec::new();
    for entry in std::fs::read_dir(sim_dir).map_err(|e| Error::io(sim_dir, e))? {
        let entry = entry.map_err(|e| Error::io(sim_dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() {
            if let Some(step) = parse_prefixed(&name, "t") {
                steps.push((step, entry.path()));
            }
        }
    }
    steps.sort();
    Ok(steps)
}

pub fn consolidated_paths(out_dir: &Path, step: u32) -> (PathBuf, PathBuf) {
    let stem = step_dir_name(step);
    (out_dir.join(format!("{stem}.cons")), out_dir.join(format!("{stem}.summary.csv")))
}

pub fn write_consolidated(out_dir: &Path, step: u32, table: &PointTable, summary: &TimestepSummary) -> Result<()> {
    let (cons, sum) = consolidated_paths(out_dir, step);
    let mut h = BlockHeader::new(MAGIC_CONSOLIDATED, Dtype::F64);
    h.row_offset = step as u64;
    h.extra = [summary.subdomains.len() as u32, table.n_vars() as u32];
    let (_, _, y0, y1) = table.bbox();
    h.y_range = (y0, y1);
    table.write_binary(&cons, h)?;
    summary.write(&sum)
}

pub fn read_consolidated(out_dir: &Path, step: u32) -> Result<(PointTable, TimestepSummary)> {
    let (cons, sum) = consolidated_paths(out_dir, step);
    let (table, _) = PointTable::read_binary(&cons, MAGIC_CONSOLIDATED)?;
    let summary = TimestepSummary::read(&sum)?;
    ensure!(
        summary.total_points() == table.len() as u64,
        Validation,
        "{}: summary covers {} rows, file has {}",
        cons.display(),
        summary.total_points(),
        table.len()
    );
    Ok((table, summary))
}

/// Time steps that have a consolidated file in `dir`, sorted.
pub fn list_consolidated_steps(dir: &Path) -> Result<Vec<u32>> {
    let mut steps = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".cons") {
            if let Some(step) = parse_prefixed(stem, "t") {
                steps.push(step);
            }
        }
    }
    steps.sort();
    Ok(steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub sim_key: String,
    pub steps: usize,
    pub points_per_step: Vec<u64>,
}

/// Consolidate every time step of one raw simulation directory into `out_dir`.
pub fn ingest_simulation(raw_sim_dir: &Path, out_dir: &Path, jobs: usize) -> Result<IngestReport> {
    let sim_key = raw_sim_dir
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Validation(format!("cannot take a simulation key from {}", raw_sim_dir.display())))?
        .to_string();
    check_key(&sim_key)?;
    let steps = list_step_dirs(raw_sim_dir)?;
    ensure!(!steps.is_empty(), Validation, "{} has no t<step> directories", raw_sim_dir.display());
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let counts = parallel::try_map_indexed(jobs, steps.len(), |i| {
        let (step, dir) = &steps[i];
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_sub = p
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("sub") && (n.ends_with(".csv") || n.ends_with(".bin")));
            if is_sub {
                files.push(read_subdomain_file(&p, &sim_key, *step)?);
            }
        }
        let (table, summary) = consolidate_timestep(&files)?;
        write_consolidated(out_dir, *step, &table, &summary)?;
        Ok::<_, Error>(table.len() as u64)
    })?;
    Ok(IngestReport {
        sim_key,
        steps: steps.len(),
        points_per_step: counts,
    })
}
