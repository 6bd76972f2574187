//! The `snapcluster` command line: one subcommand per pipeline stage.
//!
//! `--config <file>` supplies flags from a flat `key = value` file (keys are
//! flag names, `_` and `-` interchangeable); flags given on the command line
//! win. Every subcommand that writes an output also writes `<out>.prov`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{parse_range, FlatConfig};
use crate::consensus::{self, ConsensusMatrix};
use crate::error::Error;
use crate::format::Dtype;
use crate::grid::CommonGrid;
use crate::hierarchical::{self, DistanceMatrix, Linkage};
use crate::index::{read_sim_table, SnapshotIndex};
use crate::ingest;
use crate::kmeans::{kmeans_ensemble, KMeansConfig};
use crate::labels::{ensemble_from_csv, ensemble_to_csv, ClusterAssignment};
use crate::matrix::DenseColumns;
use crate::preprocess::{self, DEFAULT_CROP, DEFAULT_MARGIN_CELLS};
use crate::projection::{self, ProjectOptions, ProjectedMatrix, SparseRPSpec};
use crate::report;
use crate::store::BlockMatrix;
use crate::svd::{self, WeightMatrix};
use crate::synth::{self, CampaignSpec};

#[derive(Debug, Parser)]
#[command(name = "snapcluster", version, about = "Snapshot matrices and clustering for simulation output")]
struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, env = "SNAPCLUSTER_JOBS", default_value_t = 0)]
    jobs: usize,

    /// Flat key = value file supplying default flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic campaign of subdomain files.
    Synth(SynthArgs),
    /// Consolidate subdomain files into one file per time step.
    Ingest(InOut),
    /// Align x to the right edge and crop.
    Preprocess(PreprocessArgs),
    /// Nearest-neighbour remap onto the common grid.
    Remap(RemapArgs),
    /// Build the block snapshot matrix for one variable.
    Assemble(AssembleArgs),
    /// Sparse random projection of a snapshot matrix.
    Project(ProjectArgs),
    /// Minimum projected dimension for a distortion bound.
    JlDim(JlDimArgs),
    /// Original vs projected distances from reference snapshots.
    Distortion(DistortionArgs),
    /// k-means (or an ensemble of runs) over projected snapshots or weights.
    Kmeans(KmeansArgs),
    /// Consensus matrix and value histogram from an ensemble.
    Consensus(ConsensusArgs),
    /// Clusters as connected components of a consensus matrix.
    Extract(ExtractArgs),
    /// Merge small clusters into strongly connected neighbours.
    MergeSmall(MergeArgs),
    /// Manually reassign snapshots to clusters.
    Override(OverrideArgs),
    /// Agglomerative clustering over pairwise distances.
    Hcluster(HclusterArgs),
    /// Per-snapshot SVD weights.
    SvdWeights(SvdArgs),
    /// Per-snapshot cluster report, sizes, and mean snapshots.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Campaign description; defaults are used for missing keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InOut {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Crop range in aligned x, as lo,hi.
    #[arg(long, value_parser = range_arg, allow_hyphen_values = true)]
    crop: Option<(f64, f64)>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Grid file; overrides the explicit ranges.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_parser = range_arg, allow_hyphen_values = true)]
    x_range: Option<(f64, f64)>,
    #[arg(long, value_parser = range_arg, allow_hyphen_values = true)]
    y_range: Option<(f64, f64)>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 40)]
    block_rows: usize,
}

#[derive(Debug, Args)]
struct RemapArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Search margin around each block, in grid spacings.
    #[arg(long, default_value_t = DEFAULT_MARGIN_CELLS)]
    margin_cells: f64,
}

#[derive(Debug, Args)]
struct AssembleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Simulations table (`sim_key,he_length,tip_velocity,jet_radius,label`).
    #[arg(long)]
    sims: PathBuf,
    /// Grid file; defaults to `<in>/grid.cfg`.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    var: usize,
    #[arg(long, default_value = "f64", value_parser = dtype_arg)]
    dtype: Dtype,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reduced dimension; derived from --eps when absent.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Sparsity: `sqrt` for sqrt(D), or a number >= 1.
    #[arg(long, default_value = "sqrt")]
    s: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accumulator memory limit in bytes.
    #[arg(long)]
    memory_budget: Option<usize>,
    #[arg(long, default_value = "f64", value_parser = dtype_arg)]
    dtype: Dtype,
}

#[derive(Debug, Args)]
struct JlDimArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    n: usize,
}

#[derive(Debug, Args)]
struct DistortionArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    proj: PathBuf,
    /// Comma-separated reference columns.
    #[arg(long, value_delimiter = ',')]
    refs: Vec<usize>,
    /// Use every snapshot of this simulation as a reference.
    #[arg(long)]
    ref_sim: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct KmeansArgs {
    /// PROJ or WGTS file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    nc: usize,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    niter: usize,
    #[arg(long, default_value_t = 0.0)]
    thresh: f64,
    #[arg(long)]
    plus_plus: bool,
    /// Use only the leading modes of a weights file.
    #[arg(long)]
    modes: Option<usize>,
    /// Snapshot index used to annotate the labels.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Wide CSV of every run; defaults to `<out>.ensemble.csv`.
    #[arg(long)]
    ensemble: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConsensusArgs {
    #[arg(long)]
    ensemble: PathBuf,
    /// CONS2 output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    hist: Option<PathBuf>,
    /// Dense CSV copy of the matrix.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "")]
    tag: String,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    consensus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Write the matrix reordered by cluster as CSV.
    #[arg(long)]
    reordered: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(long)]
    consensus: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    min_size: usize,
    #[arg(long, default_value_t = 0.7)]
    strong_threshold: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OverrideArgs {
    #[arg(long)]
    labels: PathBuf,
    /// CSV `column,new_label`.
    #[arg(long)]
    moves: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Audit CSV; defaults to `<out>.audit.csv`.
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct HclusterArgs {
    /// Precomputed DIST file.
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Snapshot store; distances are computed and saved to --dist-out.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    dist_out: Option<PathBuf>,
    #[arg(long, default_value = "ward")]
    linkage: String,
    #[arg(long)]
    nc: Option<usize>,
    /// Cut by dissimilarity instead of cluster count.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dendrogram: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SvdArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write rank-k reconstruction residuals to `<out>.residuals.csv`.
    #[arg(long)]
    check_modes: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sizes: Option<PathBuf>,
    /// Snapshot store for mean snapshots.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Output store of per-cluster mean snapshots.
    #[arg(long)]
    means: Option<PathBuf>,
}

fn range_arg(s: &str) -> Result<(f64, f64), String> {
    parse_range(s).map_err(|e| e.to_string())
}

fn dtype_arg(s: &str) -> Result<Dtype, String> {
    Dtype::parse(s).ok_or_else(|| format!("unknown dtype {s:?} (f32, f64)"))
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    let args: Vec<OsString> = std::env::args_os().collect();
    run(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Parse `argv` (including the program name), run the subcommand, and
/// return 0 on success, 1 on a failed run, 2 on a usage error.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match inject_config(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            return 1;
        }
    };
    let matches = match Cli::command().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return 2;
        }
    };
    let prov = provenance(&matches);
    match dispatch(cli, out, &prov) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", error_line(&e));
            1
        }
    }
}

fn error_line(e: &anyhow::Error) -> String {
    let kind = e.downcast_ref::<Error>().map_or("error", Error::kind);
    let msg = format!("{e:#}").replace('\n', " ");
    format!("error: kind={kind} msg={msg}")
}

/// Insert `--key value` for each config entry whose flag is not already on
/// the command line. Unknown keys are an error.
fn inject_config(mut argv: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let cfg = FlatConfig::read(Path::new(&path))?;
    let cmd = Cli::command();
    let Some(sub) = strs.iter().skip(1).find_map(|a| cmd.find_subcommand(a)) else {
        return Ok(argv);
    };
    let mut flags: BTreeMap<String, bool> = BTreeMap::new();
    for arg in sub.get_arguments().chain(cmd.get_arguments()) {
        if let Some(long) = arg.get_long() {
            flags.insert(long.to_string(), !arg.get_action().takes_values());
        }
    }
    for (key, value) in cfg.iter() {
        let flag = key.replace('_', "-");
        if flag == "config" {
            bail!(Error::Validation("config files cannot include other config files".into()));
        }
        let Some(&is_switch) = flags.get(&flag) else {
            return Err(Error::Validation(format!("unknown config key {key:?} for {}", sub.get_name())).into());
        };
        let long = format!("--{flag}");
        if strs.iter().any(|a| a == &long || a.starts_with(&format!("{long}="))) {
            continue;
        }
        if is_switch {
            match value {
                "true" => argv.push(long.into()),
                "false" => {}
                _ => return Err(Error::Validation(format!("config key {key} expects true or false, got {value:?}")).into()),
            }
        } else {
            argv.push(long.into());
            argv.push(value.into());
        }
    }
    Ok(argv)
}

/// `key = value` lines recording the subcommand and every resolved argument.
fn provenance(m: &clap::ArgMatches) -> String {
    let mut s = format!("tool = snapcluster {}\n", env!("CARGO_PKG_VERSION"));
    if let Some((name, sub)) = m.subcommand() {
        s.push_str(&format!("command = {name}\n"));
        let mut ids: Vec<&str> = sub.ids().map(|i| i.as_str()).collect();
        ids.sort_unstable();
        for id in ids {
            if let Ok(Some(vals)) = sub.try_get_raw(id) {
                let v: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
                s.push_str(&format!("arg.{id} = {}\n", v.join(",")));
            }
        }
    }
    s
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn prov_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".prov");
    PathBuf::from(s)
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_index(path: Option<&PathBuf>) -> anyhow::Result<Option<SnapshotIndex>> {
    Ok(match path {
        Some(p) => Some(SnapshotIndex::read(p)?),
        None => None,
    })
}

fn write_labels(path: &Path, a: &ClusterAssignment, index: Option<&SnapshotIndex>) -> anyhow::Result<()> {
    write_text(path, &a.to_csv(index)?)
}

/// Subdirectories of `root`, sorted by name.
fn sim_dirs(root: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let p = e.map_err(|e| Error::io(root, e))?.path();
        if p.is_dir() {
            let key = p.file_name().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad directory name {}", p.display()))?;
            out.push((key.to_string(), p.clone()));
        }
    }
    out.sort();
    if out.is_empty() {
        bail!(Error::Validation(format!("{} contains no simulation directories", root.display())));
    }
    Ok(out)
}

fn read_magic(path: &Path) -> anyhow::Result<[u8; 4]> {
    use std::io::Read;
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut m = [0u8; 4];
    f.read_exact(&mut m).map_err(|_| Error::format(path, None, "file too short"))?;
    Ok(m)
}

fn load_points(path: &Path, modes: Option<usize>) -> anyhow::Result<DenseColumns> {
    match &read_magic(path)? {
        b"PROJ" => Ok(ProjectedMatrix::read(path)?.values),
        b"WGTS" => {
            let w = WeightMatrix::read(path)?;
            Ok(match modes {
                Some(k) => w.truncated(k),
                None => w.weights,
            })
        }
        _ => Err(Error::format(path, None, "expected a PROJ or WGTS file").into()),
    }
}

fn grid_from(args: &GridArgs) -> anyhow::Result<CommonGrid> {
    if let Some(p) = &args.grid {
        return Ok(CommonGrid::read(p)?);
    }
    match (args.x_range, args.y_range, args.delta) {
        (Some(x), Some(y), Some(d)) => Ok(CommonGrid::build(x, y, d, args.block_rows)?),
        (None, None, None) => Ok(CommonGrid::reference()),
        _ => bail!(Error::Validation("give --grid, or all of --x-range, --y-range and --delta".into())),
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, prov: &str) -> anyhow::Result<()> {
    let jobs = cli.jobs;
    let record = |path: &Path| write_text(&prov_path(path), prov);
    match cli.cmd {
        Cmd::Synth(a) => {
            let spec = match &a.spec {
                Some(p) => CampaignSpec::read(p)?,
                None => CampaignSpec::default(),
            };
            let m = synth::generate_campaign(&spec, &a.out, jobs)?;
            writeln!(out, "wrote {} simulations, {} snapshots to {}", m.sims.len(), m.phases.len(), a.out.display())?;
            record(&a.out.join("manifest.csv"))?;
        }
        Cmd::Ingest(a) => {
            for (key, dir) in sim_dirs(&a.input)? {
                let has_steps = !ingest::list_step_dirs(&dir)?.is_empty();
                if !has_steps {
                    continue;
                }
                let r = ingest::ingest_simulation(&dir, &a.out.join(&key), jobs)?;
                writeln!(out, "{key}: {} steps", r.steps)?;
            }
            record(&a.out.join("ingest"))?;
        }
        Cmd::Preprocess(a) => {
            let crop = a.crop.unwrap_or(DEFAULT_CROP);
            for (key, dir) in sim_dirs(&a.input)? {
                let spec = preprocess::preprocess_simulation(&dir, &a.out.join(&key), crop, jobs)?;
                writeln!(out, "{key}: x_shift {}", spec.x_shift)?;
            }
            record(&a.out.join("preprocess"))?;
        }
        Cmd::Remap(a) => {
            let grid = grid_from(&a.grid)?;
            let margin = a.margin_cells * grid.delta;
            for (key, dir) in sim_dirs(&a.input)? {
                let r = preprocess::remap_simulation(&dir, &grid, margin, &a.out.join(&key), jobs)?;
                writeln!(out, "{key}: {} steps x {} blocks", r.n_steps, r.blocks)?;
            }
            grid.write(&a.out.join("grid.cfg"))?;
            record(&a.out.join("grid.cfg"))?;
        }
        Cmd::Assemble(a) => {
            let grid = CommonGrid::read(&a.grid.clone().unwrap_or_else(|| a.input.join("grid.cfg")))?;
            let sims = read_sim_table(&a.sims)?;
            let (m, idx) = crate::assemble::assemble(&a.input, &sims, &grid, a.var, &a.out, a.dtype, jobs)?;
            writeln!(out, "D = {}, N = {}, {} blocks", m.n_rows(), idx.len(), m.specs().len())?;
            record(&a.out.join("index.csv"))?;
        }
        Cmd::Project(a) => {
            let m = BlockMatrix::open(&a.input)?;
            let big_d = m.n_rows() as usize;
            let d = match (a.d, a.eps) {
                (Some(d), _) => d,
                (None, Some(eps)) => projection::jl_dimension(eps, m.n_cols())?.d_min,
                (None, None) => bail!(Error::Validation("give --d or --eps".into())),
            };
            let spec = if a.s == "sqrt" {
                SparseRPSpec::very_sparse(d, big_d, a.seed)?
            } else {
                let s: f64 = a.s.parse().map_err(|_| Error::Validation(format!("--s must be `sqrt` or a number, got {:?}", a.s)))?;
                SparseRPSpec::new(d, big_d, s, a.seed)?
            };
            let opts = ProjectOptions {
                jobs,
                memory_budget: a.memory_budget,
            };
            let p = projection::project_stream(&m, &spec, &opts)?;
            p.write(&a.out, a.dtype)?;
            writeln!(out, "projected {} x {} to {} x {}", big_d, m.n_cols(), d, m.n_cols())?;
            record(&a.out)?;
        }
        Cmd::JlDim(a) => {
            let p = projection::jl_dimension(a.eps, a.n)?;
            writeln!(out, "{}", p.d_min)?;
        }
        Cmd::Distortion(a) => {
            let m = BlockMatrix::open(&a.input)?;
            let p = ProjectedMatrix::read(&a.proj)?;
            let mut refs = a.refs.clone();
            if let Some(key) = &a.ref_sim {
                let idx = m
                    .load_index()?
                    .ok_or_else(|| Error::Validation(format!("{} has no index.csv for --ref-sim", a.input.display())))?;
                let cols = idx.columns_of(key);
                if cols.is_empty() {
                    bail!(Error::Validation(format!("simulation {key} not in the index")));
                }
                refs.extend(cols);
            }
            if refs.is_empty() {
                bail!(Error::Validation("give --refs or --ref-sim".into()));
            }
            let rows = projection::distortion_report(&m, &p, &refs, jobs)?;
            write_text(&a.out, &projection::distortion_csv(&rows))?;
            let within = projection::fraction_within(&rows, 0.9, 1.1);
            writeln!(out, "{:.4} of ratios within [0.9, 1.1]", within)?;
            record(&a.out)?;
        }
        Cmd::Kmeans(a) => {
            let data = load_points(&a.input, a.modes)?;
            let cfg = KMeansConfig {
                nc: a.nc,
                niter: a.niter,
                thresh: a.thresh,
                seed: a.seed,
                plus_plus: a.plus_plus,
                jobs,
            };
            let runs = kmeans_ensemble(&data, &cfg, a.reps)?;
            let index = load_index(a.index.as_ref())?;
            write_labels(&a.out, &runs[0].assignment, index.as_ref())?;
            let ens_path = a.ensemble.clone().unwrap_or_else(|| with_suffix(&a.out, ".ensemble.csv"));
            let assignments: Vec<ClusterAssignment> = runs.iter().map(|r| r.assignment.clone()).collect();
            write_text(&ens_path, &ensemble_to_csv(&assignments))?;
            for (r, run) in runs.iter().enumerate() {
                writeln!(out, "rep {r}: wcss {} after {} iterations", run.wcss, run.iterations_run)?;
            }
            record(&a.out)?;
        }
        Cmd::Consensus(a) => {
            let text = std::fs::read_to_string(&a.ensemble).map_err(|e| Error::io(&a.ensemble, e))?;
            let runs = ensemble_from_csv(&text, &a.ensemble)?;
            let mut c = consensus::build_consensus(&runs)?;
            c.tag = a.tag.clone();
            c.write(&a.out)?;
            let h = consensus::histogram(&c);
            if let Some(p) = &a.hist {
                write_text(p, &h.to_csv())?;
            }
            if let Some(p) = &a.csv {
                write_text(p, &c.to_csv())?;
            }
            write!(out, "{}", h.to_csv())?;
            record(&a.out)?;
        }
        Cmd::Extract(a) => {
            let c = ConsensusMatrix::read(&a.consensus)?;
            let asg = consensus::extract_clusters(&c, a.threshold)?;
            let index = load_index(a.index.as_ref())?;
            write_labels(&a.out, &asg, index.as_ref())?;
            if let Some(p) = &a.reordered {
                let r = consensus::reorder_by_cluster(&c, &asg)?;
                let n = c.n();
                let mut s = String::new();
                for row in r.values.chunks(n.max(1)) {
                    let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    s.push_str(&line.join(","));
                    s.push('\n');
                }
                write_text(p, &s)?;
            }
            writeln!(out, "{} clusters, sizes {:?}", asg.n_clusters, asg.sizes())?;
            record(&a.out)?;
        }
        Cmd::MergeSmall(a) => {
            let c = ConsensusMatrix::read(&a.consensus)?;
            let asg = ClusterAssignment::read_csv(&a.labels)?;
            let o = consensus::merge_small_clusters(&c, &asg, a.min_size, a.strong_threshold)?;
            let index = load_index(a.index.as_ref())?;
            write_labels(&a.out, &o.assignment, index.as_ref())?;
            let report = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".merge.csv"));
            write_text(&report, &o.report_csv())?;
            writeln!(
                out,
                "{} merged, {} unmerged, {} ambiguous",
                o.merged.len(),
                o.unmerged.len(),
                o.ambiguous.len()
            )?;
            record(&a.out)?;
        }
        Cmd::Override(a) => {
            let asg = ClusterAssignment::read_csv(&a.labels)?;
            let text = std::fs::read_to_string(&a.moves).map_err(|e| Error::io(&a.moves, e))?;
            let moves = consensus::parse_moves(&text, &a.moves)?;
            let (new, audit) = consensus::override_labels(&asg, &moves)?;
            let index = load_index(a.index.as_ref())?;
            write_labels(&a.out, &new, index.as_ref())?;
            let audit_path = a.audit.clone().unwrap_or_else(|| with_suffix(&a.out, ".audit.csv"));
            write_text(&audit_path, &consensus::audit_csv(&audit))?;
            writeln!(out, "{} labels changed", audit.len())?;
            record(&a.out)?;
        }
        Cmd::Hcluster(a) => {
            let linkage: Linkage = a.linkage.parse()?;
            let d = match (&a.input, &a.dist) {
                (Some(store), _) => {
                    let d = hierarchical::pairwise_distances(&BlockMatrix::open(store)?, jobs)?;
                    if let Some(p) = a.dist_out.as_ref().or(a.dist.as_ref()) {
                        d.write(p)?;
                    }
                    d
                }
                (None, Some(p)) => DistanceMatrix::read(p)?,
                (None, None) => bail!(Error::Validation("give --dist or --in".into())),
            };
            let dendro = hierarchical::dendrogram(&d, linkage)?;
            let asg = match (a.nc, a.threshold) {
                (Some(nc), _) => dendro.cut(nc)?,
                (None, Some(t)) => dendro.cut_by_threshold(t),
                (None, None) => bail!(Error::Validation("give --nc or --threshold".into())),
            };
            let index = load_index(a.index.as_ref())?;
            write_labels(&a.out, &asg, index.as_ref())?;
            if let Some(p) = &a.dendrogram {
                write_text(p, &dendro.to_csv())?;
            }
            writeln!(out, "{} clusters, sizes {:?}", asg.n_clusters, asg.sizes())?;
            record(&a.out)?;
        }
        Cmd::SvdWeights(a) => {
            let m = BlockMatrix::open(&a.input)?;
            let g = svd::gram_matrix(&m, jobs)?;
            let w = svd::weights_from_gram(&g)?;
            w.write(&a.out)?;
            let rank = w.rank_deficient.iter().filter(|&&r| !r).count();
            writeln!(out, "N = {}, numerical rank {rank}", w.n())?;
            if let Some(k) = a.check_modes {
                let r = svd::reconstruct_check(&m, &w, k, jobs)?;
                let mut s = String::from("column,residual\n");
                for (i, v) in r.residuals.iter().enumerate() {
                    s.push_str(&format!("{i},{v}\n"));
                }
                write_text(&with_suffix(&a.out, ".residuals.csv"), &s)?;
                if !r.modes_skipped.is_empty() {
                    writeln!(out, "skipped zero modes {:?}", r.modes_skipped)?;
                }
            }
            record(&a.out)?;
        }
        Cmd::Report(a) => {
            let asg = ClusterAssignment::read_csv(&a.labels)?;
            let idx = SnapshotIndex::read(&a.index)?;
            let asg = ClusterAssignment::new(asg.labels, asg.n_clusters)?;
            write_text(&a.out, &report::emit_report(&asg, &idx)?)?;
            let sizes = report::size_summary(&asg);
            if let Some(p) = &a.sizes {
                write_text(p, &sizes)?;
            }
            match (&a.store, &a.means) {
                (Some(s), Some(dst)) => {
                    report::cluster_means(&BlockMatrix::open(s)?, &asg, dst, jobs)?;
                }
                (None, None) => {}
                _ => bail!(Error::Validation("--store and --means go together".into())),
            }
            write!(out, "{sizes}")?;
            record(&a.out)?;
        }
    }
    Ok(())
}
