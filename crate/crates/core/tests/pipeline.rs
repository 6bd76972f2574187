use std::path::Path;

use snapcluster::cli;
use snapcluster::labels::{pair_agreement, ClusterAssignment};
use snapcluster::store::read_dense_row_major;
use snapcluster::synth::{CampaignSpec, Manifest};
use snapcluster::{BlockMatrix, CommonGrid, SnapshotIndex};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["snapcluster"];
    argv.extend_from_slice(args);
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = cli::run(argv, &mut o, &mut e);
    (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
}

fn ok(args: &[&str]) {
    let (code, _, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
}

#[test]
fn small_campaign_through_hierarchical_route() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    std::fs::write(
        p("c.cfg"),
        "n_sims = 3\nn_subdomains = 3\nregime_count = 3\ndelta = 0.05\nseed = 17\nbinary = false\n",
    )
    .unwrap();
    ok(&["synth", "--spec", &p("c.cfg"), "--out", &p("raw")]);
    ok(&["ingest", "--in", &p("raw"), "--out", &p("ing")]);
    ok(&["preprocess", "--in", &p("ing"), "--out", &p("al"), "--crop", "-5,0"]);
    ok(&[
        "remap", "--in", &p("al"), "--out", &p("rm"), "--x-range", "-4.8,-0.2", "--y-range", "0.05,3.95", "--delta", "0.05",
        "--block-rows", "7",
    ]);
    ok(&["assemble", "--in", &p("rm"), "--sims", &p("raw/simulations.csv"), "--out", &p("store")]);
    ok(&[
        "hcluster", "--in", &p("store"), "--dist-out", &p("d.dist"), "--linkage", "ward", "--nc", "3", "--out", &p("h.csv"),
        "--dendrogram", &p("h_tree.csv"),
    ]);

    let index = SnapshotIndex::read(Path::new(&p("store/index.csv"))).unwrap();
    let manifest = Manifest::parse_csv(&std::fs::read_to_string(p("raw/manifest.csv")).unwrap(), Path::new("m")).unwrap();
    let truth: Vec<usize> = index
        .entries()
        .iter()
        .map(|e| manifest.iter().find(|m| m.0 == e.sim_key && m.1 == e.time_step).unwrap().2)
        .collect();
    let labels = ClusterAssignment::read_csv(Path::new(&p("h.csv"))).unwrap();
    assert!(pair_agreement(&labels.labels, &truth) >= 0.95);
    let tree = std::fs::read_to_string(p("h_tree.csv")).unwrap();
    assert_eq!(tree.lines().count(), index.len());

    // Every remapped value is the closed-form field at a nearby source point.
    let spec = CampaignSpec::read(Path::new(&p("c.cfg"))).unwrap();
    let grid = CommonGrid::read(Path::new(&p("rm/grid.cfg"))).unwrap();
    let store = BlockMatrix::open(p("store")).unwrap();
    let n = index.len();
    let values = read_dense_row_major(&store).unwrap();
    let tol = spec.noise_bound() + spec.lipschitz_bound() * spec.delta;
    let sims: Vec<_> = (0..spec.n_sims).map(|i| spec.sim(i)).collect();
    for (c, e) in index.entries().iter().enumerate() {
        let sim = sims.iter().find(|s| s.key == e.sim_key).unwrap();
        for row in (0..grid.len()).step_by(37) {
            let (x, y) = grid.point(row);
            let want = spec.field(sim, e.time_step, x, y, 0);
            let got = values[row * n + c];
            assert!((got - want).abs() <= tol, "column {c} row {row}: {got} vs {want}");
        }
    }
}

#[test]
fn failures_print_one_error_line() {
    let (code, _, err) = run(&["kmeans", "--in", "/nonexistent/x.proj", "--nc", "2", "--out", "/tmp/never.csv"]);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: kind=io msg="), "{err}");

    let (code, _, _) = run(&["kmeans", "--nc", "2"]);
    assert_eq!(code, 2);
}

#[test]
fn negative_ranges_parse() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["preprocess", "--in", dir.path().to_str().unwrap(), "--out", "/tmp/x", "--crop", "-5,-1"]);
    // The directory is empty, so this fails later than argument parsing.
    assert_ne!(code, 2, "{err}");
}
