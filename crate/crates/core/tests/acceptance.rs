//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (written straight to stdout so it shows up even when the
//! harness captures output).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snapcluster::consensus::{self, ConsensusMatrix};
use snapcluster::format::Dtype;
use snapcluster::hierarchical::{dendrogram, DistanceMatrix, Linkage};
use snapcluster::kmeans::{kmeans_ensemble, kmeans_fit, KMeansConfig};
use snapcluster::labels::{pair_agreement, ClusterAssignment};
use snapcluster::matrix::{distance, squared_distance, DenseColumns};
use snapcluster::points::PointTable;
use snapcluster::preprocess::{align_and_crop, remap_1nn};
use snapcluster::projection::{self, jl_dimension, ProjectOptions, SparseRPSpec};
use snapcluster::store::{read_dense_row_major, BlockMatrix, BlockSpec};
use snapcluster::svd::{gram_matrix, reconstruct_check, weights_from_gram};
use snapcluster::synth::Manifest;
use snapcluster::{cli, CommonGrid, SnapshotIndex};

fn verdict(id: u32, name: &str, ok: bool, started: Instant, limit_secs: u64, detail: &str) {
    let elapsed = started.elapsed();
    let pass = ok && elapsed <= Duration::from_secs(limit_secs);
    let line = format!(
        "criterion {id:>2} [{}] {name}: {detail} ({:.2}s of {limit_secs}s)\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{line}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn cli_run(args: &[&str]) -> (i32, String, String) {
    let mut argv = vec!["snapcluster"];
    argv.extend_from_slice(args);
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = cli::run(argv, &mut o, &mut e);
    (code, String::from_utf8_lossy(&o).into_owned(), String::from_utf8_lossy(&e).into_owned())
}

/// Store a row-major `rows x cols` matrix split into blocks of the given row counts.
fn store_from_rows(dir: &Path, counts: &[u64], cols: usize, data: &[f64]) -> BlockMatrix {
    let m = BlockMatrix::create(dir, BlockSpec::from_row_counts(counts), cols, Dtype::F64).unwrap();
    let mut start = 0;
    for (b, &c) in counts.iter().enumerate() {
        let len = c as usize * cols;
        m.write_block(b as u32, &data[start..start + len]).unwrap();
        start += len;
    }
    m
}

fn random_counts(r: &mut ChaCha8Rng, total: usize) -> Vec<u64> {
    let mut counts = Vec::new();
    let mut left = total;
    while left > 0 {
        let c = r.gen_range(1..=left.min(1 + total / 2));
        counts.push(c as u64);
        left -= c;
    }
    counts
}

#[test]
fn criterion_01_jl_dimensions() {
    let t = Instant::now();
    // Values reported for N = 1604, each allowed to differ by one from rounding.
    let reported = [(0.1, 6325usize), (0.05, 24431), (0.01, 594383)];
    let mut ok = true;
    let mut got = Vec::new();
    for (eps, d) in reported {
        let (code, out, _) = cli_run(&["jl-dim", "--eps", &eps.to_string(), "--n", "1604"]);
        let v: usize = out.trim().parse().unwrap_or(0);
        ok &= code == 0 && v.abs_diff(d) <= 1;
        got.push(v);
    }
    verdict(1, "JL dimensions", ok, t, 1, &format!("eps 0.1/0.05/0.01 -> {got:?}"));
}

#[test]
fn criterion_02_common_grid() {
    let t = Instant::now();
    let g = CommonGrid::reference();
    let full = g.blocks.iter().filter(|b| b.row_count == 99_240).count();
    let ok = g.len() == 2_180_799 && g.blocks.len() == 22 && full == 21;
    verdict(
        2,
        "common-grid arithmetic",
        ok,
        t,
        1,
        &format!("D = {}, {} blocks, {full} of 99240 points", g.len(), g.blocks.len()),
    );
}

#[test]
fn criterion_03_empirical_distortion() {
    let t = Instant::now();
    let (big_d, n, d) = (50_000usize, 200usize, 2_000usize);
    let mut r = rng(3);
    // Smooth random modes plus independent noise in every coordinate.
    let modes: Vec<[(f64, f64); 6]> = (0..n)
        .map(|_| std::array::from_fn(|_| (r.gen_range(-1.0..1.0), r.gen_range(0.0..std::f64::consts::TAU))))
        .collect();
    let mut data = vec![0.0; big_d * n];
    for row in 0..big_d {
        let x = row as f64 / big_d as f64;
        for c in 0..n {
            let smooth: f64 = modes[c]
                .iter()
                .enumerate()
                .map(|(k, (a, ph))| a * (std::f64::consts::TAU * (k + 1) as f64 * x + ph).sin())
                .sum();
            data[row * n + c] = smooth + 0.5 * r.gen_range(-1.0..1.0);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let m = store_from_rows(dir.path(), &[5_000; 10], n, &data);
    drop(data);
    let spec = SparseRPSpec::very_sparse(d, big_d, 33).unwrap();
    let p = projection::project_stream(&m, &spec, &ProjectOptions { jobs: 1, memory_budget: None }).unwrap();
    // The first 29 snapshots play the role of the baseline run.
    let refs: Vec<usize> = (0..29).collect();
    let rows = projection::distortion_report(&m, &p, &refs, 1).unwrap();
    let tight = projection::fraction_within(&rows, 0.9, 1.1);
    let loose = projection::fraction_within(&rows, 0.8, 1.2);
    let pairs = rows.iter().filter(|x| x.ratio.is_some()).count();
    verdict(
        3,
        "empirical JL distortion",
        tight >= 0.99 && loose == 1.0,
        t,
        120,
        &format!("{pairs} pairs, {:.4} in [0.9,1.1], {:.4} in [0.8,1.2]", tight, loose),
    );
}

#[test]
fn criterion_04_streaming_projection() {
    let t = Instant::now();
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut jobs_equal = true;
    for case in 0..20 {
        let big_d = r.gen_range(5..300);
        let n = r.gen_range(1..15);
        let d = r.gen_range(1..40);
        let s = match case % 3 {
            0 => 1.0,
            1 => 3.0,
            _ => (big_d as f64).sqrt(),
        };
        let data: Vec<f64> = (0..big_d * n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let dir = tempfile::tempdir().unwrap();
        let counts = random_counts(&mut r, big_d);
        let m = store_from_rows(dir.path(), &counts, n, &data);
        let spec = SparseRPSpec::new(d, big_d, s, r.gen()).unwrap();
        let p1 = projection::project_stream(&m, &spec, &ProjectOptions { jobs: 1, memory_budget: None }).unwrap();
        let p3 = projection::project_stream(&m, &spec, &ProjectOptions { jobs: 3, memory_budget: None }).unwrap();
        jobs_equal &= p1 == p3;
        // Dense oracle: materialise R and multiply.
        let rd: Vec<f64> = (0..d * big_d).map(|k| spec.entry(k / big_d, k % big_d)).collect();
        let scale = 1.0 / (d as f64).sqrt();
        for c in 0..n {
            for i in 0..d {
                let (mut y, mut mag) = (0.0, 0.0);
                for j in 0..big_d {
                    let term = rd[i * big_d + j] * data[j * n + c];
                    y += term;
                    mag += term.abs();
                }
                let err = (p1.values.get(i, c) - y * scale).abs() / (mag * scale).max(f64::MIN_POSITIVE);
                worst = worst.max(err);
            }
        }
    }
    verdict(
        4,
        "streaming projection vs dense oracle",
        worst <= 1e-10 && jobs_equal,
        t,
        10,
        &format!("20 matrices, worst relative error {worst:.2e}, jobs-independent {jobs_equal}"),
    );
}

fn blobs(r: &mut ChaCha8Rng) -> (DenseColumns, Vec<usize>) {
    let centres = [(0.0, 0.0, 0.0), (30.0, 0.0, 5.0), (0.0, 30.0, -5.0)];
    let mut cols = Vec::new();
    let mut truth = Vec::new();
    for k in 0..60 {
        let c = centres[k % 3];
        cols.push(vec![c.0 + r.gen_range(-2.0..2.0), c.1 + r.gen_range(-2.0..2.0), c.2 + r.gen_range(-2.0..2.0)]);
        truth.push(k % 3);
    }
    (DenseColumns::from_columns(&cols).unwrap(), truth)
}

#[test]
fn criterion_05_kmeans_properties() {
    let t = Instant::now();
    let mut r = rng(5);
    let mut monotone = 0;
    for _ in 0..100 {
        let dim = r.gen_range(1..6);
        let n = r.gen_range(3..80);
        let nc = r.gen_range(1..=n.min(7));
        let data = DenseColumns::from_col_major(dim, n, (0..dim * n).map(|_| r.gen_range(-5.0..5.0)).collect()).unwrap();
        let res = kmeans_fit(&data, &KMeansConfig::new(nc, r.gen())).unwrap();
        if res.wcss_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)) {
            monotone += 1;
        }
    }

    let (data, truth) = blobs(&mut r);
    let greedy = KMeansConfig {
        plus_plus: true,
        ..KMeansConfig::new(3, 0)
    };
    let mut recovered = 0;
    let mut uniform_recovered = 0;
    for seed in 0..10u64 {
        let a = kmeans_fit(&data, &KMeansConfig { seed, ..greedy.clone() }).unwrap();
        if pair_agreement(&a.assignment.labels, &truth) == 1.0 {
            recovered += 1;
        }
        let u = kmeans_fit(&data, &KMeansConfig::new(3, seed)).unwrap();
        if pair_agreement(&u.assignment.labels, &truth) == 1.0 {
            uniform_recovered += 1;
        }
    }

    let cfg = KMeansConfig { seed: 77, ..greedy };
    let e1 = kmeans_ensemble(&data, &KMeansConfig { jobs: 1, ..cfg.clone() }, 10).unwrap();
    let e4 = kmeans_ensemble(&data, &KMeansConfig { jobs: 4, ..cfg.clone() }, 10).unwrap();
    let e1b = kmeans_ensemble(&data, &KMeansConfig { jobs: 1, ..cfg }, 10).unwrap();
    let mut identical = e1 == e4 && e1 == e1b;

    // Byte-level determinism through the CLI, across --jobs values.
    let dir = tempfile::tempdir().unwrap();
    let pm = snapcluster::projection::ProjectedMatrix {
        spec: SparseRPSpec::identity(3),
        values: data.clone(),
    };
    let input = dir.path().join("blobs.proj");
    pm.write(&input, Dtype::F64).unwrap();
    let mut outputs = Vec::new();
    for jobs in ["1", "4", "1"] {
        let out = dir.path().join(format!("labels_{}.csv", outputs.len()));
        let (code, _, _) = cli_run(&[
            "kmeans", "--in", input.to_str().unwrap(), "--nc", "3", "--reps", "10", "--seed", "5",
            "--jobs", jobs, "--out", out.to_str().unwrap(),
        ]);
        identical &= code == 0;
        let ens = std::fs::read(format!("{}.ensemble.csv", out.display())).unwrap_or_default();
        outputs.push((std::fs::read(&out).unwrap_or_default(), ens));
    }
    identical &= outputs.windows(2).all(|w| w[0] == w[1]);

    verdict(
        5,
        "k-means properties",
        monotone == 100 && recovered == 10 && identical,
        t,
        60,
        &format!(
            "monotone WCSS {monotone}/100, blob recovery {recovered}/10 (uniform init {uniform_recovered}/10), deterministic {identical}"
        ),
    );
}

fn union_find_components(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if edge(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    // Label components by their smallest member.
    let mut label_of = BTreeMap::new();
    (0..n)
        .map(|i| {
            let root = find(&mut parent, i);
            let next = label_of.len();
            *label_of.entry(root).or_insert(next)
        })
        .collect()
}

#[test]
fn criterion_06_consensus_extraction() {
    let t = Instant::now();
    let mut r = rng(6);
    let mut matched = 0;
    for _ in 0..200 {
        let n = r.gen_range(1..=64);
        let p = r.gen_range(0.0..0.15);
        let mut counts = vec![0u32; n * n];
        for i in 0..n {
            counts[i * n + i] = 1;
            for j in i + 1..n {
                if r.gen::<f64>() < p {
                    counts[i * n + j] = 1;
                    counts[j * n + i] = 1;
                }
            }
        }
        let c = ConsensusMatrix::from_counts(n, counts.clone(), 1).unwrap();
        let got = consensus::extract_clusters(&c, 1.0).unwrap();
        let oracle = union_find_components(n, |i, j| counts[i * n + j] == 1);
        if got.labels == oracle {
            matched += 1;
        }
    }

    // Stable profile: groups of 55, 25, 20 where one snapshot changes group
    // in half the runs.
    let stable_runs: Vec<ClusterAssignment> = (0..10)
        .map(|rep| {
            let labels: Vec<usize> = (0..100)
                .map(|i| match i {
                    54 if rep % 2 == 1 => 1,
                    0..=54 => 0,
                    55..=79 => 1,
                    _ => 2,
                })
                .collect();
            ClusterAssignment::new(labels, 3).unwrap()
        })
        .collect();
    let cs = consensus::build_consensus(&stable_runs).unwrap();
    let hs = consensus::histogram(&cs);
    let stable_ok = hs.is_stable(consensus::STABLE_EXTREME_PCT)
        && (hs.pct[0] - 59.6).abs() < 0.1
        && (hs.pct[10] - 38.8).abs() < 0.1
        && hs.pct[5] > 0.0
        && consensus::extract_clusters(&cs, 1.0).unwrap().n_clusters >= 3;

    // Unstable profile: in 3 of 10 runs half of every group moves to the next group.
    let unstable_runs: Vec<ClusterAssignment> = (0..10)
        .map(|rep| {
            let labels: Vec<usize> = (0..60)
                .map(|i| {
                    let (g, second_half) = (i / 20, i % 20 >= 10);
                    if rep < 3 && second_half {
                        (g + 1) % 3
                    } else {
                        g
                    }
                })
                .collect();
            ClusterAssignment::new(labels, 3).unwrap()
        })
        .collect();
    let cu = consensus::build_consensus(&unstable_runs).unwrap();
    let hu = consensus::histogram(&cu);
    let extracted = consensus::extract_clusters(&cu, 1.0).unwrap().n_clusters;
    let unstable_ok = !hu.is_stable(consensus::STABLE_EXTREME_PCT) && extracted > 3 && hu.pct[3] + hu.pct[7] > 20.0;

    verdict(
        6,
        "consensus extraction",
        matched == 200 && stable_ok && unstable_ok,
        t,
        30,
        &format!(
            "union-find {matched}/200; stable profile 0.0={:.1}% 1.0={:.1}% 0.5={:.1}%; 0.3/0.7 profile -> {extracted} clusters for nc=3",
            hs.pct[0], hs.pct[10], hs.pct[5]
        ),
    );
}

fn ess(points: &DenseColumns, members: &[usize]) -> f64 {
    let dim = points.rows();
    let mut mean = vec![0.0; dim];
    for &m in members {
        for (a, b) in mean.iter_mut().zip(points.column(m)) {
            *a += b / members.len() as f64;
        }
    }
    members.iter().map(|&m| squared_distance(points.column(m), &mean)).sum()
}

/// Greedy agglomeration recomputing every candidate from the raw points.
fn naive_merges(points: &DenseColumns, cost: &dyn Fn(&[usize], &[usize]) -> f64) -> Vec<(usize, usize, f64, usize)> {
    let n = points.cols();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let v = cost(&clusters[a].1, &clusters[b].1);
                let (l, r) = (clusters[a].0.min(clusters[b].0), clusters[a].0.max(clusters[b].0));
                if best.map_or(true, |(bv, bl, br, _, _)| v < bv || (v == bv && (l, r) < (bl, br))) {
                    best = Some((v, l, r, a, b));
                }
            }
        }
        let (v, l, r, a, b) = best.unwrap();
        let mut members = clusters[a].1.clone();
        members.extend_from_slice(&clusters[b].1);
        clusters.remove(b);
        clusters[a] = (n + step, members);
        merges.push((l, r, v, clusters[a].1.len()));
    }
    merges
}

fn same_merges(got: &snapcluster::hierarchical::Dendrogram, want: &[(usize, usize, f64, usize)]) -> bool {
    got.merges.len() == want.len()
        && got.merges.iter().zip(want).all(|(g, w)| {
            g.left == w.0 && g.right == w.1 && g.size == w.3 && (g.dissimilarity - w.2).abs() <= 1e-9 * w.2.abs().max(1e-12)
        })
}

#[test]
fn criterion_07_hierarchical_oracles() {
    let t = Instant::now();
    let mut r = rng(7);
    let random_points = |r: &mut ChaCha8Rng| {
        let n = r.gen_range(2..=32);
        let dim = r.gen_range(1..4);
        DenseColumns::from_col_major(dim, n, (0..dim * n).map(|_| r.gen_range(-10.0..10.0)).collect()).unwrap()
    };
    let mut ward_ok = 0;
    for _ in 0..50 {
        let x = random_points(&mut r);
        let d = DistanceMatrix::from_columns(&x).unwrap();
        let want = naive_merges(&x, &|a, b| {
            let mut u = a.to_vec();
            u.extend_from_slice(b);
            ess(&x, &u) - ess(&x, a) - ess(&x, b)
        });
        if same_merges(&dendrogram(&d, Linkage::Ward).unwrap(), &want) {
            ward_ok += 1;
        }
    }
    let mut other_ok = 0;
    for case in 0..60 {
        let x = random_points(&mut r);
        let d = DistanceMatrix::from_columns(&x).unwrap();
        let pair = |a: &[usize], b: &[usize]| -> Vec<f64> {
            a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| distance(x.column(i), x.column(j))).collect()
        };
        let (linkage, want) = match case % 3 {
            0 => (Linkage::Single, naive_merges(&x, &|a, b| pair(a, b).into_iter().fold(f64::INFINITY, f64::min))),
            1 => (Linkage::Complete, naive_merges(&x, &|a, b| pair(a, b).into_iter().fold(0.0, f64::max))),
            _ => (Linkage::Average, naive_merges(&x, &|a, b| {
                let v = pair(a, b);
                v.iter().sum::<f64>() / v.len() as f64
            })),
        };
        if same_merges(&dendrogram(&d, linkage).unwrap(), &want) {
            other_ok += 1;
        }
    }

    // A chain of near-duplicates with two slightly detached points.
    let mut pts: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
    pts.push(vec![2.5, 0.4]);
    pts.push(vec![1.0, -0.35]);
    let chain = DenseColumns::from_columns(&pts).unwrap();
    let dc = DistanceMatrix::from_columns(&chain).unwrap();
    let largest = |l: Linkage| *dendrogram(&dc, l).unwrap().cut(3).unwrap().sizes().iter().max().unwrap();
    let (single_big, ward_big) = (largest(Linkage::Single), largest(Linkage::Ward));
    let chain_ok = single_big as f64 >= 0.9 * pts.len() as f64 && ward_big < single_big;

    verdict(
        7,
        "hierarchical oracles",
        ward_ok == 50 && other_ok == 60 && chain_ok,
        t,
        60,
        &format!(
            "Ward {ward_ok}/50, single/complete/average {other_ok}/60, chain largest cluster single {single_big}/52 vs Ward {ward_big}/52"
        ),
    );
}

#[test]
fn criterion_08_svd_weights() {
    let t = Instant::now();
    let mut r = rng(8);
    let mut worst_dist = 0.0f64;
    let mut worst_res = 0.0f64;
    for &(big_d, n) in &[(5_000usize, 100usize), (2_000, 60), (700, 35), (40, 70), (300, 12)] {
        let data: Vec<f64> = (0..big_d * n).map(|_| r.gen_range(-1.0..1.0) + 0.3).collect();
        let dir = tempfile::tempdir().unwrap();
        let counts = random_counts(&mut r, big_d);
        let m = store_from_rows(dir.path(), &counts, n, &data);
        let w = weights_from_gram(&gram_matrix(&m, 2).unwrap()).unwrap();
        let x = DenseColumns::from_row_major(big_d, n, &read_dense_row_major(&m).unwrap()).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let a = distance(x.column(i), x.column(j));
                let b = distance(w.weights.column(i), w.weights.column(j));
                worst_dist = worst_dist.max((a - b).abs() / a);
            }
        }
        // Spectral identity oracle from a direct SVD of the dense matrix.
        let dense = DMatrix::from_row_slice(big_d, n, &data);
        let svd = dense.svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let rank = order.iter().filter(|&&k| svd.singular_values[k] > 1e-9 * svd.singular_values[order[0]]).count();
        let k = (rank / 3).max(1);
        let rep = reconstruct_check(&m, &w, k, 2).unwrap();
        for i in 0..n {
            let want: f64 = order[k..].iter().map(|&j| (svd.singular_values[j] * vt[(j, i)]).powi(2)).sum();
            let norm2: f64 = x.column(i).iter().map(|v| v * v).sum();
            worst_res = worst_res.max((rep.residuals[i].powi(2) - want).abs() / norm2);
        }
    }
    verdict(
        8,
        "SVD-weight isometry",
        worst_dist <= 1e-8 && worst_res <= 1e-8,
        t,
        30,
        &format!("worst distance error {worst_dist:.2e}, worst residual^2 error {worst_res:.2e} (relative)"),
    );
}

#[test]
fn criterion_09_end_to_end() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    std::fs::write(
        p("campaign.cfg"),
        "n_sims = 8\nn_subdomains = 2\nregime_count = 3\ndelta = 0.02\nseed = 2024\n",
    )
    .unwrap();
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--spec".into(), p("campaign.cfg"), "--out".into(), p("raw")],
        vec!["ingest".into(), "--in".into(), p("raw"), "--out".into(), p("ingested")],
        vec!["preprocess".into(), "--in".into(), p("ingested"), "--out".into(), p("aligned"), "--crop".into(), "-5,0".into()],
        vec![
            "remap".into(), "--in".into(), p("aligned"), "--out".into(), p("remap"), "--x-range".into(), "-4.9,-0.1".into(),
            "--y-range".into(), "0.01,3.99".into(), "--delta".into(), "0.02".into(),
        ],
        vec!["assemble".into(), "--in".into(), p("remap"), "--sims".into(), p("raw/simulations.csv"), "--out".into(), p("store")],
        vec!["project".into(), "--in".into(), p("store"), "--eps".into(), "0.2".into(), "--seed".into(), "9".into(), "--out".into(), p("x.proj")],
        vec![
            "kmeans".into(), "--in".into(), p("x.proj"), "--nc".into(), "3".into(), "--reps".into(), "10".into(), "--seed".into(),
            "11".into(), "--plus-plus".into(), "--out".into(), p("rp.csv"),
        ],
        vec!["consensus".into(), "--ensemble".into(), p("rp.csv.ensemble.csv"), "--out".into(), p("rp.cons2"), "--hist".into(), p("rp_hist.csv")],
        vec!["extract".into(), "--consensus".into(), p("rp.cons2"), "--out".into(), p("rp_labels.csv"), "--index".into(), p("store/index.csv")],
        vec!["svd-weights".into(), "--in".into(), p("store"), "--out".into(), p("w.wgts")],
        vec![
            "kmeans".into(), "--in".into(), p("w.wgts"), "--nc".into(), "3".into(), "--reps".into(), "10".into(), "--seed".into(),
            "11".into(), "--plus-plus".into(), "--out".into(), p("svd.csv"),
        ],
        vec!["consensus".into(), "--ensemble".into(), p("svd.csv.ensemble.csv"), "--out".into(), p("svd.cons2")],
        vec!["extract".into(), "--consensus".into(), p("svd.cons2"), "--out".into(), p("svd_labels.csv"), "--index".into(), p("store/index.csv")],
        vec!["report".into(), "--labels".into(), p("rp_labels.csv"), "--index".into(), p("store/index.csv"), "--out".into(), p("report.csv")],
    ];
    let mut failed = None;
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        let (code, _, err) = cli_run(&args);
        if code != 0 {
            failed = Some(format!("{} failed: {}", s[0], err.trim()));
            break;
        }
    }
    if let Some(msg) = failed {
        verdict(9, "end-to-end ground truth", false, t, 300, &msg);
        return;
    }
    let index = SnapshotIndex::read(Path::new(&p("store/index.csv"))).unwrap();
    let manifest = Manifest::parse_csv(&std::fs::read_to_string(p("raw/manifest.csv")).unwrap(), Path::new("manifest")).unwrap();
    let truth_of: BTreeMap<(String, u32), usize> = manifest.into_iter().map(|(k, t, ph)| ((k, t), ph)).collect();
    let truth: Vec<usize> = index.entries().iter().map(|e| truth_of[&(e.sim_key.clone(), e.time_step)]).collect();
    let rp = ClusterAssignment::read_csv(Path::new(&p("rp_labels.csv"))).unwrap();
    let sv = ClusterAssignment::read_csv(Path::new(&p("svd_labels.csv"))).unwrap();
    let (a_rp, a_sv, a_both) = (
        pair_agreement(&rp.labels, &truth),
        pair_agreement(&sv.labels, &truth),
        pair_agreement(&rp.labels, &sv.labels),
    );
    let report = std::fs::read_to_string(p("report.csv")).unwrap();
    let report_rows = report.lines().count() - 1;
    let d = BlockMatrix::open(p("store")).unwrap().n_rows();
    verdict(
        9,
        "end-to-end ground truth",
        a_rp >= 0.95 && a_sv >= 0.95 && a_both >= 0.95 && report_rows == index.len(),
        t,
        300,
        &format!(
            "D = {d}, N = {}; agreement projection {a_rp:.4}, SVD {a_sv:.4}, between routes {a_both:.4}; {} / {} clusters extracted",
            index.len(),
            rp.n_clusters,
            sv.n_clusters
        ),
    );
}

#[test]
fn criterion_10_preprocess() {
    let t = Instant::now();
    let mut r = rng(10);
    let mut crop_ok = 0;
    for _ in 0..1000 {
        let n = r.gen_range(0..150);
        let mut pts = PointTable::new(2);
        for _ in 0..n {
            pts.push(r.gen_range(-40.0..10.0), r.gen_range(0.0..5.0), &[r.gen(), r.gen()]);
        }
        // Land a few points exactly on the crop edges.
        let x_max = r.gen_range(-5.0..10.0);
        let lo = r.gen_range(-40.0..-1.0);
        let hi = r.gen_range(lo + 0.5..0.5);
        pts.push(x_max + lo, 1.0, &[0.0, 0.0]);
        pts.push(x_max + hi, 1.0, &[0.0, 0.0]);
        let got = align_and_crop(&pts, x_max, (lo, hi)).unwrap();
        let mut want = PointTable::new(2);
        for i in 0..pts.len() {
            let xs = pts.x[i] - x_max;
            if !(xs < lo || xs > hi) {
                want.push(xs, pts.y[i], pts.vars(i));
            }
        }
        if got == want {
            crop_ok += 1;
        }
    }

    let mut remap_ok = 0;
    for _ in 0..100 {
        let delta = r.gen_range(0.05..0.3);
        let x0 = r.gen_range(-5.0..0.0);
        let y0 = r.gen_range(0.0..2.0);
        let g = CommonGrid::build((x0, x0 + r.gen_range(1.0..3.0)), (y0, y0 + r.gen_range(1.0..3.0)), delta, r.gen_range(1..8)).unwrap();
        let margin = 4.0 * delta;
        let mut src = PointTable::new(1);
        let count = r.gen_range(50..400);
        for _ in 0..count {
            let x = r.gen_range(g.x_lo - margin..g.x_hi + margin);
            let y = r.gen_range(g.y_lo - margin..g.y_hi + margin);
            src.push(x, y, &[r.gen()]);
        }
        // Some sources coincide with grid points, one sits far away.
        for k in 0..10 {
            let (x, y) = g.point(k * g.len() / 10);
            src.push(x, y, &[r.gen()]);
        }
        src.push(g.x_lo - margin, g.y_lo - margin, &[0.5]);
        src.push(g.x_hi + margin, g.y_hi + margin, &[0.25]);
        let mut all = true;
        for b in 0..g.blocks.len() as u32 {
            let got = remap_1nn(&src, 0, &g, b, margin).unwrap();
            for (k, &(qx, qy)) in g.block_points(b).iter().enumerate() {
                let mut best: Option<(f64, f64, f64, usize)> = None;
                for i in 0..src.len() {
                    let d2 = (src.x[i] - qx).powi(2) + (src.y[i] - qy).powi(2);
                    let cand = (d2, src.y[i], src.x[i], i);
                    if best.map_or(true, |bb| cand.0 < bb.0 || (cand.0 == bb.0 && (cand.1, cand.2, cand.3) < (bb.1, bb.2, bb.3))) {
                        best = Some(cand);
                    }
                }
                all &= got[k] == src.value(best.unwrap().3, 0);
            }
        }
        if all {
            remap_ok += 1;
        }
    }

    // A field that already lives on the grid comes back unchanged.
    let g = CommonGrid::build((-3.0, -0.1), (0.05, 2.0), 0.05, 7).unwrap();
    let mut on_grid = PointTable::new(1);
    for k in 0..g.len() {
        let (x, y) = g.point(k);
        on_grid.push(x, y, &[(3.0 * x).sin() * y + k as f64 * 1e-3]);
    }
    let mut idempotent = true;
    for b in 0..g.blocks.len() as u32 {
        let got = remap_1nn(&on_grid, 0, &g, b, 4.0 * g.delta).unwrap();
        let off = g.blocks[b as usize].row_offset as usize;
        idempotent &= got.iter().enumerate().all(|(k, &v)| v == on_grid.value(off + k, 0));
    }

    verdict(
        10,
        "preprocess correctness",
        crop_ok == 1000 && remap_ok == 100 && idempotent,
        t,
        60,
        &format!("align/crop {crop_ok}/1000, 1-NN remap {remap_ok}/100, idempotent {idempotent}"),
    );
}

#[test]
fn jl_bound_is_monotone_in_n() {
    let a = jl_dimension(0.1, 100).unwrap().d_min;
    let b = jl_dimension(0.1, 10_000).unwrap().d_min;
    assert!(a < b);
}
