//! Lloyd k-means over the columns of a dense matrix.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::labels::ClusterAssignment;
use crate::matrix::{squared_distance, DenseColumns};
use crate::parallel;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub nc: usize,
    pub niter: usize,
    /// Stop once no centroid moves farther than this. `0.0` means an exact fixed point.
    pub thresh: f64,
    pub seed: u64,
    /// Use greedy k-means++ seeding instead of uniform sampling of distinct columns.
    pub plus_plus: bool,
    pub jobs: usize,
}

impl KMeansConfig {
    pub fn new(nc: usize, seed: u64) -> Self {
        Self {
            nc,
            niter: 100,
            thresh: 0.0,
            seed,
            plus_plus: false,
            jobs: 1,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        ensure!(self.nc >= 1, Validation, "nc must be at least 1");
        ensure!(self.nc <= n, Validation, "nc = {} exceeds the number of snapshots N = {n}", self.nc);
        ensure!(self.niter >= 1, Validation, "niter must be at least 1");
        ensure!(self.thresh >= 0.0 && self.thresh.is_finite(), Validation, "thresh must be finite and >= 0");
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmptyClusterEvent {
    pub iteration: usize,
    pub cluster: usize,
    /// Column moved into the empty cluster.
    pub reseeded_with: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    /// `d x nc`; column k is the mean of cluster k.
    pub centroids: DenseColumns,
    pub wcss: f64,
    /// WCSS after each assign/update pair.
    pub wcss_trace: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub empty_clusters: Vec<EmptyClusterEvent>,
    pub initial_columns: Vec<usize>,
}

fn nearest(x: &[f64], centroids: &DenseColumns) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..centroids.cols() {
        let d = squared_distance(x, centroids.column(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn initial_columns(data: &DenseColumns, cfg: &KMeansConfig) -> Vec<usize> {
    let n = data.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if !cfg.plus_plus {
        return sample(&mut rng, n, cfg.nc).into_vec();
    }
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|j| squared_distance(data.column(j), data.column(chosen[0]))).collect();
    let trials = 2 + (cfg.nc as f64).ln().floor() as usize;
    while chosen.len() < cfg.nc {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            chosen.push((0..n).find(|j| !chosen.contains(j)).expect("nc <= N"));
            continue;
        }
        // Greedy seeding: draw several D^2 candidates, keep the one that
        // lowers the total potential most.
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = (0..n).rev().find(|&j| d2[j] > 0.0).expect("total > 0");
            for (j, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = j;
                    break;
                }
                target -= w;
            }
            let cand: Vec<f64> = d2
                .iter()
                .enumerate()
                .map(|(j, &v)| v.min(squared_distance(data.column(j), data.column(pick))))
                .collect();
            let potential: f64 = cand.iter().sum();
            if best.as_ref().map_or(true, |b| potential < b.0) {
                best = Some((potential, pick, cand));
            }
        }
        let (_, pick, cand) = best.expect("trials >= 2");
        chosen.push(pick);
        d2 = cand;
    }
    chosen
}

fn means(data: &DenseColumns, labels: &[usize], nc: usize) -> DenseColumns {
    let d = data.rows();
    let mut c = DenseColumns::zeros(d, nc);
    let mut counts = vec![0usize; nc];
    for (j, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (a, b) in c.column_mut(l).iter_mut().zip(data.column(j)) {
            *a += b;
        }
    }
    for (k, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            let inv = 1.0 / cnt as f64;
            c.column_mut(k).iter_mut().for_each(|v| *v *= inv);
        }
    }
    c
}

fn wcss_of(data: &DenseColumns, labels: &[usize], centroids: &DenseColumns) -> f64 {
    labels.iter().enumerate().map(|(j, &l)| squared_distance(data.column(j), centroids.column(l))).sum()
}

/// Lloyd iterations from `nc` randomly chosen columns. Assignment ties go to
/// the lowest centroid index. An empty cluster takes the column farthest from
/// its current centroid (among clusters with more than one member).
pub fn kmeans_fit(data: &DenseColumns, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = data.cols();
    cfg.validate(n)?;
    ensure!(data.is_finite(), Data, "k-means input contains non-finite values");

    let init = initial_columns(data, cfg);
    let mut centroids = DenseColumns::zeros(data.rows(), cfg.nc);
    for (k, &j) in init.iter().enumerate() {
        centroids.column_mut(k).copy_from_slice(data.column(j));
    }

    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut events = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.niter {
        iterations = it;
        let assigned = parallel::map_indexed(cfg.jobs, n, |j| nearest(data.column(j), &centroids));
        let mut dist2: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        labels.iter_mut().zip(&assigned).for_each(|(l, a)| *l = a.0);

        let mut counts = vec![0usize; cfg.nc];
        labels.iter().for_each(|&l| counts[l] += 1);
        for k in 0..cfg.nc {
            if counts[k] > 0 {
                continue;
            }
            let mut far: Option<usize> = None;
            for j in 0..n {
                if counts[labels[j]] > 1 && far.map_or(true, |f| dist2[j] > dist2[f]) {
                    far = Some(j);
                }
            }
            let j = far.expect("nc <= N leaves a cluster with two members");
            counts[labels[j]] -= 1;
            counts[k] = 1;
            labels[j] = k;
            dist2[j] = 0.0;
            centroids.column_mut(k).copy_from_slice(data.column(j));
            events.push(EmptyClusterEvent {
                iteration: it,
                cluster: k,
                reseeded_with: j,
            });
        }

        let updated = means(data, &labels, cfg.nc);
        let movement = (0..cfg.nc)
            .map(|k| squared_distance(updated.column(k), centroids.column(k)).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(wcss_of(data, &labels, &centroids));
        if movement <= cfg.thresh {
            converged = true;
            break;
        }
    }

    Ok(KMeansResult {
        assignment: ClusterAssignment::new(labels, cfg.nc)?,
        centroids,
        wcss: *trace.last().expect("niter >= 1"),
        wcss_trace: trace,
        iterations_run: iterations,
        converged,
        empty_clusters: events,
        initial_columns: init,
    })
}

/// `repetitions` independent fits; run r uses seed `derive_seed(cfg.seed, r)`.
pub fn kmeans_ensemble(data: &DenseColumns, cfg: &KMeansConfig, repetitions: usize) -> Result<Vec<KMeansResult>> {
    ensure!(repetitions >= 1, Validation, "repetitions must be at least 1");
    cfg.validate(data.cols())?;
    parallel::try_map_indexed(cfg.jobs, repetitions, |r| {
        let run = KMeansConfig {
            seed: derive_seed(cfg.seed, r as u64),
            jobs: 1,
            ..cfg.clone()
        };
        kmeans_fit(data, &run)
    })
}
