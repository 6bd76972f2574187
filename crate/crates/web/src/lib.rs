//! Browser bindings: JL target dimensions, k-means ensembles with consensus
//! on 2-D point clouds, and hierarchical clustering of the same points.

use wasm_bindgen::prelude::*;

use snapcluster::consensus;
use snapcluster::hierarchical::{hcluster, DistanceMatrix, Linkage};
use snapcluster::kmeans::{kmeans_ensemble, KMeansConfig};
use snapcluster::projection::jl_dimension;
use snapcluster::rng::{hash3, unit_f64};
use snapcluster::DenseColumns;

fn js_err(e: snapcluster::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Minimum target dimension for each N in `ns`.
#[wasm_bindgen]
pub fn jl_curve(eps: f64, ns: &[u32]) -> Result<Vec<u32>, JsError> {
    ns.iter()
        .map(|&n| jl_dimension(eps, n as usize).map(|p| p.d_min as u32).map_err(js_err))
        .collect()
}

/// `groups` Gaussian-ish clouds on a circle, `per_group` points each,
/// returned as interleaved x,y.
#[wasm_bindgen]
pub fn make_blobs(groups: u32, per_group: u32, spread: f64, seed: u64) -> Vec<f64> {
    let mut xy = Vec::with_capacity((groups * per_group * 2) as usize);
    for g in 0..groups {
        let a = std::f64::consts::TAU * g as f64 / groups as f64;
        let (cx, cy) = (a.cos(), a.sin());
        for k in 0..per_group {
            let id = (g * per_group + k) as u64;
            // Sum of three uniforms, roughly bell shaped.
            let noise = |axis: u64| -> f64 {
                (0..3).map(|t| unit_f64(hash3(seed, id, axis * 3 + t)) - 0.5).sum::<f64>() * spread
            };
            xy.push(cx + noise(0));
            xy.push(cy + noise(1));
        }
    }
    xy
}

fn columns(xy: &[f64]) -> Result<DenseColumns, JsError> {
    if xy.len() % 2 != 0 {
        return Err(JsError::new("points must be interleaved x,y pairs"));
    }
    DenseColumns::from_col_major(2, xy.len() / 2, xy.to_vec()).map_err(js_err)
}

#[wasm_bindgen]
pub struct ConsensusView {
    labels: Vec<u32>,
    histogram: Vec<f64>,
    stable: bool,
    extracted: u32,
}

#[wasm_bindgen]
impl ConsensusView {
    /// Labels from the extracted (threshold 1.0) consensus clusters.
    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u32> {
        self.labels.clone()
    }

    /// Percentages at 0.0, 0.1, ..., 1.0.
    #[wasm_bindgen(getter)]
    pub fn histogram(&self) -> Vec<f64> {
        self.histogram.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn stable(&self) -> bool {
        self.stable
    }

    #[wasm_bindgen(getter)]
    pub fn extracted(&self) -> u32 {
        self.extracted
    }
}

#[wasm_bindgen]
pub fn kmeans_consensus(xy: &[f64], nc: u32, reps: u32, seed: u64, plus_plus: bool) -> Result<ConsensusView, JsError> {
    let data = columns(xy)?;
    let cfg = KMeansConfig {
        plus_plus,
        jobs: 1,
        ..KMeansConfig::new(nc as usize, seed)
    };
    let runs = kmeans_ensemble(&data, &cfg, reps as usize).map_err(js_err)?;
    let assignments: Vec<_> = runs.into_iter().map(|r| r.assignment).collect();
    let c = consensus::build_consensus(&assignments).map_err(js_err)?;
    let h = consensus::histogram(&c);
    let extracted = consensus::extract_clusters(&c, 1.0).map_err(js_err)?;
    Ok(ConsensusView {
        labels: extracted.labels.iter().map(|&l| l as u32).collect(),
        histogram: h.pct.to_vec(),
        stable: h.is_stable(consensus::STABLE_EXTREME_PCT),
        extracted: extracted.n_clusters as u32,
    })
}

/// Cut the dendrogram for `linkage` (single, complete, average, ward) at `nc` clusters.
#[wasm_bindgen]
pub fn hierarchical(xy: &[f64], linkage: &str, nc: u32) -> Result<Vec<u32>, JsError> {
    let data = columns(xy)?;
    let linkage: Linkage = linkage.parse().map_err(js_err)?;
    let d = DistanceMatrix::from_columns(&data).map_err(js_err)?;
    let (a, _) = hcluster(&d, linkage, nc as usize).map_err(js_err)?;
    Ok(a.labels.iter().map(|&l| l as u32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_recovered_by_both_routes() {
        let xy = make_blobs(3, 30, 0.3, 4);
        let view = kmeans_consensus(&xy, 3, 10, 1, true).unwrap_or_else(|_| panic!("kmeans"));
        assert!(view.stable);
        assert_eq!(view.extracted, 3);
        let ward = hierarchical(&xy, "ward", 3).unwrap_or_else(|_| panic!("ward"));
        for g in 0..3 {
            let first = ward[g * 30];
            assert!(ward[g * 30..(g + 1) * 30].iter().all(|&l| l == first));
            assert!(view.labels[g * 30..(g + 1) * 30].iter().all(|&l| l == view.labels[g * 30]));
        }
    }

    #[test]
    fn jl_curve_grows_with_n() {
        let d = jl_curve(0.1, &[10, 100, 1604]).unwrap_or_else(|_| panic!("jl"));
        assert!(d.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d[2], 6326);
    }
}
