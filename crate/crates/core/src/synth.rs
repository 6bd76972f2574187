//! Synthetic campaigns: per-simulation, per-time-step subdomain files whose
//! fields are closed-form functions with a known sequence of temporal phases.
//!
//! In coordinates aligned to the domain's right edge (`X = x - x_right`), the
//! field of simulation `s` at step `t` is
//!
//! ```text
//! f = band_p(y) + 0.2 * sigmoid((X - front(t)) / front_width) + plate(X, y) + noise
//! ```
//!
//! where `p = floor(regime_count * t / n_steps)` is the phase, `band_p` is a
//! Gaussian band whose centre depends only on `p`, the front starts at the
//! left edge and moves right at the tip velocity, and `plate` is a fixed
//! feature next to the right edge. Variable `v` is the field scaled by
//! `1 + v/2`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_range, FlatConfig};
use crate::error::{ensure, Error, Result};
use crate::index::{sim_table_to_csv, OutcomeLabel, SimMetadata};
use crate::ingest::{step_dir_name, write_subdomain_file, SubdomainFile};
use crate::parallel;
use crate::points::PointTable;
use crate::rng::{derive_seed, hash3, unit_f64};

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub n_sims: usize,
    pub he_length: (f64, f64),
    pub tip_velocity: (f64, f64),
    pub jet_radius: (f64, f64),
    /// Length of the domain in x, drawn per simulation.
    pub x_length: (f64, f64),
    pub y_extent: f64,
    pub delta: f64,
    pub n_subdomains: usize,
    pub regime_count: usize,
    /// Added to `floor(he_length / tip_velocity)` to give the step count.
    pub step_constant: u32,
    pub n_vars: usize,
    /// Time between steps, scaling how far the front moves.
    pub dt: f64,
    pub front_width: f64,
    pub noise: f64,
    pub binary: bool,
    pub seed: u64,
    /// Replace the field (and noise) with this constant everywhere.
    pub constant: Option<f64>,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            n_sims: 8,
            he_length: (2.0, 4.0),
            tip_velocity: (0.8, 1.0),
            jet_radius: (0.1, 0.3),
            x_length: (5.1, 5.5),
            y_extent: 4.0,
            delta: 0.02,
            n_subdomains: 2,
            regime_count: 3,
            step_constant: 24,
            n_vars: 1,
            dt: 0.2,
            front_width: 0.1,
            noise: 0.01,
            binary: true,
            seed: 1,
            constant: None,
        }
    }
}

const KEYS: [&str; 17] = [
    "constant",
    "n_sims",
    "he_length",
    "tip_velocity",
    "jet_radius",
    "x_length",
    "y_extent",
    "delta",
    "n_subdomains",
    "regime_count",
    "step_constant",
    "n_vars",
    "dt",
    "front_width",
    "noise",
    "binary",
    "seed",
];

fn range_ok(name: &str, r: (f64, f64)) -> Result<()> {
    ensure!(
        r.0.is_finite() && r.1.is_finite() && r.0 > 0.0 && r.0 <= r.1,
        Validation,
        "{name} range must satisfy 0 < lo <= hi, got {},{}",
        r.0,
        r.1
    );
    Ok(())
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_sims >= 1, Validation, "n_sims must be at least 1");
        range_ok("he_length", self.he_length)?;
        range_ok("tip_velocity", self.tip_velocity)?;
        range_ok("jet_radius", self.jet_radius)?;
        range_ok("x_length", self.x_length)?;
        ensure!(self.delta > 0.0 && self.delta.is_finite(), Validation, "delta must be positive");
        ensure!(self.y_extent > self.delta, Validation, "y_extent must exceed delta");
        ensure!(self.x_length.0 > self.delta, Validation, "x_length must exceed delta");
        ensure!(self.n_subdomains >= 1, Validation, "n_subdomains must be at least 1");
        ensure!(
            self.n_subdomains <= (self.x_length.0 / self.delta) as usize,
            Validation,
            "more subdomains than grid columns"
        );
        ensure!(self.regime_count >= 2, Validation, "regime_count must be at least 2");
        ensure!(self.n_vars >= 1, Validation, "n_vars must be at least 1");
        ensure!(self.dt > 0.0 && self.front_width > 0.0, Validation, "dt and front_width must be positive");
        ensure!(self.noise >= 0.0, Validation, "noise must be non-negative");
        Ok(())
    }

    pub fn from_config(c: &FlatConfig) -> Result<Self> {
        c.check_known(&KEYS)?;
        let d = Self::default();
        let range = |k: &str, def: (f64, f64)| c.get(k).map(parse_range).unwrap_or(Ok(def));
        let s = Self {
            n_sims: c.or("n_sims", d.n_sims)?,
            he_length: range("he_length", d.he_length)?,
            tip_velocity: range("tip_velocity", d.tip_velocity)?,
            jet_radius: range("jet_radius", d.jet_radius)?,
            x_length: range("x_length", d.x_length)?,
            y_extent: c.or("y_extent", d.y_extent)?,
            delta: c.or("delta", d.delta)?,
            n_subdomains: c.or("n_subdomains", d.n_subdomains)?,
            regime_count: c.or("regime_count", d.regime_count)?,
            step_constant: c.or("step_constant", d.step_constant)?,
            n_vars: c.or("n_vars", d.n_vars)?,
            dt: c.or("dt", d.dt)?,
            front_width: c.or("front_width", d.front_width)?,
            noise: c.or("noise", d.noise)?,
            binary: c.or("binary", d.binary)?,
            seed: c.or("seed", d.seed)?,
            constant: c.parse_value("constant")?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn to_config(&self) -> FlatConfig {
        let mut c = FlatConfig::default();
        let r = |v: (f64, f64)| format!("{},{}", v.0, v.1);
        c.set("n_sims", self.n_sims);
        c.set("he_length", r(self.he_length));
        c.set("tip_velocity", r(self.tip_velocity));
        c.set("jet_radius", r(self.jet_radius));
        c.set("x_length", r(self.x_length));
        c.set("y_extent", self.y_extent);
        c.set("delta", self.delta);
        c.set("n_subdomains", self.n_subdomains);
        c.set("regime_count", self.regime_count);
        c.set("step_constant", self.step_constant);
        c.set("n_vars", self.n_vars);
        c.set("dt", self.dt);
        c.set("front_width", self.front_width);
        c.set("noise", self.noise);
        c.set("binary", self.binary);
        c.set("seed", self.seed);
        if let Some(v) = self.constant {
            c.set("constant", v);
        }
        c
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_config(&FlatConfig::read(path)?)
    }

    /// Parameters of simulation `index`, drawn from `derive_seed(seed, index)`.
    pub fn sim(&self, index: usize) -> SimParams {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, index as u64));
        let mut draw = |r: (f64, f64)| if r.0 == r.1 { r.0 } else { rng.gen_range(r.0..r.1) };
        let he_length = draw(self.he_length);
        let tip_velocity = draw(self.tip_velocity);
        let jet_radius = draw(self.jet_radius);
        let x_len = draw(self.x_length);
        let n_x = (x_len / self.delta).floor() as usize + 1;
        let n_y = ((self.y_extent / self.delta).floor() as usize).max(1);
        let n_steps = (he_length / tip_velocity).floor() as u32 + self.step_constant;
        SimParams {
            key: format!("sim{index:03}"),
            index,
            he_length,
            tip_velocity,
            jet_radius,
            n_x,
            n_y,
            n_steps,
            noise_seed: hash3(self.seed, 0x5171, index as u64),
        }
    }

    pub fn phase(&self, sim: &SimParams, step: u32) -> usize {
        (self.regime_count * step as usize / sim.n_steps as usize).min(self.regime_count - 1)
    }

    fn band(&self, phase: usize, y: f64) -> f64 {
        let centre = self.y_extent * (phase as f64 + 0.5) / self.regime_count as f64;
        let width = self.y_extent / (2.0 * self.regime_count as f64);
        (-((y - centre) / width).powi(2)).exp()
    }

    pub fn front(&self, sim: &SimParams, step: u32) -> f64 {
        -sim.x_right_nominal(self.delta) + sim.tip_velocity * self.dt * step as f64
    }

    /// Noise-free field value at aligned coordinates.
    pub fn field(&self, sim: &SimParams, step: u32, x_aligned: f64, y: f64, var: usize) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let front = 0.2 * sigmoid((x_aligned - self.front(sim, step)) / self.front_width);
        let plate = 0.5 * sigmoid((x_aligned + 0.5) / 0.05) * sigmoid((1.0 - y) / 0.05);
        (1.0 + 0.5 * var as f64) * (self.band(self.phase(sim, step), y) + front + plate)
    }

    /// Upper bound on the Euclidean Lipschitz constant of [`Self::field`].
    pub fn lipschitz_bound(&self) -> f64 {
        let width = self.y_extent / (2.0 * self.regime_count as f64);
        let band = (2.0f64).sqrt() * (-0.5f64).exp() / width;
        let front = 0.2 / (4.0 * self.front_width);
        let plate = 2.0 * 0.5 / (4.0 * 0.05);
        (1.0 + 0.5 * (self.n_vars - 1) as f64) * (band + front + plate)
    }

    /// Maximum absolute noise of any variable.
    pub fn noise_bound(&self) -> f64 {
        (1.0 + 0.5 * (self.n_vars - 1) as f64) * self.noise
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub key: String,
    pub index: usize,
    pub he_length: f64,
    pub tip_velocity: f64,
    pub jet_radius: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub n_steps: u32,
    noise_seed: u64,
}

impl SimParams {
    fn x_right_nominal(&self, delta: f64) -> f64 {
        (self.n_x - 1) as f64 * delta
    }

    pub fn metadata(&self) -> SimMetadata {
        SimMetadata {
            he_length: self.he_length,
            tip_velocity: self.tip_velocity,
            jet_radius: self.jet_radius,
            label: OutcomeLabel::Unknown,
        }
    }

    /// Raw coordinates of lattice point (i, j), with a fixed jitter of at most
    /// `1e-4 * delta` in x. Rows sit at `y = (j + 1/2) delta`.
    pub fn coords(&self, delta: f64, i: usize, j: usize) -> (f64, f64) {
        let jitter = |salt: u64| (unit_f64(hash3(self.noise_seed, salt, (j * self.n_x + i) as u64)) - 0.5) * 2e-4 * delta;
        (i as f64 * delta + jitter(1), (j as f64 + 0.5) * delta)
    }

    fn noise(&self, amplitude: f64, step: u32, point: usize, var: usize) -> f64 {
        let h = hash3(self.noise_seed ^ ((step as u64) << 32), point as u64, var as u64);
        (unit_f64(h) - 0.5) * 2.0 * amplitude
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub sims: Vec<SimParams>,
    /// `(sim_key, time_step, phase)` in simulation then step order.
    pub phases: Vec<(String, u32, usize)>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sim_key,time_step,phase_label\n");
        for (k, t, p) in &self.phases {
            let _ = writeln!(s, "{k},{t},{p}");
        }
        s
    }

    pub fn metadata(&self) -> BTreeMap<String, SimMetadata> {
        self.sims.iter().map(|s| (s.key.clone(), s.metadata())).collect()
    }

    /// Phase labels in the order `(sim_key, time_step)` appear in `keys`.
    pub fn phases_for(&self, keys: &[(String, u32)]) -> Result<Vec<usize>> {
        let map: BTreeMap<(&str, u32), usize> = self.phases.iter().map(|(k, t, p)| ((k.as_str(), *t), *p)).collect();
        keys.iter()
            .map(|(k, t)| {
                map.get(&(k.as_str(), *t))
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("{k}/t{t} not in manifest")))
            })
            .collect()
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<(String, u32, usize)>> {
        let mut out = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            let bad = || Error::format(origin, None, format!("line {}: bad manifest row", ln + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            out.push((f[0].to_string(), f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?));
        }
        Ok(out)
    }
}

fn step_files(spec: &CampaignSpec, sim: &SimParams, step: u32) -> Vec<SubdomainFile> {
    let x_right = sim.x_right_nominal(spec.delta);
    let per = sim.n_x.div_ceil(spec.n_subdomains);
    (0..spec.n_subdomains)
        .map(|sd| {
            let (i0, i1) = (sd * per, ((sd + 1) * per).min(sim.n_x));
            let mut t = PointTable::with_capacity(spec.n_vars, (i1 - i0) * sim.n_y);
            let mut vars = vec![0.0; spec.n_vars];
            for j in 0..sim.n_y {
                for i in i0..i1 {
                    let (x, y) = sim.coords(spec.delta, i, j);
                    let point = j * sim.n_x + i;
                    for (v, out) in vars.iter_mut().enumerate() {
                        *out = spec.field(sim, step, x - x_right, y, v);
                        if spec.constant.is_none() {
                            *out += sim.noise(spec.noise, step, point, v);
                        }
                    }
                    t.push(x, y, &vars);
                }
            }
            SubdomainFile {
                sim_key: sim.key.clone(),
                time_step: step,
                subdomain_id: sd as u32,
                points: t,
            }
        })
        .collect()
}

/// Write `<out>/<sim_key>/t<step>/sub<id>.(csv|bin)` for every simulation and
/// step, plus `manifest.csv`, `simulations.csv` and `campaign.cfg` in `out`.
pub fn generate_campaign(spec: &CampaignSpec, out: &Path, jobs: usize) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let sims: Vec<SimParams> = (0..spec.n_sims).map(|i| spec.sim(i)).collect();
    let work: Vec<(usize, u32)> = sims.iter().enumerate().flat_map(|(s, p)| (0..p.n_steps).map(move |t| (s, t))).collect();
    parallel::try_map_indexed(jobs, work.len(), |w| {
        let (s, t) = work[w];
        let dir = out.join(&sims[s].key).join(step_dir_name(t));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for f in step_files(spec, &sims[s], t) {
            write_subdomain_file(&dir, &f, spec.binary)?;
        }
        Ok::<_, Error>(())
    })?;
    let phases = sims
        .iter()
        .flat_map(|p| (0..p.n_steps).map(move |t| (p.key.clone(), t, spec.phase(p, t))))
        .collect();
    let manifest = Manifest { sims, phases };
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("manifest.csv", manifest.to_csv())?;
    write("simulations.csv", sim_table_to_csv(&manifest.metadata()))?;
    write("campaign.cfg", spec.to_config().to_text())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignSpec {
        CampaignSpec {
            n_sims: 2,
            x_length: (1.0, 1.3),
            y_extent: 0.6,
            delta: 0.05,
            step_constant: 4,
            n_vars: 2,
            ..CampaignSpec::default()
        }
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let s = small();
        assert_eq!(CampaignSpec::from_config(&s.to_config()).unwrap(), s);
        let mut c = s.to_config();
        c.set("bogus", 1);
        assert!(CampaignSpec::from_config(&c).is_err());
    }

    #[test]
    fn step_count_rule_and_phases() {
        let s = small();
        let p = s.sim(0);
        assert_eq!(p.n_steps, (p.he_length / p.tip_velocity).floor() as u32 + 4);
        let phases: Vec<usize> = (0..p.n_steps).map(|t| s.phase(&p, t)).collect();
        assert_eq!(phases[0], 0);
        assert_eq!(*phases.last().unwrap(), 2);
        assert!(phases.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn jitter_is_bounded_and_rows_stay_ordered() {
        let s = small();
        let p = s.sim(1);
        for j in 0..p.n_y {
            for i in 0..p.n_x {
                let (x, _) = p.coords(s.delta, i, j);
                assert!((x - i as f64 * s.delta).abs() <= 1e-4 * s.delta);
            }
        }
        for f in step_files(&s, &p, 0) {
            assert!(f.points.is_natural_order());
        }
    }

    #[test]
    fn deterministic_files() {
        let s = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_campaign(&s, a.path(), 2).unwrap();
        let mb = generate_campaign(&s, b.path(), 1).unwrap();
        assert_eq!(ma, mb);
        let rel = Path::new("sim000").join("t0001").join("sub1.bin");
        assert_eq!(std::fs::read(a.path().join(&rel)).unwrap(), std::fs::read(b.path().join(&rel)).unwrap());
        let text = std::fs::read_to_string(a.path().join("manifest.csv")).unwrap();
        assert_eq!(Manifest::parse_csv(&text, Path::new("m")).unwrap(), ma.phases);
    }
}
