//! Snapshot index: global column <-> (simulation, time step) plus the
//! per-simulation input parameters.
//!
//! On disk it is a line-oriented text file with two sections:
//!
//! ```text
//! # snapshots
//! column,sim_key,time_step
//! 0,sim00,0
//! # simulations
//! sim_key,he_length,tip_velocity,jet_radius,label
//! sim00,5,0.95,0.125,break
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeLabel {
    Break,
    AlmostBreak,
    NoBreak,
    Unknown,
}

impl OutcomeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::Break => "break",
            OutcomeLabel::AlmostBreak => "almost_break",
            OutcomeLabel::NoBreak => "no_break",
            OutcomeLabel::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "break" => OutcomeLabel::Break,
            "almost_break" => OutcomeLabel::AlmostBreak,
            "no_break" => OutcomeLabel::NoBreak,
            "unknown" => OutcomeLabel::Unknown,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetadata {
    pub he_length: f64,
    pub tip_velocity: f64,
    pub jet_radius: f64,
    pub label: OutcomeLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub sim_key: String,
    pub time_step: u32,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotIndex {
    entries: Vec<IndexEntry>,
    metadata: BTreeMap<String, SimMetadata>,
}

pub(crate) fn check_key(key: &str) -> Result<()> {
    ensure!(
        !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)),
        Validation,
        "invalid simulation key {key:?} (use [A-Za-z0-9_.-])"
    );
    Ok(())
}

impl SnapshotIndex {
    pub fn new(entries: Vec<IndexEntry>, metadata: BTreeMap<String, SimMetadata>) -> Result<Self> {
        let idx = Self { entries, metadata };
        idx.validate()?;
        Ok(idx)
    }

    /// Index for simulations laid out one after another, `steps` snapshots each.
    pub fn sequential(sims: &[(String, u32, SimMetadata)]) -> Result<Self> {
        let mut entries = Vec::new();
        let mut metadata = BTreeMap::new();
        for (key, steps, meta) in sims {
            for t in 0..*steps {
                entries.push(IndexEntry {
                    sim_key: key.clone(),
                    time_step: t,
                    column: entries.len(),
                });
            }
            metadata.insert(key.clone(), meta.clone());
        }
        Self::new(entries, metadata)
    }

    fn validate(&self) -> Result<()> {
        let mut finished: BTreeMap<&str, ()> = BTreeMap::new();
        let mut prev: Option<&IndexEntry> = None;
        for (i, e) in self.entries.iter().enumerate() {
            check_key(&e.sim_key)?;
            ensure!(e.column == i, Validation, "entry {i} has column {} (columns must be 0..N-1 in order)", e.column);
            ensure!(
                self.metadata.contains_key(&e.sim_key),
                Validation,
                "simulation {} has no metadata",
                e.sim_key
            );
            match prev {
                Some(p) if p.sim_key == e.sim_key => ensure!(
                    e.time_step == p.time_step + 1,
                    Validation,
                    "simulation {}: time step {} follows {} (steps must be contiguous and increasing)",
                    e.sim_key,
                    e.time_step,
                    p.time_step
                ),
                _ => {
                    ensure!(
                        !finished.contains_key(e.sim_key.as_str()),
                        Validation,
                        "simulation {} appears in two separate column ranges",
                        e.sim_key
                    );
                    if let Some(p) = prev {
                        finished.insert(&p.sim_key, ());
                    }
                }
            }
            prev = Some(e);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn entry(&self, column: usize) -> Option<&IndexEntry> {
        self.entries.get(column)
    }

    pub fn metadata(&self) -> &BTreeMap<String, SimMetadata> {
        &self.metadata
    }

    pub fn sim(&self, key: &str) -> Option<&SimMetadata> {
        self.metadata.get(key)
    }

    /// Columns belonging to one simulation, in time order.
    pub fn columns_of(&self, key: &str) -> Vec<usize> {
        self.entries.iter().filter(|e| e.sim_key == key).map(|e| e.column).collect()
    }

    /// Simulation keys in column order.
    pub fn sim_keys(&self) -> Vec<&str> {
        let mut keys: Vec<&str> = Vec::new();
        for e in &self.entries {
            if keys.last() != Some(&e.sim_key.as_str()) {
                keys.push(&e.sim_key);
            }
        }
        keys
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# snapshots\ncolumn,sim_key,time_step\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{}", e.column, e.sim_key, e.time_step);
        }
        s.push_str("# simulations\nsim_key,he_length,tip_velocity,jet_radius,label\n");
        for (k, m) in &self.metadata {
            let _ = writeln!(
                s,
                "{k},{},{},{},{}",
                m.he_length,
                m.tip_velocity,
                m.jet_radius,
                m.label.as_str()
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Snapshots,
            Sims,
        }
        let mut section = Section::None;
        let mut entries = Vec::new();
        let mut metadata = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            let bad = |what: &str| Error::Validation(format!("index line {}: {what}: {line:?}", ln + 1));
            match line {
                "" => continue,
                "# snapshots" => {
                    section = Section::Snapshots;
                    continue;
                }
                "# simulations" => {
                    section = Section::Sims;
                    continue;
                }
                "column,sim_key,time_step" | "sim_key,he_length,tip_velocity,jet_radius,label" => continue,
                _ => {}
            }
            let f: Vec<&str> = line.split(',').collect();
            match section {
                Section::Snapshots => {
                    if f.len() != 3 {
                        return Err(bad("expected 3 fields"));
                    }
                    entries.push(IndexEntry {
                        column: f[0].parse().map_err(|_| bad("bad column"))?,
                        sim_key: f[1].to_string(),
                        time_step: f[2].parse().map_err(|_| bad("bad time step"))?,
                    });
                }
                Section::Sims => {
                    if f.len() != 5 {
                        return Err(bad("expected 5 fields"));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
                    metadata.insert(
                        f[0].to_string(),
                        SimMetadata {
                            he_length: num(f[1])?,
                            tip_velocity: num(f[2])?,
                            jet_radius: num(f[3])?,
                            label: OutcomeLabel::parse(f[4]).ok_or_else(|| bad("bad label"))?,
                        },
                    );
                }
                Section::None => return Err(bad("data before a section marker")),
            }
        }
        Self::new(entries, metadata)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SimMetadata {
        SimMetadata {
            he_length: 5.0,
            tip_velocity: 0.95,
            jet_radius: 0.125,
            label: OutcomeLabel::Break,
        }
    }

    #[test]
    fn text_round_trip() {
        let idx = SnapshotIndex::sequential(&[("a".into(), 3, meta()), ("b".into(), 2, meta())]).unwrap();
        let back = SnapshotIndex::parse(&idx.to_text()).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.columns_of("b"), vec![3, 4]);
        assert_eq!(back.sim_keys(), vec!["a", "b"]);
    }

    #[test]
    fn gaps_and_missing_metadata_rejected() {
        let e = |k: &str, t, c| IndexEntry {
            sim_key: k.into(),
            time_step: t,
            column: c,
        };
        let mut md = BTreeMap::new();
        md.insert("a".to_string(), meta());
        assert!(SnapshotIndex::new(vec![e("a", 0, 0), e("a", 1, 2)], md.clone()).is_err());
        assert!(SnapshotIndex::new(vec![e("a", 0, 0), e("a", 2, 1)], md.clone()).is_err());
        assert!(SnapshotIndex::new(vec![e("a", 0, 0), e("b", 0, 1)], md.clone()).is_err());
        assert!(SnapshotIndex::new(vec![e("a", 0, 0), e("a", 1, 1)], md).is_ok());
    }
}

/// Read a simulations table (`sim_key,he_length,tip_velocity,jet_radius,label`).
pub fn read_sim_table(path: &Path) -> Result<BTreeMap<String, SimMetadata>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let wrapped = format!("# snapshots\n# simulations\n{text}");
    let idx = SnapshotIndex::parse(&wrapped)?;
    for k in idx.metadata.keys() {
        check_key(k)?;
    }
    Ok(idx.metadata)
}

pub fn sim_table_to_csv(md: &BTreeMap<String, SimMetadata>) -> String {
    let idx = SnapshotIndex {
        entries: Vec::new(),
        metadata: md.clone(),
    };
    let text = idx.to_text();
    text.split_once("# simulations\n").map(|(_, t)| t.to_string()).unwrap_or_default()
}
