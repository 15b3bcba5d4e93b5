//! Report files. Every file starts with the configuration hash and the seed:
//! CSV files as a `#` comment line, JSON files under a `meta` key.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cone::DiscreteMeasure;
use crate::dynamics::Trajectory;
use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Metadata {
    pub fn new(config_sha256: impl Into<String>, seed: u64) -> Self {
        Self {
            config_sha256: config_sha256.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# config_sha256={} seed={} version={}\n",
            self.config_sha256, self.seed, self.version
        )
    }

    /// Reads the metadata back from a CSV comment line.
    pub fn parse_comment_line(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("# ")?;
        let mut hash = None;
        let mut seed = None;
        let mut version = None;
        for field in rest.split_whitespace() {
            let (k, v) = field.split_once('=')?;
            match k {
                "config_sha256" => hash = Some(v.to_string()),
                "seed" => seed = v.parse().ok(),
                "version" => version = Some(v.to_string()),
                _ => return None,
            }
        }
        Some(Self {
            config_sha256: hash?,
            seed: seed?,
            version: version?,
        })
    }
}

/// JSON document with metadata first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Document<T> {
    pub meta: Metadata,
    #[serde(flatten)]
    pub body: T,
}

/// Shortest round-trip decimal, switching to exponent form for tiny or huge values.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn coordinate_headers(dim: usize) -> impl Iterator<Item = String> {
    (1..=dim).map(|i| format!("x{i}"))
}

fn finish(w: csv::Writer<Vec<u8>>, meta: &Metadata) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?;
    let body = String::from_utf8(bytes).map_err(|e| domain(e.to_string()))?;
    Ok(meta.comment_line() + &body)
}

/// `mass,x1,…,xd`, one row per atom.
pub fn measure_csv(eta: &DiscreteMeasure, dim: usize, meta: &Metadata) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(std::iter::once("mass".to_string()).chain(coordinate_headers(dim)))?;
    for a in &eta.atoms {
        w.write_record(std::iter::once(fmt_num(a.s)).chain(a.x[..dim].iter().map(|&c| fmt_num(c))))?;
    }
    finish(w, meta)
}

/// `time,atom,mass,x1,…,xd`, one row per atom per snapshot.
pub fn trajectory_csv(traj: &Trajectory, dim: usize, meta: &Metadata) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let head = ["time", "atom", "mass"]
        .into_iter()
        .map(String::from)
        .chain(coordinate_headers(dim));
    w.write_record(head)?;
    for (t, snap) in traj.times.iter().zip(&traj.snapshots) {
        for (i, a) in snap.atoms.iter().enumerate() {
            let row = [fmt_num(*t), i.to_string(), fmt_num(a.s)]
                .into_iter()
                .chain(a.x[..dim].iter().map(|&c| fmt_num(c)));
            w.write_record(row)?;
        }
    }
    finish(w, meta)
}

/// Prefixes a CSV table with the metadata line.
pub fn with_comment(csv_text: &str, meta: &Metadata) -> String {
    meta.comment_line() + csv_text
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Metadata, body: &T) -> Result<()> {
    let doc = Document {
        meta: meta.clone(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_line_round_trips() {
        let m = Metadata::new("ab12", 42);
        let line = m.comment_line();
        assert_eq!(Metadata::parse_comment_line(line.trim_end()), Some(m));
        assert_eq!(Metadata::parse_comment_line("mass,x1,x2"), None);
    }

    #[test]
    fn measure_csv_layout() {
        let eta = DiscreteMeasure::empty(1e-3).with_atom(0.5, [0.25, 0.75, 0.0, 0.0]);
        let text = measure_csv(&eta, 2, &Metadata::new("00", 1)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_sha256=00 seed=1"));
        assert_eq!(lines[1], "mass,x1,x2");
        assert_eq!(lines[2], "0.5,0.25,0.75");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.5, 1e-7, 3.25e20, 0.0, -2.0, 1.0 / 3.0] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(1e-7), "1e-7");
    }
}
