//! Result files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ostrovsky_core::io::{format_float, FieldRecord};
use ostrovsky_core::SpectralField;
use serde::Serialize;

use crate::config::{sha256_hex, ExperimentConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A threshold check recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    /// `value` is 1 for true.
    Holds,
}

impl Check {
    pub fn new(name: &str, value: f64, bound: Bound) -> Self {
        let pass = match bound {
            Bound::AtMost(b) => value <= b,
            Bound::AtLeast(b) => value >= b,
            Bound::Within(lo, hi) => (lo..=hi).contains(&value),
            Bound::Holds => value == 1.0,
        };
        Self {
            name: name.into(),
            value,
            bound,
            pass,
        }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Bound::Holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub wall_time_s: f64,
    pub results: Vec<ResultFile>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Writes result files into one directory, stamping each with the config hash.
pub struct OutputDir {
    root: PathBuf,
    hash: String,
    files: Vec<ResultFile>,
}

impl OutputDir {
    pub fn create(root: &Path, config_echo: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let mut out = Self {
            root: root.to_path_buf(),
            hash: sha256_hex(config_echo.as_bytes()),
            files: Vec::new(),
        };
        out.write_bytes("config.json", config_echo.as_bytes())?;
        Ok(out)
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(ResultFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// CSV with a leading `# config_sha256=` comment line.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
        let mut buf = format!("# config_sha256={}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    /// `{"config_sha256": …, "data": value}`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            config_sha256: &'a str,
            data: &'a T,
        }
        let text = serde_json::to_string_pretty(&Stamped {
            config_sha256: &self.hash,
            data: value,
        })? + "\n";
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_field(&mut self, name: &str, f: &SpectralField) -> Result<()> {
        self.write_json(name, &FieldRecord::from_field(f))
    }

    /// Write `manifest.json` last, through a temporary file and a rename.
    pub fn finish(
        self,
        command: &str,
        config: ExperimentConfig,
        wall_time_s: f64,
        checks: Vec<Check>,
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            artifact_version: ARTIFACT_VERSION,
            command: command.into(),
            config_sha256: self.hash,
            config,
            wall_time_s,
            results: self.files,
            pass: checks.iter().all(|c| c.pass),
            checks,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        write_atomic(&self.root.join("manifest.json"), text.as_bytes())?;
        Ok(manifest)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// One CSV cell; floats print with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format_float(*x),
            Cell::I(i) => i.to_string(),
            Cell::U(u) => u.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(u: usize) -> Self {
        Cell::U(u as u64)
    }
}

impl From<u64> for Cell {
    fn from(u: u64) -> Self {
        Cell::U(u)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.into())
    }
}

impl From<Option<u32>> for Cell {
    fn from(v: Option<u32>) -> Self {
        v.map_or(Cell::S(String::new()), |k| Cell::I(k.into()))
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::S(String::new()), Cell::F)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks() {
        assert!(Check::new("a", 1.0, Bound::AtMost(1.0)).pass);
        assert!(!Check::new("a", f64::NAN, Bound::AtMost(1.0)).pass);
        assert!(!Check::new("a", f64::NAN, Bound::AtLeast(1.0)).pass);
        assert!(Check::new("a", 0.5, Bound::Within(0.3, 0.65)).pass);
        assert!(!Check::new("a", 0.7, Bound::Within(0.3, 0.65)).pass);
        assert!(Check::holds("a", true).pass && !Check::holds("a", false).pass);
    }

    #[test]
    fn csv_carries_hash_and_full_precision() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "{}\n").unwrap();
        out.write_csv("t.csv", &["x", "n"], &[vec![0.1.into(), 3usize.into()]])
            .unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            format!("# config_sha256={}", out.hash())
        );
        assert_eq!(lines.next().unwrap(), "x,n");
        let row = lines.next().unwrap();
        let x: f64 = row.split(',').next().unwrap().parse().unwrap();
        assert_eq!(x, 0.1);
        let m = out
            .finish("test", ExperimentConfig::default(), 0.0, vec![])
            .unwrap();
        assert!(m.pass);
        assert_eq!(m.results.len(), 2);
        assert!(dir.path().join("manifest.json").exists());
        assert!(!dir.path().join("manifest.tmp").exists());
    }
}
