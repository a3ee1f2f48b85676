//! Deterministic CSV text and artifact writing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::failure::Failure;

/// Fixed 17-significant-digit rendering, so reruns are byte-identical.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// CSV body built in memory; cells never contain commas or quotes.
#[derive(Debug, Clone)]
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Files of one run, relative to the output directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(PathBuf, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<PathBuf>, csv: Csv) {
        self.files.push((name.into(), csv.into_string()));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        for (rel, body) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| Failure::Io(format!("cannot create {}: {e}", parent.display())))?;
            }
            std::fs::write(&path, body).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}
