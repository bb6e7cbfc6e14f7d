//! CSV and PGM writers. Every file starts with the run configuration as a
//! single `#`-prefixed JSON line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub struct OutputDir {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn new(dir: &Path, config_json: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutputDir { dir: dir.to_path_buf(), header: format!("# {config_json}"), written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut body = String::new();
        writeln!(body, "{}", self.header).unwrap();
        writeln!(body, "{}", columns.join(",")).unwrap();
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            writeln!(body, "{}", row.join(",")).unwrap();
        }
        self.write(name, &body)
    }

    /// Plain-text greymap, row 0 at the top.
    pub fn pgm(&mut self, name: &str, width: usize, pixels: &[u8]) -> Result<()> {
        let height = pixels.len() / width;
        let mut body = String::new();
        writeln!(body, "P2\n{}\n{width} {height}\n255", self.header).unwrap();
        for row in pixels.chunks(width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(body, "{}", line.join(" ")).unwrap();
        }
        self.write(name, &body)
    }

    pub fn written(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
