use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::geometry::{format_float, read_curve_csv, RawCurve};

use super::CliError;

pub const MANIFEST_SCHEMA: u32 = 1;

const CIRCLE_CSV: &str = include_str!("../../seeds/circle.csv");
const ELLIPSE_CSV: &str = include_str!("../../seeds/ellipse.csv");

/// Bundled seed curves by name.
pub fn bundled_seed(name: &str) -> Option<&'static str> {
    match name {
        "circle" => Some(CIRCLE_CSV),
        "ellipse" => Some(ELLIPSE_CSV),
        _ => None,
    }
}

pub fn load_curve(path: &Path, closed: bool) -> Result<RawCurve, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("--input {}: {e}", path.display())))?;
    read_curve_csv(&text, closed).map_err(|e| CliError::Usage(format!("--input {}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// An output directory owned by one run. Every file written through it is
/// listed in the manifest with its digest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
            bytes: contents.len(),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn finish(self, manifest: &RunManifest) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub command: Vec<String>,
    pub config: Value,
    pub results: Value,
    pub files: Vec<FileEntry>,
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<String>,
    /// Seconds; the only field that varies between identical runs.
    pub wall_clock: f64,
}

/// Rows of `x` and scalar columns in the fixed float format.
pub fn columns_csv(header: &[&str], xs: &[f64], cols: &[&[f64]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for (m, x) in xs.iter().enumerate() {
        out.push_str(&format_float(*x));
        for c in cols {
            let _ = write!(out, ",{}", format_float(c[m]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_and_listing() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.txt", "abc").unwrap();
        assert_eq!(out.files()[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(fs::read_to_string(dir.path().join("a.txt")).unwrap(), "abc");
    }

    #[test]
    fn csv_columns() {
        let s = columns_csv(&["x", "q"], &[0.0, 0.5], &[&[1.0, -2.0]]);
        assert_eq!(s, "x,q\n0.0000000000000000e0,1.0000000000000000e0\n5.0000000000000000e-1,-2.0000000000000000e0\n");
    }

    #[test]
    fn seeds_parse() {
        for name in ["circle", "ellipse"] {
            let raw = read_curve_csv(bundled_seed(name).unwrap(), true).unwrap();
            assert_eq!(raw.points.len(), 256);
        }
        assert!(bundled_seed("square").is_none());
    }
}
