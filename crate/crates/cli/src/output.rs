//! Output directory confinement, atomic writes and run manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use serde::Serialize;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug)]
pub struct OutputError(pub String);

/// Where a command's files go. Every file lands inside `root`.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), written: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Resolves a user-supplied relative path, refusing anything that could
    /// leave the output directory.
    pub fn resolve(&self, rel: &Path) -> Result<PathBuf, OutputError> {
        if rel.as_os_str().is_empty() {
            return Err(OutputError("empty output path".into()));
        }
        for comp in rel.components() {
            match comp {
                Component::Normal(_) | Component::CurDir => {}
                _ => {
                    return Err(OutputError(format!(
                        "output path {} must be relative and stay inside the output directory",
                        rel.display()
                    )))
                }
            }
        }
        Ok(self.root.join(rel))
    }

    pub fn write(&mut self, rel: &Path, contents: &str) -> Result<(), OutputError> {
        let target = self.resolve(rel)?;
        write_atomic(&target, contents)?;
        self.written.push(rel.display().to_string());
        Ok(())
    }
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(target: &Path, contents: &str) -> Result<(), OutputError> {
    let dir = target.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| OutputError(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| OutputError(format!("{}: {e}", dir.display())))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.flush())
        .map_err(|e| OutputError(format!("{}: {e}", target.display())))?;
    tmp.persist(target).map_err(|e| OutputError(format!("{}: {}", target.display(), e.error)))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<String>,
    pub output_dir: String,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub tolerance_overrides: BTreeMap<String, f64>,
    pub threads: Option<usize>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
