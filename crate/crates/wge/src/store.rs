//! On-disk storage with atomic replacement.
//!
//! Demonstrations live at `<root>/<task>/<uuid>.json`. Oracle demonstrations
//! get name-based ids derived from their bytes, so regenerating a demo set is
//! idempotent; recorded demonstrations get random ids.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use uuid::Uuid;
use wge_core::demo::{Demonstration, SOURCE_ORACLE};

use crate::format::{demo_from_json, demo_to_json};
use crate::{Error, Result};

const DEMO_NAMESPACE: Uuid = Uuid::from_u128(0x6b0e_2f4c_93d1_4a57_8c2e_51f0_a7d3_9e64);

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never observe a partial document.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(Error::io(dir))?;
    tmp.write_all(bytes).map_err(Error::io(tmp.path()))?;
    tmp.as_file().sync_all().map_err(Error::io(tmp.path()))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.into(), source: e.error })?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::io(path))
}

/// Directory of demonstrations grouped by task.
#[derive(Debug, Clone)]
pub struct DemoStore {
    root: PathBuf,
}

impl DemoStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn task_dir(&self, task: &str) -> PathBuf {
        self.root.join(task)
    }

    /// Saves a demonstration and returns its path.
    pub fn save(&self, demo: &Demonstration) -> Result<PathBuf> {
        let json = demo_to_json(demo);
        let id = if demo.source == SOURCE_ORACLE { Uuid::new_v5(&DEMO_NAMESPACE, json.as_bytes()) } else { Uuid::new_v4() };
        let path = self.task_dir(&demo.task).join(format!("{id}.json"));
        atomic_write(&path, json.as_bytes())?;
        Ok(path)
    }

    /// All demonstrations of `task` in file-name order, each validated by
    /// replay. A missing task directory holds no demonstrations.
    pub fn load_task(&self, task: &str) -> Result<Vec<(PathBuf, Demonstration)>> {
        load_dir(&self.task_dir(task))
    }
}

/// Loads and validates every `*.json` demonstration directly inside `dir`,
/// sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, Demonstration)>> {
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::Io { path: dir.into(), source: e }),
    };
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(Error::io(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let demo = demo_from_json(&read_to_string(&p)?).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
            Ok((p, demo))
        })
        .collect()
}

/// Loads demonstrations for `task` from `dir`, which is either a task
/// directory or a store root containing one.
pub fn load_demos(dir: &Path, task: &str) -> Result<Vec<Demonstration>> {
    let nested = dir.join(task);
    let source = if nested.is_dir() { nested } else { dir.to_path_buf() };
    Ok(load_dir(&source)?.into_iter().map(|(_, d)| d).filter(|d| d.task == task).collect())
}
