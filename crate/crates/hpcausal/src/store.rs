//! JSON helpers, staged output directories and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_MANIFEST: &str = "run.json";

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("config types serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)).map_err(Error::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hash of a config section chained onto the hash of the stage it reads from.
pub fn stage_hash<T: Serialize>(upstream: Option<&str>, section: &T) -> String {
    let mut h = Sha256::new();
    if let Some(u) = upstream {
        h.update(u.as_bytes());
        h.update(b"\n");
    }
    h.update(serde_json::to_vec(section).expect("config types serialize"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Written next to every stage's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upstream_hash: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    /// sha256 of every output file, by path relative to the stage directory.
    pub files: BTreeMap<String, String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(Error::io(dir))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p
                .strip_prefix(root)
                .expect("inside root")
                .to_string_lossy()
                .replace('\\', "/");
            let bytes = fs::read(&p).map_err(Error::io(&p))?;
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(())
}

/// A stage directory being written. Outputs go to a hidden sibling and are
/// moved into place by [`Staged::commit`]; dropping without committing
/// leaves nothing behind.
pub struct Staged {
    tmp: PathBuf,
    dest: PathBuf,
    done: bool,
}

impl Staged {
    pub fn begin(dest: &Path, force: bool) -> Result<Self> {
        if dest.exists() && !force {
            return Err(Error::Exists(dest.into()));
        }
        let parent = dest
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
        let name = dest
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let tmp = parent.join(format!(".{name}.partial"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(Error::io(&tmp))?;
        }
        fs::create_dir_all(&tmp).map_err(Error::io(&tmp))?;
        Ok(Self {
            tmp,
            dest: dest.into(),
            done: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.tmp
    }

    pub fn join(&self, rel: &str) -> PathBuf {
        self.tmp.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.tmp.join(rel);
        fs::create_dir_all(&p).map_err(Error::io(&p))?;
        Ok(p)
    }

    /// Hashes the outputs, writes the run manifest and moves the directory into place.
    pub fn commit(mut self, mut run: RunManifest) -> Result<RunManifest> {
        run.files.clear();
        collect_files(&self.tmp, &self.tmp, &mut run.files)?;
        write_json(&self.tmp.join(RUN_MANIFEST), &run)?;
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).map_err(Error::io(&self.dest))?;
        }
        fs::rename(&self.tmp, &self.dest).map_err(Error::io(&self.dest))?;
        self.done = true;
        Ok(run)
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

/// Reads an upstream stage's run manifest, checking it was produced from
/// the current configuration.
pub fn require_stage(
    dir: &Path,
    artifact: &'static str,
    command: &'static str,
    expected_hash: &str,
) -> Result<RunManifest> {
    let path = dir.join(RUN_MANIFEST);
    if !path.exists() {
        return Err(Error::Missing {
            artifact,
            path: dir.into(),
            command,
        });
    }
    let run: RunManifest = read_json(&path)?;
    if run.config_hash != expected_hash {
        return Err(Error::Stale {
            artifact,
            path: dir.into(),
            expected: expected_hash.into(),
            found: run.config_hash,
            command,
        });
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(stage: &str) -> RunManifest {
        RunManifest {
            stage: stage.into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: "abc".into(),
            upstream_hash: None,
            seeds: BTreeMap::new(),
            config: serde_json::Value::Null,
            files: BTreeMap::new(),
            warnings: vec![],
        }
    }

    #[test]
    fn staged_commit_and_abort() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("zoo");
        {
            let s = Staged::begin(&dest, false).unwrap();
            fs::write(s.join("a.txt"), "x").unwrap();
        }
        assert!(!dest.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        let s = Staged::begin(&dest, false).unwrap();
        fs::write(s.join("a.txt"), "x").unwrap();
        let r = s.commit(run("zoo")).unwrap();
        assert_eq!(r.files["a.txt"], sha256_hex(b"x"));
        assert!(matches!(Staged::begin(&dest, false), Err(Error::Exists(_))));
        assert!(Staged::begin(&dest, true).is_ok());
    }

    #[test]
    fn missing_and_stale_stage() {
        let dir = tempfile::tempdir().unwrap();
        let zoo = dir.path().join("zoo");
        let err = require_stage(&zoo, "zoo", "zoo-build", "abc").unwrap_err();
        assert!(err.to_string().contains("hpcausal zoo-build"), "{err}");
        Staged::begin(&zoo, false)
            .unwrap()
            .commit(run("zoo"))
            .unwrap();
        assert!(require_stage(&zoo, "zoo", "zoo-build", "abc").is_ok());
        let err = require_stage(&zoo, "zoo", "zoo-build", "def").unwrap_err();
        assert!(matches!(err, Error::Stale { .. }));
    }

    #[test]
    fn chained_hash_depends_on_upstream() {
        assert_ne!(stage_hash(Some("a"), &1u32), stage_hash(Some("b"), &1u32));
        assert_eq!(stage_hash(None, &[1, 2]), stage_hash(None, &[1, 2]));
    }
}
