use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, NetworkSpec};
use crate::error::{Error, Result};
use crate::flowfield::BlockGrid;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(out: &Path, rel: &Path) -> Result<Self> {
        Ok(FileEntry {
            sha256: hash_file(&out.join(rel))?,
            path: rel.to_path_buf(),
        })
    }

    /// Fails if the file on disk no longer matches the recorded digest.
    pub fn verify(&self, out: &Path) -> Result<()> {
        let actual = hash_file(&out.join(&self.path))?;
        if actual != self.sha256 {
            return Err(Error::Provenance(format!(
                "{} changed since it was recorded",
                self.path.display()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    /// Digest of the settings that produced the corpus.
    pub config: String,
    pub grid: BlockGrid,
    pub train: FileEntry,
    pub validation: FileEntry,
    pub test: FileEntry,
    /// Digest over `config` and the three file digests.
    pub hash: String,
}

impl CorpusEntry {
    pub fn chain(config: &str, files: [&FileEntry; 3]) -> String {
        let mut s = config.to_string();
        for f in files {
            s.push(':');
            s.push_str(&f.sha256);
        }
        sha256_hex(s.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEntry {
    pub spec: NetworkSpec,
    pub bundle: FileEntry,
    pub log: Option<FileEntry>,
    /// Corpus hash the network was built from.
    pub parent: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub file: FileEntry,
    /// Digest of the bundle the report was computed from.
    pub parent: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rng_seed: u64,
    pub corpus: Option<CorpusEntry>,
    /// Keyed by network slug.
    pub networks: BTreeMap<String, NetworkEntry>,
    /// Keyed by report path.
    pub reports: BTreeMap<String, ReportEntry>,
    pub ui: Option<ReportEntry>,
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Self> {
        let path = out.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load_or_default(out: &Path) -> Result<Self> {
        if out.join(MANIFEST_FILE).exists() {
            Self::load(out)
        } else {
            Ok(Manifest::default())
        }
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::file(&path, e))
    }

    pub fn corpus(&self) -> Result<&CorpusEntry> {
        self.corpus.as_ref().ok_or_else(|| {
            Error::Provenance("no corpus recorded; run the trace stage first".into())
        })
    }

    /// Slug of the network built from `spec`, if any.
    pub fn find(&self, spec: &NetworkSpec) -> Option<&str> {
        self.networks
            .iter()
            .find(|(_, e)| e.spec == *spec)
            .map(|(k, _)| k.as_str())
    }
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(sha256_hex(&bytes))
}
