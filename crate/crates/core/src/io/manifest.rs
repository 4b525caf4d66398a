//! Dataset manifest: one `<split> <path>` pair per line. Blank lines and
//! lines starting with `#` are ignored. Relative paths resolve against the
//! manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::parse("manifest", format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (split, path) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse("manifest", format!("line {}: expected `<split> <path>`", i + 1)))?;
            let split: Split = split
                .parse()
                .map_err(|_| Error::parse("manifest", format!("line {}: unknown split {split:?}", i + 1)))?;
            let path = path.trim();
            if path.is_empty() {
                return Err(Error::parse("manifest", format!("line {}: empty path", i + 1)));
            }
            entries.push(ManifestEntry {
                split,
                path: PathBuf::from(path),
            });
        }
        Ok(Self { entries })
    }

    /// Read and resolve relative entries against the manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn paths(&self, split: Split) -> Vec<PathBuf> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.path.clone())
            .collect()
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# split path")?;
        for e in &self.entries {
            writeln!(f, "{} {}", e.split, e.path.display())?;
        }
        Ok(())
    }
}
