//! Corpus manifests: CSV rows of `path,label[,tag]`.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::exit::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            other => Err(format!("label {other:?} is neither real nor fake")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "real",
            Label::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// Path as written in the manifest.
    pub path: String,
    pub label: Label,
    pub tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    /// Directory that relative entry paths are resolved against.
    pub base: PathBuf,
    pub entries: Vec<Entry>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read manifest {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// A first row whose label column reads `label` is taken as a header.
    pub fn parse(text: &str, base: PathBuf) -> Result<Self, CliError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| CliError::invalid(format!("manifest row {}: {e}", i + 1)))?;
            if record.iter().all(str::is_empty) {
                continue;
            }
            if i == 0 && record.get(1).is_some_and(|l| l.eq_ignore_ascii_case("label")) {
                continue;
            }
            if !(2..=3).contains(&record.len()) {
                return Err(CliError::invalid(format!(
                    "manifest row {}: expected path,label[,tag]",
                    i + 1
                )));
            }
            let path = record[0].to_string();
            if path.is_empty() {
                return Err(CliError::invalid(format!("manifest row {}: empty path", i + 1)));
            }
            let label = record[1]
                .parse()
                .map_err(|e| CliError::invalid(format!("manifest row {}: {e}", i + 1)))?;
            if !seen.insert(path.clone()) {
                return Err(CliError::invalid(format!("manifest lists {path} twice")));
            }
            let tag = record.get(2).filter(|t| !t.is_empty()).map(str::to_string);
            entries.push(Entry { path, label, tag });
        }
        if entries.is_empty() {
            return Err(CliError::invalid("manifest has no entries"));
        }
        Ok(Self { base, entries })
    }

    pub fn resolve(&self, entry: &Entry) -> PathBuf {
        self.base.join(&entry.path)
    }

    pub fn write(path: &Path, entries: &[Entry]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        let io = |e: csv::Error| CliError::io(format!("cannot write {}: {e}", path.display()));
        w.write_record(["path", "label", "tag"]).map_err(io)?;
        for e in entries {
            w.write_record([e.path.as_str(), &e.label.to_string(), e.tag.as_deref().unwrap_or("")])
                .map_err(io)?;
        }
        w.flush()
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
    }
}
