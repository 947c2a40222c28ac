use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["path", "age", "gender", "split"];
pub const MAX_LABEL_AGE: i64 = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}' (expected train or test)")),
        }
    }
}

/// One manifest row. `path` is kept as written; relative paths are resolved
/// against the manifest's directory by [`resolve_entry_path`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub age: i64,
    pub gender: Option<String>,
    pub split: Split,
}

pub fn resolve_entry_path(manifest: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        manifest.parent().unwrap_or(Path::new("")).join(&entry.path)
    }
}

/// Parses `path,age,gender,split` rows in file order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let bad = |line: usize, msg: String| Error::Manifest { path: path.into(), line, msg };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => bad(1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(bad(1, format!("header must be '{}'", MANIFEST_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            bad(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let age: i64 = record[1].parse().map_err(|_| bad(line, format!("age '{}' is not an integer", &record[1])))?;
        if !(0..=MAX_LABEL_AGE).contains(&age) {
            return Err(bad(line, format!("age {age} outside [0, {MAX_LABEL_AGE}]")));
        }
        if record[0].is_empty() {
            return Err(bad(line, "empty path".into()));
        }
        let split = record[3].parse().map_err(|e| bad(line, e))?;
        let gender = (!record[2].is_empty()).then(|| record[2].to_string());
        out.push(ManifestEntry { path: PathBuf::from(&record[0]), age, gender, split });
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(MANIFEST_HEADER).map_err(io)?;
    for e in entries {
        let p = e.path.to_str().ok_or_else(|| Error::Validation(format!("non-UTF-8 path {:?}", e.path)))?;
        w.write_record([p, &e.age.to_string(), e.gender.as_deref().unwrap_or(""), &e.split.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,age,gender,split\n").unwrap();
        assert!(load_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn rejects_out_of_range_age_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,age,gender,split\na.png,30,,train\nb.png,150,f,test\n").unwrap();
        match load_manifest(&p) {
            Err(Error::Manifest { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("150"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let entries = vec![
            ManifestEntry { path: "x/1.png".into(), age: 1, gender: None, split: Split::Train },
            ManifestEntry { path: "y/2.png".into(), age: 99, gender: Some("m".into()), split: Split::Test },
        ];
        write_manifest(&p, &entries).unwrap();
        assert_eq!(load_manifest(&p).unwrap(), entries);
    }
}
