//! In-memory artifacts, CSV/JSON encoding and the hash manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Round-trippable float text with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

/// Parsed CSV: header and string rows.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((header, rows))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(outdir: &Path) -> CliResult<Self> {
        let path = outdir.join(MANIFEST);
        let text = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_slice(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    /// One line per missing or altered file; empty when everything verifies.
    pub fn verify(&self, outdir: &Path) -> Vec<String> {
        let mut diff = Vec::new();
        for f in &self.files {
            match fs::read(outdir.join(&f.path)) {
                Err(_) => diff.push(format!("missing: {}", f.path)),
                Ok(bytes) if sha256_hex(&bytes) != f.sha256 => diff.push(format!("hash mismatch: {}", f.path)),
                Ok(_) => {}
            }
        }
        diff
    }

    pub fn contains(&self, name: &str) -> bool {
        self.files.iter().any(|f| f.path == name)
    }
}

/// Files accumulated during a run and written together at the end.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
        let bytes = csv_bytes(header, rows)?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let bytes = json_bytes(value)?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            files: self
                .files
                .iter()
                .map(|(n, b)| ManifestEntry { path: n.clone(), sha256: sha256_hex(b), bytes: b.len() as u64 })
                .collect(),
        }
    }

    /// Writes every file and then `manifest.json` into `outdir`.
    pub fn write_all(&self, outdir: &Path) -> CliResult<Manifest> {
        fs::create_dir_all(outdir).map_err(|e| CliError::io(outdir, e))?;
        for (name, bytes) in &self.files {
            let path: PathBuf = outdir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        let manifest = self.manifest();
        let path = outdir.join(MANIFEST);
        fs::write(&path, json_bytes(&manifest)?).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 1.347, -2.5e-17, 6.02214076e23] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn manifest_detects_changes() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add_csv("a.csv", &["x".into()], &[vec!["1".into()]]).unwrap();
        a.add("b.txt", b"hello".to_vec());
        let m = a.write_all(dir.path()).unwrap();
        assert!(m.verify(dir.path()).is_empty());
        fs::write(dir.path().join("b.txt"), b"changed").unwrap();
        fs::remove_file(dir.path().join("a.csv")).unwrap();
        let diff = m.verify(dir.path());
        assert_eq!(diff, vec!["missing: a.csv".to_string(), "hash mismatch: b.txt".to_string()]);
    }
}
