//! Artifact writers. CSV uses `.` decimals, `inf` for infinite values and LF
//! line endings; floats print in their shortest round-trip form.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Output directory plus the list of files written to it.
pub struct Artifacts {
    dir: PathBuf,
    pub records: Vec<ArtifactRecord>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Artifacts, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
        self.records.retain(|r| r.file != name);
        self.records.push(ArtifactRecord {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Writes a CSV file; an empty `header` writes no header line.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let path = self.dir.join(name);
        if !header.is_empty() {
            w.write_record(header).map_err(|e| io_err(&path, e))?;
        }
        for row in rows {
            w.write_record(&row).map_err(|e| io_err(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| io_err(&path, e))?;
        self.write(name, bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| io_err(&self.dir.join(name), e))?;
        bytes.push(b'\n');
        self.write(name, bytes)
    }
}

/// Reads a matrix written in the `cost_matrix.csv` format.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    CliError::Validation(format!("{}: line {}: bad number '{s}'", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(-2.5e-12), "-0.0000000000025");
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::create(dir.path()).unwrap();
        let rows = vec![vec![0.5, f64::INFINITY], vec![1.0 / 3.0, 2.0]];
        a.csv("m.csv", &[], rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()))
            .unwrap();
        let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(read_matrix_csv(&dir.path().join("m.csv")).unwrap(), rows);
    }
}
