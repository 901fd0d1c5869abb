//! Headerless numeric CSV input/output and serde helpers for ndarray types.
//!
//! Files are plain rectangular numeric tables: one row per line, fields
//! comma-separated, no header. Floats are written in shortest
//! round-trip form (Rust's default `Display` for `f64`), so a write /
//! read cycle reproduces values bit for bit.

use ndarray::{Array1, Array2};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: could not parse field {field} as a number: {text:?}")]
    Parse { path: String, line: usize, field: usize, text: String },
    #[error("{path}:{line}: row has {got} fields, expected {expected}")]
    Ragged { path: String, line: usize, expected: usize, got: usize },
    #[error("{path}: file contains no rows")]
    Empty { path: String },
    #[error("JSON: {0}")]
    Json(String),
}

impl IoError {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        IoError::Json(e.to_string())
    }
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::File { path: String::new(), source: e }
    }
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File { path: path.display().to_string(), source }
}

/// Reads a rectangular headerless numeric CSV into a matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let name = path.display().to_string();
    let mut rows: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for (field, tok) in line.split(',').enumerate() {
            let v: f64 = tok.trim().parse().map_err(|_| IoError::Parse {
                path: name.clone(),
                line: idx + 1,
                field: field + 1,
                text: tok.trim().to_string(),
            })?;
            rows.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(IoError::Ragged { path: name, line: idx + 1, expected: w, got: count })
            }
            _ => {}
        }
        n += 1;
    }
    let width = width.ok_or(IoError::Empty { path: name })?;
    Ok(Array2::from_shape_vec((n, width), rows).expect("row count times width matches buffer"))
}

/// Reads a single-column (or single-row) CSV into a vector.
pub fn read_vector_csv(path: &Path) -> Result<Array1<f64>, IoError> {
    let m = read_matrix_csv(path)?;
    let (n, w) = (m.nrows(), m.ncols());
    if w == 1 {
        Ok(m.column(0).to_owned())
    } else if n == 1 {
        Ok(m.row(0).to_owned())
    } else {
        Err(IoError::Ragged { path: path.display().to_string(), line: 1, expected: 1, got: w })
    }
}

/// Writes a matrix as headerless CSV (shortest round-trip float formatting).
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for row in m.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.write_all(b",").map_err(|e| file_err(path, e))?;
            }
            write!(out, "{v}").map_err(|e| file_err(path, e))?;
            first = false;
        }
        out.write_all(b"\n").map_err(|e| file_err(path, e))?;
    }
    out.flush().map_err(|e| file_err(path, e))
}

/// Writes a vector as a single-column CSV.
pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for x in v.iter() {
        writeln!(out, "{x}").map_err(|e| file_err(path, e))?;
    }
    out.flush().map_err(|e| file_err(path, e))
}

/// Serializes `Array2<f64>` as a list of rows.
pub mod serde_array2 {
    use ndarray::Array2;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Array2::from_shape_vec((n, w), flat).map_err(D::Error::custom)
    }
}

/// Serializes `Array1<f64>` as a plain list.
pub mod serde_array1 {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.to_vec().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from_vec(Vec::deserialize(d)?))
    }
}
