//! File ingestion and atomic output.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use taskgen_core::embeddings::{load_samples, EmbeddingTable, SampleFormat, BINARY_MAGIC};

use crate::Failure;

/// Loads a sample table, detecting the format from the leading bytes.
pub fn load_table(path: &str) -> Result<EmbeddingTable, Failure> {
    let mut file = fs::File::open(path)
        .map_err(|e| Failure { code: 3, message: format!("{path}: {e}") })?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Failure { code: 3, message: format!("{path}: {e}") })?;
    let format = if bytes.starts_with(&BINARY_MAGIC) {
        SampleFormat::Binary
    } else {
        SampleFormat::Csv
    };
    load_samples(bytes.as_slice(), format).map_err(|e| {
        let f = Failure::from(e);
        Failure {
            code: f.code,
            message: format!("{path}: {}", f.message),
        }
    })
}

/// Writes a file atomically: temp file in the same directory, then rename,
/// so interrupted runs never leave partial output.
pub fn write_atomic(path: &str, contents: &[u8]) -> Result<(), Failure> {
    let target = Path::new(path);
    let dir = target.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            target.file_name().and_then(|n| n.to_str()).unwrap_or("out")
        )),
        None => Path::new(&format!(
            ".{}.tmp",
            target.file_name().and_then(|n| n.to_str()).unwrap_or("out")
        ))
        .to_path_buf(),
    };
    fs::write(&tmp, contents).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", tmp.display()),
    })?;
    fs::rename(&tmp, target).map_err(|e| Failure {
        code: 3,
        message: format!("{path}: {e}"),
    })?;
    Ok(())
}

pub fn read_to_string(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure {
        code: 3,
        message: format!("{path}: {e}"),
    })
}

/// The centroid pair as written by `partition --centroids-out`.
#[derive(Serialize, Deserialize)]
pub struct CentroidsFile {
    pub mu_train: Vec<f64>,
    pub mu_test: Vec<f64>,
}
