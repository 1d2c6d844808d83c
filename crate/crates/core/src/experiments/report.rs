//! Output naming and writing. Names come from a hash of the run
//! configuration, so a rerun with the same configuration lands on the same
//! files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `kind-<16 hex digits>` from the SHA-256 of the canonical JSON of `config`.
pub fn artifact_stem(kind: &str, config: &impl Serialize) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::to_value(config)?)?;
    let digest = Sha256::digest(&canonical);
    let mut stem = format!("{kind}-");
    for byte in &digest[..8] {
        write!(stem, "{byte:02x}").expect("writing to a String");
    }
    Ok(stem)
}

/// Writes `files` as `(file name, contents)` pairs into `dir`. Nothing is
/// written when any target exists and `force` is off.
pub fn write_files(dir: &Path, files: &[(String, String)], force: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = files.iter().map(|(name, _)| dir.join(name)).collect();
    if !force {
        if let Some(existing) = paths.iter().find(|p| p.exists()) {
            return Err(Error::Exists(existing.display().to_string()));
        }
    }
    fs::create_dir_all(dir)?;
    for (path, (_, contents)) in paths.iter().zip(files) {
        fs::write(path, contents)?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_depend_on_the_config_only() {
        let a = artifact_stem("scan", &serde_json::json!({"beta": 1.0, "seed": 3})).unwrap();
        let b = artifact_stem("scan", &serde_json::json!({"seed": 3, "beta": 1.0})).unwrap();
        let c = artifact_stem("scan", &serde_json::json!({"beta": 1.0, "seed": 4})).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.starts_with("scan-") && a.len() == 5 + 16);
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = std::env::temp_dir().join(format!("dnls-report-{}", std::process::id()));
        let files = vec![("x.csv".to_string(), "1\n".to_string())];
        write_files(&dir, &files, false).unwrap();
        assert!(matches!(write_files(&dir, &files, false), Err(Error::Exists(_))));
        let again = vec![("x.csv".to_string(), "2\n".to_string())];
        write_files(&dir, &again, true).unwrap();
        assert_eq!(fs::read_to_string(dir.join("x.csv")).unwrap(), "2\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
