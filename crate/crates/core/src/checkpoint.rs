//! Two-file checkpoints: `<name>.ckpt.json` holds metadata, `<name>.ckpt.bin`
//! holds every parameter as little-endian `f64`, in declaration order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const JSON_SUFFIX: &str = ".ckpt.json";
const BIN_SUFFIX: &str = ".ckpt.bin";

/// Metadata and weight paths for a checkpoint given either file or the bare stem.
pub fn checkpoint_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let s = path.as_ref().to_string_lossy().into_owned();
    let stem = s
        .strip_suffix(JSON_SUFFIX)
        .or_else(|| s.strip_suffix(BIN_SUFFIX))
        .unwrap_or(&s);
    (
        PathBuf::from(format!("{stem}{JSON_SUFFIX}")),
        PathBuf::from(format!("{stem}{BIN_SUFFIX}")),
    )
}

pub fn write_checkpoint<M: Serialize>(path: impl AsRef<Path>, meta: &M, weights: &[f64]) -> Result<PathBuf> {
    let (json, bin) = checkpoint_paths(path);
    if let Some(parent) = json.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| Error::format(&json, e.to_string()))?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    let bytes: Vec<u8> = weights.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    Ok(json)
}

/// Read metadata and the flat weight vector. `expected_len` is computed by
/// the caller from the metadata and checked against the binary size.
pub fn read_checkpoint<M: DeserializeOwned>(
    path: impl AsRef<Path>,
    expected_len: impl FnOnce(&M) -> usize,
) -> Result<(M, Vec<f64>)> {
    let (json, bin) = checkpoint_paths(path);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let meta: M = serde_json::from_str(&text).map_err(|e| Error::format(&json, e.to_string()))?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let want = expected_len(&meta);
    if bytes.len() != want * 8 {
        return Err(Error::format(
            &bin,
            format!("expected {} parameters, file holds {} bytes", want, bytes.len()),
        ));
    }
    let weights = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_accept_stem_or_either_file() {
        let want = (PathBuf::from("a/m.ckpt.json"), PathBuf::from("a/m.ckpt.bin"));
        assert_eq!(checkpoint_paths("a/m"), want);
        assert_eq!(checkpoint_paths("a/m.ckpt.json"), want);
        assert_eq!(checkpoint_paths("a/m.ckpt.bin"), want);
    }

    #[test]
    fn round_trip_and_length_check() {
        let dir = tempfile::tempdir().unwrap();
        let w = vec![1.5, -0.0, f64::MIN_POSITIVE, 1e300];
        write_checkpoint(dir.path().join("m"), &vec![4usize], &w).unwrap();
        let (meta, back): (Vec<usize>, _) = read_checkpoint(dir.path().join("m"), |m: &Vec<usize>| m[0]).unwrap();
        assert_eq!(meta, vec![4]);
        assert_eq!(
            back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            w.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let err = read_checkpoint(dir.path().join("m"), |_: &Vec<usize>| 3).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = read_checkpoint(dir.path().join("missing"), |_: &Vec<usize>| 3).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
