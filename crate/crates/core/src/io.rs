//! Line-delimited JSON records, atomic writes and content digests.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = temp_sibling(path);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingUpstream(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::AtLine { line: i + 1, source: Box::new(Error::Json(e)) })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingUpstream(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of every file under a directory in path order.
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = Vec::new();
        collect_files(path, &mut entries)?;
        entries.sort();
        let mut hasher = Sha256::new();
        for entry in entries {
            let rel = entry.strip_prefix(path).unwrap_or(&entry);
            hasher.update(rel.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update(sha256_hex(&fs::read(&entry)?).as_bytes());
        }
        Ok(hex::encode(hasher.finalize()))
    } else {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingUpstream(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if !path.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".tmp")) {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes rows as CSV with minimal quoting.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    fn cell(s: &str) -> String {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    }
    let mut out = header.iter().map(|h| cell(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|c| cell(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.jsonl");
        write_jsonl(&path, &[1u32, 2, 3]).unwrap();
        let back: Vec<u32> = read_jsonl(&path).unwrap();
        assert_eq!(back, vec![1, 2, 3]);
        let missing = read_jsonl::<u32>(&dir.path().join("nope.jsonl")).unwrap_err();
        assert!(matches!(missing, Error::MissingUpstream(_)));
    }

    #[test]
    fn dir_digest_is_order_independent_of_creation() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_atomic(&a.path().join("x"), b"1").unwrap();
        write_atomic(&a.path().join("y"), b"2").unwrap();
        write_atomic(&b.path().join("y"), b"2").unwrap();
        write_atomic(&b.path().join("x"), b"1").unwrap();
        assert_eq!(digest_path(a.path()).unwrap(), digest_path(b.path()).unwrap());
    }

    #[test]
    fn csv_quoting() {
        let s = to_csv(&["a", "b"], &[vec!["x,y".into(), "z".into()]]);
        assert_eq!(s, "a,b\n\"x,y\",z\n");
    }
}
