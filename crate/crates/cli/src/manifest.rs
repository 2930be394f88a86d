use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputFingerprint {
    pub path: String,
    pub sha256: String,
    pub files: usize,
}

/// Record of one run: the full configuration, every seed used and the
/// content hashes of the inputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a C,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputFingerprint>,
    pub outputs: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path, hasher: &mut Sha256) -> std::io::Result<()> {
    let mut file = fs::File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        hasher.update(&buf[..n]);
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// SHA-256 of a file, or of every file under a directory (relative path
/// and contents, in sorted path order).
pub fn fingerprint(path: &Path) -> std::io::Result<InputFingerprint> {
    let mut hasher = Sha256::new();
    let files = if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        for rel in &files {
            let name = rel.to_string_lossy();
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
            hash_file(&path.join(rel), &mut hasher)?;
        }
        files.len()
    } else {
        hash_file(path, &mut hasher)?;
        1
    };
    Ok(InputFingerprint {
        path: path.display().to_string(),
        sha256: hex(&hasher.finalize()),
        files,
    })
}

/// Manifest location for an output: `<dir>/manifest.json` for directories,
/// `<file>.manifest.json` otherwise.
pub fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join(MANIFEST_FILE)
    } else {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

pub fn write_manifest<C: Serialize>(path: &Path, manifest: &Manifest<'_, C>) -> std::io::Result<()> {
    let mut json = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    json.push(b'\n');
    fs::write(path, json)
}
