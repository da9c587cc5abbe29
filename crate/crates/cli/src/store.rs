//! JSONL shard persistence for the canonical store and the conversation corpus.

use std::fs;
use std::path::{Path, PathBuf};

use forge_core::ingest::CanonicalItem;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, ShardInfo};

pub const CANONICAL_DIR: &str = "canonical";
pub const CORPUS_DIR: &str = "corpus";
pub const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes one JSONL file and returns its shard entry.
pub fn write_jsonl<T: Serialize>(dir: &Path, name: &str, items: &[T]) -> CliResult<ShardInfo> {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item).map_err(|e| io_err(dir, e))?);
        buf.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, buf.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(ShardInfo { path: name.to_string(), records: items.len() as u64, sha256: sha256_hex(buf.as_bytes()) })
}

/// Splits `items` into `part-NNNNN.jsonl` files of at most `shard_size` lines.
pub fn write_shards<T: Serialize>(dir: &Path, items: &[T], shard_size: usize) -> CliResult<Vec<ShardInfo>> {
    ensure_dir(dir)?;
    clear_shards(dir)?;
    items
        .chunks(shard_size.max(1))
        .enumerate()
        .map(|(i, chunk)| write_jsonl(dir, &format!("part-{i:05}.jsonl"), chunk))
        .collect()
}

fn clear_shards(dir: &Path) -> CliResult<()> {
    for p in jsonl_files(dir)? {
        fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

/// `*.jsonl` files of a directory, sorted by name.
pub fn jsonl_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let p = entry.map_err(|e| io_err(dir, e))?.path();
        if p.extension().is_some_and(|e| e == "jsonl") && p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every canonical shard under `dir` in file order.
pub fn read_canonical(dir: &Path) -> CliResult<Vec<CanonicalItem>> {
    if !dir.is_dir() {
        return Err(CliError::input(format!("{}: canonical store not found; run `forge ingest` first", dir.display())));
    }
    let mut items = Vec::new();
    for path in jsonl_files(dir)? {
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let item = serde_json::from_str(line)
                .map_err(|e| CliError::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
            items.push(item);
        }
    }
    Ok(items)
}
