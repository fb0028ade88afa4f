//! Binary cache of a built dataset.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `RFFPDSET` |
//! | 4 | format version (u32) |
//! | 8 | header length `h` (u64) |
//! | h | JSON header: task, label names, split, window, normalized flag, sources |
//! | 4n | labels (u32) |
//! | 8nW | windows as f32, `[n, 2, W]` row-major |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Source, Split, Task};
use crate::error::{CoreError, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"RFFPDSET";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    task: Task,
    label_names: Vec<String>,
    split: Split,
    window: usize,
    normalized: bool,
    sources: Vec<Source>,
}

pub fn save_cache(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&Header {
        task: ds.task,
        label_names: ds.label_names.clone(),
        split: ds.split,
        window: ds.window,
        normalized: ds.normalized,
        sources: ds.sources.clone(),
    })
    .map_err(|e| CoreError::format("dataset cache header", e))?;
    let mut out = Vec::with_capacity(20 + header.len() + 4 * ds.len() + 4 * ds.data().len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for &l in &ds.labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for &v in ds.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| CoreError::io(path, e))
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let bad = |m: &str| CoreError::format("dataset cache", format!("{}: {m}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != CACHE_MAGIC {
        return Err(bad("not a dataset cache"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CACHE_VERSION {
        return Err(bad(&format!("version {version}, expected {CACHE_VERSION}")));
    }
    let h_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < h_len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..h_len]).map_err(|e| bad(&e.to_string()))?;
    let n = header.sources.len();
    let rest = &body[h_len..];
    let expected = 4 * n + 4 * n * 2 * header.window;
    if rest.len() != expected {
        return Err(bad(&format!(
            "{} payload bytes, expected {expected}",
            rest.len()
        )));
    }
    let (label_bytes, data_bytes) = rest.split_at(4 * n);
    let labels = label_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let data = data_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    LabeledDataset::from_parts(
        header.task,
        header.label_names,
        header.split,
        header.window,
        header.normalized,
        labels,
        header.sources,
        data,
    )
}
