use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dhash_hex, DatasetError, DatasetManifest, Label, SampleRecord, Source};
use crate::imaging;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// One line of a JSONL listing. `path` is relative to the listing file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingEntry {
    pub path: String,
    pub label: Label,
    pub source: Source,
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub manifest: DatasetManifest,
    /// One message per skipped file.
    pub warnings: Vec<String>,
}

impl IngestOutcome {
    pub fn warning_count(&self) -> usize {
        self.warnings.len()
    }
}

struct Candidate {
    id: String,
    rel: String,
    abs: PathBuf,
    label: Label,
    source: Source,
}

fn rel_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn hash_candidates(candidates: Vec<Candidate>, provenance: String) -> Result<IngestOutcome, DatasetError> {
    let results: Vec<Result<SampleRecord, String>> = candidates
        .into_par_iter()
        .map(|c| {
            let bytes = std::fs::read(&c.abs).map_err(|e| format!("{}: {e}", c.rel))?;
            let img = imaging::decode(&bytes).map_err(|e| format!("{}: {e}", c.rel))?;
            Ok(SampleRecord {
                id: c.id,
                path: c.rel,
                label: c.label,
                source: c.source,
                sha256: crate::model_io::sha256_hex(&bytes),
                phash: dhash_hex(&img),
                split: None,
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(w) => {
                tracing::warn!("skipping {w}");
                warnings.push(w);
            }
        }
    }
    if records.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut manifest = DatasetManifest::new(records)?;
    manifest.provenance = provenance;
    Ok(IngestOutcome { manifest, warnings })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))? {
        out.push(e.map_err(|e| DatasetError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn name_of(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Walks `<root>/<label>/<source>/<file>`. Hidden entries are ignored and
/// files without an image extension are skipped with a warning.
pub fn ingest_directory(root: &Path) -> Result<IngestOutcome, DatasetError> {
    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    for label_dir in sorted_entries(root)? {
        let label_name = name_of(&label_dir);
        if label_name.starts_with('.') || !label_dir.is_dir() {
            continue;
        }
        let label: Label = label_name.parse().map_err(DatasetError::UnknownLabel)?;
        for source_dir in sorted_entries(&label_dir)? {
            let source_name = name_of(&source_dir);
            if source_name.starts_with('.') || !source_dir.is_dir() {
                continue;
            }
            let source: Source = source_name.parse().map_err(DatasetError::UnknownSource)?;
            for file in sorted_entries(&source_dir)? {
                let file_name = name_of(&file);
                if file_name.starts_with('.') || file.is_dir() {
                    continue;
                }
                let rel = rel_string(file.strip_prefix(root).expect("under root"));
                let ext = file.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
                if !ext.as_deref().is_some_and(|e| IMAGE_EXTENSIONS.contains(&e)) {
                    warnings.push(format!("{rel}: not a PNG or JPEG file name"));
                    continue;
                }
                candidates.push(Candidate {
                    id: rel.clone(),
                    rel,
                    abs: file,
                    label,
                    source,
                });
            }
        }
    }
    let mut out = hash_candidates(candidates, format!("ingested from directory {}", root.display()))?;
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

/// Reads a JSONL listing of [`ListingEntry`] lines. Missing or unreadable
/// files are skipped with a warning.
pub fn ingest_listing(listing: &Path) -> Result<IngestOutcome, DatasetError> {
    let f = std::fs::File::open(listing).map_err(|e| DatasetError::io(listing, e))?;
    let base = listing.parent().unwrap_or(Path::new("."));
    let mut candidates = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(listing, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entry: ListingEntry = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        candidates.push(Candidate {
            id: entry.id.unwrap_or_else(|| entry.path.clone()),
            abs: base.join(&entry.path),
            rel: entry.path,
            label: entry.label,
            source: entry.source,
        });
    }
    hash_candidates(candidates, format!("ingested from listing {}", listing.display()))
}

/// Directory roots go through [`ingest_directory`], files through
/// [`ingest_listing`].
pub fn ingest(path: &Path) -> Result<IngestOutcome, DatasetError> {
    if path.is_dir() {
        ingest_directory(path)
    } else {
        ingest_listing(path)
    }
}
