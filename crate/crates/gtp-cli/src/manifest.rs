//! Line-delimited JSON dataset manifests.
//!
//! One JSON object per line: sample id, clip feature path, word embedding
//! path (both relative to the manifest file), the token list, and the four
//! annotator clip-index lists. Blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use gtp_core::VideoSample;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::formats::{read_features, write_features};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub clips: String,
    pub words: String,
    pub tokens: Vec<String>,
    pub annotations: [Vec<usize>; 4],
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

/// Read and fully validate a dataset. Every error names the offending line
/// or sample.
pub fn load_manifest(path: &Path, k: usize) -> Result<Vec<VideoSample>, CliError> {
    let base = base_dir(path);
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
            CliError::Data(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        let clips = read_features(&base.join(&entry.clips))?;
        let words = read_features(&base.join(&entry.words))?;
        let sample = VideoSample {
            id: entry.id,
            clips,
            words,
            tokens: entry.tokens,
            annotations: entry.annotations,
        };
        sample
            .validate(k)
            .map_err(|e| CliError::Data(format!("sample {}: {e}", sample.id)))?;
        out.push(sample);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

/// Write a dataset as a manifest plus per-sample feature files under `dir`.
pub fn write_dataset(dir: &Path, samples: &[VideoSample]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join("manifest.jsonl");
    let mut w = BufWriter::new(File::create(&manifest_path)?);
    for sample in samples {
        let clips_rel = format!("{}.clips.gtpf", sample.id);
        let words_rel = format!("{}.words.gtpf", sample.id);
        write_features(&dir.join(&clips_rel), &sample.clips)?;
        write_features(&dir.join(&words_rel), &sample.words)?;
        let entry = ManifestEntry {
            id: sample.id.clone(),
            clips: clips_rel,
            words: words_rel,
            tokens: sample.tokens.clone(),
            annotations: sample.annotations.clone(),
        };
        let line = serde_json::to_string(&entry)
            .map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(manifest_path)
}
