//! JSON manifest + CSV feature files.
//!
//! Layout on disk:
//!
//! ```text
//! manifest.json      utterance list, corpus header, optional norm stats
//! summary.csv        header `id,<feature names>`, one row per utterance
//! frames/<id>.csv    one row per mel coefficient, one column per frame
//! ```
//!
//! Floats are written in `{:.16e}` form (17 significant digits) so a
//! save/load cycle is bit-exact.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Utterance};
use super::norm::NormStats;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub format_version: u32,
    pub name: String,
    pub scale_mid: u32,
    pub d_s: usize,
    pub n_mel: usize,
    /// Path of the summary-feature CSV, relative to the manifest.
    pub summary_csv: String,
    pub utterances: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<NormStats>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub speaker_id: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, String>,
    pub annotations: Vec<u32>,
    /// Path of this utterance's frame CSV, relative to the manifest.
    pub frames: String,
}

/// What `load_corpus` dropped along the way.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub listed: usize,
    pub excluded_no_majority: usize,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(text: &str, path: &Path, what: &str) -> Result<f64> {
    let v: f64 = text.trim().parse().map_err(|_| Error::Format {
        path: path.display().to_string(),
        msg: format!("cannot parse {what} value {text:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{what} in {}", path.display())));
    }
    Ok(v)
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

fn read_summary(path: &Path, d_s: usize) -> Result<HashMap<String, Vec<f64>>> {
    require_file(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let header_len = rdr.headers()?.len();
    if header_len != d_s + 1 {
        return Err(Error::dims(format!("header of {}", path.display()), d_s + 1, header_len));
    }
    let mut rows = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        if rec.len() != d_s + 1 {
            return Err(Error::dims(format!("summary features of {id}"), d_s, rec.len().saturating_sub(1)));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|s| parse_f64(s, path, "summary feature"))
            .collect::<Result<Vec<_>>>()?;
        rows.insert(id, vals);
    }
    Ok(rows)
}

fn read_frames(path: &Path, n_mel: usize) -> Result<(Vec<f64>, usize)> {
    require_file(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut width = None;
    for rec in rdr.records() {
        let rec = rec?;
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::dims(format!("frame count in {}", path.display()), w, rec.len()))
            }
            _ => {}
        }
        for s in rec.iter() {
            data.push(parse_f64(s, path, "frame")?);
        }
        rows += 1;
    }
    if rows != n_mel {
        return Err(Error::dims(format!("mel rows in {}", path.display()), n_mel, rows));
    }
    Ok((data, width.unwrap_or(0)))
}

/// Loads and validates a corpus. Utterances without a majority label are
/// dropped and counted in the report.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<(Corpus, LoadReport)> {
    let manifest_path = manifest_path.as_ref();
    require_file(manifest_path)?;
    let manifest: ManifestFile = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Format {
            path: manifest_path.display().to_string(),
            msg: format!("unsupported manifest version {}", manifest.format_version),
        });
    }
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let summary_path = root.join(&manifest.summary_csv);
    let mut summary = read_summary(&summary_path, manifest.d_s)?;

    let mut utterances = Vec::with_capacity(manifest.utterances.len());
    for entry in &manifest.utterances {
        let summary_features = summary.remove(&entry.id).ok_or_else(|| Error::Format {
            path: summary_path.display().to_string(),
            msg: format!("no summary row for utterance {}", entry.id),
        })?;
        let (framed_features, frame_count) = read_frames(&root.join(&entry.frames), manifest.n_mel)?;
        utterances.push(Utterance {
            id: entry.id.clone(),
            speaker_id: entry.speaker_id.clone(),
            attrs: entry.attrs.clone(),
            annotations: entry.annotations.clone(),
            scale_mid: manifest.scale_mid,
            summary_features,
            framed_features,
            n_mel: manifest.n_mel,
            frame_count,
        });
    }
    let mut corpus = Corpus::new(manifest.name, manifest.scale_mid, manifest.d_s, manifest.n_mel, utterances)?;
    corpus.norm_stats = manifest.norm_stats;
    corpus.metadata = manifest.metadata;
    corpus.validate()?;
    let listed = corpus.len();
    let excluded = corpus.drop_unlabeled()?;
    if excluded > 0 {
        log::info!("{}: excluded {excluded} of {listed} utterances without a majority label", corpus.name);
    }
    Ok((
        corpus,
        LoadReport {
            listed,
            excluded_no_majority: excluded,
        },
    ))
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes `manifest.json`, `summary.csv` and `frames/*.csv` under `dir`.
/// Returns the manifest path.
pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    corpus.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("frames"))?;

    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    let mut header = vec!["id".to_string()];
    header.extend((0..corpus.d_s).map(|i| format!("f{i}")));
    summary.write_record(&header)?;

    let mut entries = Vec::with_capacity(corpus.len());
    let mut used = std::collections::HashSet::new();
    for u in &corpus.utterances {
        let mut row = vec![u.id.clone()];
        row.extend(u.summary_features.iter().map(|&v| fmt_f64(v)));
        summary.write_record(&row)?;

        let mut stem = file_stem_for(&u.id);
        while !used.insert(stem.clone()) {
            stem.push('_');
        }
        let rel = format!("frames/{stem}.csv");
        let mut frames = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(&rel))?;
        for c in 0..u.n_mel {
            let row: Vec<String> = (0..u.frame_count).map(|t| fmt_f64(u.frame_value(c, t))).collect();
            frames.write_record(&row)?;
        }
        frames.flush()?;

        entries.push(ManifestEntry {
            id: u.id.clone(),
            speaker_id: u.speaker_id.clone(),
            attrs: u.attrs.clone(),
            annotations: u.annotations.clone(),
            frames: rel,
        });
    }
    summary.flush()?;

    let manifest = ManifestFile {
        format_version: MANIFEST_VERSION,
        name: corpus.name.clone(),
        scale_mid: corpus.scale_mid,
        d_s: corpus.d_s,
        n_mel: corpus.n_mel,
        summary_csv: "summary.csv".into(),
        utterances: entries,
        norm_stats: corpus.norm_stats.clone(),
        metadata: corpus.metadata.clone(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
