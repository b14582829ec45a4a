//! Getting tabs in and out: TabJSON ingestion, synthetic corpora,
//! train/validation splits, and the continuation experiment.

mod experiment;
mod split;
mod synth;
mod tabjson;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use experiment::{
    run_continuation_experiment, split_continuation, CheckpointModel, Continuation, ContinuationModel, EchoModel, ExperimentParams,
    ExperimentReport, ExperimentRow, RANDOM, REAL,
};
pub use split::{SplitManifest, DEFAULT_VALIDATION_FRACTION};
pub use synth::{synth_corpus, SynthStyle};
pub use tabjson::{
    ingest, parse_tab_json, to_tab_json, write_tab_json, IngestReport, QuantizationEntry, SCHEMA_VERSION,
};

use crate::codec::{encode, EncodeMode, Vocabulary};
use crate::groove::{GrooveKind, GrooveVector};
use crate::quantizer::{fit, Codebook};
use crate::tab::Tab;
use crate::{Error, Result};

/// A tab with the id it is known by (file stem for ingested files).
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: String,
    pub tab: Tab,
}

/// Every `*.json` file directly inside `dir`, sorted by file name.
pub fn tab_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in read {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Ingests a directory of TabJSON files in parallel.
pub fn load_dir(dir: &Path, strict: bool) -> Result<Vec<(Entry, IngestReport)>> {
    tab_files(dir)?
        .par_iter()
        .map(|path| {
            let (tab, report) = ingest(path, strict)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((Entry { id, tab }, report))
        })
        .collect()
}

/// Writes each tab as `<id>.json` under `dir`.
pub fn save_dir(dir: &Path, entries: &[Entry]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for e in entries {
        write_tab_json(&e.tab, &dir.join(format!("{}.json", e.id)))?;
    }
    Ok(())
}

/// Fits a groove codebook on every bar of `tabs`.
pub fn fit_codebook(tabs: &[Tab], kind: GrooveKind, k: usize, seed: u64) -> Result<Codebook> {
    let vectors: Vec<GrooveVector> = tabs
        .iter()
        .flat_map(|t| &t.bars)
        .map(|b| GrooveVector::of(b, kind))
        .collect();
    fit(&vectors, k, seed)
}

/// Token-id sequences for training, one per tab.
pub fn token_sequences(tabs: &[Tab], mode: EncodeMode<'_>) -> Result<Vec<Vec<u32>>> {
    let vocab = Vocabulary::new(mode.mode());
    tabs.par_iter()
        .map(|t| vocab.encode_ids(&encode(t, mode)?))
        .collect()
}
