//! Artifact writers.
//!
//! Every JSON artifact embeds the schema version, the seed, and the fully
//! resolved config; the two CSV formats are pinned to plain tabular layouts,
//! so each CSV gets a `<name>.meta.json` sidecar carrying the same header
//! instead.  JSON and JSONL writers emit deterministic bytes for identical
//! inputs (struct field order is fixed and floats use the shortest
//! round-trip form), which is what makes same-seed re-runs byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sqzopt_core::harness::SCHEMA_VERSION;

use crate::config::ExperimentConfig;
use crate::CliError;

/// The self-description header embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct ArtifactHeader<'a> {
    pub schema_version: &'static str,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
}

impl<'a> ArtifactHeader<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: config.run.seed,
            config,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Compute(format!("cannot write {}: {e}", path.display()))
}

/// Creates the output directory (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output dir {}: {e}", dir.display())))
}

/// Writes one pretty-printed JSON value plus trailing newline.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Compute(format!("cannot serialize {name}: {e}")))?;
    w.write_all(b"\n").map_err(|e| io_err(&path, e))?;
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Writes line-delimited JSON: the artifact header first, then one compact
/// object per line.
pub fn write_jsonl<T: Serialize>(
    dir: &Path,
    name: &str,
    header: &ArtifactHeader,
    lines: impl Iterator<Item = T>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    let ser_err = |e: serde_json::Error| -> CliError {
        CliError::Compute(format!("cannot serialize a line of {name}: {e}"))
    };
    let mut line = serde_json::to_string(header).map_err(ser_err)?;
    w.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(&path, e))?;
    for item in lines {
        line = serde_json::to_string(&item).map_err(ser_err)?;
        w.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Writes a CSV through `fill`, then its `<name>.meta.json` sidecar with the
/// artifact header and column documentation.
pub fn write_csv_with_sidecar(
    dir: &Path,
    name: &str,
    header: &ArtifactHeader,
    columns: &str,
    fill: impl FnOnce(&mut csv::Writer<BufWriter<File>>) -> Result<(), csv::Error>,
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let file = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
    let mut writer = csv::Writer::from_writer(file);
    fill(&mut writer).map_err(|e| CliError::Compute(format!("cannot write {name}: {e}")))?;
    writer
        .flush()
        .map_err(|e| CliError::Compute(format!("cannot flush {name}: {e}")))?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        #[serde(flatten)]
        header: &'a ArtifactHeader<'a>,
        artifact: &'a str,
        columns: &'a str,
    }
    write_json(
        dir,
        &format!("{name}.meta.json"),
        &Sidecar {
            header,
            artifact: name,
            columns,
        },
    )?;
    Ok(path)
}
