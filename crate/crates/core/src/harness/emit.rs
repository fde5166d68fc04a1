use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, OutputFormat};
use super::{ExperimentOutput, VariantCalibration};
use crate::error::{Error, Result};
use crate::harness::RegretTrace;

pub const CSV_HEADER: [&str; 7] = [
    "variant",
    "seed",
    "episode",
    "episode_regret",
    "cumulative_regret",
    "epsilon",
    "delta",
];

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Metadata written next to the data.
#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub version: &'static str,
    pub config_hash: &'a str,
    pub config: &'a ExperimentConfig,
    pub calibration: &'a [VariantCalibration],
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    #[serde(flatten)]
    sidecar: Sidecar<'a>,
    traces: &'a [RegretTrace],
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `path` with `.meta.json` appended to the file name.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn write_csv<W: Write>(traces: &[RegretTrace], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for t in traces {
        let (eps, delta) = (opt(t.epsilon), opt(t.delta));
        let seed = t.seed.to_string();
        for r in &t.records {
            w.write_record([
                t.variant.as_str(),
                &seed,
                &r.episode.to_string(),
                &r.episode_regret.to_string(),
                &r.cumulative_regret.to_string(),
                &eps,
                &delta,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the traces to `path` in `format`. CSV output gets a JSON sidecar
/// at [`sidecar_path`]; JSON output carries the same metadata inline.
/// Returns every file written.
pub fn emit(output: &ExperimentOutput, format: OutputFormat, path: &Path) -> Result<Vec<PathBuf>> {
    if output.traces.is_empty() {
        return Err(Error::EmptyTraces);
    }
    let sidecar = Sidecar {
        version: VERSION,
        config_hash: &output.config_hash,
        config: &output.config,
        calibration: &output.calibration,
    };
    match format {
        OutputFormat::Csv => {
            write_csv(&output.traces, BufWriter::new(File::create(path)?))?;
            let meta = sidecar_path(path);
            let mut w = BufWriter::new(File::create(&meta)?);
            serde_json::to_writer_pretty(&mut w, &sidecar)?;
            w.write_all(b"\n")?;
            w.flush()?;
            Ok(vec![path.to_path_buf(), meta])
        }
        OutputFormat::Json => {
            let doc = JsonDocument {
                sidecar,
                traces: &output.traces,
            };
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, &doc)?;
            w.write_all(b"\n")?;
            w.flush()?;
            Ok(vec![path.to_path_buf()])
        }
    }
}
