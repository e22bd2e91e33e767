//! CSV matrix ingestion and run-artifact emission.
//!
//! Matrices are plain RFC-4180 CSV (UTF-8, LF or CRLF), numeric cells, an
//! optional single header row detected automatically. Floats are written
//! with the shortest decimal that round-trips to the identical bits, so
//! rereading an artifact reproduces every value exactly.
//!
//! A `factorize` run emits four files into its output directory:
//! `W.csv` and `H.csv` (canonicalized factors), `trace.jsonl` (one JSON
//! object per iteration) and `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, NEGATIVE_ENTRY_TOL};
use crate::solver::{canonicalize, FactorizationResult, SolverConfig, StopReason};

/// Read a CSV matrix file into a [`DataMatrix`].
///
/// The first record is taken as a header and skipped iff at least one of
/// its cells does not parse as a number. Entries in
/// `[-NEGATIVE_ENTRY_TOL, 0)` are clamped to zero; anything lower is an
/// error, as are ragged rows and non-numeric cells.
pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix(&bytes)
}

/// [`read_matrix`] for in-memory bytes.
pub fn parse_matrix(bytes: &[u8]) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    let mut first_record = true;

    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);

        if first_record {
            first_record = false;
            if !record.iter().all(parses_as_finite) {
                // header row
                continue;
            }
        }

        let ncols = *expected_cols.get_or_insert(record.len());
        if record.len() != ncols {
            return Err(Error::Ragged {
                row: rows.len(),
                expected: ncols,
                found: record.len(),
            });
        }

        let mut row = Vec::with_capacity(ncols);
        for (field, cell) in record.iter().enumerate() {
            let value: f64 = match cell.parse() {
                Ok(v) => v,
                Err(_) => {
                    return Err(Error::NonNumeric {
                        line,
                        field,
                        text: cell.to_string(),
                    })
                }
            };
            if !value.is_finite() {
                return Err(Error::NonNumeric {
                    line,
                    field,
                    text: cell.to_string(),
                });
            }
            if value < -NEGATIVE_ENTRY_TOL {
                return Err(Error::NegativeEntry {
                    row: rows.len(),
                    col: field,
                    value,
                });
            }
            row.push(value.max(0.0));
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Empty);
    }
    DataMatrix::from_rows(&rows)
}

fn parses_as_finite(cell: &str) -> bool {
    cell.parse::<f64>().map(|v| v.is_finite()).unwrap_or(false)
}

/// SHA-256 of raw bytes, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to reproduce and audit a run; serialized as
/// `manifest.json` and re-parseable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub input_sha256: String,
    pub config: SolverConfig,
    pub version: String,
    pub stop_reason: StopReason,
    pub final_divergence: f64,
    pub iterations: usize,
    pub wall_secs: f64,
}

impl RunManifest {
    pub fn new(
        input_bytes: &[u8],
        config: &SolverConfig,
        result: &FactorizationResult,
        wall: Duration,
    ) -> Self {
        Self {
            input_sha256: sha256_hex(input_bytes),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stop_reason: result.stop_reason,
            final_divergence: result.final_divergence.value(),
            iterations: result.iterations_run,
            wall_secs: wall.as_secs_f64(),
        }
    }
}

/// Paths written by [`write_result`].
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub w: PathBuf,
    pub h: PathBuf,
    pub trace: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    divergence: f64,
    objective: f64,
    residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gain_q: Option<f64>,
}

/// Write `W.csv`, `H.csv`, `trace.jsonl` and `manifest.json` into
/// `out_dir`, creating the directory if needed. Factors are canonicalized
/// at this point only, so in-memory iterates stay untouched.
///
/// With a fixed seed and single-threaded dispatch the three data artifacts
/// are byte-identical across runs; the manifest carries wall time and may
/// differ.
pub fn write_result(
    result: &FactorizationResult,
    manifest: &RunManifest,
    out_dir: &Path,
) -> Result<OutputPaths> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let canonical = canonicalize(&result.factors);
    let paths = OutputPaths {
        w: out_dir.join("W.csv"),
        h: out_dir.join("H.csv"),
        trace: out_dir.join("trace.jsonl"),
        manifest: out_dir.join("manifest.json"),
    };

    write_matrix_csv(&paths.w, canonical.w())?;
    write_matrix_csv(&paths.h, canonical.h())?;

    let mut trace_file = buffered(&paths.trace)?;
    for (idx, record) in result.trace.records().iter().enumerate() {
        let row = TraceRow {
            iter: idx + 1,
            divergence: record.divergence,
            objective: record.objective,
            residual: record.residual,
            gain_p: record.oracle.as_ref().map(|o| o.gain_p),
            gain_q: record.oracle.as_ref().map(|o| o.gain_q),
        };
        let line = serde_json::to_string(&row).expect("trace rows are plain numbers");
        writeln!(trace_file, "{line}").map_err(|source| Error::Io {
            path: paths.trace.clone(),
            source,
        })?;
    }
    trace_file.flush().map_err(|source| Error::Io {
        path: paths.trace.clone(),
        source,
    })?;

    let manifest_json =
        serde_json::to_string_pretty(manifest).expect("manifest is plain data");
    fs::write(&paths.manifest, manifest_json + "\n").map_err(|source| Error::Io {
        path: paths.manifest.clone(),
        source,
    })?;

    Ok(paths)
}

/// Shortest round-trip decimal per entry, comma-separated, LF line ends.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut file = buffered(path)?;
    for row in matrix.rows() {
        let line = row
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(file, "{line}").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    file.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn buffered(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(file))
}
