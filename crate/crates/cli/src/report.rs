use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or unreadable configuration (exit 2).
    Usage(String),
    /// A module precondition or I/O failure while computing (exit 1).
    Compute(octaq_core::Error),
}

impl From<octaq_core::Error> for Failure {
    fn from(e: octaq_core::Error) -> Self {
        Failure::Compute(e)
    }
}

pub type CmdResult = Result<(), Failure>;

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Every report carries the command, the tool version and the resolved arguments.
#[derive(Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a C,
    pub result: R,
}

impl<'a, C: Serialize, R: Serialize> Report<'a, C, R> {
    pub fn new(command: &'a str, config: &'a C, result: R) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            result,
        }
    }
}

/// Writes pretty JSON to `path`, or to standard output when `path` is `None`.
pub fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> CmdResult {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| usage(format!("cannot serialize report: {e}")))?
        + "\n";
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Compute(octaq_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Reads a JSON configuration file; parse errors are argument errors.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("invalid {}: {e}", path.display())))
}

/// Writes `header` and `rows` as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CmdResult {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_failure(path, e))?;
    w.write_record(header).map_err(|e| csv_failure(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn csv_failure(path: &Path, e: csv::Error) -> Failure {
    Failure::Compute(octaq_core::Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
