use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const EXIT_INCONSISTENT: i32 = 2;
pub const EXIT_NOT_UNIQUE: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }

    pub fn other(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<invmdp::Error> for CliError {
    fn from(e: invmdp::Error) -> Self {
        let code = match e {
            invmdp::Error::Inconsistent(_) => EXIT_INCONSISTENT,
            invmdp::Error::NotApplicable(_) | invmdp::Error::ConstructionFailed(_) => 1,
            _ => EXIT_INPUT,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(format!("invalid JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::other(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::other(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::other(format!("{}: {e}", path.display())))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::other(e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Record of one command invocation, re-runnable from `config`.
#[derive(Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: Value,
    pub metrics: BTreeMap<String, Value>,
    pub wall_time_s: f64,
    pub exit_code: i32,
}

pub struct Recorder {
    start: Instant,
    pub metrics: BTreeMap<String, Value>,
}

impl Recorder {
    pub fn new() -> Self {
        Recorder { start: Instant::now(), metrics: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.metrics
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn finish(self, command: &str, config: Value, exit_code: i32) -> RunReport {
        RunReport {
            command: command.to_string(),
            config,
            metrics: self.metrics,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            exit_code,
        }
    }
}
