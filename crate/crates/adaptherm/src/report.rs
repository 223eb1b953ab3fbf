//! CSV and JSON outputs. Every file starts with a metadata line
//! `# <tool version>, config <hash>, seed <seed>`; CSV readers should treat
//! `#` as a comment character.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::{Error, Result, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            tool: TOOL_VERSION,
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn header_line(&self) -> String {
        format!("# {}, config {}, seed {}", self.tool, self.config_hash, self.seed)
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// CSV writer positioned after the metadata line.
pub struct CsvOut {
    path: std::path::PathBuf,
    w: csv::Writer<File>,
}

impl CsvOut {
    pub fn create(path: &Path, meta: &Meta, columns: &[&str]) -> Result<Self> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{}", meta.header_line()).map_err(|e| Error::io(path, e))?;
        let mut out = Self {
            path: path.to_path_buf(),
            w: csv::Writer::from_writer(f),
        };
        out.row(columns)?;
        Ok(out)
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).map_err(|e| self.csv_err(e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn csv_err(&self, e: csv::Error) -> Error {
        Error::Format(format!("{}: {e}", self.path.display()))
    }
}

/// Pretty JSON with a `meta` object next to `body`'s fields.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        meta: &'a Meta,
        #[serde(flatten)]
        body: &'a T,
    }
    let mut s = serde_json::to_string_pretty(&Doc { meta, body }).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Linear-interpolation quantile of unsorted data; NaN when empty.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Shortest round-trip formatting for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x}")
}
