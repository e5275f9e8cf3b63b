use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::{FailureKind, PipelineError, Stage};

fn io_error(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::new(Stage::Output, FailureKind::Io { path: path.display().to_string(), source })
}

/// Shortest round-trip decimal; non-finite values are written as `NA`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".to_string()
    }
}

/// RFC 4180 table whose first line names the units and the config hash.
pub struct TableWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl TableWriter {
    pub fn create(path: &Path, units: &str, config_hash: &str, header: &[&str]) -> Result<Self, PipelineError> {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# units: {units}; config_hash: {config_hash}").map_err(|e| io_error(path, e))?;
        let mut inner = csv::Writer::from_writer(buf);
        inner.write_record(header).map_err(|e| csv_error(path, e))?;
        Ok(TableWriter { path: path.to_path_buf(), inner })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), PipelineError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), PipelineError> {
        self.inner.flush().map_err(|e| io_error(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    io_error(path, std::io::Error::other(e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::new(Stage::Output, FailureKind::Json(e)))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

/// Reproduction record. Holds neither timing nor the output directory, so re-running from it
/// rewrites it byte-identically; wall time goes to `timing.json`.
#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_hash: String,
    pub config: RunConfig,
    /// Named seeds derived from `config.seed`.
    pub seeds: Vec<(&'static str, u64)>,
    pub outputs: Vec<&'static str>,
}

impl Manifest {
    pub fn new(config: &RunConfig, seeds: Vec<(&'static str, u64)>, outputs: Vec<&'static str>) -> Self {
        let config = RunConfig { out: None, ..config.clone() };
        Manifest { tool: "proxidist", version: env!("CARGO_PKG_VERSION"), config_hash: config.hash(), config, seeds, outputs }
    }
}

#[derive(Serialize)]
struct Timing {
    wall_time_secs: f64,
    threads: usize,
}

pub fn write_timing(dir: &Path, wall_time_secs: f64) -> Result<(), PipelineError> {
    write_json(&dir.join("timing.json"), &Timing { wall_time_secs, threads: rayon::current_num_threads() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_line_then_quoted_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut w = TableWriter::create(&p, "probability", "abc", &["name", "value"]).unwrap();
        w.row(["a,b", &num(0.25)]).unwrap();
        w.row(["c", &num(f64::NAN)]).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "# units: probability; config_hash: abc\nname,value\n\"a,b\",0.25\nc,NA\n");
    }
}
