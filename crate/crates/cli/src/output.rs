//! Output directory handling, CSV writers and run manifests.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{CliResult, Failure};

pub type CsvWriter = csv::Writer<BufWriter<File>>;

/// Files written by one command, recorded for its manifest.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("cannot write {}: {e}", path.display()))
}

impl Outputs {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path of `name` inside the directory, recorded as an output.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[&str]) -> CliResult<CsvWriter> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| io_failure(&path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(header)?;
        Ok(w)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::data(format!("cannot encode {name}: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_failure(&path, e))
    }

    /// Write `manifest_<command>.json`: the resolved settings of the run
    /// and the files it produced. Nothing time-dependent goes in, so equal
    /// runs give equal manifests.
    pub fn manifest(mut self, command: &str, settings: &impl Serialize, out: &Path) -> CliResult<()> {
        #[derive(Serialize)]
        struct Manifest<'a, S: Serialize> {
            tool: &'a str,
            version: &'a str,
            library_version: &'a str,
            command: &'a str,
            out: &'a Path,
            settings: &'a S,
            outputs: &'a [String],
        }
        let outputs = std::mem::take(&mut self.written);
        let m = Manifest {
            tool: "mdspace",
            version: env!("CARGO_PKG_VERSION"),
            library_version: mdspace::VERSION,
            command,
            out,
            settings,
            outputs: &outputs,
        };
        self.json(&format!("manifest_{command}.json"), &m)
    }
}

pub fn finish(w: CsvWriter) -> CliResult<()> {
    w.into_inner()
        .map_err(|e| Failure::data(format!("cannot flush table: {e}")))?;
    Ok(())
}

/// Build timestamp from `SOURCE_DATE_EPOCH`, when set.
pub fn source_date_epoch() -> CliResult<Option<u64>> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("SOURCE_DATE_EPOCH {v:?} is not a number of seconds"))),
        Err(_) => Ok(None),
    }
}
