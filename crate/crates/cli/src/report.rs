//! Output directory handling. Every JSON report carries the config hash
//! and the hash of the grid it was computed on.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, RunConfig};

pub struct Writer {
    dir: PathBuf,
    config_hash: String,
    written: Vec<PathBuf>,
}

fn unwritable(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("output {} is not writable: {e}", path.display()))
}

impl Writer {
    /// Creates the output directory, checks it is writable and records the
    /// resolved config as `config.json`.
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output.dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| unwritable(&dir, e))?;
        let probe = dir.join(".write-probe");
        File::create(&probe).map_err(|e| unwritable(&dir, e))?;
        std::fs::remove_file(&probe).map_err(|e| unwritable(&dir, e))?;
        let mut w = Self {
            dir,
            config_hash: cfg.hash(),
            written: Vec::new(),
        };
        let mut body = serde_json::to_value(cfg).expect("config serializes");
        if let Value::Object(m) = &mut body {
            m.insert("config_hash".into(), Value::String(w.config_hash.clone()));
        }
        w.write_bytes("config.json", &pretty(&body))?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `body` (which must serialize to an object) with the two hashes
    /// added at the top level.
    pub fn json<T: Serialize>(&mut self, name: &str, grid_hash: &str, body: &T) -> Result<(), CliError> {
        let mut map = Map::new();
        map.insert("config_hash".into(), Value::String(self.config_hash.clone()));
        map.insert("grid_hash".into(), Value::String(grid_hash.to_string()));
        match serde_json::to_value(body).map_err(milne_core::Error::from)? {
            Value::Object(m) => map.extend(m),
            other => {
                map.insert("value".into(), other);
            }
        }
        self.write_bytes(name, &pretty(&Value::Object(map)))
    }

    /// Streams into `name` through a buffered writer.
    pub fn file(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> milne_core::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| unwritable(&path, e))?;
        let mut out = BufWriter::new(file);
        fill(&mut out).map_err(|e| match e {
            milne_core::Error::Io(io) => unwritable(&path, io),
            other => CliError::Numerical(other),
        })?;
        out.flush().map_err(|e| unwritable(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    /// CSV with a header row; every value is written with `{:e}`.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
        self.file(name, |out| {
            writeln!(out, "{}", header.join(","))?;
            for r in rows {
                let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
            Ok(())
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.file(name, |out| Ok(out.write_all(bytes)?))
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json values serialize");
    s.push(b'\n');
    s
}
