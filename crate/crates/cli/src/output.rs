//! Per-run output directories, CSV tables and run manifests.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            // 17 significant digits round-trip any double.
            Cell::F(x) => format!("{x:.16e}"),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<i64> for Cell {
    fn from(i: i64) -> Self {
        Cell::I(i)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::I(i as i64)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::S(s)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::S(s.to_string())
    }
}

pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(name: &'static str, header: Vec<String>) -> Self {
        Self {
            name,
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    fn to_bytes(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Everything a subcommand produces before anything touches the disk.
pub struct Outcome {
    pub summary: Value,
    pub tables: Vec<Table>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_pretty(value: &impl Serialize) -> io::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `summary.json`, the CSV tables and `manifest.json` into
/// `<out>/<timestamp>-<subcommand>-<digest>/` and returns that directory.
pub fn write_run(
    out: &Path,
    subcommand: &str,
    parameters: &Value,
    argv: &[String],
    started: Instant,
    outcome: &Outcome,
) -> io::Result<PathBuf> {
    let key = json!({ "subcommand": subcommand, "parameters": parameters });
    let digest = sha256_hex(&serde_json::to_vec(&key)?);
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    fs::create_dir_all(out)?;
    let base = format!("{stamp}-{subcommand}-{}", &digest[..12]);
    let mut dir = out.join(&base);
    let mut attempt = 1;
    loop {
        match fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                attempt += 1;
                dir = out.join(format!("{base}-{attempt}"));
            }
            Err(e) => return Err(e),
        }
    }

    let mut files = serde_json::Map::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> io::Result<()> {
        files.insert(name.to_string(), Value::String(sha256_hex(&bytes)));
        fs::write(dir.join(name), bytes)
    };
    emit("summary.json", to_pretty(&outcome.summary)?)?;
    for t in &outcome.tables {
        emit(&format!("{}.csv", t.name), t.to_bytes()?)?;
    }

    let manifest = json!({
        "subcommand": subcommand,
        "parameters": parameters,
        "argv": argv,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "finished_at": chrono::Utc::now().to_rfc3339(),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "parameter_digest": digest,
        "outputs": files,
    });
    fs::write(dir.join("manifest.json"), to_pretty(&manifest)?)?;
    Ok(dir)
}
