//! CSV emission. Every file starts with `#` comment lines carrying the command,
//! the root seed and the effective configuration as one-line JSON.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

/// A named table ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub struct RunHeader<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub config: &'a Value,
}

impl RunHeader<'_> {
    fn lines(&self) -> String {
        format!(
            "# gnsfde {}\n# seed: {}\n# config: {}\n",
            self.command,
            self.seed,
            serde_json::to_string(self.config).expect("JSON values serialise")
        )
    }
}

pub fn write_table(dir: &Path, header: &RunHeader<'_>, table: &Table) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", table.name));
    let mut file = File::create(&path)?;
    file.write_all(header.lines().as_bytes())?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// `<command>.config.json` with the command, seed, configuration and extras.
pub fn write_echo(dir: &Path, header: &RunHeader<'_>, extra: Value) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.config.json", header.command));
    let echo = serde_json::json!({
        "command": header.command,
        "seed": header.seed,
        "config": header.config,
        "report": extra,
    });
    let mut text = serde_json::to_string_pretty(&echo).expect("JSON values serialise");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}
