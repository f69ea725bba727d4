use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

pub fn write_json<T: Serialize>(dir: &Path, stem: &str, value: &T) -> Result<PathBuf> {
    let (path, mut w) = create(dir, &format!("{stem}.json"))?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

/// Writes `header` and `rows` as comma-separated lines.
pub fn write_rows(dir: &Path, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
    write_table(dir, name, ",", &header.join(","), rows)
}

pub fn write_table(
    dir: &Path,
    name: &str,
    sep: &str,
    header: &str,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<PathBuf> {
    let (path, mut w) = create(dir, name)?;
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(sep))?;
    }
    w.flush()?;
    Ok(path)
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}
