//! JSON Lines files: instances, labeled datasets and solutions.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::solution::CyclicSolution;

/// One dataset line: an instance and, optionally, its reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instance: Instance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<CyclicSolution>,
}

/// One solutions-file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub name: String,
    pub order: Vec<usize>,
    pub length: f64,
}

fn write_lines<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: DeserializeOwned>(path: &Path, mut check: impl FnMut(&T) -> Result<()>) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| Error::CorruptLine { line: i + 1, message };
        let item: T = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        check(&item).map_err(|e| corrupt(e.to_string()))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[DatasetRecord]) -> Result<()> {
    write_lines(path.as_ref(), records)
}

/// Reads a dataset; labels are validated against their instance.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    read_lines(path.as_ref(), |r: &DatasetRecord| match &r.label {
        Some(label) => label.validate(&r.instance),
        None => Ok(()),
    })
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    write_lines(path.as_ref(), instances)
}

/// Reads bare instances. Dataset files are accepted too; labels are dropped.
pub fn read_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Line {
        Record(DatasetRecord),
        Bare(Instance),
    }
    let lines: Vec<Line> = read_lines(path.as_ref(), |_| Ok(()))?;
    Ok(lines
        .into_iter()
        .map(|l| match l {
            Line::Record(r) => r.instance,
            Line::Bare(i) => i,
        })
        .collect())
}

pub fn write_solutions(path: impl AsRef<Path>, records: &[SolutionRecord]) -> Result<()> {
    write_lines(path.as_ref(), records)
}

pub fn read_solutions(path: impl AsRef<Path>) -> Result<Vec<SolutionRecord>> {
    read_lines(path.as_ref(), |_| Ok(()))
}
