//! File formats shared by the library and the CLI.
//!
//! - datasets: one distribution per line, either CSV (`d` comma-separated
//!   reals) or JSON lines (`{"id": ..., "p": [...]}`);
//! - streams: JSON lines `{"id", "i", "v"}` or CSV `id,i,v`;
//! - embeddings and sketches: a `#`-prefixed JSON header line carrying
//!   everything needed to rebuild and validate compatibility, followed by
//!   one row per point;
//! - reduction results: JSON lines with a header record then one record per
//!   point.
//!
//! Floats are written in shortest round-trip form, so identical inputs
//! produce byte-identical files and reading restores exact values.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, DivergenceKind};
use crate::embed::GridHeader;
use crate::error::{Error, Result};
use crate::sample::RandHeader;
use crate::stream::{AggregateItem, SketchParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

#[derive(Serialize, Deserialize)]
struct DatasetRow {
    id: String,
    p: Vec<f64>,
}

/// Reads a dataset, one point per line. JSON rows carry their own ids; CSV
/// rows get their zero-based line index.
pub fn read_distributions<R: BufRead>(
    reader: R,
    normalize: bool,
) -> Result<Vec<(String, Distribution)>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (id, raw) = if trimmed.starts_with('{') {
            let row: DatasetRow = serde_json::from_str(trimmed)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            (row.id, row.p)
        } else {
            (out.len().to_string(), parse_csv_floats(trimmed, lineno)?)
        };
        let dist = Distribution::validate(&raw, normalize)
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        out.push((id, dist));
    }
    Ok(out)
}

fn parse_csv_floats(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e:?} in {tok:?}", lineno + 1)))
        })
        .collect()
}

pub fn write_dataset<W: Write>(
    w: &mut W,
    rows: &[(String, Distribution)],
    format: DatasetFormat,
) -> Result<()> {
    for (id, dist) in rows {
        match format {
            DatasetFormat::Jsonl => {
                let row = DatasetRow { id: id.clone(), p: dist.values().to_vec() };
                serde_json::to_writer(&mut *w, &row)
                    .map_err(|e| Error::Parse(e.to_string()))?;
                writeln!(w)?;
            }
            DatasetFormat::Csv => {
                writeln!(w, "{}", join_floats(dist.values()))?;
            }
        }
    }
    Ok(())
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{v}"));
    }
    s
}

/// Reads an aggregate stream: JSON lines `{"id", "i", "v"}` or CSV `id,i,v`.
pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<AggregateItem>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('{') {
            #[derive(Deserialize)]
            struct StreamRow {
                id: String,
                i: usize,
                v: f64,
            }
            let row: StreamRow = serde_json::from_str(trimmed)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            out.push(AggregateItem { point_id: row.id, coord_index: row.i, value: row.v });
        } else {
            let parts: Vec<&str> = trimmed.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected id,i,v, got {trimmed:?}",
                    lineno + 1
                )));
            }
            let coord_index = parts[1]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let value = parts[2]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            out.push(AggregateItem { point_id: parts[0].trim().to_string(), coord_index, value });
        }
    }
    Ok(out)
}

pub fn write_stream<W: Write>(w: &mut W, items: &[AggregateItem]) -> Result<()> {
    for item in items {
        serde_json::to_writer(
            &mut *w,
            &serde_json::json!({"id": item.point_id, "i": item.coord_index, "v": item.value}),
        )
        .map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Header of a persisted embedding set; `format` discriminates the three
/// embedding flavors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum EmbeddingHeader {
    DetEmbedding {
        #[serde(flatten)]
        grid: GridHeader,
        layout: String,
        grid_digest: String,
    },
    RandEmbedding {
        #[serde(flatten)]
        sample: RandHeader,
        layout: String,
    },
    HellingerEmbedding {
        d: usize,
    },
}

pub const COORD_MAJOR_LAYOUT: &str = "coord-major-cos-sin";

/// Writes an embedding set: `#`-prefixed JSON header, then `id,v1,v2,...`
/// rows.
pub fn write_embeddings<W: Write>(
    w: &mut W,
    header: &EmbeddingHeader,
    rows: impl Iterator<Item = (String, Vec<f64>)>,
) -> Result<()> {
    let head = serde_json::to_string(header).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w, "#{head}")?;
    for (id, vector) in rows {
        if id.contains(',') {
            return Err(Error::Validation(format!("point id {id:?} may not contain commas")));
        }
        writeln!(w, "{id},{}", join_floats(&vector))?;
    }
    Ok(())
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
) -> Result<(EmbeddingHeader, Vec<(String, Vec<f64>)>)> {
    let mut lines = reader.lines();
    let head_line = lines
        .next()
        .ok_or_else(|| Error::Parse("empty embedding file".into()))??;
    let head_json = head_line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("embedding file must start with a # header line".into()))?;
    let header: EmbeddingHeader =
        serde_json::from_str(head_json).map_err(|e| Error::Parse(format!("header: {e}")))?;
    if let EmbeddingHeader::DetEmbedding { grid, grid_digest, .. } = &header {
        if grid.digest() != *grid_digest {
            return Err(Error::Incompatible(
                "embedding header digest does not match its parameters".into(),
            ));
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (id, rest) = trimmed
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: missing id", lineno + 2)))?;
        rows.push((id.to_string(), parse_csv_floats(rest, lineno + 1)?));
    }
    Ok((header, rows))
}

/// Header of a persisted sketch set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SketchSetHeader {
    pub format: String,
    #[serde(flatten)]
    pub params: SketchParams,
    pub r: usize,
    pub m: usize,
    pub grid_digest: String,
    pub rng_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SketchRecord {
    pub id: String,
    pub seen: String,
    pub counters: Vec<f64>,
}

pub fn write_sketches<W: Write>(
    w: &mut W,
    header: &SketchSetHeader,
    rows: impl Iterator<Item = SketchRecord>,
) -> Result<()> {
    let head = serde_json::to_string(header).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w, "#{head}")?;
    for row in rows {
        serde_json::to_writer(&mut *w, &row).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_sketches<R: BufRead>(reader: R) -> Result<(SketchSetHeader, Vec<SketchRecord>)> {
    let mut lines = reader.lines();
    let head_line =
        lines.next().ok_or_else(|| Error::Parse("empty sketch file".into()))??;
    let head_json = head_line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("sketch file must start with a # header line".into()))?;
    let header: SketchSetHeader =
        serde_json::from_str(head_json).map_err(|e| Error::Parse(format!("header: {e}")))?;
    let expect = header.params.width() * header.params.reps();
    if header.m != header.params.width() || header.r != header.params.reps() {
        return Err(Error::SketchMismatch(
            "sketch header r/m disagree with its parameters".into(),
        ));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: SketchRecord = serde_json::from_str(trimmed)
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
        if row.counters.len() != expect {
            return Err(Error::Parse(format!(
                "line {}: {} counters, expected {expect}",
                lineno + 2,
                row.counters.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Header record of a reduction result file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReduceHeader {
    pub kind: DivergenceKind,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub c0: f64,
    pub r: f64,
    pub beta: f64,
    pub local_constant: f64,
    pub divergence_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedRow {
    pub id: String,
    pub p_reduced: Vec<f64>,
}

pub fn write_reduced<W: Write>(
    w: &mut W,
    header: &ReduceHeader,
    rows: impl Iterator<Item = ReducedRow>,
) -> Result<()> {
    serde_json::to_writer(&mut *w, header).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    for row in rows {
        serde_json::to_writer(&mut *w, &row).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_reduced<R: BufRead>(reader: R) -> Result<(ReduceHeader, Vec<ReducedRow>)> {
    let mut lines = reader.lines();
    let head_line =
        lines.next().ok_or_else(|| Error::Parse("empty reduction file".into()))??;
    let header: ReduceHeader = serde_json::from_str(&head_line)
        .map_err(|e| Error::Parse(format!("header: {e}")))?;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?,
        );
    }
    Ok((header, rows))
}

/// Writes a file atomically: the content goes to a sibling temp file which
/// is renamed over the target only after a successful flush.
pub fn write_atomic_with<F>(path: &Path, write_fn: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = path.with_extension(format!(
        "{}.tmp.{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    let mut writer = BufWriter::new(File::create(&tmp)?);
    match write_fn(&mut writer).and_then(|()| writer.flush().map_err(Error::from)) {
        Ok(()) => {
            drop(writer);
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            drop(writer);
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}
