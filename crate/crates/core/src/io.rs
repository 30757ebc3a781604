//! Dataset manifests and result export.
//!
//! A manifest is JSON lines, one record per structure:
//! `{"id", "initial_path", "relaxed_path"?, "adsorbate", "facet", "tags"}`.
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::xyz::{read_structure, write_structure};
use crate::geometry::{Structure, StructurePair};
use crate::metrics::EvalReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub initial_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxed_path: Option<PathBuf>,
    #[serde(default)]
    pub adsorbate: String,
    #[serde(default)]
    pub facet: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths resolve against.
    pub base: PathBuf,
}

/// JSON-lines reader; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut f, item)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let records: Vec<ManifestRecord> = read_jsonl(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = DatasetManifest { records, base };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_jsonl(path, &self.records)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidStructure(format!("duplicate manifest id '{}'", r.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Initial structures of every record, ids taken from the manifest.
    pub fn load_initial(&self) -> Result<Vec<(ManifestRecord, Structure)>> {
        self.records
            .iter()
            .map(|r| {
                let mut s = read_structure(self.resolve(&r.initial_path))?;
                s.id = r.id.clone();
                Ok((r.clone(), s))
            })
            .collect()
    }

    /// Pairs from records that carry a relaxed path.
    pub fn load_pairs(&self) -> Result<Vec<StructurePair>> {
        let mut out = Vec::new();
        for r in &self.records {
            let Some(rp) = &r.relaxed_path else { continue };
            let mut initial = read_structure(self.resolve(&r.initial_path))?;
            let mut relaxed = read_structure(self.resolve(rp))?;
            initial.id = r.id.clone();
            relaxed.id = r.id.clone();
            out.push(StructurePair::new(
                initial,
                relaxed,
                r.adsorbate.clone(),
                r.facet.clone(),
            )?);
        }
        Ok(out)
    }
}

/// Write pairs as `<dir>/<id>.initial.xyz`, `<dir>/<id>.relaxed.xyz` and
/// `<dir>/manifest.jsonl`; returns the manifest path.
pub fn write_pair_dataset(dir: impl AsRef<Path>, pairs: &[StructurePair], tags: &[String]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(pairs.len());
    for p in pairs {
        let id = p.id().to_string();
        let ip = PathBuf::from(format!("{id}.initial.xyz"));
        let rp = PathBuf::from(format!("{id}.relaxed.xyz"));
        write_structure(dir.join(&ip), &p.initial)?;
        write_structure(dir.join(&rp), &p.relaxed)?;
        records.push(ManifestRecord {
            id,
            initial_path: ip,
            relaxed_path: Some(rp),
            adsorbate: p.adsorbate_label.clone(),
            facet: p.facet.clone(),
            tags: tags.to_vec(),
        });
    }
    let manifest = DatasetManifest {
        records,
        base: dir.to_path_buf(),
    };
    let path = dir.join("manifest.jsonl");
    manifest.save(&path)?;
    Ok(path)
}

/// Keep the manifest records whose id is in `ids`, in manifest order.
pub fn subset_manifest(m: &DatasetManifest, ids: &BTreeSet<String>) -> DatasetManifest {
    DatasetManifest {
        records: m.records.iter().filter(|r| ids.contains(&r.id)).cloned().collect(),
        base: m.base.clone(),
    }
}

/// Manifest with paths rewritten relative to `new_base` when possible.
pub fn rebase_manifest(m: &DatasetManifest, new_base: &Path) -> DatasetManifest {
    let fix = |p: &Path| -> PathBuf {
        let abs = m.resolve(p);
        match (abs.canonicalize(), new_base.canonicalize()) {
            (Ok(a), Ok(b)) => a.strip_prefix(&b).map(Path::to_path_buf).unwrap_or(a),
            _ => abs,
        }
    };
    DatasetManifest {
        records: m
            .records
            .iter()
            .map(|r| ManifestRecord {
                initial_path: fix(&r.initial_path),
                relaxed_path: r.relaxed_path.as_deref().map(fix),
                ..r.clone()
            })
            .collect(),
        base: new_base.to_path_buf(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown export format '{other}'"))),
        }
    }
}

impl ExportFormat {
    /// From the file extension, defaulting to JSON.
    pub fn from_path(p: &Path) -> Self {
        match p.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ExportFormat::Csv,
            _ => ExportFormat::Json,
        }
    }
}

pub const EVAL_COLUMNS: [&str; 3] = ["id", "label", "dmae_angstrom"];

pub fn write_report_csv<W: Write>(report: &EvalReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVAL_COLUMNS)?;
    for e in &report.entries {
        w.write_record([e.id.clone(), e.label.clone(), format!("{:.10}", e.dmae)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_results(report: &EvalReport, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let f = fs::File::create(path)?;
    match format {
        ExportFormat::Csv => write_report_csv(report, f),
        ExportFormat::Json => {
            let mut w = std::io::BufWriter::new(f);
            serde_json::to_writer_pretty(&mut w, report)?;
            w.write_all(b"\n")?;
            w.flush()?;
            Ok(())
        }
    }
}

pub fn import_report_json(path: impl AsRef<Path>) -> Result<EvalReport> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
