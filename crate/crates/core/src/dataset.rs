//! Ground-truth JSONL ingestion and prompt rendering.
//!
//! One record per line:
//! `{"image_id": ..., "width": W, "height": H, "objects": [...], "relationships": [...]}`
//! with objects and relationships in the same schema the model is asked to emit.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate_graph, DimsError, ImageDims, Origin, RawObject, RawRelation, SceneGraph, Violation};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Why a single dataset line was skipped.
#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: read failed: {source}")]
    Io {
        line: usize,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: invalid JSON record: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: {source}")]
    Dims {
        line: usize,
        #[source]
        source: DimsError,
    },
    #[error("line {line}: invalid ground-truth graph: {}", join(.violations))]
    Graph { line: usize, violations: Vec<Violation> },
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl RecordError {
    pub fn line(&self) -> usize {
        match self {
            Self::Io { line, .. } | Self::Json { line, .. } | Self::Dims { line, .. } | Self::Graph { line, .. } => {
                *line
            }
        }
    }
}

/// Image ids show up as strings or integers depending on the source release.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ImageId {
    Text(String),
    Number(serde_json::Number),
}

impl ImageId {
    fn into_string(self) -> String {
        match self {
            Self::Text(s) => s,
            Self::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    image_id: ImageId,
    width: f64,
    height: f64,
    #[serde(default)]
    objects: Vec<RawObject>,
    #[serde(default)]
    relationships: Vec<RawRelation>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    image_id: &'a str,
    width: f64,
    height: f64,
    objects: Vec<RawObject>,
    relationships: Vec<RawRelation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub image_id: String,
    pub dims: ImageDims,
    pub gt: SceneGraph,
}

impl DatasetRecord {
    /// Parse and validate one JSONL line. `line` is only used for error reports.
    pub fn from_json_line(text: &str, line: usize) -> Result<Self, RecordError> {
        let raw: RawRecord =
            serde_json::from_str(text).map_err(|e| RecordError::Json { line, message: e.to_string() })?;
        let dims = ImageDims::new(raw.width, raw.height).map_err(|source| RecordError::Dims { line, source })?;
        let validated = validate_graph(&raw.objects, &raw.relationships, Some(dims), Origin::GroundTruth)
            .map_err(|violations| RecordError::Graph { line, violations })?;
        for w in &validated.warnings {
            log::debug!("line {line}: {w}");
        }
        Ok(Self { image_id: raw.image_id.into_string(), dims, gt: validated.graph })
    }

    pub fn to_json_line(&self) -> String {
        let raw = self.gt.to_raw();
        let out = RecordOut {
            image_id: &self.image_id,
            width: self.dims.width(),
            height: self.dims.height(),
            objects: raw.objects,
            relationships: raw.relationships,
        };
        serde_json::to_string(&out).expect("dataset records always serialize")
    }
}

/// Streaming reader over a ground-truth JSONL source. Blank lines are skipped;
/// line numbers are 1-based.
pub struct DatasetReader<R> {
    lines: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line: 0 }
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<DatasetRecord, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = self.lines.next()?;
            self.line += 1;
            let line = self.line;
            match text {
                Err(source) => return Some(Err(RecordError::Io { line, source })),
                Ok(t) if t.trim().is_empty() => continue,
                Ok(t) => return Some(DatasetRecord::from_json_line(&t, line)),
            }
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetReader<BufReader<File>>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::FileUnreadable { path: path.to_owned(), source })?;
    Ok(DatasetReader::new(BufReader::new(file)))
}

/// A fully loaded dataset plus the lines that were skipped.
#[derive(Debug, Default)]
pub struct LoadedDataset {
    pub records: Vec<DatasetRecord>,
    pub skipped: Vec<RecordError>,
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<LoadedDataset, DatasetError> {
    let mut out = LoadedDataset::default();
    for item in load_dataset(path)? {
        match item {
            Ok(r) => out.records.push(r),
            Err(e) => out.skipped.push(e),
        }
    }
    Ok(out)
}

/// One label per line; blank lines and surrounding whitespace are ignored.
pub fn load_class_list(path: impl AsRef<Path>) -> Result<Vec<String>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| DatasetError::FileUnreadable { path: path.to_owned(), source })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

const TEMPLATE_OPEN: &str = include_str!("../templates/sgg_open.txt");
const TEMPLATE_CLOSED: &str = include_str!("../templates/sgg_closed.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("prompt with categories needs non-empty {which} classes")]
pub struct MissingCategories {
    pub which: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSpec {
    pub with_categories: bool,
    pub object_classes: Option<Vec<String>>,
    pub relation_classes: Option<Vec<String>>,
}

fn quoted_list(items: &[String]) -> String {
    items.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(", ")
}

/// The user message for scene-graph generation. Without categories the
/// open-vocabulary template is returned verbatim.
pub fn render_prompt(spec: &PromptSpec) -> Result<String, MissingCategories> {
    if !spec.with_categories {
        return Ok(TEMPLATE_OPEN.to_string());
    }
    let objects =
        spec.object_classes.as_deref().filter(|c| !c.is_empty()).ok_or(MissingCategories { which: "object" })?;
    let relations =
        spec.relation_classes.as_deref().filter(|c| !c.is_empty()).ok_or(MissingCategories { which: "relation" })?;
    Ok(TEMPLATE_CLOSED.replace("{OBJ_CLS}", &quoted_list(objects)).replace("{REL_CLS}", &quoted_list(relations)))
}
