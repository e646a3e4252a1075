//! Scene graph data model.
//!
//! A [`SceneGraph`] is only ever produced by [`validate_graph`], so holding
//! one means every edge endpoint resolves, node ids are unique and every box
//! has positive area.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowercase and collapse internal whitespace. No stemming or plural folding.
pub fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for word in label.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeIdError {
    #[error("node id {raw:?} has no '.' separator")]
    NoSeparator { raw: String },
    #[error("node id {raw:?} does not end in a base-10 instance index")]
    NonNumericIndex { raw: String },
    #[error("node id {raw:?} has an empty class label")]
    EmptyLabel { raw: String },
}

/// Split `"<class>.<n>"` at the last dot.
///
/// The class part may itself contain spaces or dots (`"traffic light.12"`);
/// it is returned normalized.
pub fn parse_node_id(raw: &str) -> Result<(String, u64), NodeIdError> {
    let trimmed = raw.trim();
    let (label, suffix) = trimmed.rsplit_once('.').ok_or_else(|| NodeIdError::NoSeparator { raw: raw.to_string() })?;
    if suffix.is_empty() || !suffix.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NodeIdError::NonNumericIndex { raw: raw.to_string() });
    }
    let index = suffix.parse::<u64>().map_err(|_| NodeIdError::NonNumericIndex { raw: raw.to_string() })?;
    let label = normalize_label(label);
    if label.is_empty() {
        return Err(NodeIdError::EmptyLabel { raw: raw.to_string() });
    }
    Ok((label, index))
}

fn canonical_key(label: &str, index: u64) -> String {
    format!("{label}.{index}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BoxError {
    #[error("box coordinates must be finite")]
    NonFinite,
    #[error("box must satisfy x1 < x2 and y1 < y2")]
    Degenerate,
}

/// Axis-aligned box in image pixel coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, BoxError> {
        if ![x1, y1, x2, y2].iter().all(|c| c.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(BoxError::Degenerate);
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self, BoxError> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    fn exceeds(&self, dims: ImageDims) -> bool {
        self.x1 < 0.0 || self.y1 < 0.0 || self.x2 > dims.width || self.y2 > dims.height
    }
}

impl Serialize for BBox {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(serializer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("image dimensions must be finite and positive, got {width}x{height}")]
pub struct DimsError {
    pub width: f64,
    pub height: f64,
}

/// Image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageDims {
    width: f64,
    height: f64,
}

impl ImageDims {
    pub fn new(width: f64, height: f64) -> Result<Self, DimsError> {
        if width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0 {
            Ok(Self { width, height })
        } else {
            Err(DimsError { width, height })
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectNode {
    pub raw_id: String,
    pub class_label: String,
    pub instance_index: u64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationTriplet {
    pub subject_id: String,
    pub predicate: String,
    pub object_id: String,
    #[serde(skip)]
    subject: usize,
    #[serde(skip)]
    object: usize,
}

impl RelationTriplet {
    /// Position of the subject node in the owning graph.
    pub fn subject_index(&self) -> usize {
        self.subject
    }

    /// Position of the object node in the owning graph.
    pub fn object_index(&self) -> usize {
        self.object
    }
}

/// Validated directed scene graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    nodes: Vec<ObjectNode>,
    edges: Vec<RelationTriplet>,
    dims: Option<ImageDims>,
}

impl SceneGraph {
    pub fn empty(dims: Option<ImageDims>) -> Self {
        Self { nodes: Vec::new(), edges: Vec::new(), dims }
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RelationTriplet] {
        &self.edges
    }

    pub fn dims(&self) -> Option<ImageDims> {
        self.dims
    }

    pub fn subject_of(&self, edge: &RelationTriplet) -> &ObjectNode {
        &self.nodes[edge.subject]
    }

    pub fn object_of(&self, edge: &RelationTriplet) -> &ObjectNode {
        &self.nodes[edge.object]
    }

    /// Canonical JSON form (the answer schema the prompt asks for).
    pub fn to_raw(&self) -> RawGraph {
        RawGraph {
            objects: self
                .nodes
                .iter()
                .map(|n| RawObject { id: n.raw_id.clone(), bbox: n.bbox.coords().to_vec() })
                .collect(),
            relationships: self
                .edges
                .iter()
                .map(|e| RawRelation {
                    subject: e.subject_id.clone(),
                    predicate: e.predicate.clone(),
                    object: e.object_id.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObject {
    pub id: String,
    pub bbox: Vec<f64>,
}

impl RawObject {
    pub fn new(id: impl Into<String>, bbox: [f64; 4]) -> Self {
        Self { id: id.into(), bbox: bbox.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRelation {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl RawRelation {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), predicate: predicate.into(), object: object.into() }
    }
}

/// Unvalidated `{"objects": [...], "relationships": [...]}` payload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawGraph {
    pub objects: Vec<RawObject>,
    pub relationships: Vec<RawRelation>,
}

/// Where a graph comes from. Ground truth tolerates self-relations (kept
/// with a warning); predictions do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Prediction,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BadNodeId { node: usize, error: NodeIdError },
    DuplicateId { node: usize, id: String },
    BoxArity { node: usize, id: String, len: usize },
    NonFiniteBox { node: usize, id: String },
    DegenerateBox { node: usize, id: String, bbox: Vec<f64> },
    BadEndpoint { edge: usize, error: NodeIdError },
    DanglingEndpoint { edge: usize, id: String },
    SelfRelation { edge: usize, id: String },
    EmptyPredicate { edge: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadNodeId { node, error } => write!(f, "object {node}: {error}"),
            Violation::DuplicateId { node, id } => write!(f, "object {node}: duplicate id {id:?}"),
            Violation::BoxArity { node, id, len } => {
                write!(f, "object {node} ({id}): bbox has {len} values, expected 4")
            }
            Violation::NonFiniteBox { node, id } => write!(f, "object {node} ({id}): non-finite bbox"),
            Violation::DegenerateBox { node, id, bbox } => {
                write!(f, "object {node} ({id}): degenerate bbox {bbox:?}")
            }
            Violation::BadEndpoint { edge, error } => write!(f, "relationship {edge}: {error}"),
            Violation::DanglingEndpoint { edge, id } => {
                write!(f, "relationship {edge}: endpoint {id:?} is not a declared object")
            }
            Violation::SelfRelation { edge, id } => {
                write!(f, "relationship {edge}: {id:?} relates to itself")
            }
            Violation::EmptyPredicate { edge } => write!(f, "relationship {edge}: empty predicate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphWarning {
    ClampedBox { node: usize, id: String, original: Vec<f64> },
    SelfRelationKept { edge: usize, id: String },
}

impl fmt::Display for GraphWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphWarning::ClampedBox { node, id, original } => {
                write!(f, "object {node} ({id}): bbox {original:?} clamped to image bounds")
            }
            GraphWarning::SelfRelationKept { edge, id } => {
                write!(f, "relationship {edge}: self-relation on {id:?} kept in ground truth")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub graph: SceneGraph,
    pub warnings: Vec<GraphWarning>,
}

/// Build a [`SceneGraph`] or report every violation found.
///
/// Boxes that overshoot known image bounds are clamped with a warning; a box
/// that is empty after clamping is a [`Violation::DegenerateBox`].
pub fn validate_graph(
    objects: &[RawObject],
    relationships: &[RawRelation],
    dims: Option<ImageDims>,
    origin: Origin,
) -> Result<Validated, Vec<Violation>> {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    let mut nodes = Vec::with_capacity(objects.len());
    let mut by_key: HashMap<String, usize> = HashMap::with_capacity(objects.len());

    for (i, obj) in objects.iter().enumerate() {
        let (label, index) = match parse_node_id(&obj.id) {
            Ok(parsed) => parsed,
            Err(error) => {
                violations.push(Violation::BadNodeId { node: i, error });
                continue;
            }
        };
        let key = canonical_key(&label, index);
        if by_key.contains_key(&key) {
            violations.push(Violation::DuplicateId { node: i, id: obj.id.clone() });
            continue;
        }
        let Some(bbox) = node_box(i, obj, dims, &mut violations, &mut warnings) else {
            continue;
        };
        by_key.insert(key, nodes.len());
        nodes.push(ObjectNode { raw_id: obj.id.trim().to_string(), class_label: label, instance_index: index, bbox });
    }

    let mut edges = Vec::with_capacity(relationships.len());
    for (e, rel) in relationships.iter().enumerate() {
        let subject = resolve_endpoint(e, &rel.subject, &by_key, &mut violations);
        let object = resolve_endpoint(e, &rel.object, &by_key, &mut violations);
        let predicate = normalize_label(&rel.predicate);
        if predicate.is_empty() {
            violations.push(Violation::EmptyPredicate { edge: e });
            continue;
        }
        let (Some(subject), Some(object)) = (subject, object) else {
            continue;
        };
        if subject == object {
            let id = nodes[subject].raw_id.clone();
            match origin {
                Origin::Prediction => {
                    violations.push(Violation::SelfRelation { edge: e, id });
                    continue;
                }
                Origin::GroundTruth => warnings.push(GraphWarning::SelfRelationKept { edge: e, id }),
            }
        }
        edges.push(RelationTriplet {
            subject_id: nodes[subject].raw_id.clone(),
            predicate,
            object_id: nodes[object].raw_id.clone(),
            subject,
            object,
        });
    }

    if violations.is_empty() {
        Ok(Validated { graph: SceneGraph { nodes, edges, dims }, warnings })
    } else {
        Err(violations)
    }
}

fn node_box(
    i: usize,
    obj: &RawObject,
    dims: Option<ImageDims>,
    violations: &mut Vec<Violation>,
    warnings: &mut Vec<GraphWarning>,
) -> Option<BBox> {
    let id = obj.id.clone();
    let coords: [f64; 4] = match obj.bbox.as_slice().try_into() {
        Ok(c) => c,
        Err(_) => {
            violations.push(Violation::BoxArity { node: i, id, len: obj.bbox.len() });
            return None;
        }
    };
    let bbox = match BBox::from_array(coords) {
        Ok(b) => b,
        Err(BoxError::NonFinite) => {
            violations.push(Violation::NonFiniteBox { node: i, id });
            return None;
        }
        Err(BoxError::Degenerate) => {
            violations.push(Violation::DegenerateBox { node: i, id, bbox: obj.bbox.clone() });
            return None;
        }
    };
    let Some(dims) = dims else {
        return Some(bbox);
    };
    if !bbox.exceeds(dims) {
        return Some(bbox);
    }
    let clamped = BBox::new(
        bbox.x1.clamp(0.0, dims.width),
        bbox.y1.clamp(0.0, dims.height),
        bbox.x2.clamp(0.0, dims.width),
        bbox.y2.clamp(0.0, dims.height),
    );
    match clamped {
        Ok(b) => {
            warnings.push(GraphWarning::ClampedBox { node: i, id, original: obj.bbox.clone() });
            Some(b)
        }
        Err(_) => {
            violations.push(Violation::DegenerateBox { node: i, id, bbox: obj.bbox.clone() });
            None
        }
    }
}

fn resolve_endpoint(
    edge: usize,
    raw: &str,
    by_key: &HashMap<String, usize>,
    violations: &mut Vec<Violation>,
) -> Option<usize> {
    match parse_node_id(raw) {
        Ok((label, index)) => {
            let found = by_key.get(&canonical_key(&label, index)).copied();
            if found.is_none() {
                violations.push(Violation::DanglingEndpoint { edge, id: raw.to_string() });
            }
            found
        }
        Err(error) => {
            violations.push(Violation::BadEndpoint { edge, error });
            None
        }
    }
}
