//! Seeded synthetic corpora shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sgg_core::graph::{validate_graph, ImageDims, Origin, RawGraph, RawObject, RawRelation};
use sgg_core::SceneGraph;

pub const CLASSES: [&str; 14] = [
    "man",
    "woman",
    "horse",
    "bike",
    "helmet",
    "tree",
    "cup",
    "table",
    "dog",
    "car",
    "street",
    "window",
    "shirt",
    "traffic light",
];
pub const PREDICATES: [&str; 8] = ["on", "has", "wearing", "riding", "near", "holding", "parked on", "behind"];

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;

pub fn dims() -> ImageDims {
    ImageDims::new(WIDTH, HEIGHT).unwrap()
}

pub fn random_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let x1 = rng.gen_range(0..600) as f64;
    let y1 = rng.gen_range(0..440) as f64;
    let x2 = rng.gen_range(x1 as i64 + 8..=WIDTH as i64) as f64;
    let y2 = rng.gen_range(y1 as i64 + 8..=HEIGHT as i64) as f64;
    [x1, y1, x2, y2]
}

/// A graph with distinct class labels, `1..=max_nodes` nodes and no repeated
/// or self-referencing triplets.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, max_edges: usize) -> RawGraph {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let labels: Vec<&str> = CLASSES.choose_multiple(rng, n).copied().collect();
    let objects: Vec<RawObject> =
        labels.iter().enumerate().map(|(i, l)| RawObject::new(format!("{l}.{}", i + 1), random_box(rng))).collect();
    let mut relationships: Vec<RawRelation> = Vec::new();
    let want = rng.gen_range(1..=max_edges.max(1));
    for _ in 0..want * 3 {
        if relationships.len() == want {
            break;
        }
        let s = rng.gen_range(0..n);
        let o = rng.gen_range(0..n);
        if s == o {
            continue;
        }
        let rel = RawRelation::new(&objects[s].id, *PREDICATES.choose(rng).unwrap(), &objects[o].id);
        if !relationships.contains(&rel) {
            relationships.push(rel);
        }
    }
    if relationships.is_empty() {
        relationships.push(RawRelation::new(&objects[0].id, "near", &objects[1].id));
    }
    RawGraph { objects, relationships }
}

/// A plausible imperfect prediction: jittered boxes, some dropped triplets
/// and sometimes an invented one.
pub fn perturb(rng: &mut ChaCha8Rng, gt: &RawGraph) -> RawGraph {
    let mut objects = gt.objects.clone();
    for o in &mut objects {
        for (i, c) in o.bbox.iter_mut().enumerate() {
            let limit = if i % 2 == 0 { WIDTH } else { HEIGHT };
            *c = (*c + rng.gen_range(-12.0..12.0_f64)).round().clamp(0.0, limit);
        }
        if o.bbox[2] <= o.bbox[0] + 1.0 {
            o.bbox[2] = (o.bbox[0] + 10.0).min(WIDTH);
            o.bbox[0] = o.bbox[2] - 10.0;
        }
        if o.bbox[3] <= o.bbox[1] + 1.0 {
            o.bbox[3] = (o.bbox[1] + 10.0).min(HEIGHT);
            o.bbox[1] = o.bbox[3] - 10.0;
        }
    }
    let mut relationships: Vec<RawRelation> = gt.relationships.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect();
    if rng.gen_bool(0.3) {
        let s = &objects[0].id;
        let o = &objects[objects.len() - 1].id;
        relationships.push(RawRelation::new(s, *PREDICATES.choose(rng).unwrap(), o));
    }
    RawGraph { objects, relationships }
}

pub fn build(raw: &RawGraph, origin: Origin) -> SceneGraph {
    validate_graph(&raw.objects, &raw.relationships, Some(dims()), origin).unwrap().graph
}

pub fn response(raw: &RawGraph) -> String {
    format!("<think>Looking at the scene.</think><answer>{}</answer>", serde_json::to_string(raw).unwrap())
}

pub fn dataset_line(image_id: &str, raw: &RawGraph) -> String {
    json!({
        "image_id": image_id,
        "width": WIDTH,
        "height": HEIGHT,
        "objects": raw.objects,
        "relationships": raw.relationships,
    })
    .to_string()
}

pub fn candidate_line(image_id: &str, text: &str) -> String {
    json!({ "image_id": image_id, "response_text": text }).to_string()
}

pub fn write_lines(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
    let path = dir.join(name);
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    path
}

/// Word vectors for every class and predicate token, so label similarity
/// is graded rather than exact.
pub fn embeddings_file(dir: &Path, rng: &mut ChaCha8Rng) -> PathBuf {
    let mut tokens: Vec<&str> = CLASSES.iter().chain(PREDICATES.iter()).flat_map(|s| s.split(' ')).collect();
    tokens.sort_unstable();
    tokens.dedup();
    let lines: Vec<String> = tokens
        .iter()
        .map(|t| {
            let v: Vec<String> = (0..8).map(|_| format!("{:.4}", rng.gen_range(-1.0..1.0_f64))).collect();
            format!("{t} {}", v.join(" "))
        })
        .collect();
    write_lines(dir, "vectors.txt", &lines)
}

pub fn sgg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgg")).args(args).env_remove("SGG_CONFIG").output().expect("sgg runs")
}
