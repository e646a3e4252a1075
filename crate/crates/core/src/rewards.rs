//! Graph-centric rewards for a single candidate response.
//!
//! Three variants score the relationship triplets of a prediction against
//! ground truth:
//!
//! * hard recall: a triplet counts 1 when subject, predicate and object labels
//!   match exactly and both boxes overlap the ground truth (IoU > threshold);
//! * hard recall + relax: same loop, but the credit is the product of the
//!   three label similarities;
//! * soft recall: nodes are matched one-to-one by minimum cost, then node and
//!   edge rewards are accumulated over the matched pairs.
//!
//! Every ground-truth triplet can be credited at most once, so repeating a
//! correct node or triplet never increases the score.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::LabelSimilarity;
use crate::geometry::{iou, BoxDistance, GeometryError, L1Scale};
use crate::graph::{RelationTriplet, SceneGraph};
use crate::matching::{match_nodes, CostWeights, MatchResult};
use crate::parser::{format_reward, parse_response, ParseMode, ParseStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("ground truth has no relationship triplets")]
    EmptyGroundTruth,
    #[error("ground truth has no object nodes")]
    EmptyGroundTruthNodes,
    #[error("ground truth has no relationship edges")]
    EmptyGroundTruthEdges,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardVariant {
    #[default]
    #[serde(rename = "hard", alias = "hard_recall")]
    HardRecall,
    #[serde(rename = "relax", alias = "hard_recall_relax")]
    HardRecallRelax,
    #[serde(rename = "soft", alias = "soft_recall")]
    SoftRecall,
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardVariant::HardRecall => "hard",
            RewardVariant::HardRecallRelax => "relax",
            RewardVariant::SoftRecall => "soft",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("iou_threshold must lie strictly between 0 and 1, got {0}")]
    IouThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub variant: RewardVariant,
    /// Both boxes must have IoU strictly above this.
    pub iou_threshold: f64,
    pub weights: CostWeights,
    pub include_format: bool,
    pub format_mode: ParseMode,
    pub l1_scale: L1Scale,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            variant: RewardVariant::HardRecall,
            iou_threshold: 0.5,
            weights: CostWeights::default(),
            include_format: true,
            format_mode: ParseMode::Strict,
            l1_scale: L1Scale::Normalized,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iou_threshold > 0.0 && self.iou_threshold < 1.0 {
            Ok(())
        } else {
            Err(ConfigError::IouThreshold(self.iou_threshold))
        }
    }
}

/// IoU acceptance rule for both endpoints of a triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IouGate {
    Above(f64),
    AtLeast(f64),
}

impl IouGate {
    pub fn passes(&self, overlap: f64) -> bool {
        match *self {
            IouGate::Above(t) => overlap > t,
            IouGate::AtLeast(t) => overlap >= t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletMatch {
    pub pred: usize,
    pub gt: usize,
    pub score: f64,
}

/// Greedy one-to-one assignment of predicted to ground-truth triplets in
/// prediction order.
///
/// A candidate ground-truth triplet must be unconsumed, pass the IoU gate on
/// both endpoints and have a positive label score. Among candidates the
/// highest score wins, then the largest summed IoU, then the lowest index.
///
/// A predicted triplet that repeats an earlier one (same endpoints and
/// predicate) only matches ground truth with identical labels, so copies
/// cannot collect partial credit from neighbouring ground-truth edges.
pub fn greedy_triplet_matches<F>(
    pred: &SceneGraph,
    pred_edges: &[RelationTriplet],
    gt: &SceneGraph,
    gate: IouGate,
    mut label_score: F,
) -> Vec<TripletMatch>
where
    F: FnMut(&RelationTriplet, &RelationTriplet) -> f64,
{
    let repeats = repeat_flags(pred_edges);
    let mut consumed = vec![false; gt.edges().len()];
    let mut matches = Vec::new();
    for (p, pe) in pred_edges.iter().enumerate() {
        let (ps, po) = (&pred.subject_of(pe).bbox, &pred.object_of(pe).bbox);
        let mut best: Option<(usize, f64, f64)> = None;
        for (g, ge) in gt.edges().iter().enumerate() {
            if consumed[g] {
                continue;
            }
            let iou_s = iou(ps, &gt.subject_of(ge).bbox);
            let iou_o = iou(po, &gt.object_of(ge).bbox);
            if !(gate.passes(iou_s) && gate.passes(iou_o)) || (repeats[p] && !same_labels(pred, pe, gt, ge)) {
                continue;
            }
            let score = label_score(pe, ge);
            if score <= 0.0 {
                continue;
            }
            let overlap = iou_s + iou_o;
            let better = match best {
                None => true,
                Some((_, s, o)) => score > s || (score == s && overlap > o),
            };
            if better {
                best = Some((g, score, overlap));
            }
        }
        if let Some((g, score, _)) = best {
            consumed[g] = true;
            matches.push(TripletMatch { pred: p, gt: g, score });
        }
    }
    matches
}

/// `true` at every position whose triplet already occurred earlier.
fn repeat_flags(edges: &[RelationTriplet]) -> Vec<bool> {
    let mut seen = HashSet::with_capacity(edges.len());
    edges.iter().map(|e| !seen.insert((e.subject_index(), e.predicate.as_str(), e.object_index()))).collect()
}

/// Exact label equality of two triplets from their owning graphs.
pub fn same_labels(pred: &SceneGraph, pe: &RelationTriplet, gt: &SceneGraph, ge: &RelationTriplet) -> bool {
    pe.predicate == ge.predicate
        && pred.subject_of(pe).class_label == gt.subject_of(ge).class_label
        && pred.object_of(pe).class_label == gt.object_of(ge).class_label
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeScore {
    value: f64,
    matched: usize,
}

fn hard_recall_scored(pred: &SceneGraph, gt: &SceneGraph, iou_threshold: f64) -> Result<EdgeScore, RewardError> {
    if gt.edges().is_empty() {
        return Err(RewardError::EmptyGroundTruth);
    }
    let matches = greedy_triplet_matches(pred, pred.edges(), gt, IouGate::Above(iou_threshold), |pe, ge| {
        if same_labels(pred, pe, gt, ge) {
            1.0
        } else {
            0.0
        }
    });
    Ok(EdgeScore { value: matches.len() as f64 / gt.edges().len() as f64, matched: matches.len() })
}

/// Fraction of ground-truth triplets recovered with exact labels and both
/// boxes above the IoU threshold.
pub fn hard_recall(pred: &SceneGraph, gt: &SceneGraph, iou_threshold: f64) -> Result<f64, RewardError> {
    hard_recall_scored(pred, gt, iou_threshold).map(|s| s.value)
}

fn relax_scored(
    pred: &SceneGraph,
    gt: &SceneGraph,
    similarity: &dyn LabelSimilarity,
    iou_threshold: f64,
) -> Result<EdgeScore, RewardError> {
    if gt.edges().is_empty() {
        return Err(RewardError::EmptyGroundTruth);
    }
    let matches = greedy_triplet_matches(pred, pred.edges(), gt, IouGate::Above(iou_threshold), |pe, ge| {
        let s = similarity.similarity(&pred.subject_of(pe).class_label, &gt.subject_of(ge).class_label);
        let p = similarity.similarity(&pe.predicate, &ge.predicate);
        let o = similarity.similarity(&pred.object_of(pe).class_label, &gt.object_of(ge).class_label);
        s.max(0.0) * p.max(0.0) * o.max(0.0)
    });
    let total: f64 = matches.iter().map(|m| m.score).sum();
    Ok(EdgeScore { value: total / gt.edges().len() as f64, matched: matches.len() })
}

/// Hard recall with each credited triplet worth the product of its
/// (non-negative) subject, predicate and object similarities.
pub fn hard_recall_relax(
    pred: &SceneGraph,
    gt: &SceneGraph,
    similarity: &dyn LabelSimilarity,
    iou_threshold: f64,
) -> Result<f64, RewardError> {
    relax_scored(pred, gt, similarity, iou_threshold).map(|s| s.value)
}

/// Sum over matched node pairs of `λ1·sim + λ2·IoU + λ3·exp(−L1)`, divided by
/// the number of ground-truth nodes. Negative similarities count as 0.
pub fn soft_node_rewards(
    pred: &SceneGraph,
    gt: &SceneGraph,
    matching: &MatchResult,
    weights: &CostWeights,
    similarity: &dyn LabelSimilarity,
    distance: &BoxDistance,
) -> Result<f64, RewardError> {
    if gt.nodes().is_empty() {
        return Err(RewardError::EmptyGroundTruthNodes);
    }
    let total: f64 = matching
        .pairs
        .iter()
        .map(|pair| {
            let (v, g) = (&pred.nodes()[pair.pred], &gt.nodes()[pair.gt]);
            let sim = similarity.similarity(&v.class_label, &g.class_label).max(0.0);
            weights.lambda1() * sim
                + weights.lambda2() * iou(&v.bbox, &g.bbox)
                + weights.lambda3() * (-distance.between(&v.bbox, &g.bbox)).exp()
        })
        .sum();
    Ok(total / gt.nodes().len() as f64)
}

fn soft_edge_scored(
    pred: &SceneGraph,
    gt: &SceneGraph,
    matching: &MatchResult,
    similarity: &dyn LabelSimilarity,
) -> Result<EdgeScore, RewardError> {
    if gt.edges().is_empty() {
        return Err(RewardError::EmptyGroundTruthEdges);
    }
    let gt_of = matching.gt_for_pred(pred.nodes().len());
    let mut by_endpoints: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (g, ge) in gt.edges().iter().enumerate() {
        by_endpoints.entry((ge.subject_index(), ge.object_index())).or_default().push(g);
    }
    let repeats = repeat_flags(pred.edges());
    let mut consumed = vec![false; gt.edges().len()];
    let (mut total, mut matched) = (0.0, 0usize);
    for (p, pe) in pred.edges().iter().enumerate() {
        let (Some(k), Some(l)) = (gt_of[pe.subject_index()], gt_of[pe.object_index()]) else {
            continue;
        };
        let Some(candidates) = by_endpoints.get(&(k, l)) else {
            continue;
        };
        let s = similarity.similarity(&pred.subject_of(pe).class_label, &gt.nodes()[k].class_label).max(0.0);
        let o = similarity.similarity(&pred.object_of(pe).class_label, &gt.nodes()[l].class_label).max(0.0);
        let mut best: Option<(usize, f64)> = None;
        for &g in candidates {
            if consumed[g] || (repeats[p] && !same_labels(pred, pe, gt, &gt.edges()[g])) {
                continue;
            }
            let score = s * o * similarity.similarity(&pe.predicate, &gt.edges()[g].predicate).max(0.0);
            if score > 0.0 && best.is_none_or(|(_, b)| score > b) {
                best = Some((g, score));
            }
        }
        if let Some((g, score)) = best {
            consumed[g] = true;
            total += score;
            matched += 1;
        }
    }
    Ok(EdgeScore { value: total / gt.edges().len() as f64, matched })
}

/// Sum over predicted edges whose endpoints are matched to the endpoints of a
/// ground-truth edge of the product of the three similarities, divided by the
/// number of ground-truth edges. Each ground-truth edge is credited once, and
/// a repeated predicted triplet only earns credit for an identically
/// labelled ground-truth edge.
pub fn soft_edge_rewards(
    pred: &SceneGraph,
    gt: &SceneGraph,
    matching: &MatchResult,
    similarity: &dyn LabelSimilarity,
) -> Result<f64, RewardError> {
    soft_edge_scored(pred, gt, matching, similarity).map(|s| s.value)
}

/// Per-candidate reward terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub status: ParseStatus,
    pub format: f64,
    pub node_reward: f64,
    pub edge_reward: f64,
    pub total: f64,
    pub matched_triplets: usize,
    pub diagnostics: Vec<String>,
}

/// Node and edge terms for an already parsed prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphReward {
    pub node_reward: f64,
    pub edge_reward: f64,
    pub matched_triplets: usize,
    pub diagnostics: Vec<String>,
}

pub fn graph_reward(
    pred: &SceneGraph,
    gt: &SceneGraph,
    config: &RewardConfig,
    similarity: &dyn LabelSimilarity,
) -> GraphReward {
    let mut out = GraphReward { node_reward: 0.0, edge_reward: 0.0, matched_triplets: 0, diagnostics: Vec::new() };
    let note = |e: RewardError, out: &mut GraphReward| out.diagnostics.push(format!("{e}; reward term set to 0"));
    match config.variant {
        RewardVariant::HardRecall => match hard_recall_scored(pred, gt, config.iou_threshold) {
            Ok(s) => (out.edge_reward, out.matched_triplets) = (s.value, s.matched),
            Err(e) => note(e, &mut out),
        },
        RewardVariant::HardRecallRelax => match relax_scored(pred, gt, similarity, config.iou_threshold) {
            Ok(s) => (out.edge_reward, out.matched_triplets) = (s.value, s.matched),
            Err(e) => note(e, &mut out),
        },
        RewardVariant::SoftRecall => {
            let distance = match BoxDistance::for_image(config.l1_scale, gt.dims()) {
                Ok(d) => d,
                Err(e) => {
                    note(e.into(), &mut out);
                    return out;
                }
            };
            let matching = match_nodes(pred, gt, &config.weights, similarity, &distance);
            match soft_node_rewards(pred, gt, &matching, &config.weights, similarity, &distance) {
                Ok(v) => out.node_reward = v,
                Err(e) => note(e, &mut out),
            }
            match soft_edge_scored(pred, gt, &matching, similarity) {
                Ok(s) => (out.edge_reward, out.matched_triplets) = (s.value, s.matched),
                Err(e) => note(e, &mut out),
            }
        }
    }
    out
}

/// Parse a response and score it. Never fails: problems are recorded in the
/// breakdown's diagnostics and zero the affected terms.
pub fn candidate_reward(
    response: &str,
    gt: &SceneGraph,
    config: &RewardConfig,
    similarity: &dyn LabelSimilarity,
) -> RewardBreakdown {
    let outcome = parse_response(response, config.format_mode, gt.dims());
    let format = format_reward(&outcome, config.format_mode);
    let mut breakdown = RewardBreakdown {
        status: outcome.status,
        format,
        node_reward: 0.0,
        edge_reward: 0.0,
        total: 0.0,
        matched_triplets: 0,
        diagnostics: outcome.diagnostics,
    };
    if let Some(pred) = &outcome.graph {
        let scored = graph_reward(pred, gt, config, similarity);
        breakdown.node_reward = scored.node_reward;
        breakdown.edge_reward = scored.edge_reward;
        breakdown.matched_triplets = scored.matched_triplets;
        breakdown.diagnostics.extend(scored.diagnostics);
    }
    let format_term = if config.include_format { breakdown.format } else { 0.0 };
    breakdown.total = format_term + breakdown.node_reward + breakdown.edge_reward;
    breakdown
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingTable, ExactMatch};
    use crate::graph::{validate_graph, ImageDims, Origin, RawGraph, RawObject, RawRelation};

    fn build(objects: &[(&str, [f64; 4])], rels: &[(&str, &str, &str)]) -> SceneGraph {
        let raw: Vec<_> = objects.iter().map(|(id, b)| RawObject::new(*id, *b)).collect();
        let rels: Vec<_> = rels.iter().map(|(s, p, o)| RawRelation::new(*s, *p, *o)).collect();
        validate_graph(&raw, &rels, ImageDims::new(100.0, 100.0).ok(), Origin::GroundTruth).unwrap().graph
    }

    fn respond(g: &SceneGraph) -> String {
        let json = serde_json::to_string(&g.to_raw()).unwrap();
        format!("<think>ok</think><answer>{json}</answer>")
    }

    fn three_edge_gt() -> SceneGraph {
        build(
            &[
                ("man.1", [0.0, 0.0, 20.0, 40.0]),
                ("horse.2", [10.0, 20.0, 60.0, 60.0]),
                ("hat.3", [5.0, 0.0, 15.0, 8.0]),
                ("tree.4", [70.0, 0.0, 99.0, 80.0]),
            ],
            &[("man.1", "riding", "horse.2"), ("man.1", "wearing", "hat.3"), ("horse.2", "near", "tree.4")],
        )
    }

    #[test]
    fn hard_recall_examples() {
        let gt = three_edge_gt();
        assert_eq!(hard_recall(&gt, &gt, 0.5).unwrap(), 1.0);

        let two = build(
            &[("a.1", [0.0, 0.0, 10.0, 10.0]), ("b.2", [20.0, 20.0, 30.0, 30.0]), ("c.3", [40.0, 40.0, 50.0, 50.0])],
            &[("a.1", "on", "b.2"), ("b.2", "under", "c.3")],
        );
        let one = build(&[("a.1", [0.0, 0.0, 10.0, 10.0]), ("b.2", [20.0, 20.0, 30.0, 30.0])], &[("a.1", "on", "b.2")]);
        assert_eq!(hard_recall(&one, &two, 0.5).unwrap(), 0.5);

        // Subject IoU 0.4: [0,0,10,10] vs [0,0,10,4].
        let shifted =
            build(&[("a.1", [0.0, 0.0, 10.0, 4.0]), ("b.2", [20.0, 20.0, 30.0, 30.0])], &[("a.1", "on", "b.2")]);
        assert!((iou(&shifted.nodes()[0].bbox, &two.nodes()[0].bbox) - 0.4).abs() < 1e-12);
        assert_eq!(hard_recall(&shifted, &two, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn hard_recall_threshold_is_strict() {
        let gt = build(&[("a.1", [0.0, 0.0, 10.0, 10.0]), ("b.2", [20.0, 20.0, 30.0, 30.0])], &[("a.1", "on", "b.2")]);
        let half = build(&[("a.1", [0.0, 0.0, 10.0, 5.0]), ("b.2", [20.0, 20.0, 30.0, 30.0])], &[("a.1", "on", "b.2")]);
        assert_eq!(hard_recall(&half, &gt, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let gt = build(&[("a.1", [0.0, 0.0, 10.0, 10.0])], &[]);
        assert_eq!(hard_recall(&gt, &gt, 0.5), Err(RewardError::EmptyGroundTruth));
        let out = candidate_reward(&respond(&gt), &gt, &RewardConfig::default(), &ExactMatch);
        assert_eq!(out.total, 1.0);
        assert_eq!(out.diagnostics.len(), 1);
    }

    fn relax_table() -> EmbeddingTable {
        EmbeddingTable::from_entries([
            ("on", vec![1.0, 0.0, 0.0]),
            ("above", vec![0.8, 0.6, 0.0]),
            ("cup", vec![0.0, 0.0, 1.0]),
            ("mug", vec![0.0, 1.0, 0.0]),
            ("table", vec![1.0, 1.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn relax_examples() {
        let gt = three_edge_gt();
        assert_eq!(hard_recall_relax(&gt, &gt, &relax_table(), 0.5).unwrap(), hard_recall(&gt, &gt, 0.5).unwrap());

        let boxes = [("cup.1", [0.0, 0.0, 10.0, 10.0]), ("table.2", [0.0, 10.0, 50.0, 40.0])];
        let gt = build(&boxes, &[("cup.1", "on", "table.2")]);
        let pred = build(&boxes, &[("cup.1", "above", "table.2")]);
        let got = hard_recall_relax(&pred, &gt, &relax_table(), 0.5).unwrap();
        assert!((got - 0.8).abs() < 1e-12);
        assert_eq!(hard_recall(&pred, &gt, 0.5).unwrap(), 0.0);

        let mug = build(
            &[("mug.1", [0.0, 0.0, 10.0, 10.0]), ("table.2", [0.0, 10.0, 50.0, 40.0])],
            &[("mug.1", "on", "table.2")],
        );
        assert_eq!(hard_recall_relax(&mug, &gt, &relax_table(), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn relax_clamps_negative_similarities() {
        let table = EmbeddingTable::from_entries([
            ("up", vec![0.0, 1.0]),
            ("down", vec![0.0, -1.0]),
            ("left", vec![1.0, 0.0]),
            ("right", vec![-1.0, 0.0]),
            ("on", vec![1.0, 1.0]),
        ])
        .unwrap();
        let gt = build(
            &[("up.1", [0.0, 0.0, 10.0, 10.0]), ("left.2", [20.0, 0.0, 30.0, 10.0])],
            &[("up.1", "on", "left.2")],
        );
        let pred = build(
            &[("down.1", [0.0, 0.0, 10.0, 10.0]), ("right.2", [20.0, 0.0, 30.0, 10.0])],
            &[("down.1", "on", "right.2")],
        );
        assert_eq!(hard_recall_relax(&pred, &gt, &table, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn repeated_triplets_cannot_borrow_neighbouring_credit() {
        let boxes = [("cup.1", [0.0, 0.0, 10.0, 10.0]), ("table.2", [0.0, 10.0, 50.0, 40.0])];
        let gt = build(&boxes, &[("cup.1", "on", "table.2"), ("cup.1", "above", "table.2")]);
        let once = build(&boxes, &[("cup.1", "on", "table.2")]);
        let twice = build(&boxes, &[("cup.1", "on", "table.2"), ("cup.1", "on", "table.2")]);
        let table = relax_table();
        let relax = |p: &SceneGraph| hard_recall_relax(p, &gt, &table, 0.5).unwrap();
        assert_eq!(relax(&once), 0.5);
        assert_eq!(relax(&twice), relax(&once));

        let w = CostWeights::default();
        let soft =
            |p: &SceneGraph| soft_edge_rewards(p, &gt, &match_nodes(p, &gt, &w, &table, &dist()), &table).unwrap();
        assert_eq!(soft(&twice), soft(&once));

        // Duplicates in ground truth are still matched by identical copies.
        assert_eq!(hard_recall(&twice, &twice, 0.5).unwrap(), 1.0);
        assert_eq!(relax(&gt), 1.0);
    }

    fn dist() -> BoxDistance {
        BoxDistance::Normalized(ImageDims::new(100.0, 100.0).unwrap())
    }

    #[test]
    fn soft_node_examples() {
        let gt = three_edge_gt();
        let w = CostWeights::default();
        let m = match_nodes(&gt, &gt, &w, &ExactMatch, &dist());
        assert_eq!(soft_node_rewards(&gt, &gt, &m, &w, &ExactMatch, &dist()).unwrap(), 3.0);

        let empty = SceneGraph::empty(gt.dims());
        let m = match_nodes(&empty, &gt, &w, &ExactMatch, &dist());
        assert_eq!(soft_node_rewards(&empty, &gt, &m, &w, &ExactMatch, &dist()).unwrap(), 0.0);

        let gt2 = build(&[("dog.1", [5.0, 5.0, 15.0, 15.0]), ("cat.2", [80.0, 80.0, 90.0, 90.0])], &[]);
        let pred = build(&[("dog.1", [0.0, 0.0, 10.0, 10.0])], &[]);
        let m = match_nodes(&pred, &gt2, &w, &ExactMatch, &dist());
        assert_eq!(m.pairs[0].gt, 0);
        let expected = (1.0 + 25.0 / 175.0 + (-0.2f64).exp()) / 2.0;
        let got = soft_node_rewards(&pred, &gt2, &m, &w, &ExactMatch, &dist()).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.98080).abs() < 1e-5);
    }

    #[test]
    fn soft_edge_examples() {
        let gt = three_edge_gt();
        let w = CostWeights::default();
        let m = match_nodes(&gt, &gt, &w, &ExactMatch, &dist());
        assert_eq!(soft_edge_rewards(&gt, &gt, &m, &ExactMatch).unwrap(), 1.0);

        // Endpoints matched, but the ground truth has no edge between them.
        let pred = build(
            &[("man.1", [0.0, 0.0, 20.0, 40.0]), ("tree.4", [70.0, 0.0, 99.0, 80.0])],
            &[("man.1", "near", "tree.4")],
        );
        let m = match_nodes(&pred, &gt, &w, &ExactMatch, &dist());
        assert_eq!(soft_edge_rewards(&pred, &gt, &m, &ExactMatch).unwrap(), 0.0);
    }

    #[test]
    fn soft_edge_planted_similarities() {
        let b = (1.0f64 - 0.81).sqrt();
        let c = (1.0f64 - 0.25).sqrt();
        let table = EmbeddingTable::from_entries([
            ("dog", vec![1.0, 0.0, 0.0, 0.0]),
            ("puppy", vec![0.9, b, 0.0, 0.0]),
            ("ball", vec![0.0, 0.0, 1.0, 0.0]),
            ("chasing", vec![0.0, 0.0, 0.0, 1.0]),
            ("near", vec![0.0, 0.0, c, 0.5]),
        ])
        .unwrap();
        let boxes_gt = [("dog.1", [0.0, 0.0, 30.0, 30.0]), ("ball.2", [50.0, 50.0, 60.0, 60.0])];
        let gt = build(&boxes_gt, &[("dog.1", "chasing", "ball.2")]);
        let pred = build(
            &[("puppy.1", [0.0, 0.0, 30.0, 30.0]), ("ball.2", [50.0, 50.0, 60.0, 60.0])],
            &[("puppy.1", "near", "ball.2")],
        );
        let m = match_nodes(&pred, &gt, &CostWeights::default(), &table, &dist());
        let got = soft_edge_rewards(&pred, &gt, &m, &table).unwrap();
        assert!((got - 0.45).abs() < 1e-12, "{got}");
    }

    #[test]
    fn candidate_reward_examples() {
        let gt = three_edge_gt();
        let cfg = RewardConfig::default();
        let garbage = candidate_reward("sorry, no", &gt, &cfg, &ExactMatch);
        assert_eq!((garbage.format, garbage.total), (0.0, 0.0));
        assert_eq!(garbage.status, ParseStatus::NoAnswerBlock);

        let perfect = candidate_reward(&respond(&gt), &gt, &cfg, &ExactMatch);
        assert_eq!((perfect.format, perfect.node_reward, perfect.edge_reward, perfect.total), (1.0, 0.0, 1.0, 2.0));
        assert_eq!(perfect.matched_triplets, 3);

        let no_edges = RawGraph { objects: gt.to_raw().objects, relationships: vec![] };
        let text = format!("<think></think><answer>{}</answer>", serde_json::to_string(&no_edges).unwrap());
        let out = candidate_reward(&text, &gt, &cfg, &ExactMatch);
        assert_eq!(out.total, 1.0);

        let soft = RewardConfig { variant: RewardVariant::SoftRecall, include_format: false, ..cfg };
        let out = candidate_reward(&respond(&gt), &gt, &soft, &ExactMatch);
        assert_eq!((out.node_reward, out.edge_reward, out.total), (3.0, 1.0, 4.0));
    }

    #[test]
    fn soft_without_dims_reports_diagnostic() {
        let raw = three_edge_gt().to_raw();
        let gt = validate_graph(&raw.objects, &raw.relationships, None, Origin::GroundTruth).unwrap().graph;
        let soft = RewardConfig { variant: RewardVariant::SoftRecall, ..RewardConfig::default() };
        let out = candidate_reward(&respond(&gt), &gt, &soft, &ExactMatch);
        assert_eq!(out.total, 1.0);
        assert!(out.diagnostics[0].contains("image dimensions"));
        let pixels = RewardConfig { l1_scale: L1Scale::Pixels, ..soft };
        assert_eq!(candidate_reward(&respond(&gt), &gt, &pixels, &ExactMatch).total, 5.0);
    }

    #[test]
    fn config_rejects_bad_threshold() {
        for t in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(RewardConfig { iou_threshold: t, ..RewardConfig::default() }.validate().is_err());
        }
        let cfg: RewardConfig = serde_json::from_str(r#"{"variant":"soft"}"#).unwrap();
        assert_eq!(cfg.variant, RewardVariant::SoftRecall);
        assert_eq!(cfg.iou_threshold, 0.5);
    }
}
