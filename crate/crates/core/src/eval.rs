//! SGDET corpus evaluation: triplet Recall, per-predicate mean Recall,
//! object AP@50 and Failure Rate.
//!
//! Each image is reduced independently to an [`ImageEval`]; a
//! [`CorpusAccumulator`] then folds those in image order. Count maps merge in
//! any order, but the detection flag lists are concatenated, so AP depends on
//! the order images are added (all predictions carry the same confidence and
//! ties go to emission order).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::iou;
use crate::graph::SceneGraph;
use crate::parser::{ParseMode, ParseStatus};
use crate::rewards::{greedy_triplet_matches, same_labels, IouGate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    EmptyCorpus,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Boxes match when IoU is at least this.
    pub iou_threshold: f64,
    /// Keep only the first `top_k` predicted triplets per image.
    pub top_k: Option<usize>,
    pub parse_mode: ParseMode,
    /// Predicates always listed in the per-predicate table.
    pub predicate_vocabulary: Option<Vec<String>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, top_k: None, parse_mode: ParseMode::Lenient, predicate_vocabulary: None }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.top_k == Some(0) {
            return Err(EvalError::InvalidConfig("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// True-positive and ground-truth triplet counts keyed by predicate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImageRecall {
    pub tp_per_predicate: BTreeMap<String, u64>,
    pub gt_per_predicate: BTreeMap<String, u64>,
}

impl ImageRecall {
    pub fn tp(&self) -> u64 {
        self.tp_per_predicate.values().sum()
    }

    pub fn gt(&self) -> u64 {
        self.gt_per_predicate.values().sum()
    }
}

/// Triplet matching for one image with a `>=` IoU gate and exact labels.
/// `pred = None` stands for a failed parse: no hits, full ground-truth counts.
pub fn image_recall(pred: Option<&SceneGraph>, gt: &SceneGraph, cfg: &EvalConfig) -> ImageRecall {
    let mut out = ImageRecall::default();
    for e in gt.edges() {
        *out.gt_per_predicate.entry(e.predicate.clone()).or_default() += 1;
    }
    for p in out.gt_per_predicate.keys() {
        out.tp_per_predicate.insert(p.clone(), 0);
    }
    let Some(pred) = pred else {
        return out;
    };
    let edges = match cfg.top_k {
        Some(k) if k < pred.edges().len() => &pred.edges()[..k],
        _ => pred.edges(),
    };
    let matches = greedy_triplet_matches(pred, edges, gt, IouGate::AtLeast(cfg.iou_threshold), |pe, ge| {
        if same_labels(pred, pe, gt, ge) {
            1.0
        } else {
            0.0
        }
    });
    for m in matches {
        *out.tp_per_predicate.entry(gt.edges()[m.gt].predicate.clone()).or_default() += 1;
    }
    out
}

/// Detection outcomes for one object class, in emission order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ClassDetections {
    pub hits: Vec<bool>,
    pub gt_count: u64,
}

/// Greedily match predicted boxes to ground-truth boxes of the same class
/// (highest IoU first, IoU >= threshold, each ground-truth box used once).
pub fn image_detections(
    pred: Option<&SceneGraph>,
    gt: &SceneGraph,
    iou_threshold: f64,
) -> BTreeMap<String, ClassDetections> {
    let mut out: BTreeMap<String, ClassDetections> = BTreeMap::new();
    for n in gt.nodes() {
        out.entry(n.class_label.clone()).or_default().gt_count += 1;
    }
    let Some(pred) = pred else {
        return out;
    };
    let mut used = vec![false; gt.nodes().len()];
    for v in pred.nodes() {
        let mut best: Option<(usize, f64)> = None;
        for (g, n) in gt.nodes().iter().enumerate() {
            if used[g] || n.class_label != v.class_label {
                continue;
            }
            let overlap = iou(&v.bbox, &n.bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        out.entry(v.class_label.clone()).or_default().hits.push(best.is_some());
    }
    out
}

/// All-points interpolated average precision of a ranked hit list.
pub fn average_precision(hits: &[bool], gt_count: u64) -> f64 {
    if gt_count == 0 || hits.is_empty() {
        return 0.0;
    }
    let mut tp = 0u64;
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    for (i, &hit) in hits.iter().enumerate() {
        tp += u64::from(hit);
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

/// One image's contribution to the corpus metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageEval {
    pub failed: bool,
    pub recall: ImageRecall,
    pub detections: BTreeMap<String, ClassDetections>,
}

/// A prediction paired with its ground truth. `prediction` is ignored unless
/// `status` is [`ParseStatus::Ok`].
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub status: ParseStatus,
    pub prediction: Option<SceneGraph>,
    pub gt: SceneGraph,
}

pub fn evaluate_image(
    status: ParseStatus,
    prediction: Option<&SceneGraph>,
    gt: &SceneGraph,
    cfg: &EvalConfig,
) -> ImageEval {
    let pred = prediction.filter(|_| status == ParseStatus::Ok);
    ImageEval {
        failed: pred.is_none(),
        recall: image_recall(pred, gt, cfg),
        detections: image_detections(pred, gt, cfg.iou_threshold),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredicateRecall {
    /// Percentage.
    pub recall: f64,
    pub tp: u64,
    pub gt_count: u64,
}

/// Corpus metrics; rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Micro-average: all hits over all ground-truth triplets.
    pub recall: f64,
    /// Macro-average over predicates that occur in ground truth.
    pub mean_recall: f64,
    /// Mean of per-image recalls over images with at least one triplet.
    pub image_mean_recall: f64,
    pub per_predicate_recall: BTreeMap<String, PredicateRecall>,
    pub ap50: f64,
    pub failure_rate: f64,
    pub images_total: u64,
    pub images_failed: u64,
    pub images_empty_gt: u64,
}

impl EvalReport {
    /// `predicate,gt_count,recall` rows sorted by descending frequency.
    pub fn per_predicate_csv(&self) -> String {
        let mut rows: Vec<_> = self.per_predicate_recall.iter().collect();
        rows.sort_by(|a, b| b.1.gt_count.cmp(&a.1.gt_count).then_with(|| a.0.cmp(b.0)));
        let mut out = String::from("predicate,gt_count,recall\n");
        for (predicate, r) in rows {
            let name = if predicate.contains([',', '"']) {
                format!("\"{}\"", predicate.replace('"', "\"\""))
            } else {
                predicate.clone()
            };
            out.push_str(&format!("{name},{},{:.4}\n", r.gt_count, r.recall));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusAccumulator {
    images_total: u64,
    images_failed: u64,
    images_empty_gt: u64,
    tp: BTreeMap<String, u64>,
    gt: BTreeMap<String, u64>,
    image_recall_sum: f64,
    images_with_triplets: u64,
    classes: BTreeMap<String, ClassDetections>,
}

impl CorpusAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, image: ImageEval) {
        self.images_total += 1;
        self.images_failed += u64::from(image.failed);
        let gt_total = image.recall.gt();
        if gt_total == 0 {
            self.images_empty_gt += 1;
        } else {
            self.images_with_triplets += 1;
            self.image_recall_sum += image.recall.tp() as f64 / gt_total as f64;
        }
        for (p, n) in image.recall.tp_per_predicate {
            *self.tp.entry(p).or_default() += n;
        }
        for (p, n) in image.recall.gt_per_predicate {
            *self.gt.entry(p).or_default() += n;
        }
        for (class, det) in image.detections {
            let slot = self.classes.entry(class).or_default();
            slot.gt_count += det.gt_count;
            slot.hits.extend(det.hits);
        }
    }

    /// Append another accumulator that covers the images after this one.
    pub fn merge(&mut self, other: CorpusAccumulator) {
        self.images_total += other.images_total;
        self.images_failed += other.images_failed;
        self.images_empty_gt += other.images_empty_gt;
        self.image_recall_sum += other.image_recall_sum;
        self.images_with_triplets += other.images_with_triplets;
        for (p, n) in other.tp {
            *self.tp.entry(p).or_default() += n;
        }
        for (p, n) in other.gt {
            *self.gt.entry(p).or_default() += n;
        }
        for (class, det) in other.classes {
            let slot = self.classes.entry(class).or_default();
            slot.gt_count += det.gt_count;
            slot.hits.extend(det.hits);
        }
    }

    pub fn images_total(&self) -> u64 {
        self.images_total
    }

    pub fn finish(self, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
        if self.images_total == 0 {
            return Err(EvalError::EmptyCorpus);
        }
        let pct = |num: f64, den: f64| if den > 0.0 { 100.0 * num / den } else { 0.0 };

        let mut per_predicate = BTreeMap::new();
        for (p, &gt_count) in &self.gt {
            let tp = self.tp.get(p).copied().unwrap_or(0);
            per_predicate.insert(p.clone(), PredicateRecall { recall: pct(tp as f64, gt_count as f64), tp, gt_count });
        }
        for p in cfg.predicate_vocabulary.iter().flatten() {
            per_predicate.entry(crate::graph::normalize_label(p)).or_insert(PredicateRecall {
                recall: 0.0,
                tp: 0,
                gt_count: 0,
            });
        }
        let present: Vec<f64> = per_predicate.values().filter(|r| r.gt_count > 0).map(|r| r.recall).collect();
        let mean_recall = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };

        let tp_total: u64 = self.tp.values().sum();
        let gt_total: u64 = self.gt.values().sum();

        let aps: Vec<f64> =
            self.classes.values().filter(|c| c.gt_count > 0).map(|c| average_precision(&c.hits, c.gt_count)).collect();
        let ap50 = if aps.is_empty() { 0.0 } else { 100.0 * aps.iter().sum::<f64>() / aps.len() as f64 };

        Ok(EvalReport {
            recall: pct(tp_total as f64, gt_total as f64),
            mean_recall,
            image_mean_recall: pct(self.image_recall_sum, self.images_with_triplets as f64),
            per_predicate_recall: per_predicate,
            ap50,
            failure_rate: pct(self.images_failed as f64, self.images_total as f64),
            images_total: self.images_total,
            images_failed: self.images_failed,
            images_empty_gt: self.images_empty_gt,
        })
    }
}

/// Evaluate a whole corpus in record order.
pub fn corpus_metrics(
    records: impl IntoIterator<Item = EvalRecord>,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let mut acc = CorpusAccumulator::new();
    for r in records {
        acc.add(evaluate_image(r.status, r.prediction.as_ref(), &r.gt, cfg));
    }
    acc.finish(cfg)
}
