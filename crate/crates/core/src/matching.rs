//! Minimum-cost one-to-one matching between predicted and ground-truth nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::LabelSimilarity;
use crate::geometry::{iou, BoxDistance};
use crate::graph::{ObjectNode, SceneGraph};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("cost weights must be finite, nonnegative and not all zero (got {lambda1}, {lambda2}, {lambda3})")]
pub struct WeightsError {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Weights of the label, IoU and L1 terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct CostWeights {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
}

impl TryFrom<RawWeights> for CostWeights {
    type Error = WeightsError;
    fn try_from(w: RawWeights) -> Result<Self, Self::Error> {
        CostWeights::new(w.lambda1, w.lambda2, w.lambda3)
    }
}

impl From<CostWeights> for RawWeights {
    fn from(w: CostWeights) -> Self {
        RawWeights { lambda1: w.lambda1, lambda2: w.lambda2, lambda3: w.lambda3 }
    }
}

impl CostWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self, WeightsError> {
        let ok =
            [lambda1, lambda2, lambda3].iter().all(|l| l.is_finite() && *l >= 0.0) && lambda1 + lambda2 + lambda3 > 0.0;
        if ok {
            Ok(Self { lambda1, lambda2, lambda3 })
        } else {
            Err(WeightsError { lambda1, lambda2, lambda3 })
        }
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }
    pub fn lambda3(&self) -> f64 {
        self.lambda3
    }

    pub fn sum(&self) -> f64 {
        self.lambda1 + self.lambda2 + self.lambda3
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { lambda1: 1.0, lambda2: 1.0, lambda3: 1.0 }
    }
}

/// `λ1·(1 − sim) + λ2·(1 − IoU) + λ3·L1`. Not clamped: a negative label
/// similarity pushes the first term above λ1.
pub fn node_cost(
    pred: &ObjectNode,
    gt: &ObjectNode,
    weights: &CostWeights,
    similarity: &dyn LabelSimilarity,
    distance: &BoxDistance,
) -> f64 {
    let sim = similarity.similarity(&pred.class_label, &gt.class_label);
    weights.lambda1 * (1.0 - sim)
        + weights.lambda2 * (1.0 - iou(&pred.bbox, &gt.bbox))
        + weights.lambda3 * distance.between(&pred.bbox, &gt.bbox)
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Optimal assignment for a finite cost matrix. Returns, for each row, the
/// assigned column; exactly `min(rows, cols)` rows are assigned.
///
/// The matrix is padded to square with a constant sentinel larger than any
/// real assignment, solved with the shortest-augmenting-path Hungarian
/// method, then canonicalized so that among equal-cost alternatives lower
/// row (then column) indices are matched first.
pub fn solve_assignment(costs: &CostMatrix) -> Vec<Option<usize>> {
    let (m, n) = (costs.rows, costs.cols);
    if m == 0 || n == 0 {
        return vec![None; m];
    }
    let size = m.max(n);
    let max_entry = costs.data.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let sentinel = 1.0 + max_entry * size as f64;
    let at = |r: usize, c: usize| if r < m && c < n { costs.get(r, c) } else { sentinel };

    // 1-based potentials; column 0 is the virtual root.
    let mut u = vec![0.0f64; size + 1];
    let mut v = vec![0.0f64; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for row in 1..=size {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=size {
                if used[col] {
                    continue;
                }
                let reduced = at(r0 - 1, col - 1) - u[r0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=size {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; m];
    for (col, &row) in owner.iter().enumerate().take(size + 1).skip(1) {
        if row >= 1 && row <= m && col <= n {
            assignment[row - 1] = Some(col - 1);
        }
    }
    prefer_lower_indices(costs, &mut assignment);
    assignment
}

/// Move matches onto lower-index rows/columns wherever that costs nothing.
fn prefer_lower_indices(costs: &CostMatrix, assignment: &mut [Option<usize>]) {
    let mut changed = true;
    while changed {
        changed = false;
        for free in 0..assignment.len() {
            if assignment[free].is_some() {
                continue;
            }
            for taken in free + 1..assignment.len() {
                if let Some(col) = assignment[taken] {
                    if costs.get(free, col) == costs.get(taken, col) {
                        assignment[free] = Some(col);
                        assignment[taken] = None;
                        changed = true;
                        break;
                    }
                }
            }
        }
        let mut col_used = vec![false; costs.cols];
        assignment.iter().flatten().for_each(|&c| col_used[c] = true);
        for (row, slot) in assignment.iter_mut().enumerate() {
            let Some(col) = *slot else { continue };
            if let Some(lower) = (0..col).find(|&c| !col_used[c] && costs.get(row, c) == costs.get(row, col)) {
                col_used[col] = false;
                col_used[lower] = true;
                *slot = Some(lower);
                changed = true;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

impl MatchResult {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.cost).sum()
    }

    /// Ground-truth index for each predicted node, `None` when unmatched.
    pub fn gt_for_pred(&self, pred_len: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; pred_len];
        for p in &self.pairs {
            out[p.pred] = Some(p.gt);
        }
        out
    }

    fn from_assignment(costs: &CostMatrix, assignment: &[Option<usize>]) -> Self {
        let mut gt_used = vec![false; costs.cols];
        let mut result = MatchResult::default();
        for (pred, slot) in assignment.iter().enumerate() {
            match *slot {
                Some(gt) => {
                    gt_used[gt] = true;
                    result.pairs.push(MatchedPair { pred, gt, cost: costs.get(pred, gt) });
                }
                None => result.unmatched_pred.push(pred),
            }
        }
        result.unmatched_gt = (0..costs.cols).filter(|&g| !gt_used[g]).collect();
        result
    }
}

/// Build the node cost matrix between two graphs.
pub fn cost_matrix(
    pred: &SceneGraph,
    gt: &SceneGraph,
    weights: &CostWeights,
    similarity: &dyn LabelSimilarity,
    distance: &BoxDistance,
) -> CostMatrix {
    CostMatrix::from_fn(pred.nodes().len(), gt.nodes().len(), |r, c| {
        node_cost(&pred.nodes()[r], &gt.nodes()[c], weights, similarity, distance)
    })
}

/// Globally cost-minimal one-to-one node matching.
pub fn match_nodes(
    pred: &SceneGraph,
    gt: &SceneGraph,
    weights: &CostWeights,
    similarity: &dyn LabelSimilarity,
    distance: &BoxDistance,
) -> MatchResult {
    let costs = cost_matrix(pred, gt, weights, similarity, distance);
    MatchResult::from_assignment(&costs, &solve_assignment(&costs))
}
