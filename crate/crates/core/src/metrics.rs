//! Geometric scoring: box overlap, node matching, the IoU reward, the
//! collision-free score and the evaluation metrics reported per scene.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::scene_graph::{Aabb, NodeId, SceneGraph};

/// Default collision tolerance in cubic meters.
pub const DEFAULT_COLLISION_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("box has zero volume")]
    ZeroVolume,
}

/// Overlap volume of two boxes: product of the per-axis 1-D overlaps.
pub fn intersection_volume(a: &Aabb, b: &Aabb) -> f64 {
    (0..3)
        .map(|axis| {
            let lo = a.min.get(axis).max(b.min.get(axis));
            let hi = a.max.get(axis).min(b.max.get(axis));
            (hi - lo).max(0.0)
        })
        .product()
}

pub fn iou3d(a: &Aabb, b: &Aabb) -> Result<f64, MetricError> {
    let (va, vb) = (a.volume(), b.volume());
    if va <= 0.0 || vb <= 0.0 {
        return Err(MetricError::ZeroVolume);
    }
    let inter = intersection_volume(a, b);
    let union = va + vb - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedBy {
    Caption,
    Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred_id: NodeId,
    pub gt_id: NodeId,
    pub iou: f64,
    pub matched_by: MatchedBy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Sorted by `pred_id`.
    pub pairs: Vec<MatchPair>,
    pub unmatched_pred: Vec<NodeId>,
    pub unmatched_gt: Vec<NodeId>,
}

impl Matching {
    pub fn iou_sum(&self) -> f64 {
        self.pairs.iter().map(|p| p.iou).sum()
    }
}

/// Lowercased, trimmed, whitespace-collapsed caption.
pub fn normalize_caption(caption: &str) -> String {
    caption
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn unique_captions(g: &SceneGraph) -> HashMap<String, NodeId> {
    let mut counts: HashMap<String, (usize, NodeId)> = HashMap::new();
    for n in g.nodes() {
        if let Some(c) = &n.caption {
            let key = normalize_caption(c);
            if key.is_empty() {
                continue;
            }
            let e = counts.entry(key).or_insert((0, n.id));
            e.0 += 1;
        }
    }
    counts
        .into_iter()
        .filter(|(_, (count, _))| *count == 1)
        .map(|(k, (_, id))| (k, id))
        .collect()
}

/// One-to-one matching: unique captions first, then greedy descending IoU.
pub fn match_nodes(pred: &SceneGraph, gt: &SceneGraph) -> Matching {
    let pred_caps = unique_captions(pred);
    let gt_caps = unique_captions(gt);

    let mut pairs = Vec::new();
    let mut used_pred = std::collections::BTreeSet::new();
    let mut used_gt = std::collections::BTreeSet::new();

    for p in pred.nodes() {
        let Some(cap) = p.caption.as_deref().map(normalize_caption) else {
            continue;
        };
        if pred_caps.get(&cap) != Some(&p.id) {
            continue;
        }
        if let Some(&gid) = gt_caps.get(&cap) {
            let g = gt.get(gid).expect("caption index points at a node");
            pairs.push(MatchPair {
                pred_id: p.id,
                gt_id: gid,
                iou: iou3d(&p.aabb(), &g.aabb()).unwrap_or(0.0),
                matched_by: MatchedBy::Caption,
            });
            used_pred.insert(p.id);
            used_gt.insert(gid);
        }
    }

    let mut candidates = Vec::new();
    for p in pred.nodes().filter(|n| !used_pred.contains(&n.id)) {
        let pb = p.aabb();
        for g in gt.nodes().filter(|n| !used_gt.contains(&n.id)) {
            let iou = iou3d(&pb, &g.aabb()).unwrap_or(0.0);
            if iou > 0.0 {
                candidates.push((iou, p.id, g.id));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (iou, pid, gid) in candidates {
        if used_pred.contains(&pid) || used_gt.contains(&gid) {
            continue;
        }
        used_pred.insert(pid);
        used_gt.insert(gid);
        pairs.push(MatchPair {
            pred_id: pid,
            gt_id: gid,
            iou,
            matched_by: MatchedBy::Geometry,
        });
    }

    pairs.sort_by_key(|p| p.pred_id);
    Matching {
        pairs,
        unmatched_pred: pred.ids().filter(|id| !used_pred.contains(id)).collect(),
        unmatched_gt: gt.ids().filter(|id| !used_gt.contains(id)).collect(),
    }
}

/// Sum of matched IoUs divided by the number of predicted nodes.
pub fn iou_reward_from(pred: &SceneGraph, matching: &Matching) -> f64 {
    if pred.is_empty() {
        log::warn!("iou_reward called with an empty prediction; scoring 0");
        return 0.0;
    }
    matching.iou_sum() / pred.len() as f64
}

pub fn iou_reward(pred: &SceneGraph, gt: &SceneGraph) -> f64 {
    iou_reward_from(pred, &match_nodes(pred, gt))
}

/// Unordered pairs of non-container nodes overlapping by more than `eps`.
pub fn colliding_pairs(g: &SceneGraph, eps: f64) -> Vec<(NodeId, NodeId)> {
    let objs: Vec<_> = g.objects().map(|n| (n.id, n.aabb())).collect();
    let mut out = Vec::new();
    for (i, (ia, a)) in objs.iter().enumerate() {
        for (ib, b) in &objs[i + 1..] {
            if intersection_volume(a, b) > eps {
                out.push((*ia, *ib));
            }
        }
    }
    out
}

/// `clamp(1 - |C| / N, 0, 1)` over non-container nodes; 1 for an empty scene.
pub fn collision_score(g: &SceneGraph, eps: f64) -> f64 {
    let n = g.objects().count();
    if n == 0 {
        return 1.0;
    }
    let c = colliding_pairs(g, eps).len();
    (1.0 - c as f64 / n as f64).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterDistance {
    /// Absent when nothing matched.
    pub mean: Option<f64>,
    pub matched: usize,
    pub unmatched_pred: usize,
    pub unmatched_gt: usize,
}

pub fn center_distance_from(pred: &SceneGraph, gt: &SceneGraph, m: &Matching) -> CenterDistance {
    let total: f64 = m
        .pairs
        .iter()
        .map(|p| {
            let a = pred.get(p.pred_id).expect("matched pred node").center_location;
            let b = gt.get(p.gt_id).expect("matched gt node").center_location;
            a.distance(b)
        })
        .sum();
    CenterDistance {
        mean: (!m.pairs.is_empty()).then(|| total / m.pairs.len() as f64),
        matched: m.pairs.len(),
        unmatched_pred: m.unmatched_pred.len(),
        unmatched_gt: m.unmatched_gt.len(),
    }
}

pub fn center_distance(pred: &SceneGraph, gt: &SceneGraph) -> CenterDistance {
    center_distance_from(pred, gt, &match_nodes(pred, gt))
}

pub fn iou_at_from(pred: &SceneGraph, m: &Matching, threshold: f64) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let hits = m.pairs.iter().filter(|p| p.iou >= threshold).count();
    hits as f64 / pred.len() as f64
}

/// Fraction of predicted nodes whose match reaches `threshold` IoU.
pub fn iou_at(pred: &SceneGraph, gt: &SceneGraph, threshold: f64) -> f64 {
    iou_at_from(pred, &match_nodes(pred, gt), threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

/// Non-container ids ordered by center coordinate along `axis`, ties by id.
pub fn axis_order(g: &SceneGraph, axis: Axis) -> Vec<NodeId> {
    let mut objs: Vec<_> = g
        .objects()
        .map(|n| (n.center_location.get(axis.index()), n.id))
        .collect();
    objs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    objs.into_iter().map(|(_, id)| id).collect()
}

/// Levenshtein distance with unit costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (row[j] + 1).min(row[j + 1] + 1).min(diag + usize::from(x != y));
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Edit distance between the predicted and ground-truth object orders.
pub fn edit_distance(pred: &SceneGraph, gt: &SceneGraph, axis: Axis) -> f64 {
    levenshtein(&axis_order(pred, axis), &axis_order(gt, axis)) as f64
}

/// Metrics for a single scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub id: String,
    pub missing: bool,
    pub iou: f64,
    /// Keyed by the threshold printed with the canonical formatter.
    pub iou_at: BTreeMap<String, f64>,
    pub center_dist: Option<f64>,
    pub collision_free: f64,
    pub edit_dist: Option<f64>,
}

pub fn threshold_key(t: f64) -> String {
    crate::scene_graph::format_number(t)
}

/// Scores one prediction against its target.
pub fn score_scene(
    id: &str,
    pred: Option<&SceneGraph>,
    gt: &SceneGraph,
    thresholds: &[f64],
    eps: f64,
    edit_axis: Option<Axis>,
) -> SceneMetrics {
    let Some(pred) = pred else {
        return SceneMetrics {
            id: id.to_string(),
            missing: true,
            iou: 0.0,
            iou_at: thresholds.iter().map(|&t| (threshold_key(t), 0.0)).collect(),
            center_dist: None,
            collision_free: 0.0,
            edit_dist: edit_axis.map(|a| axis_order(gt, a).len() as f64),
        };
    };
    let m = match_nodes(pred, gt);
    SceneMetrics {
        id: id.to_string(),
        missing: false,
        iou: iou_reward_from(pred, &m),
        iou_at: thresholds
            .iter()
            .map(|&t| (threshold_key(t), iou_at_from(pred, &m, t)))
            .collect(),
        center_dist: center_distance_from(pred, gt, &m).mean,
        collision_free: collision_score(pred, eps),
        edit_dist: edit_axis.map(|a| edit_distance(pred, gt, a)),
    }
}

/// Dataset-level means over per-scene records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: usize,
    pub missing: usize,
    pub mean_iou: f64,
    pub iou_at: BTreeMap<String, f64>,
    /// Mean over scenes where at least one pair matched.
    pub center_dist: Option<f64>,
    pub center_dist_scenes: usize,
    pub collision_free: f64,
    pub edit_dist: Option<f64>,
    pub per_scene: Vec<SceneMetrics>,
}

impl EvalReport {
    /// Arithmetic means, reduced in the order given.
    pub fn aggregate(per_scene: Vec<SceneMetrics>) -> Self {
        let n = per_scene.len();
        let mean = |total: f64, count: usize| if count == 0 { 0.0 } else { total / count as f64 };

        let mut iou = 0.0;
        let mut coll = 0.0;
        let mut ctr = (0.0, 0usize);
        let mut edit = (0.0, 0usize);
        let mut at: BTreeMap<String, f64> = BTreeMap::new();
        for s in &per_scene {
            iou += s.iou;
            coll += s.collision_free;
            if let Some(d) = s.center_dist {
                ctr.0 += d;
                ctr.1 += 1;
            }
            if let Some(e) = s.edit_dist {
                edit.0 += e;
                edit.1 += 1;
            }
            for (k, v) in &s.iou_at {
                *at.entry(k.clone()).or_insert(0.0) += v;
            }
        }
        EvalReport {
            scenes: n,
            missing: per_scene.iter().filter(|s| s.missing).count(),
            mean_iou: mean(iou, n),
            iou_at: at.into_iter().map(|(k, v)| (k, mean(v, n))).collect(),
            center_dist: (ctr.1 > 0).then(|| ctr.0 / ctr.1 as f64),
            center_dist_scenes: ctr.1,
            collision_free: mean(coll, n),
            edit_dist: (edit.1 > 0).then(|| edit.0 / edit.1 as f64),
            per_scene,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::{Node, Vec3};
    use proptest::prelude::*;

    fn unit_at(x: f64, y: f64, z: f64) -> Aabb {
        Aabb::from_center(Vec3::new(x, y, z), Vec3::new(1.0, 1.0, 1.0))
    }

    fn cube(id: NodeId, x: f64, y: f64) -> Node {
        Node::object(id, Vec3::new(x, y, 0.5), Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn intersection_examples() {
        assert_eq!(
            intersection_volume(&unit_at(0.0, 0.0, 0.0), &unit_at(0.0, 0.0, 0.0)),
            1.0
        );
        assert_eq!(
            intersection_volume(&unit_at(0.0, 0.0, 0.0), &unit_at(2.0, 0.0, 0.0)),
            0.0
        );
        assert_eq!(
            intersection_volume(&unit_at(0.0, 0.0, 0.0), &unit_at(0.5, 0.0, 0.0)),
            0.5
        );
    }

    #[test]
    fn iou_examples() {
        let a = unit_at(0.0, 0.0, 0.0);
        assert_eq!(iou3d(&a, &a).unwrap(), 1.0);
        assert_eq!(iou3d(&a, &unit_at(2.0, 0.0, 0.0)).unwrap(), 0.0);
        let third = iou3d(&a, &unit_at(0.5, 0.0, 0.0)).unwrap();
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        let flat = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.0));
        assert_eq!(iou3d(&a, &flat), Err(MetricError::ZeroVolume));
    }

    #[test]
    fn caption_matching_identity() {
        let g = SceneGraph::from_nodes([
            cube(0, 0.0, 0.0).with_caption("Red  Cube"),
            cube(1, 3.0, 0.0).with_caption("blue cube"),
        ])
        .unwrap();
        let m = match_nodes(&g, &g);
        assert_eq!(m.pairs.len(), 2);
        assert!(m
            .pairs
            .iter()
            .all(|p| p.matched_by == MatchedBy::Caption && p.iou == 1.0));
        assert_eq!(normalize_caption("  Red \t Cube "), "red cube");
    }

    #[test]
    fn duplicate_captions_fall_back_to_geometry() {
        let pred = SceneGraph::from_nodes([
            cube(0, 0.1, 0.0).with_caption("mug"),
            cube(1, 3.1, 0.0).with_caption("mug"),
        ])
        .unwrap();
        let gt = SceneGraph::from_nodes([
            cube(5, 3.0, 0.0).with_caption("mug"),
            cube(6, 0.0, 0.0).with_caption("mug"),
        ])
        .unwrap();
        let m = match_nodes(&pred, &gt);
        let pairs: Vec<_> = m.pairs.iter().map(|p| (p.pred_id, p.gt_id, p.matched_by)).collect();
        assert_eq!(pairs, vec![(0, 6, MatchedBy::Geometry), (1, 5, MatchedBy::Geometry)]);
    }

    #[test]
    fn surplus_prediction_is_unmatched() {
        let gt = SceneGraph::from_nodes([cube(0, 0.0, 0.0), cube(1, 2.0, 0.0), cube(2, 4.0, 0.0)]).unwrap();
        let mut pred = gt.clone();
        pred.insert(cube(9, 50.0, 50.0)).unwrap();
        let m = match_nodes(&pred, &gt);
        assert_eq!(m.unmatched_pred, vec![9]);
        assert!(m.unmatched_gt.is_empty());
        // 3 perfect pairs over 4 predicted nodes.
        assert_eq!(iou_reward(&pred, &gt), 0.75);
        assert_eq!(iou_reward(&gt, &gt), 1.0);
    }

    #[test]
    fn disjoint_graphs_score_zero() {
        let a = SceneGraph::from_nodes([cube(0, 0.0, 0.0)]).unwrap();
        let b = SceneGraph::from_nodes([cube(0, 10.0, 0.0)]).unwrap();
        assert_eq!(iou_reward(&a, &b), 0.0);
        assert_eq!(iou_reward(&SceneGraph::new(), &b), 0.0);
        assert_eq!(center_distance(&a, &b).mean, None);
    }

    /// Brute force over every one-to-one assignment, maximizing total IoU.
    fn best_assignment_total(pred: &[Aabb], gt: &[Aabb]) -> f64 {
        fn rec(i: usize, pred: &[Aabb], gt: &[Aabb], used: &mut Vec<bool>) -> f64 {
            if i == pred.len() {
                return 0.0;
            }
            let mut best = rec(i + 1, pred, gt, used);
            for j in 0..gt.len() {
                if !used[j] {
                    used[j] = true;
                    let v = iou3d(&pred[i], &gt[j]).unwrap() + rec(i + 1, pred, gt, used);
                    used[j] = false;
                    best = best.max(v);
                }
            }
            best
        }
        rec(0, pred, gt, &mut vec![false; gt.len()])
    }

    #[test]
    fn greedy_recovers_permutation_on_small_instances() {
        // Six boxes on a line, predictions jittered by less than the spacing.
        let xs = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
        let gt = SceneGraph::from_nodes(xs.iter().enumerate().map(|(i, &x)| cube(i as u32, x, 0.0))).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let jitter = [0.1, -0.2, 0.05, 0.3, -0.1, 0.2];
        let pred = SceneGraph::from_nodes(
            perm.iter()
                .enumerate()
                .map(|(i, &p)| cube(i as u32 + 10, xs[p] + jitter[i], 0.1)),
        )
        .unwrap();
        let m = match_nodes(&pred, &gt);
        for p in &m.pairs {
            assert_eq!(p.gt_id as usize, perm[(p.pred_id - 10) as usize]);
        }
        let pb: Vec<_> = pred.nodes().map(|n| n.aabb()).collect();
        let gb: Vec<_> = gt.nodes().map(|n| n.aabb()).collect();
        assert!((m.iou_sum() - best_assignment_total(&pb, &gb)).abs() < 1e-12);
    }

    #[test]
    fn collision_examples() {
        let five = SceneGraph::from_nodes((0..5).map(|i| cube(i, i as f64 * 2.0, 0.0))).unwrap();
        assert_eq!(collision_score(&five, DEFAULT_COLLISION_EPS), 1.0);

        let one = SceneGraph::from_nodes([cube(0, 0.0, 0.0), cube(1, 0.5, 0.0), cube(2, 5.0, 0.0)]).unwrap();
        assert!((collision_score(&one, DEFAULT_COLLISION_EPS) - 2.0 / 3.0).abs() < 1e-12);

        let all = SceneGraph::from_nodes([cube(0, 0.0, 0.0), cube(1, 0.2, 0.0), cube(2, 0.4, 0.0)]).unwrap();
        assert_eq!(colliding_pairs(&all, DEFAULT_COLLISION_EPS).len(), 3);
        assert_eq!(collision_score(&all, DEFAULT_COLLISION_EPS), 0.0);

        // Containers never collide.
        let shelf = SceneGraph::from_nodes([
            Node::container(0, Vec3::new(0.0, 0.0, 0.5), Vec3::new(4.0, 4.0, 1.0)),
            cube(1, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(collision_score(&shelf, DEFAULT_COLLISION_EPS), 1.0);
        assert_eq!(collision_score(&SceneGraph::new(), DEFAULT_COLLISION_EPS), 1.0);
    }

    #[test]
    fn center_distance_examples() {
        let gt = SceneGraph::from_nodes([cube(0, 0.0, 0.0).with_caption("a")]).unwrap();
        assert_eq!(center_distance(&gt, &gt).mean, Some(0.0));
        let shifted = gt.translated(Vec3::new(3.0, 4.0, 0.0));
        // Caption match keeps the pair even without overlap.
        assert_eq!(center_distance(&shifted, &gt).mean, Some(5.0));

        let gt2 = SceneGraph::from_nodes([
            cube(0, 0.0, 0.0).with_caption("a"),
            cube(1, 10.0, 0.0).with_caption("b"),
        ])
        .unwrap();
        let pred2 = SceneGraph::from_nodes([
            cube(0, 1.0, 0.0).with_caption("a"),
            cube(1, 13.0, 0.0).with_caption("b"),
        ])
        .unwrap();
        let cd = center_distance(&pred2, &gt2);
        assert_eq!(cd.mean, Some(2.0));
        assert_eq!(cd.matched, 2);
    }

    #[test]
    fn iou_at_examples() {
        let gt = SceneGraph::from_nodes((0..4).map(|i| cube(i, i as f64 * 3.0, 0.0))).unwrap();
        assert_eq!(iou_at(&gt, &gt, 0.5), 1.0);
        let third = gt.translated(Vec3::new(0.5, 0.0, 0.0));
        assert_eq!(iou_at(&third, &gt, 0.5), 0.0);
        let mixed = SceneGraph::from_nodes([
            cube(0, 0.0, 0.0),
            cube(1, 3.0, 0.0),
            cube(2, 6.5, 0.0),
            cube(3, 9.5, 0.0),
        ])
        .unwrap();
        assert_eq!(iou_at(&mixed, &gt, 0.5), 0.5);
    }

    #[test]
    fn edit_distance_examples() {
        let row = |xs: &[(u32, f64)]| SceneGraph::from_nodes(xs.iter().map(|&(id, x)| cube(id, x, 0.0))).unwrap();
        let gt = row(&[(1, 0.0), (2, 2.0), (3, 4.0)]);
        assert_eq!(edit_distance(&gt, &gt, Axis::X), 0.0);
        let swapped = row(&[(1, 0.0), (3, 2.0), (2, 4.0)]);
        assert_eq!(edit_distance(&swapped, &gt, Axis::X), 2.0);
        let missing = row(&[(1, 0.0), (3, 4.0)]);
        assert!(edit_distance(&missing, &gt, Axis::X) >= 1.0);
        // Ties on the axis fall back to id order.
        let tied = row(&[(2, 0.0), (1, 0.0)]);
        assert_eq!(axis_order(&tied, Axis::X), vec![1, 2]);
        assert_eq!(levenshtein::<u8>(&[], &[1, 2]), 2);
    }

    #[test]
    fn missing_scene_scores_zero() {
        let gt = SceneGraph::from_nodes([cube(0, 0.0, 0.0), cube(1, 2.0, 0.0)]).unwrap();
        let s = score_scene("a", None, &gt, &[0.5], DEFAULT_COLLISION_EPS, Some(Axis::X));
        assert!(s.missing);
        assert_eq!(s.iou, 0.0);
        assert_eq!(s.collision_free, 0.0);
        assert_eq!(s.edit_dist, Some(2.0));
        let full = score_scene("b", Some(&gt), &gt, &[0.5], DEFAULT_COLLISION_EPS, Some(Axis::X));
        let r = EvalReport::aggregate(vec![full, s]);
        assert_eq!(r.mean_iou, 0.5);
        assert_eq!(r.iou_at["0.5"], 0.5);
        assert_eq!(r.center_dist, Some(0.0));
        assert_eq!(r.missing, 1);
    }

    fn arb_box() -> impl Strategy<Value = Aabb> {
        (
            (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0),
            (0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0),
        )
            .prop_map(|(c, d)| Aabb::from_center(Vec3::new(c.0, c.1, c.2), Vec3::new(d.0, d.1, d.2)))
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou3d(&a, &b).unwrap();
            prop_assert_eq!(ab, iou3d(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou3d(&a, &a).unwrap(), 1.0);
            let inter = intersection_volume(&a, &b);
            prop_assert!(inter <= a.volume().min(b.volume()) * (1.0 + 1e-12));
        }

        #[test]
        fn metrics_invariant_under_common_translation(
            boxes in proptest::collection::vec((-8i32..8, -8i32..8, 1i32..4), 1..6),
            shift in (-20i32..20, -20i32..20),
        ) {
            let g = SceneGraph::from_nodes(boxes.iter().enumerate().map(|(i, b)| {
                Node::object(i as u32, Vec3::new(b.0 as f64 * 0.25, b.1 as f64 * 0.25, 0.5), Vec3::new(b.2 as f64 * 0.5, 1.0, 1.0))
            })).unwrap();
            let pred = g.translated(Vec3::new(0.25, -0.125, 0.0));
            let t = Vec3::new(shift.0 as f64 * 0.5, shift.1 as f64 * 0.5, 0.0);
            let (g2, pred2) = (g.translated(t), pred.translated(t));
            prop_assert_eq!(iou_reward(&pred, &g), iou_reward(&pred2, &g2));
            prop_assert_eq!(collision_score(&pred, 1e-6), collision_score(&pred2, 1e-6));
            let (c1, c2) = (center_distance(&pred, &g).mean, center_distance(&pred2, &g2).mean);
            prop_assert_eq!(c1.is_some(), c2.is_some());
            if let (Some(a), Some(b)) = (c1, c2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn matching_is_one_to_one_and_deterministic(
            a in proptest::collection::vec((-4i32..4, -4i32..4), 0..7),
            b in proptest::collection::vec((-4i32..4, -4i32..4), 0..7),
        ) {
            let mk = |v: &Vec<(i32, i32)>| SceneGraph::from_nodes(v.iter().enumerate().map(|(i, p)| cube(i as u32, p.0 as f64 * 0.5, p.1 as f64 * 0.5))).unwrap();
            let (pa, gb) = (mk(&a), mk(&b));
            let m = match_nodes(&pa, &gb);
            let mut ps: Vec<_> = m.pairs.iter().map(|p| p.pred_id).collect();
            let mut gs: Vec<_> = m.pairs.iter().map(|p| p.gt_id).collect();
            ps.dedup();
            gs.sort();
            gs.dedup();
            prop_assert_eq!(ps.len(), m.pairs.len());
            prop_assert_eq!(gs.len(), m.pairs.len());
            prop_assert_eq!(ps.len() + m.unmatched_pred.len(), pa.len());
            prop_assert_eq!(serde_json::to_string(&m).unwrap(), serde_json::to_string(&match_nodes(&pa, &gb)).unwrap());
        }
    }
}
