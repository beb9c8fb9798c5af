use std::collections::BTreeMap;

use super::{move_node, Pose, SolveError, SolveResult};
use crate::benchgen::GridSpec;
use crate::metrics::normalize_caption;
use crate::scene_graph::{canonical_f64, Node, NodeId, SceneGraph, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentConfig {
    /// Objects farther than this many pitches from every lattice point are
    /// treated as displaced.
    pub outlier_fraction: f64,
    /// Coordinates closer than this share a grid line, meters.
    pub line_tolerance: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            outlier_fraction: 0.25,
            line_tolerance: 1e-6,
        }
    }
}

fn canonical(v: Vec3) -> Vec3 {
    Vec3::new(canonical_f64(v.x), canonical_f64(v.y), canonical_f64(v.z))
}

/// Clusters sorted values whose neighbours lie within `tol`; returns
/// (representative, count) with the first member as representative.
fn line_clusters(mut values: Vec<f64>, tol: f64) -> Vec<(f64, usize)> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for v in values {
        match out.last_mut() {
            Some(c) if v - last <= tol => c.1 += 1,
            _ => out.push((v, 1)),
        }
        last = v;
    }
    out
}

fn lower_median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// Sorted line coordinates with interior gaps filled by interpolation.
/// Returns the lines and the fitted pitch.
fn fill_lines(lines: &[f64], fraction: f64) -> (Vec<f64>, Option<f64>) {
    let pitch = lower_median(lines.windows(2).map(|w| w[1] - w[0]).collect());
    let Some(p) = pitch else {
        return (lines.to_vec(), None);
    };
    let mut out = vec![lines[0]];
    for w in lines.windows(2) {
        let d = w[1] - w[0];
        let k = (d / p).round();
        if k >= 2.0 && (d - k * p).abs() <= fraction * p {
            for j in 1..k as usize {
                out.push(w[0] + d * j as f64 / k);
            }
        }
        out.push(w[1]);
    }
    (out, Some(p))
}

fn nearest(lines: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, &l) in lines.iter().enumerate() {
        if (l - v).abs() < (lines[best] - v).abs() {
            best = i;
        }
    }
    best
}

fn modal_rotation(nodes: &[&Node]) -> Vec3 {
    let mut counts: BTreeMap<[u64; 3], (usize, Vec3)> = BTreeMap::new();
    for n in nodes {
        let r = n.rotation;
        let key = [r.x.to_bits(), r.y.to_bits(), r.z.to_bits()];
        counts.entry(key).or_insert((0, r)).0 += 1;
    }
    let best = counts.values().map(|(c, _)| *c).max().unwrap_or(0);
    counts
        .values()
        .filter(|(c, _)| *c == best)
        .map(|(_, r)| *r)
        .min_by(|a, b| a.z.total_cmp(&b.z).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y)))
        .unwrap_or(Vec3::ZERO)
}

pub fn solve_alignment(
    g0: &SceneGraph,
    hint: Option<&GridSpec>,
    cfg: &AlignmentConfig,
) -> Result<SolveResult, SolveError> {
    match hint {
        Some(spec) => solve_with_hint(g0, spec),
        None => solve_inferred(g0, cfg),
    }
}

fn solve_with_hint(g0: &SceneGraph, spec: &GridSpec) -> Result<SolveResult, SolveError> {
    let mut g = g0.clone();
    let mut steps = Vec::new();
    for &id in &spec.perturbed_ids {
        let node = g0.get(id).ok_or(SolveError::MissingNode(id))?;
        let (row, col) = spec
            .cell_of(id)
            .ok_or_else(|| SolveError::Invalid(format!("node {id} has no grid cell")))?;
        let cell = spec.cell_center(row, col);
        let yaw = spec
            .yaw_for_row(row)
            .ok_or_else(|| SolveError::Invalid(format!("row {row} has no canonical rotation")))?;
        let pose = Pose {
            center: canonical(Vec3::new(cell.x, cell.y, node.center_location.z)),
            rotation: Vec3::new(0.0, 0.0, canonical_f64(yaw)),
        };
        move_node(&mut g, &mut steps, id, pose, &format!("return to cell ({row}, {col})"));
    }
    Ok(SolveResult {
        graph: g,
        residual: 0.0,
        steps,
    })
}

fn solve_inferred(g0: &SceneGraph, cfg: &AlignmentConfig) -> Result<SolveResult, SolveError> {
    let objects: Vec<&Node> = g0.objects().collect();
    if objects.is_empty() {
        return Ok(SolveResult {
            graph: g0.clone(),
            residual: 0.0,
            steps: Vec::new(),
        });
    }
    let tol = cfg.line_tolerance;

    // Rows: y coordinates shared by at least two objects.
    let row_lines: Vec<f64> = line_clusters(objects.iter().map(|n| n.center_location.y).collect(), tol)
        .into_iter()
        .filter(|&(_, c)| c >= 2)
        .map(|(v, _)| v)
        .collect();
    if row_lines.is_empty() {
        return Err(SolveError::Infeasible("no grid row has two objects in place".into()));
    }
    let on_row = |n: &Node| row_lines.iter().position(|&y| (n.center_location.y - y).abs() <= tol);
    let anchors: Vec<(usize, &Node)> = objects.iter().filter_map(|n| on_row(n).map(|r| (r, *n))).collect();
    let col_lines: Vec<f64> = line_clusters(anchors.iter().map(|(_, n)| n.center_location.x).collect(), tol)
        .into_iter()
        .map(|(v, _)| v)
        .collect();

    let (cols, pitch_x) = fill_lines(&col_lines, cfg.outlier_fraction);
    let (rows, pitch_y) = fill_lines(&row_lines, cfg.outlier_fraction);
    let pitch = match (pitch_x, pitch_y) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => {
            return Err(SolveError::Infeasible(
                "a single anchor column and row cannot define a pitch".into(),
            ))
        }
    };
    let threshold = cfg.outlier_fraction * pitch;

    // Anchor rows by caption; used to send displaced objects home.
    let mut row_caption: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); rows.len()];
    let mut occupied: BTreeMap<(usize, usize), (f64, NodeId)> = BTreeMap::new();
    let mut flagged: Vec<&Node> = Vec::new();
    let mut keep: Vec<(usize, &Node)> = Vec::new();
    for n in &objects {
        let c = n.center_location;
        let (r, k) = (nearest(&rows, c.y), nearest(&cols, c.x));
        let dev = (c.x - cols[k]).hypot(c.y - rows[r]);
        if dev > threshold {
            flagged.push(n);
            continue;
        }
        match occupied.get(&(r, k)) {
            Some(&(d, _)) if d <= dev => flagged.push(n),
            Some(&(_, other)) => {
                flagged.push(g0.get(other).expect("occupant exists"));
                keep.retain(|(_, m)| m.id != other);
                occupied.insert((r, k), (dev, n.id));
                keep.push((r, n));
            }
            None => {
                occupied.insert((r, k), (dev, n.id));
                keep.push((r, n));
            }
        }
    }
    for (r, n) in &keep {
        if let Some(cap) = &n.caption {
            *row_caption[*r].entry(normalize_caption(cap)).or_default() += 1;
        }
    }
    flagged.sort_by_key(|n| n.id);

    let row_of = |n: &Node| -> usize {
        let cap = n.caption.as_deref().map(normalize_caption);
        let by_caption: Vec<usize> = (0..rows.len())
            .filter(|&r| {
                let modal = row_caption[r].iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)));
                matches!((modal, &cap), (Some((m, _)), Some(c)) if m == c)
            })
            .collect();
        match by_caption.as_slice() {
            [r] => *r,
            _ => nearest(&rows, n.center_location.y),
        }
    };

    let mut g = g0.clone();
    let mut steps = Vec::new();
    for (r, &row_y) in rows.iter().enumerate() {
        let members: Vec<&Node> = flagged.iter().copied().filter(|n| row_of(n) == r).collect();
        if members.is_empty() {
            continue;
        }
        let row_anchors: Vec<&Node> = keep.iter().filter(|(rr, _)| *rr == r).map(|(_, n)| *n).collect();
        if row_anchors.len() < 2 {
            return Err(SolveError::Infeasible(format!(
                "grid row at y = {} has fewer than two anchors",
                row_y
            )));
        }
        let mut cells: Vec<f64> = (0..cols.len())
            .filter(|&k| !occupied.contains_key(&(r, k)))
            .map(|k| cols[k])
            .collect();
        if cells.len() < members.len() {
            if let Some(p) = pitch_x {
                cells.push(cols[0] - p);
                cells.push(cols[cols.len() - 1] + p);
            }
        }
        if cells.len() < members.len() {
            return Err(SolveError::Infeasible(format!(
                "row at y = {} has {} displaced objects but {} free cells",
                row_y,
                members.len(),
                cells.len()
            )));
        }
        let mut pairs: Vec<(f64, NodeId, usize)> = Vec::new();
        for n in &members {
            for (k, &x) in cells.iter().enumerate() {
                let d = (n.center_location.x - x).hypot(n.center_location.y - row_y);
                pairs.push((d, n.id, k));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let rotation = modal_rotation(&row_anchors);
        let mut done_nodes = Vec::new();
        let mut done_cells = Vec::new();
        for (_, id, k) in pairs {
            if done_nodes.contains(&id) || done_cells.contains(&k) {
                continue;
            }
            done_nodes.push(id);
            done_cells.push(k);
            let z = g0.get(id).expect("member of g0").center_location.z;
            let pose = Pose {
                center: canonical(Vec3::new(cells[k], row_y, z)),
                rotation: canonical(rotation),
            };
            move_node(&mut g, &mut steps, id, pose, &format!("restore to grid row {r}"));
        }
    }

    let residual = g
        .objects()
        .map(|n| {
            let c = n.center_location;
            let mut xs = cols.clone();
            if let Some(p) = pitch_x {
                xs.push(cols[0] - p);
                xs.push(cols[cols.len() - 1] + p);
            }
            let x = xs[nearest(&xs, c.x)];
            (c.x - x).hypot(c.y - rows[nearest(&rows, c.y)])
        })
        .fold(0.0, f64::max);

    Ok(SolveResult {
        graph: g,
        residual,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: NodeId, x: f64, y: f64) -> Node {
        Node::object(id, Vec3::new(x, y, 0.1), Vec3::new(0.2, 0.2, 0.2)).with_caption("crate")
    }

    /// Brute-force lattice fit: the largest pitch (and its offset) that puts
    /// every anchor on a lattice point.
    fn brute_force_missing(anchors: &[f64]) -> Vec<f64> {
        let mut best: Option<(f64, f64, f64)> = None;
        for pi in 50..=300 {
            let p = pi as f64 / 100.0;
            for oi in 0..pi {
                let off = oi as f64 / 100.0;
                let cost: f64 = anchors
                    .iter()
                    .map(|&a| {
                        let t = (a - off) / p;
                        (t - t.round()).abs() * p
                    })
                    .sum();
                let better = match best {
                    None => true,
                    Some((c, bp, _)) => cost < c - 1e-9 || ((cost - c).abs() <= 1e-9 && p > bp),
                };
                if better {
                    best = Some((cost, p, off));
                }
            }
        }
        let (_, p, off) = best.unwrap();
        let lo = anchors.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = anchors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut out = Vec::new();
        let mut k = ((lo - off) / p).round();
        while off + k * p <= hi + 1e-9 {
            let x = off + k * p;
            if anchors.iter().all(|&a| (a - x).abs() > 1e-6) {
                out.push(x);
            }
            k += 1.0;
        }
        out
    }

    #[test]
    fn interior_gap_is_interpolated() {
        let g =
            SceneGraph::from_nodes([obj(1, 0.0, 0.0), obj(2, 1.0, 0.0), obj(3, 3.0, 0.0), obj(4, 2.3, 0.7)]).unwrap();
        let r = solve_alignment(&g, None, &AlignmentConfig::default()).unwrap();
        let expected = brute_force_missing(&[0.0, 1.0, 3.0]);
        assert_eq!(expected.len(), 1);
        assert!((expected[0] - 2.0).abs() < 1e-9);
        let c = r.graph.get(4).unwrap().center_location;
        assert_eq!((c.x, c.y), (2.0, 0.0));
        assert_eq!(r.steps.len(), 1);
        for id in 1..=3 {
            assert_eq!(r.graph.get(id), g.get(id));
        }
    }

    #[test]
    fn end_cell_is_extrapolated() {
        let g =
            SceneGraph::from_nodes([obj(1, 0.0, 0.0), obj(2, 1.0, 0.0), obj(3, 2.0, 0.0), obj(4, 3.4, 0.6)]).unwrap();
        let r = solve_alignment(&g, None, &AlignmentConfig::default()).unwrap();
        let c = r.graph.get(4).unwrap().center_location;
        assert_eq!((c.x, c.y), (3.0, 0.0));
    }

    #[test]
    fn two_cells_past_the_end_is_infeasible() {
        let g = SceneGraph::from_nodes([
            obj(1, 0.0, 0.0),
            obj(2, 1.0, 0.0),
            obj(3, 3.3, 0.6),
            obj(4, 4.4, 0.7),
            obj(5, -1.6, 0.8),
        ])
        .unwrap();
        assert!(matches!(
            solve_alignment(&g, None, &AlignmentConfig::default()),
            Err(SolveError::Infeasible(_))
        ));
    }

    #[test]
    fn no_outliers_means_no_steps() {
        let g =
            SceneGraph::from_nodes([obj(1, 0.0, 0.0), obj(2, 1.0, 0.0), obj(3, 0.0, 1.0), obj(4, 1.0, 1.0)]).unwrap();
        let r = solve_alignment(&g, None, &AlignmentConfig::default()).unwrap();
        assert!(r.steps.is_empty());
        assert_eq!(r.graph, g);
    }
}
