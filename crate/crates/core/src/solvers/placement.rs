use super::{Pose, SolveError, SolveResult, Step};
use crate::benchgen::PlacementSpec;
use crate::metrics::{intersection_volume, DEFAULT_COLLISION_EPS};
use crate::scene_graph::{canonical_f64, Aabb, Node, SceneGraph, Vec3};

const BOUNDS_TOL: f64 = 1e-6;
const TIE_TOL: f64 = 1e-9;
const CIRCLE_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 100;
const STEP_TOL: f64 = 1e-9;

/// Root-sum-square violation of the distance constraints at `(x, y)`.
pub fn placement_residual(p: (f64, f64), refs: &[((f64, f64), f64)]) -> f64 {
    refs.iter()
        .map(|&((cx, cy), d)| {
            let e = (p.0 - cx).hypot(p.1 - cy) - d;
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Intersections of two circles, or `None` when they do not meet.
fn circle_intersections(c1: (f64, f64), r1: f64, c2: (f64, f64), r2: f64) -> Option<Vec<(f64, f64)>> {
    let (dx, dy) = (c2.0 - c1.0, c2.1 - c1.1);
    let d = dx.hypot(dy);
    if d < 1e-12 || d > r1 + r2 + CIRCLE_TOL || d < (r1 - r2).abs() - CIRCLE_TOL {
        return None;
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let h = (r1 * r1 - a * a).max(0.0).sqrt();
    let (mx, my) = (c1.0 + a * dx / d, c1.1 + a * dy / d);
    let (ox, oy) = (-dy * h / d, dx * h / d);
    if h == 0.0 {
        Some(vec![(mx, my)])
    } else {
        Some(vec![(mx + ox, my + oy), (mx - ox, my - oy)])
    }
}

/// Least-squares point of the system linearized against the first circle.
fn linearized(refs: &[((f64, f64), f64)]) -> Option<(f64, f64)> {
    let ((x1, y1), d1) = refs[0];
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &((xi, yi), di) in &refs[1..] {
        let (ax, ay) = (2.0 * (xi - x1), 2.0 * (yi - y1));
        let rhs = (xi * xi - x1 * x1) + (yi * yi - y1 * y1) - (di * di - d1 * d1);
        a11 += ax * ax;
        a12 += ax * ay;
        a22 += ay * ay;
        b1 += ax * rhs;
        b2 += ay * rhs;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-12 * (a11 * a22).max(1e-300) {
        return None;
    }
    Some(((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
}

/// Damped Gauss-Newton on the squared distance violations.
fn refine(mut p: (f64, f64), refs: &[((f64, f64), f64)]) -> (f64, f64) {
    let mut lambda = 1e-3;
    let mut cost = placement_residual(p, refs);
    for _ in 0..MAX_ITERS {
        let (mut h11, mut h12, mut h22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &((cx, cy), d) in refs {
            let (dx, dy) = (p.0 - cx, p.1 - cy);
            let n = dx.hypot(dy);
            let (jx, jy) = if n < 1e-12 { (1.0, 0.0) } else { (dx / n, dy / n) };
            let r = n - d;
            h11 += jx * jx;
            h12 += jx * jy;
            h22 += jy * jy;
            g1 += jx * r;
            g2 += jy * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let (m11, m22) = (h11 * (1.0 + lambda) + lambda, h22 * (1.0 + lambda) + lambda);
            let det = m11 * m22 - h12 * h12;
            let sx = -(m22 * g1 - h12 * g2) / det;
            let sy = -(m11 * g2 - h12 * g1) / det;
            let trial = (p.0 + sx, p.1 + sy);
            let c = placement_residual(trial, refs);
            if c < cost {
                let change = cost - c;
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = change > STEP_TOL;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

fn footprint_inside(b: &Aabb, room: &Aabb) -> bool {
    b.min.x >= room.min.x - BOUNDS_TOL
        && b.max.x <= room.max.x + BOUNDS_TOL
        && b.min.y >= room.min.y - BOUNDS_TOL
        && b.max.y <= room.max.y + BOUNDS_TOL
}

pub fn solve_placement(g0: &SceneGraph, spec: &PlacementSpec) -> Result<SolveResult, SolveError> {
    let new = &spec.new_node;
    if g0.get(new.id).is_some() {
        return Err(SolveError::Invalid(format!("node {} already exists", new.id)));
    }
    if spec.references.len() < 2 {
        return Err(SolveError::Invalid("placement needs at least two references".into()));
    }
    let mut refs = Vec::with_capacity(spec.references.len());
    for r in &spec.references {
        let n = g0.get(r.id).ok_or(SolveError::MissingNode(r.id))?;
        if r.distance.is_nan() || r.distance <= 0.0 {
            return Err(SolveError::Invalid(format!(
                "distance to node {} must be positive",
                r.id
            )));
        }
        refs.push(((n.center_location.x, n.center_location.y), r.distance));
    }

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    if refs.len() == 2 {
        let (c1, r1) = refs[0];
        let (c2, r2) = refs[1];
        candidates = circle_intersections(c1, r1, c2, r2).ok_or_else(|| {
            SolveError::Infeasible(format!(
                "circles around nodes {} and {} do not intersect",
                spec.references[0].id, spec.references[1].id
            ))
        })?;
    } else {
        let mut starts: Vec<(f64, f64)> = linearized(&refs).into_iter().collect();
        for i in 0..refs.len() {
            for j in i + 1..refs.len() {
                if let Some(pts) = circle_intersections(refs[i].0, refs[i].1, refs[j].0, refs[j].1) {
                    starts.extend(pts);
                }
            }
        }
        if starts.is_empty() {
            return Err(SolveError::Infeasible("no pair of reference circles intersects".into()));
        }
        for s in starts {
            let p = refine(s, &refs);
            if !candidates.iter().any(|q| (q.0 - p.0).hypot(q.1 - p.1) < 1e-6) {
                candidates.push(p);
            }
        }
    }

    let z = spec.room_bounds.min.z + new.dimension.z / 2.0;
    let mut best: Option<((f64, f64), f64)> = None;
    let mut best_rejected = f64::INFINITY;
    for &p in &candidates {
        let res = placement_residual(p, &refs);
        let b = Aabb::from_center(Vec3::new(p.0, p.1, z), new.dimension);
        let ok = footprint_inside(&b, &spec.room_bounds)
            && g0
                .nodes()
                .all(|q| intersection_volume(&b, &q.aabb()) <= DEFAULT_COLLISION_EPS);
        if !ok {
            best_rejected = best_rejected.min(res);
            continue;
        }
        let better = match best {
            None => true,
            Some((bp, br)) => res < br - TIE_TOL || (res <= br + TIE_TOL && (p.0, p.1) < bp),
        };
        if better {
            best = Some((p, res));
        }
    }
    let Some(((x, y), residual)) = best else {
        return Err(SolveError::Infeasible(format!(
            "no in-bounds, collision-free candidate (best residual {best_rejected:.6} m)"
        )));
    };

    let mut node: Node = new.clone();
    node.center_location = Vec3::new(canonical_f64(x), canonical_f64(y), canonical_f64(z));
    let pose = Pose::of(&node);
    let mut g = g0.clone();
    g.insert(node.clone()).map_err(|e| SolveError::Invalid(e.to_string()))?;
    Ok(SolveResult {
        graph: g,
        residual,
        steps: vec![Step {
            node_id: node.id,
            old_pose: None,
            new_pose: pose,
            reason: "insert at the distance-constrained position".into(),
            inserted: Some(node),
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::Reference;

    fn room(lo_y: f64) -> Aabb {
        Aabb::new(Vec3::new(-10.0, lo_y, 0.0), Vec3::new(10.0, 10.0, 3.0))
    }

    fn scene(points: &[(f64, f64)]) -> SceneGraph {
        SceneGraph::from_nodes(
            points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Node::object(i as u32, Vec3::new(x, y, 0.05), Vec3::new(0.1, 0.1, 0.1))),
        )
        .unwrap()
    }

    fn spec(refs: &[(u32, f64)], bounds: Aabb) -> PlacementSpec {
        PlacementSpec {
            new_node: Node::object(99, Vec3::ZERO, Vec3::new(0.2, 0.2, 0.4)),
            references: refs.iter().map(|&(id, distance)| Reference { id, distance }).collect(),
            room_bounds: bounds,
        }
    }

    /// 1 mm grid scan for the best in-bounds point.
    fn grid_search(refs: &[((f64, f64), f64)], x: (f64, f64), y: (f64, f64)) -> Vec<(f64, f64)> {
        let mut hits = Vec::new();
        let (nx, ny) = (((x.1 - x.0) * 1000.0) as i64, ((y.1 - y.0) * 1000.0) as i64);
        for i in 0..=nx {
            for j in 0..=ny {
                let p = (x.0 + i as f64 / 1000.0, y.0 + j as f64 / 1000.0);
                if placement_residual(p, refs) < 1e-3 {
                    hits.push(p);
                }
            }
        }
        hits
    }

    #[test]
    fn two_circles_choose_the_in_bounds_root() {
        let g = scene(&[(0.0, 0.0), (4.0, 0.0)]);
        let open = solve_placement(&g, &spec(&[(0, 2.5), (1, 2.5)], room(-10.0))).unwrap();
        let c = open.graph.get(99).unwrap().center_location;
        assert_eq!((c.x, c.y, c.z), (2.0, -1.5, 0.2));

        let r = solve_placement(&g, &spec(&[(0, 2.5), (1, 2.5)], room(0.0))).unwrap();
        let c = r.graph.get(99).unwrap().center_location;
        assert_eq!((c.x, c.y), (2.0, 1.5));
        assert!(r.residual < 1e-12);

        let refs = [((0.0, 0.0), 2.5), ((4.0, 0.0), 2.5)];
        let hits = grid_search(&refs, (1.9, 2.1), (0.0, 1.6));
        assert!(hits
            .iter()
            .all(|h| (h.0 - 2.0).abs() <= 0.002 && (h.1 - 1.5).abs() <= 0.002));
        assert!(!hits.is_empty());
    }

    #[test]
    fn three_references_recover_the_point() {
        let truth = (1.234, -0.567);
        let anchors = [(0.0, 0.0), (3.0, 0.5), (-1.0, 2.5)];
        let g = scene(&anchors);
        let refs: Vec<(u32, f64)> = anchors
            .iter()
            .enumerate()
            .map(|(i, a)| (i as u32, (a.0 - truth.0).hypot(a.1 - truth.1)))
            .collect();
        let r = solve_placement(&g, &spec(&refs, room(-10.0))).unwrap();
        let c = r.graph.get(99).unwrap().center_location;
        assert!((c.x - truth.0).abs() < 1e-3 && (c.y - truth.1).abs() < 1e-3);
        assert!(r.residual < 1e-6);
    }

    #[test]
    fn disjoint_circles_are_infeasible() {
        let g = scene(&[(0.0, 0.0), (2.0, 0.0)]);
        let e = solve_placement(&g, &spec(&[(0, 1.0), (1, 10.0)], room(-10.0))).unwrap_err();
        assert!(matches!(e, SolveError::Infeasible(_)));
        let e = solve_placement(&g, &spec(&[(0, 1.0), (7, 1.0)], room(-10.0))).unwrap_err();
        assert_eq!(e, SolveError::MissingNode(7));
    }

    #[test]
    fn collisions_filter_candidates() {
        let mut g = scene(&[(0.0, 0.0), (4.0, 0.0)]);
        g.insert(Node::object(5, Vec3::new(2.0, -1.5, 0.5), Vec3::new(0.5, 0.5, 1.0)))
            .unwrap();
        let r = solve_placement(&g, &spec(&[(0, 2.5), (1, 2.5)], room(-10.0))).unwrap();
        assert_eq!(r.graph.get(99).unwrap().center_location.y, 1.5);
        g.insert(Node::object(6, Vec3::new(2.0, 1.5, 0.5), Vec3::new(0.5, 0.5, 1.0)))
            .unwrap();
        assert!(matches!(
            solve_placement(&g, &spec(&[(0, 2.5), (1, 2.5)], room(-10.0))),
            Err(SolveError::Infeasible(_))
        ));
    }
}
