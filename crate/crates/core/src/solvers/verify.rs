use serde::Serialize;

use super::sorting::{expected_order, group_label};
use crate::benchgen::{GridSpec, PlacementSpec, SortSpec, TaskInstance, TaskSpec};
use crate::metrics::{axis_order, collision_score, levenshtein, normalize_caption, DEFAULT_COLLISION_EPS};
use crate::scene_graph::{Node, SceneGraph};

const POSITION_TOL: f64 = 1e-6;
const DISTANCE_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: impl Into<String>, measured: f64, expected: f64, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            measured,
            expected,
            detail: detail.into(),
        });
    }

    /// Records `|measured - expected| <= tol`.
    fn close(&mut self, name: &str, measured: f64, expected: f64, tol: f64) {
        let ok = (measured - expected).abs() <= tol;
        self.push(name, measured, expected, ok, "");
    }
}

/// Re-checks every constraint of the instance's spec on `candidate`.
pub fn verify(inst: &TaskInstance, candidate: &SceneGraph) -> VerifyReport {
    let mut r = VerifyReport::default();
    let expected_ids: Vec<_> = inst.target_graph.ids().collect();
    let got_ids: Vec<_> = candidate.ids().collect();
    r.push(
        "node_set",
        got_ids.len() as f64,
        expected_ids.len() as f64,
        got_ids == expected_ids,
        "",
    );
    match &inst.spec {
        TaskSpec::Sorting(s) => verify_sorting(&mut r, s, candidate),
        TaskSpec::Alignment(g) => verify_alignment(&mut r, g, &inst.initial_graph, candidate),
        TaskSpec::Roomedit(p) => verify_roomedit(&mut r, p, &inst.initial_graph, candidate),
    }
    let coll = collision_score(candidate, DEFAULT_COLLISION_EPS);
    r.push("collision_free", coll, 1.0, coll == 1.0, "");
    r
}

fn verify_sorting(r: &mut VerifyReport, s: &SortSpec, g: &SceneGraph) {
    let actual = axis_order(g, s.axis);
    match expected_order(g, s) {
        Ok(expected) => {
            let d = levenshtein(&actual, &expected) as f64;
            r.push("order", d, 0.0, d == 0.0, "");
        }
        Err(e) => r.push("order", f64::NAN, 0.0, false, e.to_string()),
    }

    let a = s.axis_index();
    let nodes: Vec<&Node> = actual.iter().filter_map(|id| g.get(*id)).collect();
    if nodes.is_empty() {
        r.push("span", 0.0, s.total_span, false, "no objects");
        return;
    }
    let mut gap_err: f64 = 0.0;
    for w in nodes.windows(2) {
        let gap = w[1].aabb().min.get(a) - w[0].aabb().max.get(a);
        let same = match (group_label(w[0], s), group_label(w[1], s)) {
            (Ok(x), Ok(y)) => x == y,
            _ => false,
        };
        let want = if same { s.object_gap } else { s.group_gap };
        gap_err = gap_err.max((gap - want).abs());
    }
    r.close("gaps", gap_err, 0.0, 1e-9);
    let start = nodes[0].aabb().min.get(a);
    let end = nodes[nodes.len() - 1].aabb().max.get(a);
    r.close("span_start", start, s.span_start, 1e-9);
    r.close("span", end - start, s.total_span, 1e-9);
    let support = nodes
        .iter()
        .map(|n| (n.aabb().min.z - s.support_z).abs())
        .fold(0.0, f64::max);
    r.close("support", support, 0.0, 1e-9);
    let o = s.off_axis_index();
    let lane = nodes
        .iter()
        .map(|n| (n.center_location.get(o) - s.lane).abs())
        .fold(0.0, f64::max);
    r.close("lane", lane, 0.0, 1e-9);
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn verify_alignment(r: &mut VerifyReport, spec: &GridSpec, g0: &SceneGraph, g: &SceneGraph) {
    let mut worst: f64 = 0.0;
    let mut wrong_row = Vec::new();
    let mut wrong_yaw: f64 = 0.0;
    let mut cells = Vec::new();
    for n in g.objects() {
        let c = n.center_location;
        let col = ((c.x - spec.origin.x) / spec.pitch_x).round();
        let row = ((c.y - spec.origin.y) / spec.pitch_y).round();
        let inside = (0.0..spec.cols as f64).contains(&col) && (0.0..spec.rows as f64).contains(&row);
        let dev = if inside {
            let cell = spec.cell_center(row as usize, col as usize);
            (c.x - cell.x).hypot(c.y - cell.y)
        } else {
            f64::INFINITY
        };
        worst = worst.max(dev);
        if !inside {
            continue;
        }
        let (row, col) = (row as usize, col as usize);
        cells.push((row, col));
        let caption = n.caption.as_deref().map(normalize_caption).unwrap_or_default();
        if normalize_caption(&spec.row_groups[row]) != caption {
            wrong_row.push(n.id);
        }
        if let Some(yaw) = spec.yaw_for_row(row) {
            wrong_yaw = wrong_yaw.max(angle_diff(n.rotation.z, yaw));
        }
    }
    r.close("lattice", worst, 0.0, POSITION_TOL);
    r.push(
        "rows",
        wrong_row.len() as f64,
        0.0,
        wrong_row.is_empty(),
        if wrong_row.is_empty() {
            String::new()
        } else {
            format!("misplaced ids {wrong_row:?}")
        },
    );
    cells.sort_unstable();
    let before = cells.len();
    cells.dedup();
    let dupes = (before - cells.len()) as f64;
    r.push("distinct_cells", dupes, 0.0, dupes == 0.0, "");
    r.close("rotation", wrong_yaw, 0.0, POSITION_TOL);

    let moved: Vec<_> = g0
        .objects()
        .filter(|n| spec.perturbed_ids.binary_search(&n.id).is_err())
        .filter(|n| g.get(n.id) != Some(*n))
        .map(|n| n.id)
        .collect();
    r.push(
        "unperturbed_unchanged",
        moved.len() as f64,
        0.0,
        moved.is_empty(),
        if moved.is_empty() {
            String::new()
        } else {
            format!("moved ids {moved:?}")
        },
    );
}

fn verify_roomedit(r: &mut VerifyReport, spec: &PlacementSpec, g0: &SceneGraph, g: &SceneGraph) {
    let Some(new) = g.get(spec.new_node.id) else {
        r.push(
            "inserted",
            0.0,
            1.0,
            false,
            format!("node {} missing", spec.new_node.id),
        );
        return;
    };
    let p = new.center_location;
    for reference in &spec.references {
        let name = format!("distance[{}]", reference.id);
        match g.get(reference.id) {
            Some(n) => {
                let c = n.center_location;
                r.close(&name, (c.x - p.x).hypot(c.y - p.y), reference.distance, DISTANCE_TOL);
            }
            None => r.push(name, f64::NAN, reference.distance, false, "reference missing"),
        }
    }
    let b = new.aabb();
    let room = &spec.room_bounds;
    let outside = [
        room.min.x - b.min.x,
        b.max.x - room.max.x,
        room.min.y - b.min.y,
        b.max.y - room.max.y,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    r.close("in_bounds", outside, 0.0, POSITION_TOL);
    r.close("on_floor", b.min.z, room.min.z, POSITION_TOL);
    let dims = (new.dimension.x - spec.new_node.dimension.x)
        .abs()
        .max((new.dimension.y - spec.new_node.dimension.y).abs())
        .max((new.dimension.z - spec.new_node.dimension.z).abs());
    r.close("new_dimensions", dims, 0.0, POSITION_TOL);
    let moved = g0.nodes().filter(|n| g.get(n.id) != Some(*n)).count() as f64;
    r.push("existing_unchanged", moved, 0.0, moved == 0.0, "");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{gen_roomedit, gen_sorting, RoomeditParams, SortingParams};
    use crate::scene_graph::Vec3;
    use crate::solvers::solve_sorting;

    #[test]
    fn target_passes() {
        for seed in 0..5 {
            let inst = gen_sorting(seed, &SortingParams::default()).unwrap();
            assert!(verify(&inst, &inst.target_graph).passed());
        }
    }

    #[test]
    fn swapped_pair_fails_only_order() {
        let mut checked = 0;
        for seed in 0..50 {
            let inst = gen_sorting(seed, &SortingParams::default()).unwrap();
            let TaskSpec::Sorting(s) = &inst.spec else {
                unreachable!()
            };
            let order = expected_order(&inst.target_graph, s).unwrap();
            // Adjacent pair in the same group with different sort keys.
            let pair = order.windows(2).find(|w| {
                let (x, y) = (
                    inst.target_graph.get(w[0]).unwrap(),
                    inst.target_graph.get(w[1]).unwrap(),
                );
                group_label(x, s).unwrap() == group_label(y, s).unwrap()
                    && crate::benchgen::sort_attribute(x, s.sort_key, s.axis)
                        != crate::benchgen::sort_attribute(y, s.sort_key, s.axis)
            });
            let Some(w) = pair else { continue };
            // Lay the row out again with the two swapped.
            let mut solved = solve_sorting(&inst.target_graph, s).unwrap().graph;
            let a = s.axis_index();
            let (n0, n1) = (solved.get(w[0]).unwrap().clone(), solved.get(w[1]).unwrap().clone());
            let lo = n0.aabb().min.get(a);
            let mut m1 = n1.clone();
            let mut c1 = m1.center_location;
            c1.set(a, lo + n1.dimension.get(a) / 2.0);
            m1.center_location = c1;
            let mut m0 = n0.clone();
            let mut c0 = m0.center_location;
            c0.set(a, lo + n1.dimension.get(a) + s.object_gap + n0.dimension.get(a) / 2.0);
            m0.center_location = c0;
            solved.upsert(m0).unwrap();
            solved.upsert(m1).unwrap();
            let report = verify(&inst, &solved);
            assert!(!report.get("order").unwrap().passed, "seed {seed}");
            for c in report.checks.iter().filter(|c| c.name != "order") {
                assert!(c.passed, "seed {seed}: {c:?}");
            }
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn one_distance_off_by_half_a_meter() {
        let inst = gen_roomedit(4, &RoomeditParams::default()).unwrap();
        let TaskSpec::Roomedit(p) = &inst.spec else {
            unreachable!()
        };
        let new = inst.target_graph.get(p.new_node.id).unwrap().center_location;
        let reference = p.references[0];
        let mut g = inst.target_graph.clone();
        let mut n = g.get(reference.id).unwrap().clone();
        let c = n.center_location;
        let dir = Vec3::new(c.x - new.x, c.y - new.y, 0.0);
        let dir = dir.scale(1.0 / dir.norm());
        n.center_location = c + dir.scale(0.5);
        g.upsert(n).unwrap();
        let report = verify(&inst, &g);
        let name = format!("distance[{}]", reference.id);
        let check = report.get(&name).unwrap();
        assert!(!check.passed);
        assert!((check.measured - check.expected - 0.5).abs() < 0.011);
        for other in &p.references[1..] {
            assert!(report.get(&format!("distance[{}]", other.id)).unwrap().passed);
        }
    }
}
