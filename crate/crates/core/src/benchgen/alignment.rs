use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::instructions::{pick, render, templates};
use super::vocab::{GRID_ITEMS, GRID_YAWS};
use super::{quantize, CellAssignment, GenError, GridSpec, Interval, TaskInstance, TaskKind, TaskSpec};
use crate::metrics::{intersection_volume, DEFAULT_COLLISION_EPS};
use crate::rng::Rng;
use crate::scene_graph::{Node, NodeId, SceneGraph, Vec3};

/// Displaced objects stay at least this many pitches from every lattice point.
pub const MIN_DISPLACEMENT: f64 = 0.3;
const MAX_DISPLACEMENT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub rows: Interval<usize>,
    pub cols: Interval<usize>,
    pub perturb_fraction: Interval<f64>,
    /// Free space added to the largest footprint to get the pitch, meters.
    pub cell_margin: Interval<f64>,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self {
            rows: Interval::new(3, 5),
            cols: Interval::new(3, 6),
            perturb_fraction: Interval::new(0.2, 0.4),
            cell_margin: Interval::new(0.2, 0.5),
        }
    }
}

/// Number of displaced objects for an `rows x cols` grid.
pub fn perturbed_count(rows: usize, cols: usize, fraction: f64) -> usize {
    ((fraction * (rows * cols) as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Whether `k` cells can be displaced while every row and column keeps two
/// objects in place.
fn anchors_feasible(rows: usize, cols: usize, k: usize) -> bool {
    if k == 0 {
        return true;
    }
    if rows < 3 || cols < 3 {
        return false;
    }
    k <= (rows * (cols - 2)).min(cols * (rows - 2))
}

pub fn gen_alignment(seed: u64, p: &AlignmentParams) -> Result<TaskInstance, GenError> {
    p.rows.check("rows")?;
    p.cols.check("cols")?;
    p.perturb_fraction.check("perturb_fraction")?;
    p.cell_margin.check("cell_margin")?;
    if p.rows.lo < 1 || p.cols.lo < 1 {
        return Err(GenError::Invalid("rows and cols must be positive".into()));
    }
    if p.rows.hi > GRID_ITEMS.len() {
        return Err(GenError::Invalid(format!(
            "at most {} rows are supported",
            GRID_ITEMS.len()
        )));
    }
    if !(0.0..1.0).contains(&p.perturb_fraction.lo) || !(0.0..1.0).contains(&p.perturb_fraction.hi) {
        return Err(GenError::Invalid("perturb_fraction must lie in [0, 1)".into()));
    }
    if p.cell_margin.lo <= 0.0 {
        return Err(GenError::Invalid("cell_margin must be positive".into()));
    }

    let mut rng = Rng::seed_from_u64(seed);
    let ranged = p.rows.lo != p.rows.hi || p.cols.lo != p.cols.hi || p.perturb_fraction.lo != p.perturb_fraction.hi;
    let mut shape = None;
    for _ in 0..if ranged { 100 } else { 1 } {
        let n = p.rows.sample(&mut rng);
        let m = p.cols.sample(&mut rng);
        let f = p.perturb_fraction.sample(&mut rng);
        let k = perturbed_count(n, m, f);
        if n * m >= 4 && anchors_feasible(n, m, k) {
            shape = Some((n, m, k));
            break;
        }
    }
    let (n, m, k) = shape.ok_or_else(|| {
        GenError::Infeasible(format!(
            "a {}x{} grid with perturb fraction {} cannot keep two in-place objects on every grid line",
            p.rows.lo, p.cols.lo, p.perturb_fraction.lo
        ))
    })?;

    let row_items: Vec<_> = rng
        .sample_indices(GRID_ITEMS.len(), n)
        .into_iter()
        .map(|i| GRID_ITEMS[i])
        .collect();
    let row_dims: Vec<Vec3> = row_items
        .iter()
        .map(|it| {
            let mut s = |r: (f64, f64)| quantize(rng.uniform(r.0, r.1), 0.01).max(0.01);
            Vec3::new(s(it.length), s(it.width), s(it.height))
        })
        .collect();
    let row_yaws: Vec<f64> = (0..n).map(|_| *rng.choose(GRID_YAWS)).collect();

    let max_x = row_dims.iter().map(|d| d.x).fold(0.0, f64::max);
    let max_y = row_dims.iter().map(|d| d.y).fold(0.0, f64::max);
    let pitch_x = quantize(max_x + p.cell_margin.sample(&mut rng), 0.01);
    let pitch_y = quantize(max_y + p.cell_margin.sample(&mut rng), 0.01);
    let origin = Vec3::new(
        quantize(rng.uniform(-2.0, 2.0), 0.01),
        quantize(rng.uniform(-2.0, 2.0), 0.01),
        0.0,
    );

    let mut spec = GridSpec {
        rows: n,
        cols: m,
        origin,
        pitch_x,
        pitch_y,
        cell_assignment: Vec::with_capacity(n * m),
        row_groups: row_items.iter().map(|it| it.name.to_string()).collect(),
        canonical_rotation: BTreeMap::new(),
        perturbed_ids: Vec::new(),
    };
    for (r, it) in row_items.iter().enumerate() {
        spec.canonical_rotation.insert(it.name.to_string(), row_yaws[r]);
    }

    let mut target_nodes = Vec::with_capacity(n * m);
    for r in 0..n {
        for c in 0..m {
            let id = (r * m + c) as NodeId;
            spec.cell_assignment.push(CellAssignment { row: r, col: c, id });
            let mut center = spec.cell_center(r, c);
            center.z = row_dims[r].z / 2.0;
            target_nodes.push(
                Node::object(id, center, row_dims[r])
                    .with_caption(row_items[r].name)
                    .with_rotation(Vec3::new(0.0, 0.0, row_yaws[r])),
            );
        }
    }
    let target = SceneGraph::from_nodes(target_nodes)
        .map_err(|e| GenError::Invalid(e.to_string()))?
        .canonicalized();

    let (initial, perturbed) = perturb(&mut rng, &spec, &target, k)?;
    spec.perturbed_ids = perturbed;

    let instruction = render(
        pick(&mut rng, &templates().alignment),
        &[("rows", n.to_string()), ("cols", m.to_string())],
    );

    Ok(TaskInstance {
        id: format!("alignment-{seed:016x}"),
        task: TaskKind::Alignment,
        seed,
        instruction,
        spec: TaskSpec::Alignment(spec),
        initial_graph: initial,
        target_graph: target,
    })
}

/// Picks `k` cells (at most `cols - 2` per row and `rows - 2` per column).
fn pick_cells(rng: &mut Rng, rows: usize, cols: usize, k: usize) -> Option<Vec<(usize, usize)>> {
    let mut cells: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    for _ in 0..200 {
        rng.shuffle(&mut cells);
        let mut per_row = vec![0; rows];
        let mut per_col = vec![0; cols];
        let mut chosen = Vec::with_capacity(k);
        for &(r, c) in &cells {
            if chosen.len() == k {
                break;
            }
            if per_row[r] + 2 < cols && per_col[c] + 2 < rows {
                per_row[r] += 1;
                per_col[c] += 1;
                chosen.push((r, c));
            }
        }
        if chosen.len() == k {
            return Some(chosen);
        }
    }
    None
}

fn wrap_degrees(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

fn perturb(
    rng: &mut Rng,
    spec: &GridSpec,
    target: &SceneGraph,
    k: usize,
) -> Result<(SceneGraph, Vec<NodeId>), GenError> {
    if k == 0 {
        return Ok((target.clone(), Vec::new()));
    }
    let p_min = spec.pitch_x.min(spec.pitch_y);
    let col_xs: Vec<f64> = (0..spec.cols).map(|c| spec.cell_center(0, c).x).collect();
    let row_ys: Vec<f64> = (0..spec.rows).map(|r| spec.cell_center(r, 0).y).collect();

    'restart: for _ in 0..50 {
        let cells = pick_cells(rng, spec.rows, spec.cols, k).ok_or_else(|| {
            GenError::Infeasible("could not choose perturbed cells that keep two anchors per grid line".into())
        })?;
        let ids: Vec<NodeId> = cells.iter().map(|&(r, c)| (r * spec.cols + c) as NodeId).collect();
        let mut g = target.clone();
        let mut used_x: Vec<f64> = col_xs.clone();
        let mut used_y: Vec<f64> = row_ys.clone();

        for &id in &ids {
            let node = target.get(id).expect("assigned id").clone();
            let mut placed = None;
            for _ in 0..300 {
                let dist = rng.uniform(MIN_DISPLACEMENT, MAX_DISPLACEMENT) * p_min;
                let theta = rng.uniform(0.0, std::f64::consts::TAU);
                let x = quantize(node.center_location.x + dist * theta.cos(), 0.01);
                let y = quantize(node.center_location.y + dist * theta.sin(), 0.01);
                // Distance to the nearest point of the unbounded lattice.
                let lx = spec.origin.x + ((x - spec.origin.x) / spec.pitch_x).round() * spec.pitch_x;
                let ly = spec.origin.y + ((y - spec.origin.y) / spec.pitch_y).round() * spec.pitch_y;
                if (x - lx).hypot(y - ly) < MIN_DISPLACEMENT * p_min + 1e-9 {
                    continue;
                }
                if used_x.iter().any(|&u| (u - x).abs() < 1e-6) || used_y.iter().any(|&u| (u - y).abs() < 1e-6) {
                    continue;
                }
                let mut cand = node.clone();
                cand.center_location = Vec3::new(x, y, node.center_location.z);
                let b = cand.aabb();
                let clear = g
                    .nodes()
                    .filter(|q| q.id != id)
                    .all(|q| intersection_volume(&b, &q.aabb()) <= DEFAULT_COLLISION_EPS);
                if !clear {
                    continue;
                }
                let offset = rng.uniform(15.0, 90.0).round() * if rng.coin() { 1.0 } else { -1.0 };
                cand.rotation.z = wrap_degrees(node.rotation.z + offset);
                placed = Some(cand);
                break;
            }
            match placed {
                Some(c) => {
                    used_x.push(c.center_location.x);
                    used_y.push(c.center_location.y);
                    g.upsert(c).map_err(|e| GenError::Invalid(e.to_string()))?;
                }
                None => continue 'restart,
            }
        }
        let mut ids = ids;
        ids.sort_unstable();
        return Ok((g.canonicalized(), ids));
    }
    Err(GenError::Infeasible(
        "could not displace objects without collisions".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(inst: &TaskInstance) -> &GridSpec {
        match &inst.spec {
            TaskSpec::Alignment(g) => g,
            _ => unreachable!(),
        }
    }

    fn fixed(n: usize, m: usize, f: f64) -> AlignmentParams {
        AlignmentParams {
            rows: Interval::fixed(n),
            cols: Interval::fixed(m),
            perturb_fraction: Interval::fixed(f),
            ..AlignmentParams::default()
        }
    }

    #[test]
    fn ceiling_count() {
        assert_eq!(perturbed_count(3, 3, 0.3), 3);
        assert_eq!(perturbed_count(3, 3, 2.0 / 9.0), 2);
        assert_eq!(perturbed_count(4, 5, 0.2), 4);
        assert_eq!(perturbed_count(3, 3, 0.0), 0);
    }

    #[test]
    fn zero_fraction_is_identity() {
        let inst = gen_alignment(3, &fixed(3, 4, 0.0)).unwrap();
        assert_eq!(inst.initial_graph, inst.target_graph);
        assert!(grid(&inst).perturbed_ids.is_empty());
    }

    #[test]
    fn exactly_the_perturbed_nodes_differ() {
        for seed in 0..30 {
            let inst = gen_alignment(seed, &fixed(3, 3, 2.0 / 9.0)).unwrap();
            let g = grid(&inst);
            let differ: Vec<NodeId> = inst
                .target_graph
                .nodes()
                .filter(|n| inst.initial_graph.get(n.id) != Some(*n))
                .map(|n| n.id)
                .collect();
            assert_eq!(differ.len(), 2);
            assert_eq!(differ, g.perturbed_ids);
        }
    }

    #[test]
    fn displacement_clears_the_cell() {
        for seed in 0..100 {
            let inst = gen_alignment(seed, &AlignmentParams::default()).unwrap();
            let g = grid(&inst);
            let p = g.pitch_x.min(g.pitch_y);
            for &id in &g.perturbed_ids {
                let a = inst.initial_graph.get(id).unwrap().center_location;
                let b = inst.target_graph.get(id).unwrap().center_location;
                assert!(a.distance(b) >= 0.3 * p - 1e-9);
                assert_eq!(a.z, b.z);
            }
        }
    }

    #[test]
    fn anchor_constraint_enforced() {
        assert!(matches!(
            gen_alignment(1, &fixed(2, 2, 0.5)),
            Err(GenError::Infeasible(_))
        ));
        assert!(matches!(
            gen_alignment(1, &fixed(3, 3, 0.5)),
            Err(GenError::Infeasible(_))
        ));
        let inst = gen_alignment(1, &fixed(5, 6, 0.4)).unwrap();
        let g = grid(&inst);
        assert_eq!(g.perturbed_ids.len(), 12);
        for r in 0..5 {
            let moved = g.perturbed_ids.iter().filter(|&&id| id as usize / 6 == r).count();
            assert!(moved <= 4);
        }
        for c in 0..6 {
            let moved = g.perturbed_ids.iter().filter(|&&id| id as usize % 6 == c).count();
            assert!(moved <= 3);
        }
    }

    #[test]
    fn pitch_exceeds_footprints() {
        for seed in 0..20 {
            let inst = gen_alignment(seed, &AlignmentParams::default()).unwrap();
            let g = grid(&inst);
            for n in inst.target_graph.nodes() {
                assert!(g.pitch_x > n.dimension.x && g.pitch_y > n.dimension.y);
            }
        }
    }
}
