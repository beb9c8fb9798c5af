use serde::{Deserialize, Serialize};

use super::instructions::{pick, render, templates};
use super::vocab::{Furniture, FURNITURE, GRID_YAWS};
use super::{quantize, GenError, Interval, PlacementSpec, Reference, TaskInstance, TaskKind, TaskSpec};
use crate::rng::Rng;
use crate::scene_graph::{format_number, Aabb, Node, NodeId, SceneGraph, Vec3};
use crate::solvers::solve_placement;

/// Residual below which a sampled placement is accepted.
pub const MAX_PLACEMENT_RESIDUAL: f64 = 1e-3;
const ROOM_HEIGHT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomeditParams {
    pub n_existing: Interval<usize>,
    pub n_refs: Interval<usize>,
    pub room_length: Interval<f64>,
    pub room_width: Interval<f64>,
    /// Minimum free space between any two objects and to the walls, meters.
    pub clearance: f64,
}

impl Default for RoomeditParams {
    fn default() -> Self {
        Self {
            n_existing: Interval::new(3, 8),
            n_refs: Interval::new(2, 3),
            room_length: Interval::new(4.0, 8.0),
            room_width: Interval::new(3.5, 7.0),
            clearance: 0.1,
        }
    }
}

fn sample_dims(rng: &mut Rng, f: &Furniture) -> Vec3 {
    let mut s = |r: (f64, f64)| quantize(rng.uniform(r.0, r.1), 0.01).max(0.01);
    Vec3::new(s(f.length), s(f.width), s(f.height))
}

fn separated(a: &Aabb, b: &Aabb, gap: f64) -> bool {
    a.max.x + gap <= b.min.x || b.max.x + gap <= a.min.x || a.max.y + gap <= b.min.y || b.max.y + gap <= a.min.y
}

/// Samples a floor position for `dim` that keeps `clearance` to the walls and
/// to every node in `placed`.
fn sample_spot(rng: &mut Rng, room: &Aabb, dim: Vec3, placed: &[Node], clearance: f64) -> Option<Vec3> {
    let lo_x = room.min.x + dim.x / 2.0 + clearance;
    let hi_x = room.max.x - dim.x / 2.0 - clearance;
    let lo_y = room.min.y + dim.y / 2.0 + clearance;
    let hi_y = room.max.y - dim.y / 2.0 - clearance;
    if lo_x > hi_x || lo_y > hi_y {
        return None;
    }
    for _ in 0..500 {
        let x = quantize(rng.uniform(lo_x, hi_x), 0.01);
        let y = quantize(rng.uniform(lo_y, hi_y), 0.01);
        if x < lo_x - 1e-9 || x > hi_x + 1e-9 || y < lo_y - 1e-9 || y > hi_y + 1e-9 {
            continue;
        }
        let c = Vec3::new(x, y, room.min.z + dim.z / 2.0);
        let b = Aabb::from_center(c, dim);
        if placed.iter().all(|q| separated(&b, &q.aabb(), clearance)) {
            return Some(c);
        }
    }
    None
}

pub fn gen_roomedit(seed: u64, p: &RoomeditParams) -> Result<TaskInstance, GenError> {
    p.n_existing.check("n_existing")?;
    p.n_refs.check("n_refs")?;
    p.room_length.check("room_length")?;
    p.room_width.check("room_width")?;
    if p.n_refs.lo < 2 || p.n_refs.hi > 3 {
        return Err(GenError::Invalid("n_refs must be 2 or 3".into()));
    }
    if p.n_existing.lo < p.n_refs.hi {
        return Err(GenError::Invalid(format!(
            "n_existing must be at least {} to provide the references",
            p.n_refs.hi
        )));
    }
    if p.room_length.lo <= 0.0 || p.room_width.lo <= 0.0 || p.clearance < 0.0 {
        return Err(GenError::Invalid(
            "room size must be positive and clearance non-negative".into(),
        ));
    }

    let mut rng = Rng::seed_from_u64(seed);
    let n_existing = p.n_existing.sample(&mut rng);
    let n_refs = p.n_refs.sample(&mut rng);

    for _layout in 0..20 {
        let room = Aabb::new(
            Vec3::ZERO,
            Vec3::new(
                quantize(p.room_length.sample(&mut rng), 0.01),
                quantize(p.room_width.sample(&mut rng), 0.01),
                ROOM_HEIGHT,
            ),
        );
        let mut existing: Vec<Node> = Vec::with_capacity(n_existing);
        for i in 0..n_existing {
            let f = rng.choose(FURNITURE);
            let dim = sample_dims(&mut rng, f);
            let Some(c) = sample_spot(&mut rng, &room, dim, &existing, p.clearance) else {
                break;
            };
            let yaw = *rng.choose(GRID_YAWS);
            existing.push(
                Node::object(i as NodeId, c, dim)
                    .with_caption(f.name)
                    .with_rotation(Vec3::new(0.0, 0.0, yaw)),
            );
        }
        if existing.len() < n_existing {
            continue;
        }
        let initial = SceneGraph::from_nodes(existing.clone())
            .map_err(|e| GenError::Invalid(e.to_string()))?
            .canonicalized();

        let new_f = rng.choose(FURNITURE);
        let new_dim = sample_dims(&mut rng, new_f);
        let new_yaw = *rng.choose(GRID_YAWS);
        let new_id = n_existing as NodeId;

        for _attempt in 0..200 {
            let Some(truth) = sample_spot(&mut rng, &room, new_dim, &existing, p.clearance) else {
                break;
            };
            let mut by_dist: Vec<(f64, NodeId, Vec3)> = existing
                .iter()
                .map(|n| {
                    let c = n.center_location;
                    ((c.x - truth.x).hypot(c.y - truth.y), n.id, c)
                })
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let references: Vec<Reference> = by_dist[..n_refs]
                .iter()
                .map(|&(d, id, _)| Reference {
                    id,
                    distance: quantize(d, 0.01),
                })
                .collect();
            if references.iter().any(|r| r.distance <= 0.0) {
                continue;
            }
            let spec = PlacementSpec {
                new_node: Node::object(new_id, Vec3::ZERO, new_dim)
                    .with_caption(new_f.name)
                    .with_rotation(Vec3::new(0.0, 0.0, new_yaw)),
                references,
                room_bounds: room,
            };
            let Ok(solved) = solve_placement(&initial, &spec) else {
                continue;
            };
            if solved.residual >= MAX_PLACEMENT_RESIDUAL {
                continue;
            }
            let target = solved.graph.canonicalized();

            let constraints: Vec<String> = spec
                .references
                .iter()
                .map(|r| {
                    let reference = initial.get(r.id).and_then(|n| n.caption.clone()).unwrap_or_default();
                    render(
                        &templates().roomedit_constraint,
                        &[
                            ("distance", format_number(r.distance)),
                            ("reference", reference),
                            ("id", r.id.to_string()),
                        ],
                    )
                })
                .collect();
            let instruction = render(
                pick(&mut rng, &templates().roomedit),
                &[
                    ("object", new_f.name.to_string()),
                    ("length", format_number(new_dim.x)),
                    ("width", format_number(new_dim.y)),
                    ("height", format_number(new_dim.z)),
                    ("constraints", constraints.join(", ")),
                ],
            );
            return Ok(TaskInstance {
                id: format!("roomedit-{seed:016x}"),
                task: TaskKind::Roomedit,
                seed,
                instruction,
                spec: TaskSpec::Roomedit(spec),
                initial_graph: initial,
                target_graph: target,
            });
        }
    }
    Err(GenError::Infeasible(format!(
        "no consistent placement found for {n_existing} objects with {n_refs} references"
    )))
}
