use serde::{Deserialize, Serialize};

use super::instructions::{pick, render, templates};
use super::vocab::{self, CATEGORIES, COLORS, SHAPES};
use super::{quantize, GenError, GroupKey, Interval, SortKey, SortOrder, SortSpec, TaskInstance, TaskKind, TaskSpec};
use crate::metrics::Axis;
use crate::rng::Rng;
use crate::scene_graph::{canonical_f64, format_number, Node, NodeId, SceneGraph, Vec3};

const TABLE_ID: NodeId = 0;
const SCATTER_CLEARANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortingParams {
    pub n_objects: Interval<usize>,
    pub n_groups: Interval<usize>,
    /// Face-to-face gap inside a group, meters.
    pub object_gap: Interval<f64>,
    /// Face-to-face gap between groups, meters.
    pub group_gap: Interval<f64>,
    /// When set, the group gap is derived so the row spans this length.
    pub total_span: Option<f64>,
    /// Range for each object dimension, meters.
    pub object_size: Interval<f64>,
    pub support_z: Interval<f64>,
    pub group_key: Option<GroupKey>,
    pub sort_key: Option<SortKey>,
    pub axis: Option<Axis>,
}

impl Default for SortingParams {
    fn default() -> Self {
        Self {
            n_objects: Interval::new(4, 12),
            n_groups: Interval::new(2, 3),
            object_gap: Interval::new(0.02, 0.08),
            group_gap: Interval::new(0.1, 0.25),
            total_span: None,
            object_size: Interval::new(0.05, 0.3),
            support_z: Interval::new(0.7, 0.8),
            group_key: None,
            sort_key: None,
            axis: None,
        }
    }
}

/// Value compared when sorting within a group.
pub fn sort_attribute(node: &Node, key: SortKey, axis: Axis) -> f64 {
    match key {
        SortKey::Height => node.dimension.z,
        SortKey::Width => node.dimension.get(axis.index()),
        SortKey::Volume => node.dimension.product(),
    }
}

struct Item {
    id: NodeId,
    group: usize,
    caption: String,
    dim: Vec3,
}

pub fn gen_sorting(seed: u64, p: &SortingParams) -> Result<TaskInstance, GenError> {
    p.n_objects.check("n_objects")?;
    p.n_groups.check("n_groups")?;
    p.object_gap.check("object_gap")?;
    p.group_gap.check("group_gap")?;
    p.object_size.check("object_size")?;
    if p.n_objects.lo < 2 {
        return Err(GenError::Invalid("n_objects must be at least 2".into()));
    }
    if p.n_groups.lo < 1 {
        return Err(GenError::Invalid("n_groups must be at least 1".into()));
    }
    if p.object_gap.lo < 0.0 || p.group_gap.lo < 0.0 {
        return Err(GenError::Invalid("gaps must be non-negative".into()));
    }
    if p.object_size.lo <= 0.0 {
        return Err(GenError::Invalid("object_size must be positive".into()));
    }

    let mut rng = Rng::seed_from_u64(seed);
    let n = p.n_objects.sample(&mut rng);
    let group_key = p
        .group_key
        .unwrap_or(*rng.choose(&[GroupKey::Shape, GroupKey::Color, GroupKey::Category]));
    let labels_vocab = vocab::labels_for(group_key);
    let g = p.n_groups.sample(&mut rng).min(n).min(labels_vocab.len());
    let sort_key = p
        .sort_key
        .unwrap_or(*rng.choose(&[SortKey::Height, SortKey::Width, SortKey::Volume]));
    let sort_order = if rng.coin() {
        SortOrder::Ascending
    } else {
        SortOrder::Descending
    };
    let axis = p.axis.unwrap_or(*rng.choose(&[Axis::X, Axis::Y]));
    let (a, o) = (axis.index(), 1 - axis.index());

    let labels: Vec<&str> = rng
        .sample_indices(labels_vocab.len(), g)
        .into_iter()
        .map(|i| labels_vocab[i])
        .collect();

    let mut items: Vec<Item> = (0..n)
        .map(|i| {
            let group = if i < g { i } else { rng.index(g) };
            let mut pick_attr = |key: GroupKey, vocab: &[&'static str]| -> &'static str {
                if key == group_key {
                    labels[group]
                } else {
                    rng.choose(vocab)
                }
            };
            let color = pick_attr(GroupKey::Color, COLORS);
            let shape = pick_attr(GroupKey::Shape, SHAPES);
            let category = pick_attr(GroupKey::Category, CATEGORIES);
            let mut size = || quantize(p.object_size.sample(&mut rng), 0.01).max(0.01);
            let dim = Vec3::new(size(), size(), size());
            Item {
                id: 0,
                group,
                caption: format!("{color} {shape} {category}"),
                dim,
            }
        })
        .collect();
    rng.shuffle(&mut items);
    for (i, it) in items.iter_mut().enumerate() {
        it.id = i as NodeId + 1;
    }

    let mut group_order: Vec<usize> = (0..g).collect();
    rng.shuffle(&mut group_order);

    let key_of = |it: &Item| {
        let probe = Node::object(it.id, Vec3::ZERO, it.dim);
        sort_attribute(&probe, sort_key, axis)
    };
    let mut order: Vec<&Item> = Vec::with_capacity(n);
    for &grp in &group_order {
        let mut members: Vec<&Item> = items.iter().filter(|it| it.group == grp).collect();
        members.sort_by(|x, y| {
            let c = key_of(x).total_cmp(&key_of(y));
            let c = if sort_order == SortOrder::Descending {
                c.reverse()
            } else {
                c
            };
            c.then(x.id.cmp(&y.id))
        });
        order.extend(members);
    }

    let extents: f64 = order.iter().map(|it| it.dim.get(a)).sum();
    let mut object_gap = quantize(p.object_gap.sample(&mut rng), 0.01);
    let mut group_gap = quantize(p.group_gap.sample(&mut rng), 0.01);
    if let Some(span) = p.total_span {
        if g >= 2 {
            let fixed = extents + (n - g) as f64 * object_gap;
            let gg = ((span - fixed) / (g - 1) as f64 * 1000.0 + 1e-9).floor() / 1000.0;
            if gg < 0.0 {
                return Err(GenError::Infeasible(format!(
                    "total span {} m is smaller than object extents plus object gaps ({} m)",
                    format_number(span),
                    format_number(fixed)
                )));
            }
            group_gap = canonical_f64(gg);
        } else {
            let og = ((span - extents) / (n - 1) as f64 * 1000.0 + 1e-9).floor() / 1000.0;
            if og < 0.0 {
                return Err(GenError::Infeasible(format!(
                    "total span {} m is smaller than the object extents ({} m)",
                    format_number(span),
                    format_number(extents)
                )));
            }
            object_gap = canonical_f64(og);
        }
    }
    let total_span = canonical_f64(extents + (n - g) as f64 * object_gap + (g - 1) as f64 * group_gap);

    let support_z = quantize(p.support_z.sample(&mut rng), 0.01).max(0.01);
    let table_a = quantize(rng.uniform(-0.5, 0.5), 0.01);
    let lane = quantize(rng.uniform(-0.5, 0.5), 0.01);
    let margin = quantize(rng.uniform(0.15, 0.3), 0.01);
    let max_off = items.iter().map(|it| it.dim.get(o)).fold(0.0, f64::max);
    let table_len = canonical_f64(total_span + 2.0 * margin);
    let table_wid = quantize(rng.uniform(0.8, 1.2), 0.01).max(quantize(2.0 * max_off + 0.2, 0.01));
    let span_start = canonical_f64(table_a - total_span / 2.0);

    let mut table_center = Vec3::new(0.0, 0.0, canonical_f64(support_z / 2.0));
    table_center.set(a, table_a);
    table_center.set(o, lane);
    let mut table_dim = Vec3::new(0.0, 0.0, support_z);
    table_dim.set(a, table_len);
    table_dim.set(o, table_wid);
    let table = Node::container(TABLE_ID, table_center, table_dim).with_caption("table");

    // Target: prefix sums of extents and gaps from the span start.
    let mut target_nodes = vec![table.clone()];
    let mut cursor = span_start;
    for (k, it) in order.iter().enumerate() {
        if k > 0 {
            cursor += if order[k - 1].group == it.group {
                object_gap
            } else {
                group_gap
            };
        }
        let mut c = Vec3::new(0.0, 0.0, support_z + it.dim.z / 2.0);
        c.set(a, cursor + it.dim.get(a) / 2.0);
        c.set(o, lane);
        cursor += it.dim.get(a);
        target_nodes.push(Node::object(it.id, c, it.dim).with_caption(it.caption.clone()));
    }
    let target = SceneGraph::from_nodes(target_nodes)
        .map_err(|e| GenError::Invalid(e.to_string()))?
        .canonicalized();

    let initial = scatter(&mut rng, &table, &items, support_z)?;

    let group_order_labels: Vec<String> = group_order.iter().map(|&i| labels[i].to_string()).collect();
    let spec = SortSpec {
        group_key,
        sort_key,
        sort_order,
        group_order: group_order_labels.clone(),
        axis,
        span_start,
        lane,
        total_span,
        group_gap,
        object_gap,
        support_z,
    };
    let instruction = render(
        pick(&mut rng, &templates().sorting),
        &[
            ("group_key", group_key_name(group_key).to_string()),
            ("sort_key", sort_key_name(sort_key).to_string()),
            (
                "sort_order",
                match sort_order {
                    SortOrder::Ascending => "ascending".to_string(),
                    SortOrder::Descending => "descending".to_string(),
                },
            ),
            (
                "axis",
                match axis {
                    Axis::X => "x".to_string(),
                    Axis::Y => "y".to_string(),
                    Axis::Z => "z".to_string(),
                },
            ),
            ("group_order", group_order_labels.join(", ")),
            ("total_span", format_number(total_span)),
            ("object_gap", format_number(object_gap)),
            ("group_gap", format_number(group_gap)),
        ],
    );

    Ok(TaskInstance {
        id: format!("sorting-{seed:016x}"),
        task: TaskKind::Sorting,
        seed,
        instruction,
        spec: TaskSpec::Sorting(spec),
        initial_graph: initial,
        target_graph: target,
    })
}

fn group_key_name(k: GroupKey) -> &'static str {
    match k {
        GroupKey::Shape => "shape",
        GroupKey::Color => "color",
        GroupKey::Category => "category",
    }
}

fn sort_key_name(k: SortKey) -> &'static str {
    match k {
        SortKey::Height => "height",
        SortKey::Width => "width along the layout axis",
        SortKey::Volume => "volume",
    }
}

/// Random non-overlapping placement of the items on the table top.
fn scatter(rng: &mut Rng, table: &Node, items: &[Item], support_z: f64) -> Result<SceneGraph, GenError> {
    let top = table.aabb();
    for _restart in 0..50 {
        let mut placed: Vec<Node> = vec![table.clone()];
        let mut ok = true;
        for it in items {
            let half = it.dim.scale(0.5);
            let mut done = false;
            for _ in 0..500 {
                let x = quantize(rng.uniform(top.min.x + half.x, top.max.x - half.x), 0.01);
                let y = quantize(rng.uniform(top.min.y + half.y, top.max.y - half.y), 0.01);
                let c = Vec3::new(x, y, support_z + half.z);
                let cand = Node::object(it.id, c, it.dim);
                let b = cand.aabb();
                let clear = placed.iter().skip(1).all(|q| {
                    let qb = q.aabb();
                    b.max.x + SCATTER_CLEARANCE <= qb.min.x
                        || qb.max.x + SCATTER_CLEARANCE <= b.min.x
                        || b.max.y + SCATTER_CLEARANCE <= qb.min.y
                        || qb.max.y + SCATTER_CLEARANCE <= b.min.y
                });
                let inside = b.min.x >= top.min.x - 1e-9
                    && b.max.x <= top.max.x + 1e-9
                    && b.min.y >= top.min.y - 1e-9
                    && b.max.y <= top.max.y + 1e-9;
                if clear && inside {
                    let yaw = rng.int_in(0, 359) as f64 - 180.0;
                    placed.push(
                        cand.with_caption(it.caption.clone())
                            .with_rotation(Vec3::new(0.0, 0.0, yaw)),
                    );
                    done = true;
                    break;
                }
            }
            if !done {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(SceneGraph::from_nodes(placed)
                .map_err(|e| GenError::Invalid(e.to_string()))?
                .canonicalized());
        }
    }
    Err(GenError::Infeasible(
        "could not scatter the objects on the table without overlaps".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{axis_order, collision_score, DEFAULT_COLLISION_EPS};

    fn spec_of(inst: &TaskInstance) -> &SortSpec {
        match &inst.spec {
            TaskSpec::Sorting(s) => s,
            _ => unreachable!(),
        }
    }

    #[test]
    fn two_groups_of_two_follow_prefix_sums() {
        let p = SortingParams {
            n_objects: Interval::fixed(4),
            n_groups: Interval::fixed(2),
            group_gap: Interval::fixed(0.1),
            object_gap: Interval::fixed(0.05),
            ..SortingParams::default()
        };
        let inst = gen_sorting(42, &p).unwrap();
        let s = spec_of(&inst);
        assert_eq!((s.group_gap, s.object_gap), (0.1, 0.05));
        let a = s.axis.index();
        let order = axis_order(&inst.target_graph, s.axis);
        assert_eq!(order.len(), 4);

        // Independent re-accumulation: walk the target order, adding each
        // extent and the gap dictated by the group change.
        let group_of = |id| {
            let cap = inst.target_graph.get(id).unwrap().caption.clone().unwrap();
            vocab::caption_attribute(&cap, s.group_key).unwrap()
        };
        let mut face = s.span_start;
        for (k, &id) in order.iter().enumerate() {
            let n = inst.target_graph.get(id).unwrap();
            if k > 0 {
                face += if group_of(order[k - 1]) == group_of(id) {
                    0.05
                } else {
                    0.1
                };
            }
            let expected = face + n.dimension.get(a) / 2.0;
            assert!((n.center_location.get(a) - expected).abs() < 1e-9);
            face += n.dimension.get(a);
        }
        assert!((face - s.span_start - s.total_span).abs() < 1e-9);
    }

    #[test]
    fn targets_are_collision_free_and_snapped() {
        for seed in 0..40 {
            let inst = gen_sorting(seed, &SortingParams::default()).unwrap();
            let s = spec_of(&inst);
            assert_eq!(collision_score(&inst.target_graph, DEFAULT_COLLISION_EPS), 1.0);
            for n in inst.target_graph.objects() {
                assert!((n.aabb().min.z - s.support_z).abs() < 1e-9);
            }
            assert_eq!(inst.initial_graph.len(), inst.target_graph.len());
            assert_eq!(collision_score(&inst.initial_graph, DEFAULT_COLLISION_EPS), 1.0);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_sorting(42, &SortingParams::default()).unwrap();
        let b = gen_sorting(42, &SortingParams::default()).unwrap();
        assert_eq!(a.to_json_line(), b.to_json_line());
        let c = gen_sorting(43, &SortingParams::default()).unwrap();
        assert_ne!(a.to_json_line(), c.to_json_line());
    }

    #[test]
    fn too_short_span_is_infeasible() {
        let p = SortingParams {
            total_span: Some(0.1),
            ..SortingParams::default()
        };
        assert!(matches!(gen_sorting(1, &p), Err(GenError::Infeasible(_))));
        let p = SortingParams {
            total_span: Some(8.0),
            n_groups: Interval::fixed(2),
            ..SortingParams::default()
        };
        let inst = gen_sorting(1, &p).unwrap();
        let s = spec_of(&inst);
        assert!(s.total_span <= 8.0 && s.total_span > 8.0 - 0.002);
    }
}
