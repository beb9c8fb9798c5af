use super::{move_node, Pose, SolveError, SolveResult};
use crate::benchgen::vocab::caption_attribute;
use crate::benchgen::{sort_attribute, SortOrder, SortSpec};
use crate::scene_graph::{canonical_f64, Node, NodeId, SceneGraph, Vec3};

/// Group label of `n` under the spec's grouping key.
pub(crate) fn group_label(n: &Node, spec: &SortSpec) -> Result<String, SolveError> {
    let caption = n.caption.as_deref().unwrap_or("");
    caption_attribute(caption, spec.group_key)
        .map(str::to_string)
        .ok_or_else(|| {
            SolveError::Invalid(format!(
                "node {} has no {:?} label in its caption",
                n.id, spec.group_key
            ))
        })
}

/// Object ids in the order the spec dictates along its axis.
pub fn expected_order(g: &SceneGraph, spec: &SortSpec) -> Result<Vec<NodeId>, SolveError> {
    let mut labelled = Vec::new();
    for n in g.objects() {
        let label = group_label(n, spec)?;
        if !spec.group_order.contains(&label) {
            return Err(SolveError::UnknownLabel(label));
        }
        labelled.push((label, n));
    }
    let mut order = Vec::with_capacity(labelled.len());
    for label in &spec.group_order {
        let mut members: Vec<&Node> = labelled.iter().filter(|(l, _)| l == label).map(|(_, n)| *n).collect();
        if members.is_empty() {
            return Err(SolveError::UnknownLabel(label.clone()));
        }
        members.sort_by(|a, b| {
            let ka = sort_attribute(a, spec.sort_key, spec.axis);
            let kb = sort_attribute(b, spec.sort_key, spec.axis);
            let c = ka.total_cmp(&kb);
            let c = if spec.sort_order == SortOrder::Descending {
                c.reverse()
            } else {
                c
            };
            c.then(a.id.cmp(&b.id))
        });
        order.extend(members.iter().map(|n| n.id));
    }
    Ok(order)
}

/// Off-axis line of the supporting table, falling back to the spec lane.
fn table_lane(g0: &SceneGraph, spec: &SortSpec) -> f64 {
    g0.nodes()
        .filter(|n| n.is_container())
        .max_by(|a, b| {
            let fa = a.dimension.x * a.dimension.y;
            let fb = b.dimension.x * b.dimension.y;
            fa.total_cmp(&fb).then(b.id.cmp(&a.id))
        })
        .map(|t| t.center_location.get(spec.off_axis_index()))
        .unwrap_or(spec.lane)
}

pub fn solve_sorting(g0: &SceneGraph, spec: &SortSpec) -> Result<SolveResult, SolveError> {
    let order = expected_order(g0, spec)?;
    let a = spec.axis_index();
    let o = spec.off_axis_index();
    let lane = table_lane(g0, spec);

    let nodes: Vec<&Node> = order
        .iter()
        .map(|id| g0.get(*id).expect("ordered ids come from g0"))
        .collect();
    let labels: Vec<String> = nodes.iter().map(|n| group_label(n, spec)).collect::<Result<_, _>>()?;
    let needed: f64 = nodes.iter().map(|n| n.dimension.get(a)).sum::<f64>()
        + labels
            .windows(2)
            .map(|w| if w[0] == w[1] { spec.object_gap } else { spec.group_gap })
            .sum::<f64>();
    if needed > spec.total_span + 1e-9 {
        return Err(SolveError::Infeasible(format!(
            "extents plus gaps need {needed} m but the span is {} m",
            spec.total_span
        )));
    }

    let mut g = g0.clone();
    let mut steps = Vec::new();
    let mut cursor = spec.span_start;
    for (k, n) in nodes.iter().enumerate() {
        if k > 0 {
            cursor += if labels[k - 1] == labels[k] {
                spec.object_gap
            } else {
                spec.group_gap
            };
        }
        let mut c = Vec3::new(0.0, 0.0, spec.support_z + n.dimension.z / 2.0);
        c.set(a, cursor + n.dimension.get(a) / 2.0);
        c.set(o, lane);
        cursor += n.dimension.get(a);
        let pose = Pose {
            center: Vec3::new(canonical_f64(c.x), canonical_f64(c.y), canonical_f64(c.z)),
            rotation: Vec3::ZERO,
        };
        move_node(&mut g, &mut steps, n.id, pose, &format!("slot {k} of the sorted row"));
    }
    let achieved = cursor - spec.span_start;
    Ok(SolveResult {
        graph: g,
        residual: (achieved - spec.total_span).abs(),
        steps,
    })
}
