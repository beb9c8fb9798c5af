//! Rule-based solvers that rebuild a target layout from the initial graph
//! and the task spec, plus an independent constraint checker.

mod alignment;
mod placement;
mod sorting;
mod verify;

use serde::{Deserialize, Serialize};

use crate::benchgen::{TaskInstance, TaskSpec};
use crate::scene_graph::{Node, NodeId, SceneGraph, Vec3};

pub use alignment::{solve_alignment, AlignmentConfig};
pub use placement::{placement_residual, solve_placement};
pub use sorting::{expected_order, solve_sorting};
pub use verify::{verify, Check, VerifyReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unknown group label {0:?}")]
    UnknownLabel(String),
    #[error("node {0} not found")]
    MissingNode(NodeId),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub center: Vec3,
    pub rotation: Vec3,
}

impl Pose {
    pub fn of(n: &Node) -> Self {
        Pose {
            center: n.center_location,
            rotation: n.rotation,
        }
    }
}

/// One edit. `old_pose` is absent when the step inserts `inserted`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub node_id: NodeId,
    pub old_pose: Option<Pose>,
    pub new_pose: Pose,
    pub reason: String,
    #[serde(skip)]
    pub inserted: Option<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub graph: SceneGraph,
    /// Constraint violation norm, meters.
    pub residual: f64,
    pub steps: Vec<Step>,
}

/// Applies `steps` to `g0` in order.
pub fn replay(g0: &SceneGraph, steps: &[Step]) -> Result<SceneGraph, SolveError> {
    let mut g = g0.clone();
    for s in steps {
        let mut node = match (&s.old_pose, &s.inserted) {
            (None, Some(n)) => n.clone(),
            (Some(_), None) => g.get(s.node_id).cloned().ok_or(SolveError::MissingNode(s.node_id))?,
            _ => return Err(SolveError::Invalid(format!("malformed step for node {}", s.node_id))),
        };
        node.center_location = s.new_pose.center;
        node.rotation = s.new_pose.rotation;
        g.upsert(node).map_err(|e| SolveError::Invalid(e.to_string()))?;
    }
    Ok(g)
}

/// Moves `id` to `pose` in `g`, recording a step when anything changes.
fn move_node(g: &mut SceneGraph, steps: &mut Vec<Step>, id: NodeId, pose: Pose, reason: &str) {
    let Some(node) = g.get(id) else { return };
    let old = Pose::of(node);
    if old == pose {
        return;
    }
    let mut node = node.clone();
    node.center_location = pose.center;
    node.rotation = pose.rotation;
    g.upsert(node).expect("node was validated on insert");
    steps.push(Step {
        node_id: id,
        old_pose: Some(old),
        new_pose: pose,
        reason: reason.to_string(),
        inserted: None,
    });
}

/// Solves `inst` from its initial graph. The alignment solver only sees the
/// grid spec when `grid_hint` is set.
pub fn solve_instance(inst: &TaskInstance, grid_hint: bool) -> Result<SolveResult, SolveError> {
    match &inst.spec {
        TaskSpec::Sorting(s) => solve_sorting(&inst.initial_graph, s),
        TaskSpec::Alignment(g) => {
            solve_alignment(&inst.initial_graph, grid_hint.then_some(g), &AlignmentConfig::default())
        }
        TaskSpec::Roomedit(p) => solve_placement(&inst.initial_graph, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{generate, GenParams, TaskKind};
    use crate::metrics::{collision_score, iou_reward, DEFAULT_COLLISION_EPS};

    #[test]
    fn solutions_close_and_replay() {
        let params = GenParams::default();
        for task in TaskKind::ALL {
            for inst in generate(task, 25, 3, &params).unwrap() {
                for hint in [false, true] {
                    let r = solve_instance(&inst, hint).unwrap();
                    let g = r.graph.clone().canonicalized();
                    assert!(iou_reward(&g, &inst.target_graph) >= 0.999, "{}", inst.id);
                    assert_eq!(collision_score(&g, DEFAULT_COLLISION_EPS), 1.0);
                    assert_eq!(replay(&inst.initial_graph, &r.steps).unwrap(), r.graph);
                    let report = verify(&inst, &g);
                    assert!(
                        report.passed(),
                        "{}: {:?}",
                        inst.id,
                        report.failures().collect::<Vec<_>>()
                    );
                }
            }
        }
    }

    #[test]
    fn solving_a_solution_is_idempotent() {
        let params = GenParams::default();
        for task in [TaskKind::Sorting, TaskKind::Alignment] {
            for inst in generate(task, 10, 8, &params).unwrap() {
                let mut again = inst.clone();
                again.initial_graph = inst.target_graph.clone();
                let r = solve_instance(&again, false).unwrap();
                assert!(r.steps.is_empty(), "{}", inst.id);
                assert_eq!(r.graph, inst.target_graph);
            }
        }
    }
}
