//! Python bindings. Graphs cross the boundary as canonical JSON text or as
//! the `SceneGraph` wrapper class.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use layoutkit::benchgen::{self, GenParams, TaskInstance, TaskKind};
use layoutkit::grpo::{self, GrpoConfig, RolloutGroup};
use layoutkit::metrics::{self, Axis, DEFAULT_COLLISION_EPS};
use layoutkit::rewards::{self, RewardConfig};
use layoutkit::scene_graph::{self, Aabb, Vec3};
use layoutkit::solvers;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_axis(axis: &str) -> PyResult<Axis> {
    axis.parse().map_err(value_err)
}

#[pyclass(name = "SceneGraph", module = "layoutkit_py", from_py_object)]
#[derive(Clone)]
pub struct PySceneGraph {
    inner: scene_graph::SceneGraph,
}

#[pymethods]
impl PySceneGraph {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        scene_graph::parse_scene_graph(json)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    /// Canonical JSON text.
    fn to_json(&self) -> String {
        self.inner.to_canonical_json()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("SceneGraph({} nodes)", self.inner.len())
    }

    fn ids(&self) -> Vec<u32> {
        self.inner.ids().collect()
    }

    /// `(min, max)` corners of node `id`'s box.
    fn aabb(&self, id: u32) -> PyResult<([f64; 3], [f64; 3])> {
        let n = self
            .inner
            .get(id)
            .ok_or_else(|| PyValueError::new_err(format!("no node {id}")))?;
        let b = n.aabb();
        Ok((b.min.to_array(), b.max.to_array()))
    }

    fn iou_reward(&self, target: &Self) -> f64 {
        metrics::iou_reward(&self.inner, &target.inner)
    }

    #[pyo3(signature = (eps = DEFAULT_COLLISION_EPS))]
    fn collision_score(&self, eps: f64) -> f64 {
        metrics::collision_score(&self.inner, eps)
    }

    fn center_distance(&self, target: &Self) -> Option<f64> {
        metrics::center_distance(&self.inner, &target.inner).mean
    }

    #[pyo3(signature = (target, threshold = 0.5))]
    fn iou_at(&self, target: &Self, threshold: f64) -> f64 {
        metrics::iou_at(&self.inner, &target.inner, threshold)
    }

    #[pyo3(signature = (target, axis = "x"))]
    fn edit_distance(&self, target: &Self, axis: &str) -> PyResult<f64> {
        Ok(metrics::edit_distance(&self.inner, &target.inner, parse_axis(axis)?))
    }
}

fn aabb(min: [f64; 3], max: [f64; 3]) -> Aabb {
    Aabb::new(Vec3::from_array(min), Vec3::from_array(max))
}

/// IoU of two boxes given as min/max corners.
#[pyfunction]
fn iou3d(min_a: [f64; 3], max_a: [f64; 3], min_b: [f64; 3], max_b: [f64; 3]) -> PyResult<f64> {
    metrics::iou3d(&aabb(min_a, max_a), &aabb(min_b, max_b)).map_err(value_err)
}

#[pyfunction]
fn levenshtein(a: Vec<i64>, b: Vec<i64>) -> usize {
    metrics::levenshtein(&a, &b)
}

#[pyfunction]
fn format_score(text: &str) -> f64 {
    rewards::format_score(&rewards::parse_trace(text))
}

#[pyfunction]
fn canonical_trace(graph: &PySceneGraph) -> String {
    rewards::canonical_trace(&graph.inner)
}

/// Composite reward with its components, as a dict.
#[pyfunction]
#[pyo3(signature = (text, target, lambda1 = 0.2, lambda2 = 0.2))]
fn composite_reward<'py>(
    py: Python<'py>,
    text: &str,
    target: &PySceneGraph,
    lambda1: f64,
    lambda2: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RewardConfig {
        lambda1,
        lambda2,
        ..RewardConfig::default()
    };
    let r = rewards::composite_reward(text, &target.inner, &cfg);
    let d = PyDict::new(py);
    d.set_item("iou", r.iou)?;
    d.set_item("coll", r.coll)?;
    d.set_item("fmt", r.fmt)?;
    d.set_item("composite", r.composite)?;
    let defects: Vec<String> = r.defects.iter().map(|d| format!("{d:?}")).collect();
    d.set_item("defects", defects)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (rewards, std_floor = 1e-8))]
fn group_advantages(rewards: Vec<f64>, std_floor: f64) -> Vec<f64> {
    grpo::group_advantages(&rewards, std_floor)
}

/// Scalar GRPO objective for one group.
#[pyfunction]
#[pyo3(signature = (rewards, logp_new, logp_old, logp_ref, clip_eps = 0.2, kl_beta = 0.01))]
fn grpo_objective(
    rewards: Vec<f64>,
    logp_new: Vec<Vec<f64>>,
    logp_old: Vec<Vec<f64>>,
    logp_ref: Vec<Vec<f64>>,
    clip_eps: f64,
    kl_beta: f64,
) -> PyResult<f64> {
    let group = RolloutGroup::new(rewards, logp_new, logp_old, logp_ref).map_err(value_err)?;
    let cfg = GrpoConfig {
        clip_eps,
        kl_beta,
        ..GrpoConfig::default()
    };
    Ok(grpo::grpo_objective(&group, &cfg).objective)
}

/// Generates `count` instances as manifest JSON lines.
#[pyfunction]
fn generate(task: &str, count: usize, seed: u64) -> PyResult<Vec<String>> {
    let kind: TaskKind = task.parse().map_err(value_err)?;
    benchgen::generate(kind, count, seed, &GenParams::default())
        .map(|v| v.iter().map(TaskInstance::to_json_line).collect())
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Solves one manifest line; returns `(graph, residual)`.
#[pyfunction]
#[pyo3(signature = (instance_json, grid_hint = false))]
fn solve(instance_json: &str, grid_hint: bool) -> PyResult<(PySceneGraph, f64)> {
    let inst = TaskInstance::from_json_line(instance_json).map_err(value_err)?;
    let r = solvers::solve_instance(&inst, grid_hint).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((
        PySceneGraph {
            inner: r.graph.canonicalized(),
        },
        r.residual,
    ))
}

/// Target graph of a manifest line.
#[pyfunction]
fn target_graph(instance_json: &str) -> PyResult<PySceneGraph> {
    let inst = TaskInstance::from_json_line(instance_json).map_err(value_err)?;
    Ok(PySceneGraph {
        inner: inst.target_graph,
    })
}

/// Names of the failed constraint checks for `candidate`.
#[pyfunction]
fn verify(instance_json: &str, candidate: &PySceneGraph) -> PyResult<Vec<String>> {
    let inst = TaskInstance::from_json_line(instance_json).map_err(value_err)?;
    Ok(solvers::verify(&inst, &candidate.inner)
        .failures()
        .map(|c| c.name.clone())
        .collect())
}

#[pymodule]
fn layoutkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySceneGraph>()?;
    m.add_function(wrap_pyfunction!(iou3d, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(format_score, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_trace, m)?)?;
    m.add_function(wrap_pyfunction!(composite_reward, m)?)?;
    m.add_function(wrap_pyfunction!(group_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(grpo_objective, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(target_graph, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
