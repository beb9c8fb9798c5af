//! Seeded generators for the sorting, grid-alignment and room-editing
//! benchmarks.
//!
//! Every instance is a pure function of `(seed, params)`. Targets are built
//! constructively so they satisfy their constraint spec exactly and are
//! collision-free; all coordinates are snapped to the canonical decimal grid
//! before emission so the JSONL bytes are stable.

mod alignment;
mod instructions;
mod roomedit;
mod sorting;
pub mod vocab;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::metrics::Axis;
use crate::rng::derive_seed;
use crate::scene_graph::{Aabb, Node, NodeId, SceneGraph, Vec3};

pub use alignment::{gen_alignment, AlignmentParams};
pub use roomedit::{gen_roomedit, RoomeditParams};
pub use sorting::{gen_sorting, sort_attribute, SortingParams};

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Sorting,
    Alignment,
    Roomedit,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Sorting, TaskKind::Alignment, TaskKind::Roomedit];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sorting => "sorting",
            TaskKind::Alignment => "alignment",
            TaskKind::Roomedit => "roomedit",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sorting" => Ok(TaskKind::Sorting),
            "alignment" => Ok(TaskKind::Alignment),
            "roomedit" => Ok(TaskKind::Roomedit),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Shape,
    Color,
    Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortKey {
    Height,
    /// Extent along the layout axis.
    Width,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortOrder {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortSpec {
    pub group_key: GroupKey,
    pub sort_key: SortKey,
    pub sort_order: SortOrder,
    /// Group labels from low to high coordinate along `axis`.
    pub group_order: Vec<String>,
    pub axis: Axis,
    /// Coordinate of the first object's leading face.
    pub span_start: f64,
    /// Off-axis coordinate shared by every object (the table center line).
    pub lane: f64,
    pub total_span: f64,
    pub group_gap: f64,
    pub object_gap: f64,
    /// Height of the supporting table top.
    pub support_z: f64,
}

impl SortSpec {
    pub fn axis_index(&self) -> usize {
        self.axis.index()
    }

    pub fn off_axis_index(&self) -> usize {
        1 - self.axis.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub row: usize,
    pub col: usize,
    pub id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub origin: Vec3,
    pub pitch_x: f64,
    pub pitch_y: f64,
    /// Row-major.
    pub cell_assignment: Vec<CellAssignment>,
    /// Group label of each row.
    pub row_groups: Vec<String>,
    /// Canonical yaw in degrees per group label.
    pub canonical_rotation: BTreeMap<String, f64>,
    /// Sorted ascending.
    pub perturbed_ids: Vec<NodeId>,
}

impl GridSpec {
    pub fn cell_center(&self, row: usize, col: usize) -> Vec3 {
        Vec3::new(
            self.origin.x + col as f64 * self.pitch_x,
            self.origin.y + row as f64 * self.pitch_y,
            self.origin.z,
        )
    }

    pub fn cell_of(&self, id: NodeId) -> Option<(usize, usize)> {
        self.cell_assignment.iter().find(|c| c.id == id).map(|c| (c.row, c.col))
    }

    pub fn yaw_for_row(&self, row: usize) -> Option<f64> {
        self.row_groups
            .get(row)
            .and_then(|g| self.canonical_rotation.get(g))
            .copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub id: NodeId,
    /// Center-to-center distance on the floor plane, meters.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    /// Dimensions and caption of the object to insert; its position in this
    /// record is not meaningful.
    #[serde(with = "single_node")]
    pub new_node: Node,
    pub references: Vec<Reference>,
    pub room_bounds: Aabb,
}

mod single_node {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &Node, s: S) -> Result<S::Ok, S::Error> {
        let g = SceneGraph::from_nodes([n.clone()]).map_err(serde::ser::Error::custom)?;
        g.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Node, D::Error> {
        let g = SceneGraph::deserialize(d)?;
        let mut nodes = g.nodes();
        match (nodes.next(), nodes.next()) {
            (Some(n), None) => Ok(n.clone()),
            _ => Err(de::Error::custom("new_node must hold exactly one node")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TaskSpec {
    Sorting(SortSpec),
    Alignment(GridSpec),
    Roomedit(PlacementSpec),
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::Sorting(_) => TaskKind::Sorting,
            TaskSpec::Alignment(_) => TaskKind::Alignment,
            TaskSpec::Roomedit(_) => TaskKind::Roomedit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskInstance {
    pub id: String,
    pub task: TaskKind,
    pub seed: u64,
    pub instruction: String,
    pub spec: TaskSpec,
    pub initial_graph: SceneGraph,
    pub target_graph: SceneGraph,
}

impl TaskInstance {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("task instance serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }

    /// Sort axis used for edit distance, if the task has one.
    pub fn sort_axis(&self) -> Option<Axis> {
        match &self.spec {
            TaskSpec::Sorting(s) => Some(s.axis),
            _ => None,
        }
    }
}

impl<'de> Deserialize<'de> for TaskInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;

        #[derive(Deserialize)]
        struct Raw {
            id: String,
            task: TaskKind,
            seed: u64,
            instruction: String,
            spec: Box<RawValue>,
            initial_graph: SceneGraph,
            target_graph: SceneGraph,
        }
        let raw = Raw::deserialize(d)?;
        let spec = match raw.task {
            TaskKind::Sorting => TaskSpec::Sorting(serde_json::from_str(raw.spec.get()).map_err(D::Error::custom)?),
            TaskKind::Alignment => TaskSpec::Alignment(serde_json::from_str(raw.spec.get()).map_err(D::Error::custom)?),
            TaskKind::Roomedit => TaskSpec::Roomedit(serde_json::from_str(raw.spec.get()).map_err(D::Error::custom)?),
        };
        Ok(TaskInstance {
            id: raw.id,
            task: raw.task,
            seed: raw.seed,
            instruction: raw.instruction,
            spec,
            initial_graph: raw.initial_graph,
            target_graph: raw.target_graph,
        })
    }
}

/// Closed interval parameter; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy + PartialOrd + fmt::Display> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub fn fixed(v: T) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn check(&self, name: &str) -> Result<(), GenError> {
        if self.lo > self.hi {
            return Err(GenError::Invalid(format!(
                "{name}: lower bound {} exceeds upper bound {}",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

impl<T: FromStr + Copy> FromStr for Interval<T> {
    type Err = String;
    /// `"3"` or `"3-5"` (also `"3..5"`).
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("bad value {v:?}"));
        let split = s.split_once("..").or_else(|| {
            s.char_indices()
                .skip(1)
                .find(|&(_, c)| c == '-')
                .map(|(i, _)| (&s[..i], &s[i + 1..]))
        });
        match split {
            Some((a, b)) => Ok(Interval {
                lo: parse(a)?,
                hi: parse(b)?,
            }),
            None => {
                let v = parse(s)?;
                Ok(Interval { lo: v, hi: v })
            }
        }
    }
}

impl Interval<f64> {
    pub fn sample(&self, rng: &mut crate::rng::Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.uniform(self.lo, self.hi)
        }
    }
}

impl Interval<usize> {
    pub fn sample(&self, rng: &mut crate::rng::Rng) -> usize {
        rng.int_in(self.lo as u64, self.hi as u64) as usize
    }
}

/// Rounds to a multiple of `step` (used to keep sampled sizes on a
/// centimeter or millimeter grid).
pub(crate) fn quantize(v: f64, step: f64) -> f64 {
    crate::scene_graph::canonical_f64((v / step).round() * step)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub sorting: SortingParams,
    pub alignment: AlignmentParams,
    pub roomedit: RoomeditParams,
}

/// Zero-padded instance id; lexicographic order equals index order.
pub fn instance_id(task: TaskKind, index: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(6);
    format!("{}-{:0width$}", task.as_str(), index, width = width)
}

pub fn generate_one(
    task: TaskKind,
    base_seed: u64,
    index: usize,
    count: usize,
    params: &GenParams,
) -> Result<TaskInstance, GenError> {
    let seed = derive_seed(base_seed, index as u64);
    let mut inst = match task {
        TaskKind::Sorting => gen_sorting(seed, &params.sorting)?,
        TaskKind::Alignment => gen_alignment(seed, &params.alignment)?,
        TaskKind::Roomedit => gen_roomedit(seed, &params.roomedit)?,
    };
    inst.id = instance_id(task, index, count);
    Ok(inst)
}

/// Generates `count` instances, in index order.
pub fn generate(
    task: TaskKind,
    count: usize,
    base_seed: u64,
    params: &GenParams,
) -> Result<Vec<TaskInstance>, GenError> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| generate_one(task, base_seed, i, count, params))
        .collect()
}

/// Writes one canonical JSON record per line, ordered by id.
pub fn write_dataset(instances: &[TaskInstance], path: &Path) -> Result<(), GenError> {
    let io = |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut sorted: Vec<&TaskInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for inst in sorted {
        w.write_all(inst.to_json_line().as_bytes()).map_err(io)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<Vec<TaskInstance>, GenError> {
    let io = |source| GenError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = TaskInstance::from_json_line(&line).map_err(|message| GenError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        out.push(inst);
    }
    Ok(out)
}
