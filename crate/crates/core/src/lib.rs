//! Scene-graph toolkit for instruction-conditioned 3D layout editing.
//!
//! The crate covers the full loop around a layout-editing policy:
//!
//! - [`scene_graph`]: the integer-keyed node dictionary, its canonical JSON
//!   form and derived box geometry.
//! - [`benchgen`]: seeded generators for the sorting, grid-alignment and
//!   room-editing benchmarks.
//! - [`solvers`]: rule-based oracles that recover each target layout and an
//!   independent constraint checker.
//! - [`metrics`] and [`rewards`]: IoU matching, collision-free score, edit
//!   distance, trace format scoring and the composite training reward.
//! - [`grpo`]: the group-relative clipped surrogate objective.
//! - [`cli`]: the `layoutkit` batch pipeline.

pub mod benchgen;
pub mod cli;
pub mod grpo;
pub mod metrics;
pub mod rewards;
pub mod rng;
pub mod scene_graph;
pub mod solvers;

pub use scene_graph::{Aabb, Node, NodeId, NodeType, SceneGraph, Vec3};
