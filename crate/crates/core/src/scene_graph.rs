//! Scene-graph data model and its canonical JSON form.
//!
//! A scene graph is a dictionary keyed by integer node ids. Each node carries
//! a type, a center, axis-aligned dimensions, a roll/pitch/yaw rotation in
//! degrees and an optional caption. Relation edges are derived from geometry
//! and never serialized.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::{Map, Value};

pub type NodeId = u32;

/// Number of decimals kept by the canonical serializer.
pub const CANONICAL_DECIMALS: usize = 6;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("node {node}: field `{field}`: {message}")]
    Validation {
        node: String,
        field: String,
        message: String,
    },
}

impl GraphError {
    fn validation(node: impl fmt::Display, field: &str, message: impl Into<String>) -> Self {
        GraphError::Validation {
            node: node.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::from_array(a)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    /// Component along axis 0, 1 or 2.
    pub fn get(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn set(&mut self, axis: usize, v: f64) {
        match axis {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn product(self) -> f64 {
        self.x * self.y * self.z
    }

    fn canonical(self) -> Vec3 {
        Vec3::new(canonical_f64(self.x), canonical_f64(self.y), canonical_f64(self.z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Object,
    Container,
}

impl NodeType {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Object => "object",
            NodeType::Container => "container",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub node_type: NodeType,
    pub center_location: Vec3,
    /// Length, width, height in meters.
    pub dimension: Vec3,
    /// Roll, pitch, yaw in degrees.
    pub rotation: Vec3,
    pub caption: Option<String>,
    /// Unknown fields kept verbatim so files round-trip.
    pub extras: BTreeMap<String, Value>,
}

impl Node {
    pub fn object(id: NodeId, center: Vec3, dimension: Vec3) -> Self {
        Self {
            id,
            node_type: NodeType::Object,
            center_location: center,
            dimension,
            rotation: Vec3::ZERO,
            caption: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn container(id: NodeId, center: Vec3, dimension: Vec3) -> Self {
        Self {
            node_type: NodeType::Container,
            ..Self::object(id, center, dimension)
        }
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn with_rotation(mut self, rotation: Vec3) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn is_container(&self) -> bool {
        self.node_type == NodeType::Container
    }

    /// Axis-aligned world box. Rotation does not affect the extent.
    pub fn aabb(&self) -> Aabb {
        world_aabb(self)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let checks = [
            ("center_location", self.center_location),
            ("dimension", self.dimension),
            ("rotation", self.rotation),
        ];
        for (field, v) in checks {
            if !v.is_finite() {
                return Err(GraphError::validation(self.id, field, "non-finite component"));
            }
        }
        let d = self.dimension;
        if d.x <= 0.0 || d.y <= 0.0 || d.z <= 0.0 {
            return Err(GraphError::validation(
                self.id,
                "dimension",
                "components must be strictly positive",
            ));
        }
        let r = self.rotation;
        if [r.x, r.y, r.z].iter().any(|a| !(-180.0..=180.0).contains(a)) {
            return Err(GraphError::validation(
                self.id,
                "rotation",
                "components must lie in [-180, 180] degrees",
            ));
        }
        Ok(())
    }

    /// Rounds every coordinate to the canonical decimal grid.
    pub fn canonicalize(&mut self) {
        self.center_location = self.center_location.canonical();
        self.dimension = self.dimension.canonical();
        self.rotation = self.rotation.canonical();
    }

    fn write_canonical(&self, out: &mut String) {
        out.push_str("{\"node_type\":\"");
        out.push_str(self.node_type.as_str());
        out.push_str("\",\"center_location\":");
        write_vec3(out, self.center_location);
        out.push_str(",\"dimension\":");
        write_vec3(out, self.dimension);
        out.push_str(",\"rotation\":");
        write_vec3(out, self.rotation);
        if let Some(caption) = &self.caption {
            out.push_str(",\"caption\":");
            out.push_str(&serde_json::to_string(caption).expect("string serialization"));
        }
        for (k, v) in &self.extras {
            out.push(',');
            out.push_str(&serde_json::to_string(k).expect("string serialization"));
            out.push(':');
            out.push_str(&serde_json::to_string(v).expect("value serialization"));
        }
        out.push('}');
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max }
    }

    pub fn from_center(center: Vec3, dimension: Vec3) -> Self {
        let half = dimension.scale(0.5);
        Self {
            min: center - half,
            max: center + half,
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max).scale(0.5)
    }

    pub fn volume(&self) -> f64 {
        self.extent().product()
    }

    pub fn translate(&self, t: Vec3) -> Aabb {
        Aabb {
            min: self.min + t,
            max: self.max + t,
        }
    }

    /// True when `other` lies within `self`, allowing `tol` slack per face.
    pub fn contains_box(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|a| other.min.get(a) >= self.min.get(a) - tol && other.max.get(a) <= self.max.get(a) + tol)
    }
}

/// Box of extent `dimension` centered at `center_location`.
pub fn world_aabb(n: &Node) -> Aabb {
    Aabb::from_center(n.center_location, n.dimension)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Contact,
    Containment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeConfig {
    /// Fraction of the child's volume that must lie inside a container.
    pub containment_fraction: f64,
    /// Maximum vertical gap between a supporter's top and the child's bottom.
    pub contact_gap: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            containment_fraction: 0.95,
            contact_gap: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SceneGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
}

/// Graphs compare by their nodes; edges are derived data.
impl PartialEq for SceneGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

impl SceneGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from nodes, rejecting invalid nodes and duplicate ids.
    pub fn from_nodes(nodes: impl IntoIterator<Item = Node>) -> Result<Self, GraphError> {
        let mut g = SceneGraph::new();
        for n in nodes {
            g.insert(n)?;
        }
        Ok(g)
    }

    pub fn insert(&mut self, node: Node) -> Result<(), GraphError> {
        node.validate()?;
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::validation(node.id, "id", "duplicate node id"));
        }
        self.nodes.insert(node.id, node);
        self.edges.clear();
        Ok(())
    }

    /// Replaces an existing node (or inserts a new one) after validation.
    pub fn upsert(&mut self, node: Node) -> Result<Option<Node>, GraphError> {
        node.validate()?;
        self.edges.clear();
        Ok(self.nodes.insert(node.id, node))
    }

    pub fn remove(&mut self, id: NodeId) -> Option<Node> {
        self.edges.clear();
        self.nodes.remove(&id)
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Non-container nodes in ascending id order.
    pub fn objects(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.values().filter(|n| !n.is_container())
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.nodes.keys().next_back().copied()
    }

    pub fn translated(&self, t: Vec3) -> SceneGraph {
        let nodes = self
            .nodes
            .iter()
            .map(|(&id, n)| {
                let mut n = n.clone();
                n.center_location = n.center_location + t;
                (id, n)
            })
            .collect();
        SceneGraph {
            nodes,
            edges: Vec::new(),
        }
    }

    pub fn canonicalize(&mut self) {
        for n in self.nodes.values_mut() {
            n.canonicalize();
        }
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }

    pub fn to_canonical_json(&self) -> String {
        serialize_scene_graph(self)
    }

    pub fn with_edges(mut self, cfg: &EdgeConfig) -> Self {
        self.edges = compute_edges(&self, cfg);
        self
    }
}

/// Parses a scene-graph JSON document.
pub fn parse_scene_graph(text: &str) -> Result<SceneGraph, GraphError> {
    let entries: Entries = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => GraphError::validation("<root>", "<root>", e.to_string()),
        _ => GraphError::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        },
    })?;

    let mut g = SceneGraph::new();
    for (key, value) in entries.0 {
        let id = parse_id(&key)?;
        if g.nodes.contains_key(&id) {
            return Err(GraphError::validation(key, "id", "duplicate node key"));
        }
        let node = node_from_value(id, value)?;
        node.validate()?;
        g.nodes.insert(id, node);
    }
    Ok(g)
}

/// Canonical JSON: ascending numeric keys, fixed field order, numbers with at
/// most six decimals and no trailing zeros.
pub fn serialize_scene_graph(g: &SceneGraph) -> String {
    let mut out = String::with_capacity(64 + g.len() * 160);
    out.push('{');
    for (i, (id, node)) in g.nodes.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('"');
        out.push_str(&id.to_string());
        out.push_str("\":");
        node.write_canonical(&mut out);
    }
    out.push('}');
    out
}

/// Formats a number on the canonical decimal grid.
pub fn format_number(x: f64) -> String {
    let mut s = format!("{:.*}", CANONICAL_DECIMALS, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

/// The value `x` takes after a serialize/parse cycle.
pub fn canonical_f64(x: f64) -> f64 {
    format_number(x).parse().expect("formatted number parses")
}

/// Populates contact and containment edges from box geometry.
pub fn derive_edges(g: &SceneGraph) -> SceneGraph {
    derive_edges_with(g, &EdgeConfig::default())
}

pub fn derive_edges_with(g: &SceneGraph, cfg: &EdgeConfig) -> SceneGraph {
    g.clone().with_edges(cfg)
}

fn compute_edges(g: &SceneGraph, cfg: &EdgeConfig) -> Vec<Edge> {
    let mut edges = Vec::new();
    for p in g.nodes() {
        let pb = p.aabb();
        for c in g.nodes() {
            if p.id == c.id {
                continue;
            }
            let cb = c.aabb();
            if p.is_container() {
                let inside = crate::metrics::intersection_volume(&pb, &cb);
                if inside >= cfg.containment_fraction * cb.volume() {
                    edges.push(Edge {
                        parent: p.id,
                        child: c.id,
                        relation: Relation::Containment,
                    });
                    continue;
                }
            }
            let overlap_xy = (0..2).all(|a| pb.max.get(a).min(cb.max.get(a)) - pb.min.get(a).max(cb.min.get(a)) > 0.0);
            if overlap_xy && (pb.max.z - cb.min.z).abs() <= cfg.contact_gap {
                edges.push(Edge {
                    parent: p.id,
                    child: c.id,
                    relation: Relation::Contact,
                });
            }
        }
    }
    edges.sort();
    edges
}

fn write_vec3(out: &mut String, v: Vec3) {
    out.push('[');
    out.push_str(&format_number(v.x));
    out.push(',');
    out.push_str(&format_number(v.y));
    out.push(',');
    out.push_str(&format_number(v.z));
    out.push(']');
}

fn parse_id(key: &str) -> Result<NodeId, GraphError> {
    if key.is_empty() || !key.bytes().all(|b| b.is_ascii_digit()) {
        return Err(GraphError::validation(
            key,
            "id",
            "keys must be decimal integer strings",
        ));
    }
    key.parse()
        .map_err(|_| GraphError::validation(key, "id", "node id out of range"))
}

fn node_from_value(id: NodeId, value: Value) -> Result<Node, GraphError> {
    let Value::Object(mut map) = value else {
        return Err(GraphError::validation(id, "<node>", "node must be a JSON object"));
    };
    let node_type = match map.remove("node_type") {
        Some(Value::String(s)) => match s.as_str() {
            "object" => NodeType::Object,
            "container" => NodeType::Container,
            other => {
                return Err(GraphError::validation(
                    id,
                    "node_type",
                    format!("unknown node type {other:?}"),
                ))
            }
        },
        Some(_) => return Err(GraphError::validation(id, "node_type", "expected a string")),
        None => return Err(GraphError::validation(id, "node_type", "missing required field")),
    };
    let center_location = take_vec3(id, &mut map, "center_location")?;
    let dimension = take_vec3(id, &mut map, "dimension")?;
    let rotation = take_vec3(id, &mut map, "rotation")?;
    let caption = match map.remove("caption") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(GraphError::validation(id, "caption", "expected a string")),
    };
    Ok(Node {
        id,
        node_type,
        center_location,
        dimension,
        rotation,
        caption,
        extras: map.into_iter().collect(),
    })
}

fn take_vec3(id: NodeId, map: &mut Map<String, Value>, field: &str) -> Result<Vec3, GraphError> {
    let value = map
        .remove(field)
        .ok_or_else(|| GraphError::validation(id, field, "missing required field"))?;
    let Value::Array(items) = value else {
        return Err(GraphError::validation(id, field, "expected an array of 3 numbers"));
    };
    if items.len() != 3 {
        return Err(GraphError::validation(id, field, "expected an array of 3 numbers"));
    }
    let mut out = [0.0; 3];
    for (slot, item) in out.iter_mut().zip(&items) {
        *slot = item
            .as_f64()
            .ok_or_else(|| GraphError::validation(id, field, "expected an array of 3 numbers"))?;
    }
    Ok(Vec3::from_array(out))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

/// Top-level object entries in document order, duplicates included.
struct Entries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object keyed by integer node ids")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(EntriesVisitor)
    }
}

impl Serialize for SceneGraph {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(serialize_scene_graph(self)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SceneGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Box::<RawValue>::deserialize(d)?;
        parse_scene_graph(raw.get()).map_err(de::Error::custom)
    }
}

impl fmt::Display for SceneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_scene_graph(self))
    }
}
