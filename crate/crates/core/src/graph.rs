//! World model: grounded object nodes, typed relation edges, immutable
//! snapshots and change detection between snapshots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{Box3, Vec3};

/// Default displacement above which a node counts as moved, in meters.
pub const DEFAULT_MOVE_THRESHOLD: f64 = 0.15;
/// Maximum anchor distance for re-identifying a same-label node, in meters.
pub const ASSOCIATION_RADIUS: f64 = 0.3;

pub type NodeId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge {src}->{dst} references a missing node")]
    DanglingEdge { src: NodeId, dst: NodeId },
    #[error("duplicate edge for ordered pair {src}->{dst}")]
    DuplicateEdge { src: NodeId, dst: NodeId },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("invalid node {id}: {reason}")]
    InvalidNode { id: NodeId, reason: String },
    #[error("edge {src}->{dst} confidence {confidence} outside [0, 1]")]
    InvalidConfidence { src: NodeId, dst: NodeId, confidence: f64 },
    #[error("unknown relation '{name}'; expected one of: {valid}")]
    UnknownRelation { name: String, valid: String },
    #[error("timestamp {new} precedes current timestamp {current}")]
    TimeReversal { current: f64, new: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationFamily {
    Spatial,
    HighLevel,
}

/// Relation taxonomy. Declaration order is the argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationType {
    On,
    Under,
    NextTo,
    Behind,
    WithinReach,
    ClosestTo,
    Blocking,
    Sequential,
    Causal,
    Structural,
    Functional,
    Semantic,
    Dependence,
    Interaction,
    Referential,
}

impl RelationType {
    pub const COUNT: usize = 15;

    pub const ALL: [RelationType; Self::COUNT] = [
        RelationType::On,
        RelationType::Under,
        RelationType::NextTo,
        RelationType::Behind,
        RelationType::WithinReach,
        RelationType::ClosestTo,
        RelationType::Blocking,
        RelationType::Sequential,
        RelationType::Causal,
        RelationType::Structural,
        RelationType::Functional,
        RelationType::Semantic,
        RelationType::Dependence,
        RelationType::Interaction,
        RelationType::Referential,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::On => "on",
            RelationType::Under => "under",
            RelationType::NextTo => "next-to",
            RelationType::Behind => "behind",
            RelationType::WithinReach => "within-reach",
            RelationType::ClosestTo => "closest-to",
            RelationType::Blocking => "blocking",
            RelationType::Sequential => "sequential",
            RelationType::Causal => "causal",
            RelationType::Structural => "structural",
            RelationType::Functional => "functional",
            RelationType::Semantic => "semantic",
            RelationType::Dependence => "dependence",
            RelationType::Interaction => "interaction",
            RelationType::Referential => "referential",
        }
    }

    pub fn family(self) -> RelationFamily {
        if self.index() <= RelationType::Blocking.index() {
            RelationFamily::Spatial
        } else {
            RelationFamily::HighLevel
        }
    }

    pub fn is_spatial(self) -> bool {
        self.family() == RelationFamily::Spatial
    }

    /// Relations that hold in both directions once they hold in one.
    pub fn is_bidirectional(self) -> bool {
        matches!(self, RelationType::Structural | RelationType::Interaction)
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|r| r.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationType {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|r| r.name() == lower)
            .ok_or_else(|| GraphError::UnknownRelation {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

impl Serialize for RelationType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RelationType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: NodeId,
    pub label: String,
    pub confidence: f64,
    pub anchor: Vec3,
    pub volume: Box3,
    pub last_seen: f64,
}

impl ObjectNode {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |reason: String| {
            Err(GraphError::InvalidNode {
                id: self.id,
                reason,
            })
        };
        if !(0.0..=1.0).contains(&self.confidence) {
            return bad(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if self.label.trim().is_empty() {
            return bad("empty label".into());
        }
        if !self.anchor.is_finite() || !self.last_seen.is_finite() {
            return bad("non-finite anchor or timestamp".into());
        }
        if let Err(e) = self.volume.validate() {
            return bad(e.to_string());
        }
        if !self.volume.contains_with_tolerance(self.anchor, 1e-9) {
            return bad("anchor outside bounding volume".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationEdge {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(rename = "rel")]
    pub relation: RelationType,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneGraph {
    nodes: BTreeMap<NodeId, ObjectNode>,
    edges: Vec<RelationEdge>,
    pub user_position: Vec3,
    timestamp: f64,
}

impl SceneGraph {
    pub fn new(user_position: Vec3) -> Self {
        Self {
            user_position,
            ..Self::default()
        }
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    /// Advances the world clock; time never runs backwards.
    pub fn set_timestamp(&mut self, t: f64) -> Result<(), GraphError> {
        if t < self.timestamp {
            return Err(GraphError::TimeReversal {
                current: self.timestamp,
                new: t,
            });
        }
        self.timestamp = t;
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ObjectNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&ObjectNode> {
        self.nodes.get(&id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.edges
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<&RelationEdge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    pub fn next_id(&self) -> NodeId {
        self.nodes.keys().next_back().map_or(0, |k| k + 1)
    }

    /// Inserts or replaces the node with the same id. Edges are untouched.
    pub fn upsert_node(&mut self, node: ObjectNode) -> Result<(), GraphError> {
        node.validate()?;
        self.nodes.insert(node.id, node);
        Ok(())
    }

    /// Removes a node together with every edge touching it.
    pub fn remove_node(&mut self, id: NodeId) -> Option<ObjectNode> {
        let removed = self.nodes.remove(&id)?;
        self.edges.retain(|e| e.src != id && e.dst != id);
        Some(removed)
    }

    /// Atomically replaces the edge set after validating every edge.
    pub fn set_edges(&mut self, mut edges: Vec<RelationEdge>) -> Result<(), GraphError> {
        let mut seen = BTreeSet::new();
        for e in &edges {
            self.check_edge(e)?;
            if !seen.insert((e.src, e.dst)) {
                return Err(GraphError::DuplicateEdge { src: e.src, dst: e.dst });
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        self.edges = edges;
        Ok(())
    }

    fn check_edge(&self, e: &RelationEdge) -> Result<(), GraphError> {
        if e.src == e.dst {
            return Err(GraphError::SelfLoop(e.src));
        }
        if !self.nodes.contains_key(&e.src) || !self.nodes.contains_key(&e.dst) {
            return Err(GraphError::DanglingEdge { src: e.src, dst: e.dst });
        }
        if !(0.0..=1.0).contains(&e.confidence) {
            return Err(GraphError::InvalidConfidence {
                src: e.src,
                dst: e.dst,
                confidence: e.confidence,
            });
        }
        Ok(())
    }

    /// Checks every structural invariant of the graph.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (id, n) in &self.nodes {
            if *id != n.id {
                return Err(GraphError::InvalidNode {
                    id: *id,
                    reason: format!("keyed under {id} but carries id {}", n.id),
                });
            }
            n.validate()?;
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            self.check_edge(e)?;
            if !seen.insert((e.src, e.dst)) {
                return Err(GraphError::DuplicateEdge { src: e.src, dst: e.dst });
            }
        }
        Ok(())
    }

    pub fn nodes_with_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ObjectNode> + 'a {
        self.nodes.values().filter(move |n| labels_match(&n.label, label))
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot(Arc::new(SnapshotData {
            timestamp: self.timestamp,
            user_position: self.user_position,
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        }))
    }

    /// Merges fresh observations into the graph. Each observation takes the
    /// id of the nearest unclaimed same-label node within `radius`, otherwise
    /// a new id. Nodes whose label was observed but that matched nothing are
    /// removed. Returns the id assigned to each observation, in input order.
    pub fn associate(&mut self, observations: Vec<Observation>, now: f64, radius: f64) -> Result<Vec<NodeId>, GraphError> {
        let mut candidates: Vec<(f64, usize, NodeId)> = Vec::new();
        for (oi, obs) in observations.iter().enumerate() {
            for n in self.nodes_with_label(&obs.label) {
                let d = n.anchor.distance(obs.anchor);
                if d <= radius {
                    candidates.push((d, oi, n.id));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut assigned: Vec<Option<NodeId>> = vec![None; observations.len()];
        let mut claimed = BTreeSet::new();
        for (_, oi, id) in candidates {
            if assigned[oi].is_none() && !claimed.contains(&id) {
                assigned[oi] = Some(id);
                claimed.insert(id);
            }
        }
        let observed_labels: Vec<String> = observations.iter().map(|o| normalize_label(&o.label)).collect();
        let stale: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| !claimed.contains(&n.id) && observed_labels.contains(&normalize_label(&n.label)))
            .map(|n| n.id)
            .collect();
        for id in stale {
            self.remove_node(id);
        }
        let mut next = self.next_id();
        let mut ids = Vec::with_capacity(observations.len());
        for (obs, slot) in observations.into_iter().zip(assigned) {
            let id = slot.unwrap_or_else(|| {
                let id = next;
                next += 1;
                id
            });
            self.upsert_node(ObjectNode {
                id,
                label: obs.label,
                confidence: obs.confidence,
                anchor: obs.anchor,
                volume: obs.volume,
                last_seen: now,
            })?;
            ids.push(id);
        }
        Ok(ids)
    }
}

/// A freshly lifted object awaiting identity assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub label: String,
    pub confidence: f64,
    pub anchor: Vec3,
    pub volume: Box3,
}

pub fn normalize_label(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Case-insensitive exact label match after whitespace normalization.
pub fn labels_match(a: &str, b: &str) -> bool {
    normalize_label(a) == normalize_label(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotData {
    pub timestamp: f64,
    pub user_position: Vec3,
    pub nodes: Vec<ObjectNode>,
    pub edges: Vec<RelationEdge>,
}

/// Immutable, cheaply cloneable copy of a graph at one point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot(Arc<SnapshotData>);

impl Snapshot {
    pub fn timestamp(&self) -> f64 {
        self.0.timestamp
    }

    pub fn nodes(&self) -> &[ObjectNode] {
        &self.0.nodes
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.0.edges
    }

    pub fn data(&self) -> &SnapshotData {
        &self.0
    }

    pub fn node(&self, id: NodeId) -> Option<&ObjectNode> {
        self.0.nodes.iter().find(|n| n.id == id)
    }

    /// Label of the node that `id` rests on, if any.
    pub fn support_of(&self, id: NodeId) -> Option<&str> {
        self.0
            .edges
            .iter()
            .find(|e| e.src == id && e.relation == RelationType::On)
            .and_then(|e| self.node(e.dst))
            .map(|n| n.label.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Moved,
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub kind: ChangeKind,
    pub id: NodeId,
    pub label: String,
    pub old_anchor: Option<Vec3>,
    pub new_anchor: Option<Vec3>,
    pub displacement: f64,
    pub old_support: Option<String>,
    pub new_support: Option<String>,
}

impl ChangeEvent {
    pub fn describe(&self) -> String {
        match self.kind {
            ChangeKind::Moved => match (&self.old_support, &self.new_support) {
                (Some(a), Some(b)) if a != b => format!("{} moved from {a} to {b}", self.label),
                (_, Some(b)) => format!("{} moved {:.2} m, now on {b}", self.label, self.displacement),
                _ => format!("{} moved {:.2} m", self.label, self.displacement),
            },
            ChangeKind::Added => format!("{} appeared", self.label),
            ChangeKind::Removed => format!("{} disappeared", self.label),
        }
    }
}

/// Differences between two snapshots, matched by node id and sorted by id.
pub fn detect_changes(before: &Snapshot, after: &Snapshot, move_threshold: f64) -> Vec<ChangeEvent> {
    let old: BTreeMap<NodeId, &ObjectNode> = before.nodes().iter().map(|n| (n.id, n)).collect();
    let new: BTreeMap<NodeId, &ObjectNode> = after.nodes().iter().map(|n| (n.id, n)).collect();
    let ids: BTreeSet<NodeId> = old.keys().chain(new.keys()).copied().collect();
    let mut events = Vec::new();
    for id in ids {
        let support = |s: &Snapshot| s.support_of(id).map(str::to_string);
        match (old.get(&id), new.get(&id)) {
            (Some(a), Some(b)) => {
                let d = a.anchor.distance(b.anchor);
                if d > move_threshold {
                    events.push(ChangeEvent {
                        kind: ChangeKind::Moved,
                        id,
                        label: b.label.clone(),
                        old_anchor: Some(a.anchor),
                        new_anchor: Some(b.anchor),
                        displacement: d,
                        old_support: support(before),
                        new_support: support(after),
                    });
                }
            }
            (Some(a), None) => events.push(ChangeEvent {
                kind: ChangeKind::Removed,
                id,
                label: a.label.clone(),
                old_anchor: Some(a.anchor),
                new_anchor: None,
                displacement: 0.0,
                old_support: support(before),
                new_support: None,
            }),
            (None, Some(b)) => events.push(ChangeEvent {
                kind: ChangeKind::Added,
                id,
                label: b.label.clone(),
                old_anchor: None,
                new_anchor: Some(b.anchor),
                displacement: 0.0,
                old_support: None,
                new_support: support(after),
            }),
            (None, None) => unreachable!(),
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn node(id: NodeId, label: &str, p: Vec3) -> ObjectNode {
        ObjectNode {
            id,
            label: label.into(),
            confidence: 0.9,
            anchor: p,
            volume: Box3::new(p, Vec3::new(0.05, 0.05, 0.05)).unwrap(),
            last_seen: 0.0,
        }
    }

    fn edge(src: NodeId, dst: NodeId, r: RelationType) -> RelationEdge {
        RelationEdge {
            src,
            dst,
            relation: r,
            confidence: 0.7,
        }
    }

    #[test]
    fn taxonomy_shape() {
        assert_eq!(RelationType::ALL.len(), 15);
        assert_eq!(RelationType::ALL.iter().filter(|r| r.is_spatial()).count(), 7);
        let bi: Vec<_> = RelationType::ALL.iter().filter(|r| r.is_bidirectional()).collect();
        assert_eq!(bi, [&RelationType::Structural, &RelationType::Interaction]);
        for (i, r) in RelationType::ALL.iter().enumerate() {
            assert_eq!(r.index(), i);
            assert_eq!(r.name().parse::<RelationType>().unwrap(), *r);
        }
        let err = "floats".parse::<RelationType>().unwrap_err().to_string();
        assert!(err.contains("within-reach") && err.contains("referential"));
    }

    #[test]
    fn upsert_semantics() {
        let mut g = SceneGraph::default();
        g.upsert_node(node(1, "mug", Vec3::ZERO)).unwrap();
        assert_eq!(g.node_count(), 1);
        g.upsert_node(node(2, "desk", Vec3::new(1.0, 0.0, 0.0))).unwrap();
        g.set_edges(vec![edge(1, 2, RelationType::On)]).unwrap();
        let mut moved = node(1, "mug", Vec3::new(0.0, 0.5, 0.0));
        moved.confidence = 0.4;
        g.upsert_node(moved.clone()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.node(1), Some(&moved));
        assert_eq!(g.edges().len(), 1);
        g.validate().unwrap();
    }

    #[test]
    fn invalid_nodes_rejected() {
        let mut g = SceneGraph::default();
        let mut n = node(1, "mug", Vec3::ZERO);
        n.confidence = 1.5;
        assert!(g.upsert_node(n).is_err());
        let mut n = node(1, "mug", Vec3::ZERO);
        n.anchor = Vec3::new(1.0, 0.0, 0.0);
        assert!(g.upsert_node(n).is_err());
    }

    #[test]
    fn set_edges_validation() {
        let mut g = SceneGraph::default();
        g.upsert_node(node(1, "a", Vec3::ZERO)).unwrap();
        g.upsert_node(node(2, "b", Vec3::ZERO)).unwrap();
        g.set_edges(vec![]).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(
            g.set_edges(vec![edge(1, 3, RelationType::On)]),
            Err(GraphError::DanglingEdge { src: 1, dst: 3 })
        );
        assert_eq!(
            g.set_edges(vec![edge(1, 2, RelationType::On), edge(1, 2, RelationType::NextTo)]),
            Err(GraphError::DuplicateEdge { src: 1, dst: 2 })
        );
        assert_eq!(g.set_edges(vec![edge(1, 1, RelationType::On)]), Err(GraphError::SelfLoop(1)));
        g.set_edges(vec![edge(2, 1, RelationType::Under), edge(1, 2, RelationType::On)]).unwrap();
        assert_eq!(g.edges()[0].src, 1);
    }

    #[test]
    fn snapshots_are_immutable() {
        let mut g = SceneGraph::default();
        g.upsert_node(node(1, "mug", Vec3::ZERO)).unwrap();
        let s1 = g.snapshot();
        let s2 = g.snapshot();
        assert_eq!(s1, s2);
        g.upsert_node(node(1, "mug", Vec3::new(1.0, 0.0, 0.0))).unwrap();
        g.set_timestamp(5.0).unwrap();
        assert_eq!(s1.nodes()[0].anchor, Vec3::ZERO);
        let s3 = g.snapshot();
        assert!(s3.timestamp() >= s1.timestamp());
        assert!(g.set_timestamp(1.0).is_err());
    }

    #[test]
    fn change_detection_examples() {
        let mut g = SceneGraph::default();
        g.upsert_node(node(1, "mug", Vec3::ZERO)).unwrap();
        g.upsert_node(node(2, "desk", Vec3::new(0.0, -0.5, 0.0))).unwrap();
        g.upsert_node(node(3, "shelf", Vec3::new(1.0, 0.5, 0.0))).unwrap();
        g.set_edges(vec![edge(1, 2, RelationType::On)]).unwrap();
        let a = g.snapshot();
        assert!(detect_changes(&a, &a, 0.1).is_empty());

        g.upsert_node(node(1, "mug", Vec3::new(0.05, 0.0, 0.0))).unwrap();
        assert!(detect_changes(&a, &g.snapshot(), 0.1).is_empty());

        g.upsert_node(node(1, "mug", Vec3::new(0.5, 0.0, 0.0))).unwrap();
        g.set_edges(vec![edge(1, 3, RelationType::On)]).unwrap();
        let b = g.snapshot();
        let ev = detect_changes(&a, &b, 0.1);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, ChangeKind::Moved);
        assert!((ev[0].displacement - 0.5).abs() < 1e-12);
        assert_eq!(ev[0].describe(), "mug moved from desk to shelf");
    }

    #[test]
    fn association_reuses_nearby_ids() {
        let mut g = SceneGraph::default();
        g.upsert_node(node(0, "mug", Vec3::ZERO)).unwrap();
        g.upsert_node(node(1, "mug", Vec3::new(1.0, 0.0, 0.0))).unwrap();
        g.upsert_node(node(2, "desk", Vec3::new(0.0, -1.0, 0.0))).unwrap();
        let obs = |p: Vec3| Observation {
            label: "Mug".into(),
            confidence: 0.8,
            anchor: p,
            volume: Box3::new(p, Vec3::new(0.05, 0.05, 0.05)).unwrap(),
        };
        let ids = g
            .associate(vec![obs(Vec3::new(0.95, 0.0, 0.0)), obs(Vec3::new(3.0, 0.0, 0.0))], 2.0, ASSOCIATION_RADIUS)
            .unwrap();
        assert_eq!(ids, vec![1, 3]);
        // The unmatched mug 0 is gone, the unobserved desk stays.
        assert!(g.node(0).is_none());
        assert!(g.node(2).is_some());
        assert_eq!(g.node(1).unwrap().last_seen, 2.0);
        g.validate().unwrap();
    }

    #[test]
    fn label_matching() {
        assert!(labels_match("Mug", "mug"));
        assert!(!labels_match("coffee mug", "mug"));
        assert!(labels_match("  mug ", "mug"));
        assert!(labels_match("Table  Edge", "table edge"));
    }

    fn arb_snapshot() -> impl Strategy<Value = Snapshot> {
        proptest::collection::btree_map(0u64..12, (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), 0..8).prop_map(|m| {
            let mut g = SceneGraph::default();
            for (id, (x, y, z)) in m {
                g.upsert_node(node(id, "thing", Vec3::new(x, y, z))).unwrap();
                g.validate().unwrap();
            }
            g.snapshot()
        })
    }

    proptest! {
        #[test]
        fn change_detection_properties(a in arb_snapshot(), b in arb_snapshot()) {
            prop_assert!(detect_changes(&a, &a, 0.15).is_empty());
            let fwd = detect_changes(&a, &b, 0.15);
            let back = detect_changes(&b, &a, 0.15);
            let pick = |ev: &[ChangeEvent], k: ChangeKind| ev.iter().filter(|e| e.kind == k).map(|e| e.id).collect::<Vec<_>>();
            prop_assert_eq!(pick(&fwd, ChangeKind::Added), pick(&back, ChangeKind::Removed));
            prop_assert_eq!(pick(&fwd, ChangeKind::Removed), pick(&back, ChangeKind::Added));
            prop_assert_eq!(pick(&fwd, ChangeKind::Moved), pick(&back, ChangeKind::Moved));
            prop_assert!(fwd.windows(2).all(|w| w[0].id < w[1].id));
            for e in fwd.iter().filter(|e| e.kind == ChangeKind::Moved) {
                prop_assert!(e.old_anchor.is_some() && e.new_anchor.is_some() && e.displacement > 0.15);
            }
        }
    }
}
