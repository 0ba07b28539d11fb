//! Hybrid geometric-semantic relation inference.
//!
//! Every ordered pair of nodes is scored over the full taxonomy: spatial
//! relations get binary geometric evidence, semantic proposals contribute a
//! score per relation, and the two are fused through a logistic. The best
//! relation per pair is kept when it clears the threshold, and bidirectional
//! relations are mirrored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, ObjectNode, RelationEdge, RelationType, SceneGraph};
use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelationError {
    #[error("proposal {src}->{dst} references a missing node")]
    DanglingProposal { src: NodeId, dst: NodeId },
    #[error("proposal relates node {0} to itself")]
    SelfProposal(NodeId),
    #[error("proposal {src}->{dst} has non-finite score")]
    InvalidScore { src: NodeId, dst: NodeId },
    #[error("node {0} not in graph")]
    MissingNode(NodeId),
    #[error("pair must have distinct nodes, got {0} twice")]
    SamePair(NodeId),
    #[error("invalid relation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationParams {
    pub alpha: f64,
    pub tau: f64,
    pub reach_radius: f64,
    pub eps_z: f64,
    pub eps_h: f64,
    pub eps_depth: f64,
    pub eps_support: f64,
    pub footprint_overlap_min: f64,
}

impl Default for RelationParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            tau: 0.6,
            reach_radius: 0.75,
            eps_z: 0.05,
            eps_h: 0.30,
            eps_depth: 0.10,
            eps_support: 0.03,
            footprint_overlap_min: 0.5,
        }
    }
}

impl RelationParams {
    pub fn validate(&self) -> Result<(), RelationError> {
        let bad = |m: String| Err(RelationError::InvalidParams(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} outside (0, 1)", self.tau));
        }
        if !(0.0..=1.0).contains(&self.footprint_overlap_min) {
            return bad(format!(
                "footprint_overlap_min {} outside [0, 1]",
                self.footprint_overlap_min
            ));
        }
        for (name, v) in [
            ("reach_radius", self.reach_radius),
            ("eps_z", self.eps_z),
            ("eps_h", self.eps_h),
            ("eps_depth", self.eps_depth),
            ("eps_support", self.eps_support),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticProposal {
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(rename = "rel")]
    pub relation: RelationType,
    pub score: f64,
}

/// One score per relation type, indexed by declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelationScores(pub [f64; RelationType::COUNT]);

impl RelationScores {
    pub fn get(&self, r: RelationType) -> f64 {
        self.0[r.index()]
    }

    pub fn set(&mut self, r: RelationType, v: f64) {
        self.0[r.index()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (RelationType, f64)> + '_ {
        RelationType::ALL.iter().map(|r| (*r, self.0[r.index()]))
    }

    /// First relation with the highest score.
    pub fn argmax(&self) -> (RelationType, f64) {
        let mut best = (RelationType::ALL[0], self.0[0]);
        for (r, v) in self.iter().skip(1) {
            if v > best.1 {
                best = (r, v);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub src: NodeId,
    pub dst: NodeId,
    pub fused: RelationScores,
}

/// Logistic of the alpha-weighted combination of semantic and geometric evidence.
pub fn fuse(s_llm: f64, s_geo: f64, alpha: f64) -> f64 {
    let x = alpha * s_llm + (1.0 - alpha) * s_geo;
    1.0 / (1.0 + (-x).exp())
}

/// Viewer-relative forward depth of `p`.
pub fn forward_depth_from(user: Vec3, view_forward: Vec3, p: Vec3) -> f64 {
    (p - user).dot(view_forward)
}

/// Whether `i` rests on `j`: small face gap, nearby anchors, and enough of
/// `i`'s footprint over `j`'s (slightly dilated) footprint.
pub fn is_on(i: &ObjectNode, j: &ObjectNode, params: &RelationParams) -> bool {
    let gap = i.volume.min().y - j.volume.max().y;
    let h = i.anchor.horizontal_distance(j.anchor);
    let overlap = i.volume.footprint_overlap(&j.volume, params.eps_support);
    gap.abs() <= params.eps_z && h <= params.eps_h && overlap >= params.footprint_overlap_min * i.volume.footprint_area()
}

/// Node whose anchor is nearest to `j` (excluding `j`), lowest id on ties.
pub fn closest_to(graph: &SceneGraph, j: NodeId) -> Option<NodeId> {
    let pj = graph.node(j)?.anchor;
    let mut best: Option<(f64, NodeId)> = None;
    for k in graph.nodes() {
        if k.id == j {
            continue;
        }
        let d = k.anchor.distance(pj);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, k.id));
        }
    }
    best.map(|(_, id)| id)
}

fn spatial_scores(
    graph: &SceneGraph,
    i: &ObjectNode,
    j: &ObjectNode,
    closest_into_j: Option<NodeId>,
    params: &RelationParams,
    view_forward: Vec3,
) -> RelationScores {
    let user = graph.user_position;
    let on = is_on(i, j, params);
    let under = is_on(j, i, params);
    let d = i.anchor.distance(j.anchor);
    let mut s = RelationScores::default();
    let b = |v: bool| if v { 1.0 } else { 0.0 };
    s.set(RelationType::On, b(on));
    s.set(RelationType::Under, b(under));
    s.set(RelationType::NextTo, b(d <= params.eps_h && !on && !under));
    s.set(
        RelationType::Behind,
        b(forward_depth_from(user, view_forward, i.anchor)
            > forward_depth_from(user, view_forward, j.anchor) + params.eps_depth),
    );
    s.set(RelationType::WithinReach, b(i.anchor.distance(user) <= params.reach_radius));
    s.set(RelationType::ClosestTo, b(closest_into_j == Some(i.id)));
    s.set(RelationType::Blocking, b(i.volume.intersects_open_segment(user, j.anchor)));
    s
}

/// Binary geometric evidence for every relation type on the ordered pair (i, j).
pub fn geometric_scores(
    graph: &SceneGraph,
    i: NodeId,
    j: NodeId,
    params: &RelationParams,
    view_forward: Vec3,
) -> Result<RelationScores, RelationError> {
    if i == j {
        return Err(RelationError::SamePair(i));
    }
    let ni = graph.node(i).ok_or(RelationError::MissingNode(i))?;
    let nj = graph.node(j).ok_or(RelationError::MissingNode(j))?;
    Ok(spatial_scores(graph, ni, nj, closest_to(graph, j), params, view_forward))
}

fn proposal_table(
    graph: &SceneGraph,
    proposals: &[SemanticProposal],
) -> Result<BTreeMap<(NodeId, NodeId), RelationScores>, RelationError> {
    let mut table: BTreeMap<(NodeId, NodeId), RelationScores> = BTreeMap::new();
    for p in proposals {
        if p.src == p.dst {
            return Err(RelationError::SelfProposal(p.src));
        }
        if graph.node(p.src).is_none() || graph.node(p.dst).is_none() {
            return Err(RelationError::DanglingProposal { src: p.src, dst: p.dst });
        }
        if p.score.is_nan() {
            return Err(RelationError::InvalidScore { src: p.src, dst: p.dst });
        }
        let s = p.score.clamp(0.0, 1.0);
        let entry = table.entry((p.src, p.dst)).or_default();
        if s > entry.get(p.relation) {
            entry.set(p.relation, s);
        }
    }
    Ok(table)
}

/// Fused scores for every ordered pair, in (src, dst) order.
pub fn score_pairs(
    graph: &SceneGraph,
    proposals: &[SemanticProposal],
    params: &RelationParams,
    view_forward: Vec3,
) -> Result<Vec<ScoredPair>, RelationError> {
    params.validate()?;
    let table = proposal_table(graph, proposals)?;
    let closest: BTreeMap<NodeId, Option<NodeId>> = graph.nodes().map(|n| (n.id, closest_to(graph, n.id))).collect();
    let empty = RelationScores::default();
    let mut out = Vec::new();
    for i in graph.nodes() {
        for j in graph.nodes() {
            if i.id == j.id {
                continue;
            }
            let geo = spatial_scores(graph, i, j, closest[&j.id], params, view_forward);
            let llm = table.get(&(i.id, j.id)).unwrap_or(&empty);
            let mut fused = RelationScores::default();
            for r in RelationType::ALL {
                fused.set(r, fuse(llm.get(r), geo.get(r), params.alpha));
            }
            out.push(ScoredPair {
                src: i.id,
                dst: j.id,
                fused,
            });
        }
    }
    Ok(out)
}

/// Selects one relation per ordered pair and mirrors bidirectional edges.
/// A mirrored edge is only added where the reversed pair has no edge yet.
pub fn infer_relations(
    graph: &SceneGraph,
    proposals: &[SemanticProposal],
    params: &RelationParams,
    view_forward: Vec3,
) -> Result<Vec<RelationEdge>, RelationError> {
    let mut kept: BTreeMap<(NodeId, NodeId), RelationEdge> = BTreeMap::new();
    for pair in score_pairs(graph, proposals, params, view_forward)? {
        let (relation, gamma) = pair.fused.argmax();
        if gamma >= params.tau {
            kept.insert(
                (pair.src, pair.dst),
                RelationEdge {
                    src: pair.src,
                    dst: pair.dst,
                    relation,
                    confidence: gamma,
                },
            );
        }
    }
    let mirrored: Vec<RelationEdge> = kept
        .values()
        .filter(|e| e.relation.is_bidirectional() && !kept.contains_key(&(e.dst, e.src)))
        .map(|e| RelationEdge {
            src: e.dst,
            dst: e.src,
            ..*e
        })
        .collect();
    for e in mirrored {
        kept.insert((e.src, e.dst), e);
    }
    Ok(kept.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sigma(x: f64) -> f64 {
        x.exp() / (1.0 + x.exp())
    }

    fn boxed(id: NodeId, label: &str, center: Vec3, half: Vec3) -> ObjectNode {
        ObjectNode {
            id,
            label: label.into(),
            confidence: 0.9,
            anchor: center,
            volume: Box3::new(center, half).unwrap(),
            last_seen: 0.0,
        }
    }

    fn mug_on_desk() -> SceneGraph {
        let mut g = SceneGraph::new(Vec3::new(0.0, 1.4, -2.0));
        g.upsert_node(boxed(0, "desk", Vec3::new(0.0, 0.7, 0.0), Vec3::new(0.1, 0.05, 0.1))).unwrap();
        g.upsert_node(boxed(1, "mug", Vec3::new(0.0, 0.8, 0.0), Vec3::new(0.05, 0.05, 0.05))).unwrap();
        g
    }

    const FWD: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[test]
    fn fusion_values() {
        assert_eq!(fuse(0.0, 0.0, 0.3), 0.5);
        assert_abs_diff_eq!(fuse(1.0, 1.0, 0.7), 0.731058578630005, epsilon = 1e-12);
        assert_abs_diff_eq!(fuse(0.0, 1.0, 0.5), 0.6224593312018546, epsilon = 1e-12);
        assert_abs_diff_eq!(fuse(1.0, 1.0, 0.2), sigma(1.0), epsilon = 1e-12);
    }

    #[test]
    fn within_reach_and_on() {
        let mut g = SceneGraph::new(Vec3::ZERO);
        g.upsert_node(boxed(0, "a", Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.05, 0.05, 0.05))).unwrap();
        g.upsert_node(boxed(1, "b", Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.05, 0.05, 0.05))).unwrap();
        let s = geometric_scores(&g, 0, 1, &RelationParams::default(), FWD).unwrap();
        assert_eq!(s.get(RelationType::WithinReach), 1.0);

        let g = mug_on_desk();
        let s = geometric_scores(&g, 1, 0, &RelationParams::default(), FWD).unwrap();
        assert_eq!(s.get(RelationType::On), 1.0);
        assert_eq!(s.get(RelationType::Under), 0.0);
        assert_eq!(s.get(RelationType::NextTo), 0.0);
        let s = geometric_scores(&g, 0, 1, &RelationParams::default(), FWD).unwrap();
        assert_eq!(s.get(RelationType::Under), 1.0);
        assert!(geometric_scores(&g, 0, 0, &RelationParams::default(), FWD).is_err());
    }

    #[test]
    fn closest_to_unique() {
        let mut g = SceneGraph::new(Vec3::ZERO);
        let h = Vec3::new(0.01, 0.01, 0.01);
        g.upsert_node(boxed(0, "j", Vec3::new(5.0, 0.0, 0.0), h)).unwrap();
        g.upsert_node(boxed(1, "near", Vec3::new(5.2, 0.0, 0.0), h)).unwrap();
        g.upsert_node(boxed(2, "far", Vec3::new(6.0, 0.0, 0.0), h)).unwrap();
        g.upsert_node(boxed(3, "farther", Vec3::new(8.0, 0.0, 0.0), h)).unwrap();
        for k in [1, 2, 3] {
            let s = geometric_scores(&g, k, 0, &RelationParams::default(), FWD).unwrap();
            assert_eq!(s.get(RelationType::ClosestTo), if k == 1 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn behind_and_blocking() {
        let mut g = SceneGraph::new(Vec3::ZERO);
        let h = Vec3::new(0.05, 0.05, 0.05);
        g.upsert_node(boxed(0, "front", Vec3::new(0.0, 0.0, 1.0), h)).unwrap();
        g.upsert_node(boxed(1, "back", Vec3::new(0.0, 0.0, 2.0), h)).unwrap();
        let p = RelationParams::default();
        assert_eq!(geometric_scores(&g, 1, 0, &p, FWD).unwrap().get(RelationType::Behind), 1.0);
        assert_eq!(geometric_scores(&g, 0, 1, &p, FWD).unwrap().get(RelationType::Behind), 0.0);
        assert_eq!(geometric_scores(&g, 0, 1, &p, FWD).unwrap().get(RelationType::Blocking), 1.0);
        assert_eq!(geometric_scores(&g, 1, 0, &p, FWD).unwrap().get(RelationType::Blocking), 0.0);
    }

    #[test]
    fn inference_examples() {
        let mut g = SceneGraph::new(Vec3::new(0.0, 0.0, -10.0));
        let h = Vec3::new(0.05, 0.05, 0.05);
        g.upsert_node(boxed(0, "a", Vec3::new(-5.0, 0.0, 0.0), h)).unwrap();
        g.upsert_node(boxed(1, "b", Vec3::new(5.0, 0.0, 0.0), h)).unwrap();
        // Pair is closest-to each other, so suppress it by requiring more than one-source evidence.
        let p = RelationParams {
            tau: 0.63,
            ..RelationParams::default()
        };
        assert!(infer_relations(&g, &[], &p, FWD).unwrap().is_empty());

        let g = mug_on_desk();
        let edges = infer_relations(&g, &[], &RelationParams::default(), FWD).unwrap();
        let on = edges.iter().find(|e| e.src == 1 && e.dst == 0).unwrap();
        assert_eq!(on.relation, RelationType::On);
        assert_abs_diff_eq!(on.confidence, sigma(0.5), epsilon = 1e-12);

        let mut g = SceneGraph::new(Vec3::new(0.0, 0.0, -10.0));
        g.upsert_node(boxed(0, "laptop", Vec3::new(-5.0, 0.0, 0.0), h)).unwrap();
        g.upsert_node(boxed(1, "cable", Vec3::new(5.0, 0.0, 0.0), h)).unwrap();
        // Neighbors keep closest-to evidence away from the laptop/cable pair.
        g.upsert_node(boxed(2, "lamp", Vec3::new(5.0, 0.0, 1.0), h)).unwrap();
        g.upsert_node(boxed(3, "dock", Vec3::new(-5.0, 0.0, 1.0), h)).unwrap();
        let prop = SemanticProposal {
            src: 1,
            dst: 0,
            relation: RelationType::Structural,
            score: 1.0,
        };
        let p = RelationParams {
            tau: 0.6,
            ..RelationParams::default()
        };
        let edges = infer_relations(&g, &[prop], &p, FWD).unwrap();
        for (s, d) in [(1, 0), (0, 1)] {
            let e = edges.iter().find(|e| e.src == s && e.dst == d).unwrap();
            assert_eq!(e.relation, RelationType::Structural);
            assert_abs_diff_eq!(e.confidence, sigma(0.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn proposal_errors() {
        let g = mug_on_desk();
        let p = RelationParams::default();
        let bad = SemanticProposal {
            src: 1,
            dst: 9,
            relation: RelationType::Functional,
            score: 0.5,
        };
        assert_eq!(
            infer_relations(&g, &[bad], &p, FWD),
            Err(RelationError::DanglingProposal { src: 1, dst: 9 })
        );
        let selfp = SemanticProposal { dst: 1, ..bad };
        assert_eq!(infer_relations(&g, &[selfp], &p, FWD), Err(RelationError::SelfProposal(1)));
        assert!(infer_relations(&g, &[], &RelationParams { tau: 1.0, ..p }, FWD).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = SceneGraph> {
        proptest::collection::vec(
            (-1.0..1.0f64, 0.0..1.0f64, -1.0..1.0f64, 0.02..0.3f64, 0.02..0.3f64, 0.02..0.3f64),
            0..7,
        )
        .prop_map(|v| {
            let mut g = SceneGraph::new(Vec3::new(0.0, 1.2, -1.0));
            for (i, (x, y, z, hx, hy, hz)) in v.into_iter().enumerate() {
                g.upsert_node(boxed(i as NodeId, "o", Vec3::new(x, y, z), Vec3::new(hx, hy, hz))).unwrap();
            }
            g
        })
    }

    fn arb_proposals(n: u64) -> impl Strategy<Value = Vec<SemanticProposal>> {
        proptest::collection::vec((0..n.max(1), 0..n.max(1), 0usize..15, 0.0..1.0f64), 0..10).prop_map(move |v| {
            v.into_iter()
                .filter(|(a, b, _, _)| a != b && n > 0)
                .map(|(a, b, r, s)| SemanticProposal {
                    src: a,
                    dst: b,
                    relation: RelationType::ALL[r],
                    score: s,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn alpha_zero_ignores_proposals((g, props) in arb_graph().prop_flat_map(|g| {
            let n = g.node_count() as u64;
            (Just(g), arb_proposals(n))
        })) {
            let p = RelationParams { alpha: 0.0, ..RelationParams::default() };
            prop_assert_eq!(infer_relations(&g, &props, &p, FWD).unwrap(), infer_relations(&g, &[], &p, FWD).unwrap());
        }

        #[test]
        fn alpha_one_argmax_ignores_geometry((g, props) in arb_graph().prop_flat_map(|g| {
            let n = g.node_count() as u64;
            (Just(g), arb_proposals(n))
        }), shift in -1.0..1.0f64) {
            let p = RelationParams { alpha: 1.0, ..RelationParams::default() };
            let mut moved = SceneGraph::new(Vec3::new(shift, 0.3, 2.0));
            for n in g.nodes() {
                let mut n = n.clone();
                n.anchor = n.anchor + Vec3::new(shift * n.id as f64, 0.1, -shift);
                n.volume = n.volume.translated(Vec3::new(shift * n.id as f64, 0.1, -shift));
                moved.upsert_node(n).unwrap();
            }
            let a = score_pairs(&g, &props, &p, FWD).unwrap();
            let b = score_pairs(&moved, &props, &p, FWD).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.fused, y.fused);
                prop_assert_eq!(x.fused.argmax(), y.fused.argmax());
            }
        }

        #[test]
        fn fused_scores_bounded_and_monotone(g in arb_graph(), alpha in 0.0..1.0f64, s in 0.0..1.0f64, bump in 0.0..1.0f64) {
            let p = RelationParams { alpha, ..RelationParams::default() };
            for pair in score_pairs(&g, &[], &p, FWD).unwrap() {
                for (_, v) in pair.fused.iter() {
                    prop_assert!((0.5..=sigma(1.0) + 1e-15).contains(&v));
                }
            }
            let lo = fuse(s, 1.0, alpha);
            let hi = fuse((s + bump).min(1.0), 1.0, alpha);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn threshold_boundaries(g in arb_graph(), alpha in 0.0..1.0f64, low in 0.01..0.5f64, high in 0.7311..0.99f64) {
            let n = g.node_count();
            let admit = RelationParams { alpha, tau: low, ..RelationParams::default() };
            let edges = infer_relations(&g, &[], &admit, FWD).unwrap();
            prop_assert_eq!(edges.len(), n * n.saturating_sub(1));
            let none = RelationParams { alpha, tau: high.max(sigma(1.0) + 1e-12), ..RelationParams::default() };
            prop_assert!(infer_relations(&g, &[], &none, FWD).unwrap().is_empty());
        }

        #[test]
        fn closure_and_uniqueness((g, props) in arb_graph().prop_flat_map(|g| {
            let n = g.node_count() as u64;
            (Just(g), arb_proposals(n))
        })) {
            let edges = infer_relations(&g, &props, &RelationParams::default(), FWD).unwrap();
            let mut pairs: Vec<_> = edges.iter().map(|e| (e.src, e.dst)).collect();
            let len = pairs.len();
            pairs.dedup();
            prop_assert_eq!(pairs.len(), len);
            for e in edges.iter().filter(|e| e.relation.is_bidirectional()) {
                prop_assert!(edges.iter().any(|r| r.src == e.dst && r.dst == e.src));
            }
            let mut g2 = g.clone();
            g2.set_edges(edges).unwrap();
            g2.validate().unwrap();
        }

        #[test]
        fn one_closest_edge_per_target(g in arb_graph()) {
            let p = RelationParams::default();
            for j in g.nodes() {
                let count = g.nodes().filter(|i| i.id != j.id).filter(|i| {
                    geometric_scores(&g, i.id, j.id, &p, FWD).unwrap().get(RelationType::ClosestTo) == 1.0
                }).count();
                prop_assert!(count <= 1);
                if g.node_count() > 1 {
                    prop_assert_eq!(count, 1);
                }
            }
        }
    }
}
