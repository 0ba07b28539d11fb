//! Localization, scene-graph and query metrics plus the benchmark harness.

mod harness;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use crate::bench::{ExpectedAnswer, GtObject};
use crate::geometry::{Box2, Vec3};
use crate::graph::{labels_match, NodeId, ObjectNode, RelationEdge};
use crate::query::Answer;

pub use harness::{
    aggregate, evaluate_scene, evaluate_scene_with, run_benchmark, surface_tolerance_cm, BenchParams, MetricsError, ObjectEval, QueryEval,
    SceneEval,
};
pub use report::{
    BenchmarkReport, CategoryStats, Prf, T1Report, T1Summary, T2Report, T3Context, T3Report, T4Report,
    REPORT_FORMAT_VERSION,
};

/// Default pass threshold for distance answers, in meters.
pub const DISTANCE_THRESHOLD_M: f64 = 0.05;

/// Pairs every ground-truth object with at most one same-label prediction,
/// greedily by ascending anchor distance. Output follows `gt` order.
pub fn match_predictions(gt: &[GtObject], pred: &[ObjectNode]) -> Vec<(NodeId, Option<NodeId>)> {
    let mut pairs: Vec<(f64, NodeId, NodeId)> = Vec::new();
    for g in gt {
        for p in pred.iter().filter(|p| labels_match(&p.label, &g.label)) {
            pairs.push((g.center.distance(p.anchor), g.id, p.id));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut by_gt: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut used = BTreeSet::new();
    for (_, g, p) in pairs {
        if !by_gt.contains_key(&g) && !used.contains(&p) {
            by_gt.insert(g, p);
            used.insert(p);
        }
    }
    gt.iter().map(|g| (g.id, by_gt.get(&g.id).copied())).collect()
}

/// Euclidean distance in centimeters.
pub fn position_error(gt: Vec3, pred: Vec3) -> f64 {
    gt.distance(pred) * 100.0
}

/// Angle in degrees between the directions from `origin` to `gt` and `pred`.
pub fn angular_error(origin: Vec3, gt: Vec3, pred: Vec3) -> f64 {
    let a = gt - origin;
    let b = pred - origin;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Percentage of errors at or below `tau`; unmatched objects enter as
/// infinite errors. Empty input gives 0.
pub fn success_at(errors: &[f64], tau: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    100.0 * errors.iter().filter(|e| **e <= tau).count() as f64 / errors.len() as f64
}

pub fn iou2d(a: &Box2, b: &Box2) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Precision, recall and F1 over exact (src, dst, type) matches. Empty
/// denominators score 0.
pub fn edge_prf(gt: &[RelationEdge], pred: &[RelationEdge]) -> Prf {
    let key = |e: &RelationEdge| (e.src, e.dst, e.relation);
    let g: BTreeSet<_> = gt.iter().map(key).collect();
    let p: BTreeSet<_> = pred.iter().map(key).collect();
    let tp = g.intersection(&p).count();
    Prf::from_counts(tp, p.len() - tp, g.len() - tp)
}

/// Fraction of predicted edges with a correct (src, dst) pair whose type is
/// also correct; `None` when no pair is correct.
pub fn relation_type_accuracy(gt: &[RelationEdge], pred: &[RelationEdge]) -> Option<f64> {
    let (correct, total) = relation_type_counts(gt, pred);
    (total > 0).then(|| correct as f64 / total as f64)
}

pub(crate) fn relation_type_counts(gt: &[RelationEdge], pred: &[RelationEdge]) -> (usize, usize) {
    let g: BTreeMap<(NodeId, NodeId), _> = gt.iter().map(|e| ((e.src, e.dst), e.relation)).collect();
    let mut correct = 0;
    let mut total = 0;
    for e in pred {
        if let Some(r) = g.get(&(e.src, e.dst)) {
            total += 1;
            if *r == e.relation {
                correct += 1;
            }
        }
    }
    (correct, total)
}

/// Exact set match for object answers, absolute error within `threshold_m`
/// for distances.
pub fn query_success(expected: &ExpectedAnswer, actual: &Answer, threshold_m: f64) -> bool {
    match (expected, actual) {
        (ExpectedAnswer::Objects { ids }, Answer::Objects { ids: got }) => {
            let a: BTreeSet<_> = ids.iter().collect();
            let b: BTreeSet<_> = got.iter().collect();
            a == b
        }
        (ExpectedAnswer::Distance { meters }, Answer::Distance { meters: got }) => (meters - got).abs() <= threshold_m,
        _ => false,
    }
}

/// Rewrites predicted ids into ground-truth ids. Ids without a match map to
/// values no ground-truth object uses, so they never count as correct.
pub(crate) fn id_map(matching: &[(NodeId, Option<NodeId>)]) -> impl Fn(NodeId) -> NodeId + '_ {
    move |p| {
        matching
            .iter()
            .find(|(_, m)| *m == Some(p))
            .map(|(g, _)| *g)
            .unwrap_or(u64::MAX - p)
    }
}

pub(crate) fn map_edges(edges: &[RelationEdge], matching: &[(NodeId, Option<NodeId>)]) -> Vec<RelationEdge> {
    let f = id_map(matching);
    edges
        .iter()
        .map(|e| RelationEdge {
            src: f(e.src),
            dst: f(e.dst),
            ..*e
        })
        .collect()
}

pub(crate) fn map_answer(answer: &Answer, matching: &[(NodeId, Option<NodeId>)]) -> Answer {
    let f = id_map(matching);
    match answer {
        Answer::Objects { ids } => {
            let mut ids: Vec<NodeId> = ids.iter().map(|i| f(*i)).collect();
            ids.sort_unstable();
            Answer::Objects { ids }
        }
        Answer::Ambiguous { candidates } => {
            let mut candidates: Vec<NodeId> = candidates.iter().map(|i| f(*i)).collect();
            candidates.sort_unstable();
            Answer::Ambiguous { candidates }
        }
        other => other.clone(),
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3;
    use crate::graph::RelationType;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gt(id: NodeId, label: &str, c: Vec3) -> GtObject {
        GtObject {
            id,
            label: label.into(),
            center: c,
            half_extents: Vec3::new(0.05, 0.05, 0.05),
            box2: Box2::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            support_of: Some(0),
        }
    }

    fn pred(id: NodeId, label: &str, c: Vec3) -> ObjectNode {
        ObjectNode {
            id,
            label: label.into(),
            confidence: 0.9,
            anchor: c,
            volume: Box3::new(c, Vec3::new(0.05, 0.05, 0.05)).unwrap(),
            last_seen: 0.0,
        }
    }

    fn e(src: NodeId, dst: NodeId, relation: RelationType) -> RelationEdge {
        RelationEdge {
            src,
            dst,
            relation,
            confidence: 0.7,
        }
    }

    #[test]
    fn matching_cases() {
        let g = [gt(0, "mug", Vec3::ZERO), gt(1, "mug", Vec3::new(1.0, 0.0, 0.0))];
        let same = [pred(5, "mug", Vec3::ZERO), pred(6, "mug", Vec3::new(1.0, 0.0, 0.0))];
        assert_eq!(match_predictions(&g, &same), vec![(0, Some(5)), (1, Some(6))]);
        assert_eq!(match_predictions(&g, &[pred(5, "cup", Vec3::ZERO)]), vec![(0, None), (1, None)]);
        // One prediction nearer the second object.
        let one = [pred(9, "mug", Vec3::new(0.8, 0.0, 0.0))];
        assert_eq!(match_predictions(&g, &one), vec![(0, None), (1, Some(9))]);
    }

    #[test]
    fn position_and_angle() {
        assert_eq!(position_error(Vec3::ZERO, Vec3::ZERO), 0.0);
        assert_abs_diff_eq!(position_error(Vec3::ZERO, Vec3::new(0.03, 0.04, 0.0)), 5.0, epsilon = 1e-12);
        let o = Vec3::ZERO;
        assert_abs_diff_eq!(angular_error(o, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, 3.0)), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_error(o, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)), 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_error(o, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 1.0, 1.0)), 45.0, epsilon = 1e-12);
    }

    #[test]
    fn success_rates() {
        assert_eq!(success_at(&[0.0, 0.0, 0.0], 10.0), 100.0);
        assert_eq!(success_at(&[5.0, 15.0], 10.0), 50.0);
        assert_eq!(success_at(&[5.0, f64::INFINITY], 100.0), 50.0);
    }

    #[test]
    fn iou_cases() {
        let a = Box2::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let b = Box2::new(0.5, 0.0, 1.5, 1.0).unwrap();
        let c = Box2::new(3.0, 3.0, 4.0, 4.0).unwrap();
        assert_eq!(iou2d(&a, &a), 1.0);
        assert_eq!(iou2d(&a, &c), 0.0);
        assert_abs_diff_eq!(iou2d(&a, &b), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn prf_cases() {
        use RelationType::*;
        let g = [e(0, 1, On), e(1, 2, Behind)];
        assert_eq!(edge_prf(&g, &g), Prf::from_counts(2, 0, 0));
        let p = edge_prf(&g, &g);
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = edge_prf(&g, &[]);
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        let p = edge_prf(&g, &[e(0, 1, On), e(2, 0, NextTo)]);
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn type_accuracy_cases() {
        use RelationType::*;
        let g = [e(0, 1, On), e(1, 2, Behind)];
        assert_eq!(relation_type_accuracy(&g, &g), Some(1.0));
        assert_eq!(relation_type_accuracy(&g, &[e(0, 1, On), e(1, 2, NextTo)]), Some(0.5));
        assert_eq!(relation_type_accuracy(&g, &[e(2, 1, On)]), None);
    }

    #[test]
    fn query_success_cases() {
        let objs = ExpectedAnswer::Objects { ids: vec![1, 2] };
        assert!(query_success(&objs, &Answer::Objects { ids: vec![2, 1] }, 0.05));
        assert!(!query_success(&objs, &Answer::Objects { ids: vec![1, 2, 3] }, 0.05));
        assert!(!query_success(&objs, &Answer::Ambiguous { candidates: vec![1, 2] }, 0.05));
        let d = ExpectedAnswer::Distance { meters: 0.50 };
        assert!(query_success(&d, &Answer::Distance { meters: 0.54 }, 0.05));
        assert!(!query_success(&d, &Answer::Distance { meters: 0.56 }, 0.05));
    }

    fn arb_box() -> impl Strategy<Value = Box2> {
        (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
            .prop_map(|(x, y, w, h)| Box2::new(x, y, x + w, y + h).unwrap())
    }

    fn arb_edges() -> impl Strategy<Value = Vec<RelationEdge>> {
        prop::collection::vec((0u64..5, 0u64..5, 0usize..15), 0..12).prop_map(|v| {
            v.into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(a, b, r)| e(a, b, RelationType::ALL[r]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let x = iou2d(&a, &b);
            prop_assert_eq!(x, iou2d(&b, &a));
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(iou2d(&a, &a), 1.0);
            if a != b {
                prop_assert!(x < 1.0);
            }
        }

        #[test]
        fn success_monotone(errors in prop::collection::vec(0.0..50.0f64, 1..30), t1 in 0.0..50.0f64, t2 in 0.0..50.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(success_at(&errors, lo) <= success_at(&errors, hi));
        }

        #[test]
        fn prf_self_and_swap(x in arb_edges(), y in arb_edges()) {
            if !x.is_empty() {
                let s = edge_prf(&x, &x);
                prop_assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
            }
            let a = edge_prf(&x, &y);
            let b = edge_prf(&y, &x);
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
        }
    }
}
