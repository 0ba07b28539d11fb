//! Deterministic tools backed by a benchmark scene's ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    expand_rules, lexical_match, tokens, Detector, DetectorRequest, LabelProposal, LabelProposer, ProposerRequest,
    RelationProposer, SemanticError, Timed,
};
use crate::bench::{BenchmarkScene, RelationRule, Stream};
use crate::geometry::Box2;
use crate::graph::{labels_match, NodeId, SceneGraph};
use crate::lifting::Detection2D;
use crate::relations::SemanticProposal;

/// Confidence reported for every ground-truth detection.
pub const GT_CONFIDENCE: f64 = 0.9;

/// Proposes the scene labels mentioned in the query, or every label for an
/// empty query.
#[derive(Debug, Clone, PartialEq)]
pub struct GtLabelProposer {
    labels: Vec<String>,
}

impl GtLabelProposer {
    pub fn new(labels: Vec<String>) -> Self {
        Self { labels }
    }
}

impl LabelProposer for GtLabelProposer {
    fn propose_labels(&self, req: &ProposerRequest) -> Result<Timed<LabelProposal>, SemanticError> {
        let q = tokens(&req.query);
        let labels: Vec<String> = if q.is_empty() {
            self.labels.clone()
        } else {
            self.labels.iter().filter(|l| lexical_match(&q, l)).cloned().collect()
        };
        let scene_description = format!("{} candidate objects: {}", labels.len(), labels.join(", "));
        Ok(Timed::instant(LabelProposal {
            labels,
            scene_description,
        }))
    }
}

/// Returns the projected ground-truth boxes of matching objects, optionally
/// perturbed by seeded per-object Gaussian jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct GtDetector {
    objects: Vec<(NodeId, String, Box2)>,
    width: u32,
    height: u32,
    jitter_sigma: f64,
    seed: u64,
}

impl GtDetector {
    pub fn new(objects: Vec<(NodeId, String, Box2)>, width: u32, height: u32, jitter_sigma: f64, seed: u64) -> Self {
        let mut objects = objects;
        objects.sort_by_key(|o| o.0);
        Self {
            objects,
            width,
            height,
            jitter_sigma,
            seed,
        }
    }

    fn jitter(&self, id: NodeId, b: Box2) -> Box2 {
        if self.jitter_sigma <= 0.0 {
            return b;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(Stream::Jitter as u64);
        let normal = Normal::new(0.0, self.jitter_sigma).expect("finite sigma");
        let mut n = || normal.sample(&mut rng);
        let (x0, y0, x1, y1) = (b.x_min + n(), b.y_min + n(), b.x_max + n(), b.y_max + n());
        Box2::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
            .ok()
            .and_then(|j| j.clipped(self.width, self.height))
            .unwrap_or(b)
    }
}

impl Detector for GtDetector {
    fn detect(&self, req: &DetectorRequest) -> Result<Timed<Vec<Detection2D>>, SemanticError> {
        req.validate()?;
        if GT_CONFIDENCE < req.confidence_threshold {
            return Ok(Timed::instant(Vec::new()));
        }
        let dets = self
            .objects
            .iter()
            .filter(|(_, label, _)| req.labels.iter().any(|l| labels_match(l, label)))
            .map(|(id, label, b)| Detection2D {
                label: label.clone(),
                bbox: self.jitter(*id, *b),
                confidence: GT_CONFIDENCE,
            })
            .collect();
        Ok(Timed::instant(dets))
    }
}

/// Emits high-level proposals from a declarative label rule table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleProposer {
    rules: Vec<RelationRule>,
}

impl RuleProposer {
    pub fn new(rules: Vec<RelationRule>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[RelationRule] {
        &self.rules
    }
}

impl RelationProposer for RuleProposer {
    fn propose_relations(&self, graph: &SceneGraph, _query: &str) -> Result<Timed<Vec<SemanticProposal>>, SemanticError> {
        Ok(Timed::instant(expand_rules(&self.rules, graph)))
    }
}

/// The three ground-truth tools wired from one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTools {
    pub proposer: GtLabelProposer,
    pub detector: GtDetector,
    pub relations: RuleProposer,
}

impl GtTools {
    pub fn from_scene(scene: &BenchmarkScene) -> Self {
        let objects = scene.objects.iter().map(|o| (o.id, o.label.clone(), o.box2)).collect();
        Self {
            proposer: GtLabelProposer::new(scene.labels()),
            detector: GtDetector::new(
                objects,
                scene.intrinsics.width,
                scene.intrinsics.height,
                scene.spec.noise.box_jitter_sigma,
                scene.spec.seed,
            ),
            relations: RuleProposer::new(scene.rules.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RelationType;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> Box2 {
        Box2::new(x0, y0, x1, y1).unwrap()
    }

    fn req(labels: &[&str], t: f64) -> DetectorRequest {
        DetectorRequest {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            frame_id: "f".into(),
            confidence_threshold: t,
        }
    }

    fn detector(sigma: f64) -> GtDetector {
        GtDetector::new(
            vec![
                (2, "mug".into(), b(100.0, 80.0, 140.0, 130.0)),
                (0, "desk".into(), b(0.0, 60.0, 319.0, 239.0)),
                (1, "mug".into(), b(200.0, 90.0, 230.0, 120.0)),
            ],
            320,
            240,
            sigma,
            7,
        )
    }

    #[test]
    fn proposer_matches_query_words() {
        let p = GtLabelProposer::new(vec!["desk".into(), "mug".into(), "pen cup".into()]);
        let ask = |q: &str| {
            p.propose_labels(&ProposerRequest {
                query: q.into(),
                frame_id: "f".into(),
            })
            .unwrap()
            .value
            .labels
        };
        assert_eq!(ask("where is the mug"), vec!["mug"]);
        assert_eq!(ask(""), vec!["desk", "mug", "pen cup"]);
        assert_eq!(ask("CLOSEST \"pen cup\" TO desk"), vec!["desk", "pen cup"]);
    }

    #[test]
    fn noiseless_detection_reproduces_boxes_in_id_order() {
        let d = detector(0.0).detect(&req(&["Mug"], 0.35)).unwrap().value;
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].bbox, b(200.0, 90.0, 230.0, 120.0));
        assert_eq!(d[1].bbox, b(100.0, 80.0, 140.0, 130.0));
        assert!(d.iter().all(|x| x.confidence == GT_CONFIDENCE));
    }

    #[test]
    fn threshold_above_one_returns_nothing() {
        assert!(detector(0.0).detect(&req(&["mug"], 1.01)).unwrap().value.is_empty());
        assert!(matches!(detector(0.0).detect(&req(&[], 0.35)), Err(SemanticError::InvalidRequest(_))));
    }

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let d = detector(2.0);
        let a = d.detect(&req(&["mug", "desk"], 0.35)).unwrap().value;
        assert_eq!(a, d.detect(&req(&["mug", "desk"], 0.35)).unwrap().value);
        // Six pixels is three standard deviations.
        let truth = [b(0.0, 60.0, 319.0, 239.0), b(200.0, 90.0, 230.0, 120.0), b(100.0, 80.0, 140.0, 130.0)];
        for (det, t) in a.iter().zip(truth) {
            for (x, y) in det.bbox.to_array().into_iter().zip(t.to_array()) {
                assert!((x - y).abs() <= 6.0, "{x} vs {y}");
            }
            assert!(det.bbox.x_max <= 319.0 && det.bbox.y_max <= 239.0 && det.bbox.x_min >= 0.0);
        }
        assert_ne!(a[1].bbox, truth[1]);
    }

    #[test]
    fn rule_proposer_skips_absent_labels() {
        let p = RuleProposer::new(vec![RelationRule {
            src_label: "charger".into(),
            dst_label: "laptop".into(),
            relation: RelationType::Functional,
            score: 0.9,
        }]);
        let g = SceneGraph::new(crate::geometry::Vec3::ZERO);
        assert!(p.propose_relations(&g, "").unwrap().value.is_empty());
    }
}
