//! Tool interfaces for label proposal, 2D detection and semantic relation
//! proposal, with ground-truth mocks and an HTTP client.

mod mock;
mod remote;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{labels_match, SceneGraph};
use crate::lifting::Detection2D;
use crate::relations::SemanticProposal;

pub use mock::{GtDetector, GtLabelProposer, GtTools, RuleProposer};
pub use remote::{RemoteClient, DEFAULT_TIMEOUT_S};

/// Default minimum detection confidence.
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("proposer unavailable after {elapsed_s:.3} s: {reason}")]
    ProposerUnavailable { elapsed_s: f64, reason: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// A tool result together with the wall-clock time the call took.
#[derive(Debug, Clone, PartialEq)]
pub struct Timed<T> {
    pub value: T,
    pub latency_s: f64,
}

impl<T> Timed<T> {
    pub fn instant(value: T) -> Self {
        Self { value, latency_s: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerRequest {
    pub query: String,
    pub frame_id: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelProposal {
    pub labels: Vec<String>,
    pub scene_description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorRequest {
    pub labels: Vec<String>,
    pub frame_id: String,
    pub confidence_threshold: f64,
}

impl DetectorRequest {
    pub fn validate(&self) -> Result<(), SemanticError> {
        if self.labels.is_empty() {
            return Err(SemanticError::InvalidRequest("detector called without labels".into()));
        }
        if !(self.confidence_threshold >= 0.0) {
            return Err(SemanticError::InvalidRequest(format!(
                "confidence threshold {} is negative or NaN",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

pub trait LabelProposer: Send + Sync {
    fn propose_labels(&self, req: &ProposerRequest) -> Result<Timed<LabelProposal>, SemanticError>;
}

pub trait Detector: Send + Sync {
    fn detect(&self, req: &DetectorRequest) -> Result<Timed<Vec<Detection2D>>, SemanticError>;
}

pub trait RelationProposer: Send + Sync {
    fn propose_relations(&self, graph: &SceneGraph, query: &str) -> Result<Timed<Vec<SemanticProposal>>, SemanticError>;
}

/// Expands label-level rules to every matching ordered node pair. Rules whose
/// labels are absent from the graph produce nothing.
pub fn expand_rules(rules: &[crate::bench::RelationRule], graph: &SceneGraph) -> Vec<SemanticProposal> {
    let mut out = Vec::new();
    for r in rules {
        for a in graph.nodes().filter(|n| labels_match(&n.label, &r.src_label)) {
            for b in graph.nodes().filter(|n| labels_match(&n.label, &r.dst_label)) {
                if a.id != b.id {
                    out.push(SemanticProposal {
                        src: a.id,
                        dst: b.id,
                        relation: r.relation,
                        score: r.score,
                    });
                }
            }
        }
    }
    out
}

/// Lowercased alphanumeric word tokens.
pub(crate) fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when the tokens of `label` occur contiguously in `query_tokens`.
pub(crate) fn lexical_match(query_tokens: &[String], label: &str) -> bool {
    let l = tokens(label);
    !l.is_empty() && query_tokens.windows(l.len()).any(|w| w == l.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::RelationRule;
    use crate::geometry::{Box3, Vec3};
    use crate::graph::{ObjectNode, RelationType};

    fn node(id: u64, label: &str) -> ObjectNode {
        let c = Vec3::new(id as f64, 0.5, 0.0);
        ObjectNode {
            id,
            label: label.into(),
            confidence: 0.9,
            anchor: c,
            volume: Box3::new(c, Vec3::new(0.05, 0.05, 0.05)).unwrap(),
            last_seen: 0.0,
        }
    }

    fn rule(a: &str, b: &str) -> RelationRule {
        RelationRule {
            src_label: a.into(),
            dst_label: b.into(),
            relation: RelationType::Functional,
            score: 0.9,
        }
    }

    #[test]
    fn rules_expand_to_node_pairs() {
        let mut g = SceneGraph::new(Vec3::ZERO);
        for (id, l) in [(0, "charger"), (1, "laptop"), (2, "mug")] {
            g.upsert_node(node(id, l)).unwrap();
        }
        let p = expand_rules(&[rule("charger", "laptop")], &g);
        assert_eq!(
            p,
            vec![SemanticProposal {
                src: 0,
                dst: 1,
                relation: RelationType::Functional,
                score: 0.9
            }]
        );
        assert!(expand_rules(&[], &g).is_empty());
        assert!(expand_rules(&[rule("charger", "printer")], &g).is_empty());
    }

    #[test]
    fn lexical_matching() {
        let q = tokens("Where is the mug?");
        assert!(lexical_match(&q, "mug"));
        assert!(!lexical_match(&q, "coffee mug"));
        assert!(lexical_match(&tokens("CLOSEST \"pen cup\" TO desk"), "pen cup"));
        assert!(!lexical_match(&tokens("cup pen"), "pen cup"));
    }
}
