//! HTTP client speaking the JSON wire format.

use std::time::{Duration, Instant};

use super::wire::{DetectionsResponse, LabelsResponse, ProposalsResponse, RequestKind, WireRequest};
use super::{
    expand_rules, Detector, DetectorRequest, LabelProposal, LabelProposer, ProposerRequest, RelationProposer,
    SemanticError, Timed,
};
use crate::graph::SceneGraph;
use crate::lifting::Detection2D;
use crate::relations::SemanticProposal;

pub const DEFAULT_TIMEOUT_S: f64 = 10.0;

/// Proposer, detector and relation proposer backed by one HTTP endpoint.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteClient {
    pub fn new(endpoint: impl Into<String>, timeout_s: f64) -> Result<Self, SemanticError> {
        let endpoint = endpoint.into();
        if !endpoint.starts_with("http://") && !endpoint.starts_with("https://") {
            return Err(SemanticError::InvalidRequest(format!("endpoint '{endpoint}' is not an http url")));
        }
        if !(timeout_s > 0.0 && timeout_s.is_finite()) {
            return Err(SemanticError::InvalidRequest(format!("timeout {timeout_s} must be positive")));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { endpoint, agent })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn call<T: serde::de::DeserializeOwned>(&self, req: &WireRequest) -> Result<Timed<T>, SemanticError> {
        let start = Instant::now();
        let unavailable = |reason: String| SemanticError::ProposerUnavailable {
            elapsed_s: start.elapsed().as_secs_f64(),
            reason,
        };
        let body = serde_json::to_string(req).expect("wire request serializes");
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| unavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| unavailable(e.to_string()))?;
        if !status.is_success() {
            return Err(unavailable(format!("http status {status}: {text}")));
        }
        let value = serde_json::from_str(&text).map_err(|e| SemanticError::Protocol(e.to_string()))?;
        Ok(Timed {
            value,
            latency_s: start.elapsed().as_secs_f64(),
        })
    }
}

impl LabelProposer for RemoteClient {
    fn propose_labels(&self, req: &ProposerRequest) -> Result<Timed<LabelProposal>, SemanticError> {
        let r: Timed<LabelsResponse> = self.call(&WireRequest {
            kind: RequestKind::ProposeLabels,
            query: req.query.clone(),
            frame_id: req.frame_id.clone(),
            labels: Vec::new(),
            threshold: 0.0,
        })?;
        Ok(Timed {
            value: LabelProposal {
                labels: r.value.labels,
                scene_description: String::new(),
            },
            latency_s: r.latency_s,
        })
    }
}

impl Detector for RemoteClient {
    fn detect(&self, req: &DetectorRequest) -> Result<Timed<Vec<Detection2D>>, SemanticError> {
        req.validate()?;
        let r: Timed<DetectionsResponse> = self.call(&WireRequest {
            kind: RequestKind::Detect,
            query: String::new(),
            frame_id: req.frame_id.clone(),
            labels: req.labels.clone(),
            threshold: req.confidence_threshold,
        })?;
        let mut dets = Vec::with_capacity(r.value.detections.len());
        for d in r.value.detections {
            let d = d.into_detection()?;
            if d.confidence >= req.confidence_threshold {
                dets.push(d);
            }
        }
        Ok(Timed {
            value: dets,
            latency_s: r.latency_s,
        })
    }
}

impl RelationProposer for RemoteClient {
    fn propose_relations(&self, graph: &SceneGraph, query: &str) -> Result<Timed<Vec<SemanticProposal>>, SemanticError> {
        let mut labels: Vec<String> = Vec::new();
        for n in graph.nodes() {
            if !labels.contains(&n.label) {
                labels.push(n.label.clone());
            }
        }
        let r: Timed<ProposalsResponse> = self.call(&WireRequest {
            kind: RequestKind::ProposeRelations,
            query: query.to_string(),
            frame_id: String::new(),
            labels,
            threshold: 0.0,
        })?;
        let rules: Vec<_> = r.value.proposals.into_iter().map(|p| p.into_rule()).collect();
        Ok(Timed {
            value: expand_rules(&rules, graph),
            latency_s: r.latency_s,
        })
    }
}
