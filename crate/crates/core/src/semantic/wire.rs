//! JSON wire format shared by the HTTP client and the loopback server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};

use serde::{Deserialize, Serialize};

use super::{
    Detector, DetectorRequest, GtTools, LabelProposer, ProposerRequest, SemanticError,
};
use crate::bench::RelationRule;
use crate::geometry::Box2;
use crate::graph::{labels_match, RelationType};
use crate::lifting::Detection2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    ProposeLabels,
    Detect,
    ProposeRelations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub kind: RequestKind,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub frame_id: String,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsResponse {
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsResponse {
    pub detections: Vec<WireDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireProposal {
    pub src: String,
    pub dst: String,
    pub rel: RelationType,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsResponse {
    pub proposals: Vec<WireProposal>,
}

impl WireDetection {
    pub fn into_detection(self) -> Result<Detection2D, SemanticError> {
        let [a, b, c, d] = self.bbox;
        let bbox = Box2::new(a, b, c, d).map_err(|e| SemanticError::Protocol(e.to_string()))?;
        let det = Detection2D {
            label: self.label,
            bbox,
            confidence: self.conf,
        };
        det.validate().map_err(|e| SemanticError::Protocol(e.to_string()))?;
        Ok(det)
    }
}

impl WireProposal {
    pub fn into_rule(self) -> RelationRule {
        RelationRule {
            src_label: self.src,
            dst_label: self.dst,
            relation: self.rel,
            score: self.score,
        }
    }
}

/// Answers one wire request from ground-truth tools. Relation proposals are
/// the rules whose two labels both appear in the request.
pub fn handle_request(tools: &GtTools, body: &str) -> Result<String, SemanticError> {
    let req: WireRequest = serde_json::from_str(body).map_err(|e| SemanticError::Protocol(e.to_string()))?;
    let json = match req.kind {
        RequestKind::ProposeLabels => {
            let p = tools.proposer.propose_labels(&ProposerRequest {
                query: req.query,
                frame_id: req.frame_id,
            })?;
            serde_json::to_string(&LabelsResponse { labels: p.value.labels })
        }
        RequestKind::Detect => {
            let d = tools.detector.detect(&DetectorRequest {
                labels: req.labels,
                frame_id: req.frame_id,
                confidence_threshold: req.threshold,
            })?;
            let detections = d
                .value
                .into_iter()
                .map(|d| WireDetection {
                    label: d.label,
                    bbox: d.bbox.to_array(),
                    conf: d.confidence,
                })
                .collect();
            serde_json::to_string(&DetectionsResponse { detections })
        }
        RequestKind::ProposeRelations => {
            let has = |l: &str| req.labels.iter().any(|x| labels_match(x, l));
            let proposals = tools
                .relations
                .rules()
                .iter()
                .filter(|r| has(&r.src_label) && has(&r.dst_label))
                .map(|r| WireProposal {
                    src: r.src_label.clone(),
                    dst: r.dst_label.clone(),
                    rel: r.relation,
                    score: r.score,
                })
                .collect();
            serde_json::to_string(&ProposalsResponse { proposals })
        }
    };
    Ok(json.expect("wire response serializes"))
}

fn read_http_body(stream: &mut TcpStream) -> std::io::Result<String> {
    let mut reader = BufReader::new(stream);
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((k, v)) = trimmed.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    Ok(String::from_utf8_lossy(&body).into_owned())
}

/// Serves wire requests over HTTP/1.1 on `listener`, one connection per
/// request, stopping after `max_requests` when given.
pub fn serve(listener: TcpListener, tools: &GtTools, max_requests: Option<usize>) -> std::io::Result<()> {
    let mut served = 0usize;
    for stream in listener.incoming() {
        let mut stream = stream?;
        let body = read_http_body(&mut stream)?;
        let (status, payload) = match handle_request(tools, &body) {
            Ok(json) => ("200 OK", json),
            Err(e) => ("400 Bad Request", serde_json::json!({ "error": e.to_string() }).to_string()),
        };
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )?;
        stream.flush()?;
        served += 1;
        if max_requests.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}
