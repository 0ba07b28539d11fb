//! Query execution: sufficiency check, perception cycle and answer evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parser::{ParseError, Query};
use crate::geometry::{CameraIntrinsics, DepthFrame, Plane, PoseSE3, Vec3};
use crate::graph::{labels_match, GraphError, NodeId, ObjectNode, Observation, SceneGraph, ASSOCIATION_RADIUS};
use crate::lifting::{fit_support_plane, lift_detection, lift_detection_planar, LiftConfig, LiftError};
use crate::relations::{infer_relations, RelationParams};
use crate::semantic::{
    Detector, DetectorRequest, LabelProposer, ProposerRequest, RelationProposer, SemanticError,
    DEFAULT_DETECTION_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    NoCoordinator,
    NoDepth,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Full, Mode::NoCoordinator, Mode::NoDepth];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoCoordinator => "no-coordinator",
            Mode::NoDepth => "no-depth",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown variant '{s}' (full, no-coordinator, no-depth)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinatorPolicy {
    pub max_staleness: f64,
    pub min_node_confidence: f64,
    pub mode: Mode,
}

impl Default for CoordinatorPolicy {
    fn default() -> Self {
        Self {
            max_staleness: 30.0,
            min_node_confidence: 0.35,
            mode: Mode::Full,
        }
    }
}

impl CoordinatorPolicy {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

/// Simulated per-stage delays added to every perception run, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageDelays {
    pub capture_encode: f64,
    pub network: f64,
    pub mllm: f64,
    pub detection: f64,
    pub client_grounding: f64,
    /// Client grounding when lifting against a plane instead of depth.
    pub client_grounding_planar: f64,
}

impl Default for StageDelays {
    fn default() -> Self {
        Self {
            capture_encode: 0.15,
            network: 0.42,
            mllm: 2.10,
            detection: 0.82,
            client_grounding: 1.25,
            client_grounding_planar: 0.90,
        }
    }
}

impl StageDelays {
    pub fn zero() -> Self {
        Self {
            capture_encode: 0.0,
            network: 0.0,
            mllm: 0.0,
            detection: 0.0,
            client_grounding: 0.0,
            client_grounding_planar: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub capture_encode: f64,
    pub network: f64,
    pub mllm: f64,
    pub detection: f64,
    pub client_grounding: f64,
    pub end_to_end: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.capture_encode + self.network + self.mllm + self.detection + self.client_grounding
    }

    fn finish(mut self, idle_gap: f64) -> Self {
        self.end_to_end = self.stage_sum() + idle_gap;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CaptureEncode,
    Network,
    Mllm,
    Detection,
    ClientGrounding,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::CaptureEncode => "capture_encode",
            Stage::Network => "network",
            Stage::Mllm => "mllm",
            Stage::Detection => "detection",
            Stage::ClientGrounding => "client_grounding",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("query failed in stage {stage}: {message}")]
    Failed { stage: Stage, message: String },
}

impl QueryError {
    fn at(stage: Stage, e: impl fmt::Display) -> Self {
        QueryError::Failed {
            stage,
            message: e.to_string(),
        }
    }
}

impl From<GraphError> for QueryError {
    fn from(e: GraphError) -> Self {
        QueryError::at(Stage::ClientGrounding, e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Answer {
    Objects { ids: Vec<NodeId> },
    Distance { meters: f64 },
    Ambiguous { candidates: Vec<NodeId> },
    NotFound,
}

/// Sensor inputs of the current frame.
#[derive(Debug, Clone, Copy)]
pub struct SceneInputs<'a> {
    pub frame_id: &'a str,
    pub depth: &'a DepthFrame,
    pub intrinsics: &'a CameraIntrinsics,
    pub pose: &'a PoseSE3,
    pub user_position: Vec3,
    pub seed: u64,
}

#[derive(Clone, Copy)]
pub struct Tools<'a> {
    pub proposer: &'a dyn LabelProposer,
    pub detector: &'a dyn Detector,
    pub relations: &'a dyn RelationProposer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub answer: Answer,
    pub timings: StageTimings,
    pub from_cache: bool,
    /// Detections that needed the planar fallback in this run.
    pub planar_fallbacks: usize,
}

/// World model plus the coordinator state, driven by a simulated clock.
#[derive(Debug, Clone)]
pub struct Engine {
    pub world: SceneGraph,
    pub policy: CoordinatorPolicy,
    pub params: RelationParams,
    pub lift: LiftConfig,
    pub delays: StageDelays,
    pub detection_threshold: f64,
    clock: f64,
    last_full_scan: Option<f64>,
}

impl Engine {
    pub fn new(policy: CoordinatorPolicy, params: RelationParams, lift: LiftConfig, delays: StageDelays) -> Self {
        Self {
            world: SceneGraph::new(Vec3::ZERO),
            policy,
            params,
            lift,
            delays,
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            clock: 0.0,
            last_full_scan: None,
        }
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Advances the simulated clock without running a query.
    pub fn idle(&mut self, seconds: f64) {
        if seconds > 0.0 {
            self.clock += seconds;
        }
    }

    fn fresh(&self, t: f64) -> bool {
        self.clock - t <= self.policy.max_staleness
    }

    /// Whether the world model can answer `query` without perception.
    pub fn sufficient(&self, query: &Query) -> bool {
        let covered = query.labels().iter().all(|l| {
            self.world
                .nodes()
                .any(|n| labels_match(&n.label, l) && n.confidence >= self.policy.min_node_confidence && self.fresh(n.last_seen))
        });
        covered && (!query.needs_full_scene() || self.last_full_scan.is_some_and(|t| self.fresh(t)))
    }

    pub fn run_text(&mut self, text: &str, inputs: &SceneInputs, tools: &Tools) -> Result<QueryOutcome, QueryError> {
        let q = super::parse_query(text)?;
        self.run_query(&q, inputs, tools)
    }

    pub fn run_query(&mut self, query: &Query, inputs: &SceneInputs, tools: &Tools) -> Result<QueryOutcome, QueryError> {
        if self.policy.mode == Mode::Full && self.sufficient(query) {
            return Ok(QueryOutcome {
                answer: evaluate(query, &self.world),
                timings: StageTimings::default().finish(0.0),
                from_cache: true,
                planar_fallbacks: 0,
            });
        }
        let text = if query.needs_full_scene() { String::new() } else { query.to_string() };
        let (timings, planar_fallbacks) = self.perceive(&text, inputs, tools)?;
        if text.is_empty() {
            self.last_full_scan = Some(self.clock);
        }
        self.clock += timings.end_to_end;
        Ok(QueryOutcome {
            answer: evaluate(query, &self.world),
            timings,
            from_cache: false,
            planar_fallbacks,
        })
    }

    /// Runs one full perception cycle over every label the proposer offers
    /// for an empty query.
    pub fn ground_scene(&mut self, inputs: &SceneInputs, tools: &Tools) -> Result<(StageTimings, usize), QueryError> {
        let r = self.perceive("", inputs, tools)?;
        self.last_full_scan = Some(self.clock);
        self.clock += r.0.end_to_end;
        Ok(r)
    }

    fn perceive(&mut self, text: &str, inputs: &SceneInputs, tools: &Tools) -> Result<(StageTimings, usize), QueryError> {
        let d = self.delays;
        let mut t = StageTimings {
            capture_encode: d.capture_encode,
            network: d.network,
            mllm: d.mllm,
            detection: d.detection,
            client_grounding: if self.policy.mode == Mode::NoDepth {
                d.client_grounding_planar
            } else {
                d.client_grounding
            },
            end_to_end: 0.0,
        };
        let proposal = tools
            .proposer
            .propose_labels(&ProposerRequest {
                query: text.to_string(),
                frame_id: inputs.frame_id.to_string(),
            })
            .map_err(|e| QueryError::at(Stage::Mllm, e))?;
        t.mllm += proposal.latency_s;
        let labels = proposal.value.labels;
        let mut detections = Vec::new();
        if !labels.is_empty() {
            let dets = tools
                .detector
                .detect(&DetectorRequest {
                    labels,
                    frame_id: inputs.frame_id.to_string(),
                    confidence_threshold: self.detection_threshold,
                })
                .map_err(|e: SemanticError| QueryError::at(Stage::Detection, e))?;
            t.detection += dets.latency_s;
            detections = dets.value;
        }
        let mut plane: Option<Plane> = None;
        let mut fit_plane = || -> Result<Plane, QueryError> {
            if plane.is_none() {
                plane = Some(
                    fit_support_plane(inputs.depth, inputs.intrinsics, inputs.pose, inputs.seed)
                        .map_err(|e| QueryError::at(Stage::ClientGrounding, e))?,
                );
            }
            Ok(plane.expect("plane fitted"))
        };
        let mut observations = Vec::with_capacity(detections.len());
        let mut fallbacks = 0;
        for det in &detections {
            let lifted = if self.policy.mode == Mode::NoDepth {
                lift_detection_planar(det, &fit_plane()?, inputs.intrinsics, inputs.pose, &self.lift)
            } else {
                match lift_detection(det, inputs.depth, inputs.intrinsics, inputs.pose, &self.lift) {
                    Err(LiftError::InsufficientDepth { .. }) => {
                        fallbacks += 1;
                        lift_detection_planar(det, &fit_plane()?, inputs.intrinsics, inputs.pose, &self.lift)
                    }
                    other => other,
                }
            }
            .map_err(|e| QueryError::at(Stage::ClientGrounding, format!("lifting '{}': {e}", det.label)))?;
            observations.push(Observation {
                label: det.label.clone(),
                confidence: det.confidence,
                anchor: lifted.anchor,
                volume: lifted.volume,
            });
        }
        self.world.set_timestamp(self.clock)?;
        self.world.user_position = inputs.user_position;
        self.world.associate(observations, self.clock, ASSOCIATION_RADIUS)?;
        let proposals = tools
            .relations
            .propose_relations(&self.world, text)
            .map_err(|e| QueryError::at(Stage::Mllm, e))?;
        t.mllm += proposals.latency_s;
        let edges = infer_relations(&self.world, &proposals.value, &self.params, inputs.pose.horizontal_forward())
            .map_err(|e| QueryError::at(Stage::ClientGrounding, e))?;
        self.world.set_edges(edges)?;
        Ok((t.finish(0.0), fallbacks))
    }
}

/// Resolves a label to exactly one node, or the answer to give instead.
fn resolve(graph: &SceneGraph, label: &str) -> Result<NodeId, Answer> {
    let ids: Vec<NodeId> = graph.nodes().filter(|n| labels_match(&n.label, label)).map(|n| n.id).collect();
    match ids.as_slice() {
        [] => Err(Answer::NotFound),
        [one] => Ok(*one),
        _ => Err(Answer::Ambiguous { candidates: ids }),
    }
}

fn objects(ids: Vec<NodeId>) -> Answer {
    if ids.is_empty() {
        Answer::NotFound
    } else {
        Answer::Objects { ids }
    }
}

fn anchor(graph: &SceneGraph, id: NodeId) -> Vec3 {
    graph.node(id).expect("resolved node").anchor
}

/// Evaluates a query against the world model as it stands.
pub fn evaluate(query: &Query, graph: &SceneGraph) -> Answer {
    let run = || -> Result<Answer, Answer> {
        Ok(match query {
            Query::Locate { label } => match resolve(graph, label) {
                Ok(id) => Answer::Objects { ids: vec![id] },
                Err(a) => a,
            },
            Query::Relate { relation, anchor } => {
                let a = resolve(graph, anchor)?;
                objects(
                    graph
                        .edges()
                        .iter()
                        .filter(|e| e.dst == a && e.relation == *relation)
                        .map(|e| e.src)
                        .collect(),
                )
            }
            Query::Measure { a, b } => {
                let (a, b) = (resolve(graph, a)?, resolve(graph, b)?);
                Answer::Distance {
                    meters: anchor(graph, a).distance(anchor(graph, b)),
                }
            }
            Query::FilterWithin { distance, anchor: label } => {
                let a = resolve(graph, label)?;
                let pa = anchor(graph, a);
                objects(
                    graph
                        .nodes()
                        .filter(|n| n.id != a && n.anchor.distance(pa) <= *distance)
                        .map(|n| n.id)
                        .collect(),
                )
            }
            Query::Closest { label, to } => {
                let a = resolve(graph, to)?;
                let pa = anchor(graph, a);
                let best = graph
                    .nodes()
                    .filter(|n| n.id != a && labels_match(&n.label, label))
                    .map(|n: &ObjectNode| (n.anchor.distance(pa), n.id))
                    .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                objects(best.map(|b| vec![b.1]).unwrap_or_default())
            }
        })
    };
    run().unwrap_or_else(|a| a)
}
