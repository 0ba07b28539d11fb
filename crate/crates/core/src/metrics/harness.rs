//! Per-scene evaluation with ground-truth tools and report aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::{
    BenchmarkReport, CategoryStats, LatencyStats, Prf, T1Report, T1Summary, T2Report, T3Context, T3Report, T4Report,
    REPORT_FORMAT_VERSION,
};
use super::{
    angular_error, edge_prf, iou2d, map_answer, map_edges, match_predictions, mean_std, median, position_error,
    query_success, relation_type_counts, success_at, DISTANCE_THRESHOLD_M,
};
use crate::bench::{project_gt_box, BenchmarkScene, Context, Difficulty, ExpectedAnswer, GtObject};
use crate::geometry::Vec3;
use crate::graph::{NodeId, RelationEdge, RelationFamily};
use crate::lifting::LiftConfig;
use crate::query::{
    parse_query, Answer, CoordinatorPolicy, Engine, Mode, QueryError, SceneInputs, StageDelays, StageTimings, Tools,
};
use crate::relations::RelationParams;
use crate::semantic::GtTools;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("scene {scene}")]
    Query {
        scene: String,
        #[source]
        source: QueryError,
    },
    #[error("no scenes to evaluate")]
    NoScenes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchParams {
    pub relation: RelationParams,
    pub lift: LiftConfig,
    pub policy: CoordinatorPolicy,
    pub delays: StageDelays,
    pub distance_threshold: f64,
    /// How many times the authored query list is replayed per scene.
    pub passes: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            relation: RelationParams::default(),
            lift: LiftConfig::default(),
            policy: CoordinatorPolicy::default(),
            delays: StageDelays::default(),
            distance_threshold: DISTANCE_THRESHOLD_M,
            passes: 2,
        }
    }
}

impl BenchParams {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.policy.mode = mode;
        self
    }

    pub fn mode(&self) -> Mode {
        self.policy.mode
    }

    fn engine(&self) -> Engine {
        Engine::new(self.policy, self.relation, self.lift, self.delays)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEval {
    pub gt_id: NodeId,
    pub label: String,
    pub is_surface: bool,
    /// Rests at least 20 cm above the main work surface.
    pub elevated: bool,
    pub matched: Option<NodeId>,
    pub error_cm: Option<f64>,
    pub angular_deg: Option<f64>,
    pub iou: f64,
    /// Half-extent of the ground-truth box along the view ray, in cm.
    pub view_extent_cm: f64,
}

impl ObjectEval {
    pub fn tolerance_cm(&self) -> f64 {
        self.view_extent_cm + 1.0
    }

    pub fn adjusted_error_cm(&self) -> Option<f64> {
        self.error_cm.map(|e| (e - self.view_extent_cm).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub text: String,
    pub category: String,
    pub pass: usize,
    pub expected: ExpectedAnswer,
    /// Answer with predicted ids rewritten to ground-truth ids.
    pub answer: Answer,
    pub success: bool,
    pub distance_error_cm: Option<f64>,
    pub timings: StageTimings,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub scene_id: String,
    pub context: Context,
    pub difficulty: Difficulty,
    pub objects: Vec<ObjectEval>,
    pub detections: usize,
    pub planar_fallbacks: usize,
    pub spatial: Prf,
    pub high_level: Prf,
    pub type_correct: usize,
    pub type_total: usize,
    /// Edges of the grounded graph, in ground-truth ids.
    pub predicted_edges: Vec<RelationEdge>,
    pub queries: Vec<QueryEval>,
}

/// Anchor tolerance for an object: half-extent along the ray from `eye`
/// to its center plus 1 cm, in cm.
pub fn surface_tolerance_cm(object: &GtObject, eye: Vec3) -> f64 {
    view_extent_cm(object, eye) + 1.0
}

fn view_extent_cm(object: &GtObject, eye: Vec3) -> f64 {
    (object.center - eye)
        .normalized()
        .map_or(0.0, |d| object.box3().extent_along(d) * 100.0)
}

fn family_split(edges: &[RelationEdge], family: RelationFamily) -> Vec<RelationEdge> {
    edges.iter().filter(|e| e.relation.family() == family).copied().collect()
}

/// Grounds one scene with its ground-truth tools, scores localization and
/// the scene graph, then replays the authored queries on a fresh engine.
pub fn evaluate_scene(scene: &BenchmarkScene, params: &BenchParams) -> Result<SceneEval, MetricsError> {
    let gt_tools = GtTools::from_scene(scene);
    let tools = Tools {
        proposer: &gt_tools.proposer,
        detector: &gt_tools.detector,
        relations: &gt_tools.relations,
    };
    evaluate_scene_with(scene, params, &tools)
}

/// Same as [`evaluate_scene`] with caller-supplied tools.
pub fn evaluate_scene_with(scene: &BenchmarkScene, params: &BenchParams, tools: &Tools) -> Result<SceneEval, MetricsError> {
    let scene_id = scene.scene_id();
    let err = |source| MetricsError::Query {
        scene: scene_id.clone(),
        source,
    };
    let inputs = SceneInputs {
        frame_id: &scene_id,
        depth: &scene.depth,
        intrinsics: &scene.intrinsics,
        pose: &scene.pose,
        user_position: scene.user_position,
        seed: scene.spec.seed,
    };

    let mut engine = params.engine();
    let (_, planar_fallbacks) = engine.ground_scene(&inputs, tools).map_err(err)?;
    let detections = engine.world.node_count();
    let nodes: Vec<_> = engine.world.nodes().cloned().collect();
    let matching = match_predictions(&scene.objects, &nodes);
    let elevated: Vec<NodeId> = scene.elevated_objects(0.2).iter().map(|o| o.id).collect();
    let eye = scene.user_position;
    let objects = scene
        .objects
        .iter()
        .zip(&matching)
        .map(|(g, (_, m))| {
            let node = m.and_then(|id| engine.world.node(id));
            ObjectEval {
                gt_id: g.id,
                label: g.label.clone(),
                is_surface: g.is_surface(),
                elevated: elevated.contains(&g.id),
                matched: *m,
                error_cm: node.map(|n| position_error(g.center, n.anchor)),
                angular_deg: node.map(|n| angular_error(eye, g.center, n.anchor)),
                iou: node
                    .and_then(|n| project_gt_box(&n.volume, &scene.intrinsics, &scene.pose))
                    .map_or(0.0, |b| iou2d(&g.box2, &b)),
                view_extent_cm: view_extent_cm(g, eye),
            }
        })
        .collect();
    let predicted_edges = map_edges(engine.world.edges(), &matching);
    let spatial = edge_prf(
        &family_split(&scene.edges, RelationFamily::Spatial),
        &family_split(&predicted_edges, RelationFamily::Spatial),
    );
    let high_level = edge_prf(
        &family_split(&scene.edges, RelationFamily::HighLevel),
        &family_split(&predicted_edges, RelationFamily::HighLevel),
    );
    let (type_correct, type_total) = relation_type_counts(&scene.edges, &predicted_edges);

    let mut engine = params.engine();
    let mut queries = Vec::new();
    for pass in 0..params.passes {
        for q in &scene.queries {
            let parsed = parse_query(&q.text).map_err(|e| err(e.into()))?;
            let outcome = engine.run_query(&parsed, &inputs, tools).map_err(err)?;
            let nodes: Vec<_> = engine.world.nodes().cloned().collect();
            let answer = map_answer(&outcome.answer, &match_predictions(&scene.objects, &nodes));
            let distance_error_cm = match (&q.expected, &answer) {
                (ExpectedAnswer::Distance { meters }, Answer::Distance { meters: got }) => Some((meters - got).abs() * 100.0),
                _ => None,
            };
            queries.push(QueryEval {
                text: q.text.clone(),
                category: parsed.category().name().to_string(),
                pass,
                expected: q.expected.clone(),
                success: query_success(&q.expected, &answer, params.distance_threshold),
                answer,
                distance_error_cm,
                timings: outcome.timings,
                from_cache: outcome.from_cache,
            });
        }
    }

    Ok(SceneEval {
        scene_id,
        context: scene.spec.context,
        difficulty: scene.spec.difficulty,
        objects,
        detections,
        planar_fallbacks,
        spatial,
        high_level,
        type_correct,
        type_total,
        predicted_edges,
        queries,
    })
}

fn t1_summary<'a>(objects: impl Iterator<Item = &'a ObjectEval>) -> T1Summary {
    let objects: Vec<&ObjectEval> = objects.collect();
    let errors: Vec<f64> = objects.iter().filter_map(|o| o.error_cm).collect();
    let angles: Vec<f64> = objects.iter().filter_map(|o| o.angular_deg).collect();
    let scored: Vec<f64> = objects.iter().map(|o| o.error_cm.unwrap_or(f64::INFINITY)).collect();
    let adjusted: Vec<f64> = objects
        .iter()
        .map(|o| o.adjusted_error_cm().unwrap_or(f64::INFINITY))
        .collect();
    let within = objects
        .iter()
        .filter(|o| o.error_cm.is_some_and(|e| e <= o.tolerance_cm()))
        .count();
    let (mean_error_cm, std_error_cm) = mean_std(&errors);
    let (mean_angular_deg, std_angular_deg) = mean_std(&angles);
    let n = objects.len();
    T1Summary {
        objects: n,
        matched: errors.len(),
        mean_error_cm,
        std_error_cm,
        median_error_cm: median(&errors),
        mean_angular_deg,
        std_angular_deg,
        success_at_10: success_at(&scored, 10.0),
        success_at_20: success_at(&scored, 20.0),
        adjusted_success_at_10: success_at(&adjusted, 10.0),
        within_tolerance_pct: if n == 0 { 0.0 } else { 100.0 * within as f64 / n as f64 },
        mean_iou: if n == 0 {
            0.0
        } else {
            objects.iter().map(|o| o.iou).sum::<f64>() / n as f64
        },
    }
}

fn group<'a, K: Ord, T>(
    evals: &'a [SceneEval],
    key: impl Fn(&SceneEval) -> K,
    f: impl Fn(&[&'a SceneEval]) -> T,
) -> BTreeMap<K, T> {
    let mut groups: BTreeMap<K, Vec<&SceneEval>> = BTreeMap::new();
    for e in evals {
        groups.entry(key(e)).or_default().push(e);
    }
    groups.into_iter().map(|(k, v)| (k, f(&v))).collect()
}

fn scene_prf(e: &SceneEval) -> Prf {
    e.spatial.merge(&e.high_level)
}

fn latency(values: &[f64]) -> LatencyStats {
    LatencyStats {
        runs: values.len(),
        mean_s: mean_std(values).0,
        median_s: median(values),
    }
}

/// Combines per-scene results into one report. Scenes are ordered by id
/// first, so the result does not depend on evaluation order.
pub fn aggregate(evals: &[SceneEval], mode: Mode) -> BenchmarkReport {
    let mut evals = evals.to_vec();
    evals.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let evals = &evals[..];

    let catalog = |v: &[&SceneEval]| t1_summary(v.iter().flat_map(|e| &e.objects).filter(|o| !o.is_surface));
    let all: Vec<&SceneEval> = evals.iter().collect();
    let detections: usize = evals.iter().map(|e| e.detections).sum();
    let planar_fallbacks: usize = evals.iter().map(|e| e.planar_fallbacks).sum();
    let t1 = T1Report {
        overall: catalog(&all),
        surfaces: t1_summary(evals.iter().flat_map(|e| &e.objects).filter(|o| o.is_surface)),
        by_context: group(evals, |e| e.context.name().to_string(), catalog),
        by_difficulty: group(evals, |e| e.difficulty.name().to_string(), catalog),
        detections,
        planar_fallbacks,
        insufficient_depth_rate: if detections == 0 {
            0.0
        } else {
            planar_fallbacks as f64 / detections as f64
        },
    };

    let sum_prf = |v: &[&SceneEval]| v.iter().fold(Prf::default(), |acc, e| acc.merge(&scene_prf(e)));
    let spatial = evals.iter().fold(Prf::default(), |acc, e| acc.merge(&e.spatial));
    let high_level = evals.iter().fold(Prf::default(), |acc, e| acc.merge(&e.high_level));
    let type_correct: usize = evals.iter().map(|e| e.type_correct).sum();
    let type_total: usize = evals.iter().map(|e| e.type_total).sum();
    let all_queries = || evals.iter().flat_map(|e| &e.queries);
    let mut relational = CategoryStats::default();
    for q in all_queries().filter(|q| q.category == "relate") {
        relational.add(q.success);
    }
    let t2 = T2Report {
        overall: spatial.merge(&high_level),
        spatial,
        high_level,
        relation_type_accuracy: (type_total > 0).then(|| type_correct as f64 / type_total as f64),
        relational_query_success: relational.success_pct,
        by_context: group(evals, |e| e.context.name().to_string(), sum_prf),
        by_difficulty: group(evals, |e| e.difficulty.name().to_string(), sum_prf),
    };

    let mut overall = CategoryStats::default();
    let mut by_category: BTreeMap<String, CategoryStats> = BTreeMap::new();
    for q in all_queries() {
        overall.add(q.success);
        by_category.entry(q.category.clone()).or_default().add(q.success);
    }
    let distance_errors: Vec<f64> = all_queries()
        .filter(|q| q.category == "measure")
        .filter_map(|q| q.distance_error_cm)
        .collect();
    let by_context = group(evals, |e| e.context.name().to_string(), |v| {
        let mut c = T3Context::default();
        for q in v.iter().flat_map(|e| &e.queries) {
            c.overall.add(q.success);
            c.by_category.entry(q.category.clone()).or_default().add(q.success);
        }
        c
    });
    let t3 = T3Report {
        overall,
        by_category,
        mean_distance_error_cm: mean_std(&distance_errors).0,
        median_distance_error_cm: median(&distance_errors),
        by_context,
    };

    let e2e: Vec<f64> = all_queries().map(|q| q.timings.end_to_end).collect();
    let perceived: Vec<&StageTimings> = all_queries().filter(|q| !q.from_cache).map(|q| &q.timings).collect();
    let stage = |f: fn(&StageTimings) -> f64| median(&perceived.iter().map(|t| f(t)).collect::<Vec<_>>());
    let stage_medians = (!perceived.is_empty()).then(|| StageTimings {
        capture_encode: stage(|t| t.capture_encode).unwrap_or(0.0),
        network: stage(|t| t.network).unwrap_or(0.0),
        mllm: stage(|t| t.mllm).unwrap_or(0.0),
        detection: stage(|t| t.detection).unwrap_or(0.0),
        client_grounding: stage(|t| t.client_grounding).unwrap_or(0.0),
        end_to_end: stage(|t| t.end_to_end).unwrap_or(0.0),
    });
    let mut per_category: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for q in all_queries() {
        per_category.entry(q.category.clone()).or_default().push(q.timings.end_to_end);
    }
    let t4 = T4Report {
        query_runs: e2e.len(),
        cache_hits: all_queries().filter(|q| q.from_cache).count(),
        stage_medians,
        end_to_end: latency(&e2e),
        end_to_end_total_s: e2e.iter().sum(),
        by_category: per_category.into_iter().map(|(k, v)| (k, latency(&v))).collect(),
        query_success_pct: t3.overall.success_pct,
        mean_error_cm: t1.overall.mean_error_cm,
        edge_f1: t2.overall.f1,
    };

    BenchmarkReport {
        version: REPORT_FORMAT_VERSION,
        variant: mode.name().to_string(),
        scene_count: evals.len(),
        t1,
        t2,
        t3,
        t4,
    }
}

/// Evaluates every scene sequentially and aggregates the reports.
pub fn run_benchmark(scenes: &[BenchmarkScene], params: &BenchParams) -> Result<BenchmarkReport, MetricsError> {
    if scenes.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    let evals = scenes
        .iter()
        .map(|s| evaluate_scene(s, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&evals, params.mode()))
}
