//! Command-line front end: scene generation, grounding, querying and
//! benchmark evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grounded_world::bench::{
    generate_scene, load_scene, save_scene, BenchError, BenchmarkScene, Context, Difficulty, NoiseConfig, SceneSpec,
};
use grounded_world::lifting::LiftConfig;
use grounded_world::metrics::{aggregate, evaluate_scene_with, BenchParams, SceneEval};
use grounded_world::query::{CoordinatorPolicy, Engine, Mode, QueryError, SceneInputs, StageDelays, Tools};
use grounded_world::relations::RelationParams;
use grounded_world::semantic::{GtTools, RemoteClient, DEFAULT_TIMEOUT_S};

pub const SEED_ENV: &str = "GROUNDED_WORLD_SEED";

/// Bad flags, config or input files. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

/// Exit code for an error: 2 for usage and input errors, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return match e {
                BenchError::GenerationFailed { .. } => 1,
                _ => 2,
            };
        }
        if let Some(QueryError::Parse(_)) = cause.downcast_ref::<QueryError>() {
            return 2;
        }
    }
    1
}

#[derive(Debug, Parser)]
#[command(name = "grounded-world", version, about = "Depth-grounded scene graphs over synthetic benchmark scenes")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded benchmark scenes.
    Gen(GenArgs),
    /// Ground one scene and print its scene graph.
    Ground(GroundArgs),
    /// Answer queries against one scene.
    Query(QueryArgs),
    /// Evaluate a directory of scenes and write reports.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub context: Option<String>,
    #[arg(long)]
    pub difficulty: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    /// First seed; scene k uses seed + k. Falls back to GROUNDED_WORLD_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub shelf: bool,
    #[arg(long)]
    pub min_objects: Option<usize>,
    #[arg(long)]
    pub max_objects: Option<usize>,
    #[arg(long)]
    pub depth_sigma: Option<f64>,
    #[arg(long)]
    pub box_jitter_sigma: Option<f64>,
    #[arg(long)]
    pub dropout_fraction: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// full, no-coordinator or no-depth.
    #[arg(long)]
    pub variant: Option<String>,
    /// Serve labels, detections and relations from this HTTP endpoint.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub reach_radius: Option<f64>,
    #[arg(long)]
    pub eps_z: Option<f64>,
    #[arg(long)]
    pub eps_h: Option<f64>,
    #[arg(long)]
    pub eps_depth: Option<f64>,
    #[arg(long)]
    pub eps_support: Option<f64>,
    #[arg(long)]
    pub footprint_overlap_min: Option<f64>,
    #[arg(long)]
    pub inset_fraction: Option<f64>,
    #[arg(long)]
    pub min_valid_samples: Option<usize>,
    #[arg(long)]
    pub mad_k: Option<f64>,
    #[arg(long)]
    pub min_half_extent: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    pub scene: PathBuf,
    /// Lift against a fitted support plane instead of the depth map.
    #[arg(long)]
    pub no_depth: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    pub scene: PathBuf,
    /// One or more queries, answered in order by the same engine.
    #[arg(required = true)]
    pub queries: Vec<String>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of scene files.
    pub scenes: PathBuf,
    /// Output directory for report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Variants to evaluate, repeatable; `all` selects every variant.
    #[arg(long = "variants", value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub distance_threshold: Option<f64>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// Serializable run configuration. Every field has a flag of the same name
/// in kebab case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub context: Context,
    pub difficulty: Difficulty,
    pub count: usize,
    pub out: Option<PathBuf>,
    pub shelf: bool,
    pub min_objects: Option<usize>,
    pub max_objects: Option<usize>,
    pub noise: NoiseConfig,
    pub variant: Mode,
    pub variants: Vec<Mode>,
    pub no_depth: bool,
    pub endpoint: Option<String>,
    pub timeout_s: f64,
    pub jobs: usize,
    pub passes: usize,
    pub distance_threshold: f64,
    pub relation: RelationParams,
    pub lift: LiftConfig,
    pub policy: CoordinatorPolicy,
    pub delays: StageDelays,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bench = BenchParams::default();
        Self {
            seed: None,
            context: Context::Desk,
            difficulty: Difficulty::Tidy,
            count: 1,
            out: None,
            shelf: false,
            min_objects: None,
            max_objects: None,
            noise: NoiseConfig::default(),
            variant: Mode::Full,
            variants: vec![Mode::Full],
            no_depth: false,
            endpoint: None,
            timeout_s: DEFAULT_TIMEOUT_S,
            jobs: 1,
            passes: bench.passes,
            distance_threshold: bench.distance_threshold,
            relation: bench.relation,
            lift: bench.lift,
            policy: bench.policy,
            delays: bench.delays,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    fn apply_pipeline(&mut self, a: &PipelineArgs) -> Result<()> {
        if let Some(v) = &a.variant {
            self.variant = parse_mode(v)?;
        }
        set(&mut self.endpoint, a.endpoint.clone().map(Some));
        set(&mut self.timeout_s, a.timeout_s);
        let r = &mut self.relation;
        set(&mut r.alpha, a.alpha);
        set(&mut r.tau, a.tau);
        set(&mut r.reach_radius, a.reach_radius);
        set(&mut r.eps_z, a.eps_z);
        set(&mut r.eps_h, a.eps_h);
        set(&mut r.eps_depth, a.eps_depth);
        set(&mut r.eps_support, a.eps_support);
        set(&mut r.footprint_overlap_min, a.footprint_overlap_min);
        let l = &mut self.lift;
        set(&mut l.inset_fraction, a.inset_fraction);
        set(&mut l.min_valid_samples, a.min_valid_samples);
        set(&mut l.mad_k, a.mad_k);
        set(&mut l.min_half_extent, a.min_half_extent);
        self.relation.validate().map_err(|e| usage(e.to_string()))?;
        self.lift.validate().map_err(|e| usage(e.to_string()))?;
        Ok(())
    }

    fn bench_params(&self, mode: Mode) -> BenchParams {
        BenchParams {
            relation: self.relation,
            lift: self.lift,
            policy: CoordinatorPolicy { mode, ..self.policy },
            delays: self.delays,
            distance_threshold: self.distance_threshold,
            passes: self.passes,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_mode(s: &str) -> Result<Mode> {
    s.parse::<Mode>().map_err(usage)
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Runs the parsed command and returns the stdout payload.
pub fn run(cli: Cli) -> Result<String> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(a) => cmd_gen(&mut cfg, a),
        Command::Ground(a) => cmd_ground(&mut cfg, a),
        Command::Query(a) => cmd_query(&mut cfg, a),
        Command::Eval(a) => cmd_eval(&mut cfg, a),
    }
}

fn cmd_gen(cfg: &mut RunConfig, a: GenArgs) -> Result<String> {
    if let Some(c) = &a.context {
        cfg.context = c.parse().map_err(|e: BenchError| usage(e.to_string()))?;
    }
    if let Some(d) = &a.difficulty {
        cfg.difficulty = d.parse().map_err(|e: BenchError| usage(e.to_string()))?;
    }
    set(&mut cfg.count, a.count);
    set(&mut cfg.out, a.out.map(Some));
    cfg.shelf |= a.shelf;
    set(&mut cfg.min_objects, a.min_objects.map(Some));
    set(&mut cfg.max_objects, a.max_objects.map(Some));
    set(&mut cfg.noise.depth_sigma, a.depth_sigma);
    set(&mut cfg.noise.box_jitter_sigma, a.box_jitter_sigma);
    set(&mut cfg.noise.dropout_fraction, a.dropout_fraction);
    let seed = match a.seed.or(cfg.seed) {
        Some(s) => s,
        None => env_seed()?.ok_or_else(|| usage(format!("gen needs --seed or {SEED_ENV}")))?,
    };
    if cfg.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let out = cfg.out.clone().ok_or_else(|| usage("gen needs --out"))?;
    let mut template = SceneSpec::new(cfg.context, cfg.difficulty, seed)
        .with_shelf(cfg.shelf)
        .with_noise(cfg.noise);
    let [lo, hi] = template.object_count;
    template.object_count = [cfg.min_objects.unwrap_or(lo), cfg.max_objects.unwrap_or(hi)];
    template.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::with_capacity(cfg.count);
    for k in 0..cfg.count as u64 {
        let spec = SceneSpec {
            seed: seed + k,
            ..template.clone()
        };
        let scene = generate_scene(&spec)?;
        let path = out.join(format!("{}.json", spec.scene_id()));
        save_scene(&scene, &path).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        files.push(path.display().to_string());
    }
    Ok(to_json(&serde_json::json!({ "scenes": files })))
}

/// Tools for one scene: the ground-truth mocks, or a remote endpoint.
enum SceneTools {
    Local(GtTools),
    Remote(RemoteClient),
}

impl SceneTools {
    fn new(cfg: &RunConfig, scene: &BenchmarkScene) -> Result<Self> {
        Ok(match &cfg.endpoint {
            Some(url) => SceneTools::Remote(RemoteClient::new(url.clone(), cfg.timeout_s).map_err(|e| usage(e.to_string()))?),
            None => SceneTools::Local(GtTools::from_scene(scene)),
        })
    }

    fn tools(&self) -> Tools<'_> {
        match self {
            SceneTools::Local(t) => Tools {
                proposer: &t.proposer,
                detector: &t.detector,
                relations: &t.relations,
            },
            SceneTools::Remote(r) => Tools {
                proposer: r,
                detector: r,
                relations: r,
            },
        }
    }
}

fn inputs<'a>(scene: &'a BenchmarkScene, frame_id: &'a str) -> SceneInputs<'a> {
    SceneInputs {
        frame_id,
        depth: &scene.depth,
        intrinsics: &scene.intrinsics,
        pose: &scene.pose,
        user_position: scene.user_position,
        seed: scene.spec.seed,
    }
}

fn engine(cfg: &RunConfig, mode: Mode) -> Engine {
    Engine::new(CoordinatorPolicy { mode, ..cfg.policy }, cfg.relation, cfg.lift, cfg.delays)
}

fn cmd_ground(cfg: &mut RunConfig, a: GroundArgs) -> Result<String> {
    cfg.apply_pipeline(&a.pipeline)?;
    cfg.no_depth |= a.no_depth;
    if cfg.no_depth {
        cfg.variant = Mode::NoDepth;
    }
    let scene = load_scene(&a.scene)?;
    let tools = SceneTools::new(cfg, &scene)?;
    let id = scene.scene_id();
    let mut engine = engine(cfg, cfg.variant);
    let (timings, planar_fallbacks) = engine.ground_scene(&inputs(&scene, &id), &tools.tools())?;
    let graph = engine.world.snapshot();
    Ok(to_json(&serde_json::json!({
        "scene": id,
        "variant": cfg.variant.name(),
        "lifter": if cfg.variant == Mode::NoDepth { "planar" } else { "depth" },
        "planar_fallbacks": planar_fallbacks,
        "timings": timings,
        "graph": graph.data(),
    })))
}

fn cmd_query(cfg: &mut RunConfig, a: QueryArgs) -> Result<String> {
    cfg.apply_pipeline(&a.pipeline)?;
    let parsed = a
        .queries
        .iter()
        .map(|q| grounded_world::query::parse_query(q).map_err(|e| usage(format!("query '{q}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let scene = load_scene(&a.scene)?;
    let tools = SceneTools::new(cfg, &scene)?;
    let id = scene.scene_id();
    let mut engine = engine(cfg, cfg.variant);
    let mut results = Vec::new();
    for (text, q) in a.queries.iter().zip(&parsed) {
        let outcome = engine.run_query(q, &inputs(&scene, &id), &tools.tools())?;
        results.push(serde_json::json!({
            "query": text,
            "answer": outcome.answer,
            "timings": outcome.timings,
            "from_cache": outcome.from_cache,
            "planar_fallbacks": outcome.planar_fallbacks,
        }));
    }
    Ok(to_json(&serde_json::json!({
        "scene": id,
        "variant": cfg.variant.name(),
        "results": results,
    })))
}

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| usage(format!("scene directory {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("no scene files in {}", dir.display())));
    }
    Ok(files)
}

fn cmd_eval(cfg: &mut RunConfig, a: EvalArgs) -> Result<String> {
    cfg.apply_pipeline(&a.pipeline)?;
    if !a.variants.is_empty() {
        let mut modes = Vec::new();
        for v in &a.variants {
            if v == "all" {
                modes.extend(Mode::ALL);
            } else {
                modes.push(parse_mode(v)?);
            }
        }
        cfg.variants = modes;
    } else if a.pipeline.variant.is_some() {
        cfg.variants = vec![cfg.variant];
    }
    cfg.variants.dedup();
    set(&mut cfg.jobs, a.jobs);
    set(&mut cfg.passes, a.passes);
    set(&mut cfg.distance_threshold, a.distance_threshold);
    set(&mut cfg.out, a.out.map(Some));
    if cfg.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    if cfg.variants.is_empty() {
        return Err(usage("no variants selected"));
    }
    let out = cfg.out.clone().ok_or_else(|| usage("eval needs --out"))?;
    let scenes = scene_files(&a.scenes)?
        .iter()
        .map(|p| load_scene(p))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building thread pool")?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for &mode in &cfg.variants {
        let params = cfg.bench_params(mode);
        let evals: Vec<SceneEval> = pool.install(|| {
            scenes
                .par_iter()
                .map(|s| {
                    let tools = SceneTools::new(cfg, s)?;
                    Ok(evaluate_scene_with(s, &params, &tools.tools())?)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let report = aggregate(&evals, mode);
        let json = out.join(format!("report-{}.json", mode.name()));
        let table = out.join(format!("report-{}.txt", mode.name()));
        fs::write(&json, report.to_json()).with_context(|| format!("writing {}", json.display()))?;
        fs::write(&table, report.to_table()).with_context(|| format!("writing {}", table.display()))?;
        eprintln!("{}: {} scenes, wrote {}", mode.name(), report.scene_count, json.display());
        written.push(serde_json::json!({
            "variant": mode.name(),
            "json": json.display().to_string(),
            "table": table.display().to_string(),
        }));
    }
    Ok(to_json(&serde_json::json!({ "scenes": scenes.len(), "reports": written })))
}
