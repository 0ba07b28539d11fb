//! Seeded synthetic benchmark scenes: layout generation, analytic depth
//! rendering, ground-truth relations and queries, and the JSON scene format.

mod format;
mod generate;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Box2, Box3, CameraIntrinsics, DepthFrame, GeometryError, PoseSE3, Vec3};
use crate::graph::{NodeId, RelationEdge, RelationType};

pub use format::{load_scene, save_scene, scene_from_json, scene_to_json, SCENE_FORMAT_VERSION};
pub use generate::{generate_scene, generate_scene_with_stats, observe_samples, GenerationStats, LayoutMargins};
pub(crate) use render::Stream;
pub use render::{cast_scene_ray, project_gt_box, render_depth, RenderObject, FLOOR_HEIGHT};

/// Maximum number of placement attempts before generation gives up.
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("scene format error: {0}")]
    Format(String),
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Context {
    Industrial,
    Assistive,
    Desk,
}

impl Context {
    pub const ALL: [Context; 3] = [Context::Industrial, Context::Assistive, Context::Desk];

    pub fn name(self) -> &'static str {
        match self {
            Context::Industrial => "industrial",
            Context::Assistive => "assistive",
            Context::Desk => "desk",
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Context {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Context::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BenchError::InvalidSpec(format!("unknown context '{s}' (industrial, assistive, desk)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Tidy,
    Cluttered,
}

impl Difficulty {
    pub const ALL: [Difficulty; 2] = [Difficulty::Tidy, Difficulty::Cluttered];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Tidy => "tidy",
            Difficulty::Cluttered => "cluttered",
        }
    }

    /// Default inclusive range of catalog objects.
    pub fn default_count(self) -> [usize; 2] {
        match self {
            Difficulty::Tidy => [3, 6],
            Difficulty::Cluttered => [8, 16],
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Difficulty {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| BenchError::InvalidSpec(format!("unknown difficulty '{s}' (tidy, cluttered)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub depth_sigma: f64,
    pub box_jitter_sigma: f64,
    pub dropout_fraction: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.depth_sigma >= 0.0 && self.depth_sigma.is_finite())
            || !(self.box_jitter_sigma >= 0.0 && self.box_jitter_sigma.is_finite())
            || !(0.0..=1.0).contains(&self.dropout_fraction)
        {
            return Err(BenchError::InvalidSpec(format!("invalid noise config {self:?}")));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.depth_sigma == 0.0 && self.box_jitter_sigma == 0.0 && self.dropout_fraction == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub context: Context,
    pub difficulty: Difficulty,
    pub seed: u64,
    /// Inclusive range of catalog objects (support surfaces excluded).
    pub object_count: [usize; 2],
    /// Adds a wall shelf above the work surface holding elevated objects.
    #[serde(default)]
    pub shelf: bool,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl SceneSpec {
    pub fn new(context: Context, difficulty: Difficulty, seed: u64) -> Self {
        Self {
            context,
            difficulty,
            seed,
            object_count: difficulty.default_count(),
            shelf: false,
            noise: NoiseConfig::default(),
        }
    }

    pub fn with_shelf(mut self, shelf: bool) -> Self {
        self.shelf = shelf;
        self
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let [lo, hi] = self.object_count;
        if lo < 1 || lo > hi {
            return Err(BenchError::InvalidSpec(format!("object_count {:?} must satisfy 1 <= min <= max", self.object_count)));
        }
        if hi > 24 {
            return Err(BenchError::InvalidSpec(format!("object_count max {hi} exceeds 24")));
        }
        self.noise.validate()
    }

    /// Stable scene name used for file names and frame handles.
    pub fn scene_id(&self) -> String {
        format!(
            "{}-{}{}-{:06}",
            self.context,
            self.difficulty,
            if self.shelf { "-shelf" } else { "" },
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtObject {
    pub id: NodeId,
    pub label: String,
    pub center: Vec3,
    pub half_extents: Vec3,
    #[serde(with = "crate::lifting::box2_array")]
    pub box2: Box2,
    /// Id of the surface this object rests on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_of: Option<NodeId>,
}

impl GtObject {
    pub fn box3(&self) -> Box3 {
        Box3 {
            center: self.center,
            half_extents: self.half_extents,
        }
    }

    pub fn is_surface(&self) -> bool {
        self.support_of.is_none()
    }
}

/// Declarative semantic rule: objects labeled `src_label` relate to objects
/// labeled `dst_label` with `relation` at `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationRule {
    pub src_label: String,
    pub dst_label: String,
    #[serde(rename = "rel")]
    pub relation: RelationType,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExpectedAnswer {
    Objects { ids: Vec<NodeId> },
    Distance { meters: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchQuery {
    pub text: String,
    pub expected: ExpectedAnswer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScene {
    pub spec: SceneSpec,
    pub intrinsics: CameraIntrinsics,
    pub pose: PoseSE3,
    pub depth: DepthFrame,
    pub user_position: Vec3,
    pub objects: Vec<GtObject>,
    pub edges: Vec<RelationEdge>,
    pub rules: Vec<RelationRule>,
    pub queries: Vec<BenchQuery>,
}

impl BenchmarkScene {
    pub fn scene_id(&self) -> String {
        self.spec.scene_id()
    }

    pub fn object(&self, id: NodeId) -> Option<&GtObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn render_objects(&self) -> Vec<RenderObject> {
        self.objects
            .iter()
            .map(|o| RenderObject {
                id: o.id,
                bbox: o.box3(),
            })
            .collect()
    }

    /// Distinct labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for o in &self.objects {
            if !out.iter().any(|l| l == &o.label) {
                out.push(o.label.clone());
            }
        }
        out
    }

    /// Catalog objects resting more than `height` above the main work surface.
    pub fn elevated_objects(&self, height: f64) -> Vec<&GtObject> {
        let work_top = self
            .objects
            .iter()
            .filter(|o| o.is_surface())
            .map(|o| o.box3().max().y)
            .fold(f64::INFINITY, f64::min);
        self.objects
            .iter()
            .filter(|o| !o.is_surface() && o.box3().min().y >= work_top + height)
            .collect()
    }

    /// Checks internal consistency of the ground truth.
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Format(m));
        self.spec.validate()?;
        self.intrinsics.validate()?;
        self.pose.validate()?;
        if self.depth.width() != self.intrinsics.width || self.depth.height() != self.intrinsics.height {
            return bad("depth size differs from intrinsics".into());
        }
        let mut ids: Vec<NodeId> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate object id".into());
        }
        for o in &self.objects {
            o.box3().validate()?;
            if o.box3().min().y < FLOOR_HEIGHT - 1e-9 {
                return bad(format!("object {} extends below the floor", o.id));
            }
            if let Some(s) = o.support_of {
                if self.object(s).is_none() {
                    return bad(format!("object {} rests on unknown object {s}", o.id));
                }
            }
        }
        for e in &self.edges {
            if self.object(e.src).is_none() || self.object(e.dst).is_none() || e.src == e.dst {
                return bad(format!("edge {}->{} has invalid endpoints", e.src, e.dst));
            }
        }
        for q in &self.queries {
            if let ExpectedAnswer::Objects { ids } = &q.expected {
                if ids.iter().any(|id| self.object(*id).is_none()) {
                    return bad(format!("query '{}' expects unknown object", q.text));
                }
            }
        }
        Ok(())
    }
}
