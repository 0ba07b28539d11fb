//! Seeded scene layout, ground-truth relations and query authoring.
//!
//! Layouts are built object by object. Every candidate placement is checked
//! for visibility of its sample rays and for robustness of every spatial
//! predicate: each predicate must clear its threshold by a margin, both on
//! the ground-truth geometry and on the noiseless observation a depth lifter
//! would make of the same layout, and the two must agree.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::render::{cast_scene_ray, project_box_hull, stream_rng, Stream, Surface};
use super::{
    project_gt_box, render_depth, BenchError, BenchQuery, BenchmarkScene, Context, Difficulty, ExpectedAnswer,
    GtObject, RelationRule, RenderObject, SceneSpec, MAX_ATTEMPTS,
};
use crate::geometry::{backproject, forward_depth, pixel_to_ray, Box2, Box3, CameraIntrinsics, PoseSE3, Vec3};
use crate::graph::{NodeId, ObjectNode, RelationType, SceneGraph};
use crate::lifting::{aggregate_samples, sample_pixels, snap_to_pixel, LiftConfig, LiftResult};
use crate::query::quote_label;
use crate::relations::{forward_depth_from, infer_relations, RelationParams};
use crate::semantic::expand_rules;

const IMAGE_WIDTH: u32 = 320;
const IMAGE_HEIGHT: u32 = 240;
/// Minimum horizontal gap between object footprints.
const FOOTPRINT_GAP: f64 = 0.015;
/// Samples of a catalog object that must land on the object itself.
const MIN_SELF_HITS: usize = 5;
/// Pixel border that catalog objects keep from the frame edge.
const FRAME_BORDER: f64 = 2.0;
const TRIES_PER_OBJECT: usize = 120;
/// Objects stay within this lateral distance of their surface center.
const PLACEMENT_HALF_WIDTH: f64 = 0.6;
const MAX_QUERIES_PER_KIND: usize = 3;

/// Slack each spatial predicate must keep from its decision threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutMargins {
    pub vertical: f64,
    pub horizontal: f64,
    pub overlap: f64,
    pub distance: f64,
    pub depth: f64,
    pub reach: f64,
    pub blocking: f64,
    pub closest: f64,
    pub identity: f64,
    pub measure: f64,
}

impl Default for LayoutMargins {
    fn default() -> Self {
        Self {
            vertical: 0.006,
            horizontal: 0.006,
            overlap: 0.03,
            distance: 0.006,
            depth: 0.006,
            reach: 0.006,
            blocking: 0.006,
            closest: 0.008,
            identity: 0.03,
            measure: 0.02,
        }
    }
}

/// Counters describing how much searching a layout took.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationStats {
    pub attempts: usize,
    pub restarts: usize,
    pub rejections: BTreeMap<&'static str, usize>,
}

struct CatalogItem {
    label: &'static str,
    half: [[f64; 2]; 3],
}

const fn item(label: &'static str, x: [f64; 2], y: [f64; 2], z: [f64; 2]) -> CatalogItem {
    CatalogItem { label, half: [x, y, z] }
}

const DESK_ITEMS: &[CatalogItem] = &[
    item("mug", [0.04, 0.045], [0.045, 0.055], [0.04, 0.045]),
    item("laptop", [0.13, 0.15], [0.035, 0.04], [0.09, 0.11]),
    item("book", [0.07, 0.09], [0.035, 0.045], [0.1, 0.12]),
    item("lamp", [0.05, 0.06], [0.07, 0.08], [0.05, 0.06]),
    item("pen cup", [0.035, 0.04], [0.05, 0.06], [0.035, 0.04]),
    item("speaker", [0.04, 0.05], [0.06, 0.08], [0.04, 0.05]),
    item("bottle", [0.035, 0.04], [0.07, 0.08], [0.035, 0.04]),
    item("plant", [0.05, 0.06], [0.06, 0.08], [0.05, 0.06]),
    item("headphones", [0.07, 0.08], [0.04, 0.05], [0.06, 0.07]),
    item("charger", [0.035, 0.045], [0.035, 0.04], [0.035, 0.045]),
    item("stapler", [0.03, 0.035], [0.035, 0.04], [0.07, 0.08]),
    item("clock", [0.05, 0.06], [0.05, 0.06], [0.035, 0.04]),
];

const INDUSTRIAL_ITEMS: &[CatalogItem] = &[
    item("drill", [0.04, 0.05], [0.07, 0.08], [0.07, 0.09]),
    item("toolbox", [0.09, 0.11], [0.06, 0.075], [0.06, 0.07]),
    item("multimeter", [0.045, 0.05], [0.035, 0.04], [0.08, 0.09]),
    item("tape measure", [0.035, 0.04], [0.035, 0.04], [0.035, 0.04]),
    item("parts bin", [0.06, 0.075], [0.045, 0.055], [0.05, 0.06]),
    item("glue gun", [0.03, 0.035], [0.06, 0.07], [0.08, 0.09]),
    item("solder station", [0.06, 0.07], [0.05, 0.06], [0.05, 0.06]),
    item("oil can", [0.035, 0.04], [0.07, 0.08], [0.035, 0.04]),
    item("screw box", [0.06, 0.07], [0.035, 0.04], [0.045, 0.05]),
    item("caliper case", [0.08, 0.09], [0.035, 0.04], [0.035, 0.04]),
    item("work light", [0.05, 0.06], [0.07, 0.08], [0.04, 0.05]),
];

const ASSISTIVE_ITEMS: &[CatalogItem] = &[
    item("pill bottle", [0.03, 0.035], [0.045, 0.055], [0.03, 0.035]),
    item("cup", [0.04, 0.045], [0.045, 0.05], [0.04, 0.045]),
    item("remote", [0.03, 0.035], [0.035, 0.04], [0.08, 0.09]),
    item("glasses case", [0.08, 0.09], [0.035, 0.04], [0.035, 0.04]),
    item("tissue box", [0.1, 0.11], [0.05, 0.06], [0.055, 0.06]),
    item("water bottle", [0.035, 0.04], [0.07, 0.08], [0.035, 0.04]),
    item("medicine box", [0.06, 0.07], [0.04, 0.05], [0.05, 0.06]),
    item("phone stand", [0.045, 0.05], [0.06, 0.07], [0.045, 0.05]),
    item("radio", [0.09, 0.1], [0.06, 0.07], [0.05, 0.06]),
    item("reading lamp", [0.05, 0.06], [0.07, 0.08], [0.05, 0.06]),
    item("kettle", [0.07, 0.08], [0.07, 0.08], [0.06, 0.07]),
];

fn catalog(context: Context) -> (&'static str, &'static [CatalogItem]) {
    match context {
        Context::Desk => ("desk", DESK_ITEMS),
        Context::Industrial => ("workbench", INDUSTRIAL_ITEMS),
        Context::Assistive => ("table", ASSISTIVE_ITEMS),
    }
}

fn rule_table(context: Context) -> Vec<RelationRule> {
    let rule = |a: &str, b: &str, relation: RelationType, score: f64| RelationRule {
        src_label: a.into(),
        dst_label: b.into(),
        relation,
        score,
    };
    use RelationType::*;
    match context {
        Context::Desk => vec![
            rule("charger", "laptop", Functional, 0.9),
            rule("headphones", "laptop", Interaction, 0.95),
            rule("mug", "bottle", Semantic, 0.9),
            rule("lamp", "book", Functional, 0.92),
            rule("pen cup", "stapler", Semantic, 0.9),
            rule("speaker", "laptop", Dependence, 0.9),
            rule("clock", "desk", Referential, 0.9),
        ],
        Context::Industrial => vec![
            rule("multimeter", "solder station", Sequential, 0.9),
            rule("glue gun", "parts bin", Functional, 0.9),
            rule("drill", "screw box", Dependence, 0.92),
            rule("tape measure", "toolbox", Structural, 0.95),
            rule("oil can", "drill", Causal, 0.9),
            rule("work light", "workbench", Functional, 0.9),
        ],
        Context::Assistive => vec![
            rule("pill bottle", "water bottle", Sequential, 0.95),
            rule("remote", "radio", Interaction, 0.92),
            rule("glasses case", "reading lamp", Functional, 0.9),
            rule("medicine box", "pill bottle", Structural, 0.9),
            rule("kettle", "cup", Causal, 0.9),
        ],
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

#[derive(Debug, Clone)]
struct Placed {
    id: NodeId,
    label: String,
    bbox: Box3,
    support: Option<NodeId>,
}

/// One representation of the layout: anchors and volumes per object.
struct Rep {
    anchors: Vec<Vec3>,
    boxes: Vec<Box3>,
}

/// Per-sample first hits for `bbox` seen through the noiseless pipeline.
pub fn observe_samples(
    bbox2: &Box2,
    objects: &[RenderObject],
    intrinsics: &CameraIntrinsics,
    pose: &PoseSE3,
    cfg: &LiftConfig,
) -> Vec<(Option<NodeId>, f64, Vec3)> {
    let mut out = Vec::with_capacity(9);
    for px in sample_pixels(bbox2, cfg.inset_fraction) {
        let snapped = snap_to_pixel(px);
        let Ok(ray) = pixel_to_ray(snapped, intrinsics, pose) else {
            continue;
        };
        if let Some((t, surface)) = cast_scene_ray(&ray, objects) {
            let z = forward_depth(ray.at(t), pose) as f32 as f64;
            if z > 0.0 {
                let p = backproject(snapped, z, intrinsics, pose).expect("positive depth");
                let owner = match surface {
                    Surface::Object(id) => Some(id),
                    Surface::Floor => None,
                };
                out.push((owner, z, p));
            }
        }
    }
    out
}

struct Checker<'a> {
    intrinsics: &'a CameraIntrinsics,
    pose: &'a PoseSE3,
    user: Vec3,
    view_forward: Vec3,
    params: RelationParams,
    margins: LayoutMargins,
    lift: LiftConfig,
}

impl Checker<'_> {
    fn observe(&self, placed: &[Placed]) -> Result<Rep, &'static str> {
        let render: Vec<RenderObject> = placed.iter().map(|p| RenderObject { id: p.id, bbox: p.bbox }).collect();
        let mut anchors = Vec::with_capacity(placed.len());
        let mut boxes = Vec::with_capacity(placed.len());
        for p in placed {
            let b2 = project_gt_box(&p.bbox, self.intrinsics, self.pose).ok_or("object not in view")?;
            let samples = observe_samples(&b2, &render, self.intrinsics, self.pose, &self.lift);
            if samples.len() < 9 {
                return Err("sample ray escapes");
            }
            let own = samples.iter().filter(|s| s.0 == Some(p.id)).count();
            match p.support {
                None => {
                    if own < MIN_SELF_HITS {
                        return Err("surface samples obstructed");
                    }
                }
                Some(s) => {
                    if own < MIN_SELF_HITS {
                        return Err("too few samples on object");
                    }
                    if samples.iter().any(|x| x.0.is_some_and(|o| o != p.id && o != s)) {
                        return Err("sample occluded by another object");
                    }
                }
            }
            let pts: Vec<(f64, Vec3)> = samples.iter().map(|s| (s.1, s.2)).collect();
            let LiftResult { anchor, volume, .. } =
                aggregate_samples(&pts, &self.lift, true).map_err(|_| "lift would fail")?;
            anchors.push(anchor);
            boxes.push(volume);
        }
        Ok(Rep { anchors, boxes })
    }

    fn robust(v: f64) -> Option<bool> {
        (v.abs() >= 1.0).then_some(v > 0.0)
    }

    fn on(&self, rep: &Rep, i: usize, j: usize) -> Option<bool> {
        let (bi, bj) = (&rep.boxes[i], &rep.boxes[j]);
        let p = &self.params;
        let m = &self.margins;
        let gap = bi.min().y - bj.max().y;
        let h = rep.anchors[i].horizontal_distance(rep.anchors[j]);
        let ratio = bi.footprint_overlap(bj, p.eps_support) / bi.footprint_area();
        let v = ((p.eps_z - gap.abs()) / m.vertical)
            .min((p.eps_h - h) / m.horizontal)
            .min((ratio - p.footprint_overlap_min) / m.overlap);
        Self::robust(v)
    }

    fn blocking(&self, rep: &Rep, i: usize, j: usize) -> Option<bool> {
        let b = rep.boxes[i];
        let m = self.margins.blocking;
        let grown = Box3 {
            center: b.center,
            half_extents: b.half_extents + Vec3::new(m, m, m),
        };
        let h = b.half_extents;
        let shrunk = Box3 {
            center: b.center,
            half_extents: Vec3::new((h.x - m).max(1e-3), (h.y - m).max(1e-3), (h.z - m).max(1e-3)),
        };
        let a = grown.intersects_open_segment(self.user, rep.anchors[j]);
        let c = shrunk.intersects_open_segment(self.user, rep.anchors[j]);
        (a == c).then_some(a)
    }

    /// Nearest object to `j`, provided the runner-up is clearly farther.
    fn closest(&self, rep: &Rep, j: usize) -> Option<Option<usize>> {
        let mut d: Vec<(f64, usize)> = (0..rep.anchors.len())
            .filter(|k| *k != j)
            .map(|k| (rep.anchors[k].distance(rep.anchors[j]), k))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        match d.as_slice() {
            [] => Some(None),
            [only] => Some(Some(only.1)),
            [a, b, ..] => (b.0 - a.0 >= self.margins.closest).then_some(Some(a.1)),
        }
    }

    fn spatial(&self, rep: &Rep, i: usize, j: usize, closest_j: Option<usize>) -> Result<[bool; 7], &'static str> {
        let p = &self.params;
        let m = &self.margins;
        let on = self.on(rep, i, j).ok_or("ambiguous on")?;
        let under = self.on(rep, j, i).ok_or("ambiguous on")?;
        let next_to = if on || under {
            false
        } else {
            Self::robust((p.eps_h - rep.anchors[i].distance(rep.anchors[j])) / m.distance).ok_or("ambiguous next-to")?
        };
        let fd = |k: usize| forward_depth_from(self.user, self.view_forward, rep.anchors[k]);
        let behind = Self::robust((fd(i) - fd(j) - p.eps_depth) / m.depth).ok_or("ambiguous behind")?;
        let reach = Self::robust((p.reach_radius - rep.anchors[i].distance(self.user)) / m.reach).ok_or("ambiguous reach")?;
        let blocking = self.blocking(rep, i, j).ok_or("ambiguous blocking")?;
        Ok([on, under, next_to, behind, reach, closest_j == Some(i), blocking])
    }

    fn check(&self, placed: &[Placed]) -> Result<Rep, &'static str> {
        let gt = Rep {
            anchors: placed.iter().map(|p| p.bbox.center).collect(),
            boxes: placed.iter().map(|p| p.bbox).collect(),
        };
        let obs = self.observe(placed)?;
        let n = placed.len();
        for j in 0..n {
            let cg = self.closest(&gt, j).ok_or("ambiguous closest")?;
            let co = self.closest(&obs, j).ok_or("ambiguous closest")?;
            if cg != co {
                return Err("closest differs");
            }
            for i in 0..n {
                if i == j {
                    continue;
                }
                if self.spatial(&gt, i, j, cg)? != self.spatial(&obs, i, j, co)? {
                    return Err("relation differs");
                }
            }
        }
        // Same-label objects must stay unambiguous under nearest-anchor matching.
        for a in 0..n {
            for b in 0..n {
                if a != b && placed[a].label == placed[b].label {
                    let right = obs.anchors[a].distance(gt.anchors[a]).max(obs.anchors[b].distance(gt.anchors[b]));
                    let wrong = obs.anchors[a].distance(gt.anchors[b]);
                    if wrong < right + self.margins.identity {
                        return Err("identity ambiguous");
                    }
                }
            }
        }
        Ok(obs)
    }
}

fn in_frame(bbox: &Box3, k: &CameraIntrinsics, pose: &PoseSE3) -> bool {
    match project_box_hull(bbox, k, pose) {
        Some(b) => {
            b.x_min >= FRAME_BORDER
                && b.y_min >= FRAME_BORDER
                && b.x_max <= (k.width - 1) as f64 - FRAME_BORDER
                && b.y_max <= (k.height - 1) as f64 - FRAME_BORDER
                && bbox.corners().iter().all(|c| forward_depth(*c, pose) > 0.05)
        }
        None => false,
    }
}

fn footprints_clear(a: &Box3, b: &Box3) -> bool {
    let d = a.center - b.center;
    let s = a.half_extents + b.half_extents;
    d.x.abs() >= s.x + FOOTPRINT_GAP || d.z.abs() >= s.z + FOOTPRINT_GAP
}

struct Stage {
    intrinsics: CameraIntrinsics,
    pose: PoseSE3,
    surfaces: Vec<Placed>,
}

fn sample_stage(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Stage, BenchError> {
    let (surface_label, _) = catalog(spec.context);
    let f = uniform(rng, [175.0, 190.0]);
    let intrinsics = CameraIntrinsics::new(
        f,
        f,
        (IMAGE_WIDTH as f64 - 1.0) / 2.0,
        (IMAGE_HEIGHT as f64 - 1.0) / 2.0,
        IMAGE_WIDTH,
        IMAGE_HEIGHT,
    )?;
    let top = uniform(rng, [0.72, 0.78]);
    let half = Vec3::new(uniform(rng, [0.7, 0.8]), 0.025, uniform(rng, [0.3, 0.36]));
    let desk = Placed {
        id: 0,
        label: surface_label.to_string(),
        bbox: Box3::new(Vec3::new(0.0, top - half.y, 0.0), half)?,
        support: None,
    };
    let mut surfaces = vec![desk];
    let eye_height = uniform(rng, [0.8, 0.95]);
    let back = uniform(rng, [0.2, 0.3]);
    let eye = Vec3::new(uniform(rng, [-0.06, 0.06]), top + eye_height, -half.z - back);
    let target = if spec.shelf {
        let sh = Vec3::new(uniform(rng, [0.28, 0.36]), 0.015, uniform(rng, [0.1, 0.12]));
        let shelf_top = top + uniform(rng, [0.24, 0.3]);
        let center = Vec3::new(uniform(rng, [-0.1, 0.1]), shelf_top - sh.y, half.z + sh.z + uniform(rng, [0.02, 0.05]));
        surfaces.push(Placed {
            id: 1,
            label: "shelf".into(),
            bbox: Box3::new(center, sh)?,
            support: None,
        });
        Vec3::new(uniform(rng, [-0.04, 0.04]), top + uniform(rng, [0.1, 0.14]), uniform(rng, [0.1, 0.16]))
    } else {
        Vec3::new(uniform(rng, [-0.04, 0.04]), top, uniform(rng, [-0.04, 0.06]))
    };
    let pose = PoseSE3::look_at(eye, target)?;
    Ok(Stage {
        intrinsics,
        pose,
        surfaces,
    })
}

fn choose_item<'a>(
    items: &'a [CatalogItem],
    placed: &[Placed],
    difficulty: Difficulty,
    rng: &mut ChaCha8Rng,
) -> &'a CatalogItem {
    let count = |label: &str| placed.iter().filter(|p| p.label == label).count();
    let limit = match difficulty {
        Difficulty::Tidy => 1,
        Difficulty::Cluttered => 2,
    };
    let open: Vec<&CatalogItem> = items.iter().filter(|it| count(it.label) < limit).collect();
    open.choose(rng).copied().unwrap_or(&items[0])
}

fn place_on(surface: &Placed, item: &CatalogItem, rng: &mut ChaCha8Rng) -> Option<Box3> {
    let h = Vec3::new(uniform(rng, item.half[0]), uniform(rng, item.half[1]), uniform(rng, item.half[2]));
    let s = surface.bbox;
    let room_x = s.half_extents.x.min(PLACEMENT_HALF_WIDTH) - h.x - 0.01;
    let room_z = s.half_extents.z - h.z - 0.01;
    if room_x <= 0.0 || room_z <= 0.0 {
        return None;
    }
    let x = s.center.x + rng.random_range(-room_x..room_x);
    let z = s.center.z + rng.random_range(-room_z..room_z);
    Box3::new(Vec3::new(x, s.max().y + h.y, z), h).ok()
}

fn reject(stats: &mut GenerationStats, reason: &'static str) {
    *stats.rejections.entry(reason).or_default() += 1;
}

/// Generates a scene; see [`generate_scene_with_stats`].
pub fn generate_scene(spec: &SceneSpec) -> Result<BenchmarkScene, BenchError> {
    generate_scene_with_stats(spec).map(|(s, _)| s)
}

/// Generates a deterministic scene for `spec` together with search counters.
pub fn generate_scene_with_stats(spec: &SceneSpec) -> Result<(BenchmarkScene, GenerationStats), BenchError> {
    spec.validate()?;
    let params = RelationParams::default();
    let lift = LiftConfig::default();
    let (_, items) = catalog(spec.context);
    let rules = rule_table(spec.context);
    let mut rng = stream_rng(spec.seed, Stream::Layout);
    let mut stats = GenerationStats::default();

    'layout: loop {
        if stats.attempts >= MAX_ATTEMPTS {
            let mut counts: Vec<(&str, usize)> = stats.rejections.iter().map(|(k, v)| (*k, *v)).collect();
            counts.sort_by(|a, b| b.1.cmp(&a.1));
            let top: Vec<String> = counts.iter().take(3).map(|(k, v)| format!("{k} ({v})")).collect();
            return Err(BenchError::GenerationFailed {
                attempts: stats.attempts,
                reason: format!("{} layout restarts; most frequent rejections: {}", stats.restarts, top.join(", ")),
            });
        }
        let stage = sample_stage(spec, &mut rng)?;
        let checker = Checker {
            intrinsics: &stage.intrinsics,
            pose: &stage.pose,
            user: stage.pose.translation,
            view_forward: stage.pose.horizontal_forward(),
            params,
            margins: LayoutMargins::default(),
            lift,
        };
        let mut placed = stage.surfaces.clone();
        stats.attempts += 1;
        if let Err(r) = checker.check(&placed) {
            reject(&mut stats, r);
            stats.restarts += 1;
            continue;
        }
        let [lo, hi] = spec.object_count;
        let n = rng.random_range(lo..=hi);
        let on_shelf = if spec.shelf { rng.random_range(1..=2usize).min(n) } else { 0 };
        let surfaces = placed.len();
        while placed.len() - surfaces < n {
            let k = placed.len() - surfaces;
            let surface = if k < on_shelf { stage.surfaces[1].clone() } else { stage.surfaces[0].clone() };
            let mut done = false;
            for _ in 0..TRIES_PER_OBJECT {
                stats.attempts += 1;
                if stats.attempts >= MAX_ATTEMPTS {
                    continue 'layout;
                }
                let it = choose_item(items, &placed, spec.difficulty, &mut rng);
                let Some(bbox) = place_on(&surface, it, &mut rng) else {
                    reject(&mut stats, "no room on surface");
                    continue;
                };
                if !in_frame(&bbox, &stage.intrinsics, &stage.pose) {
                    reject(&mut stats, "out of frame");
                    continue;
                }
                if placed
                    .iter()
                    .any(|p| p.support.is_some() && p.support == Some(surface.id) && !footprints_clear(&p.bbox, &bbox))
                {
                    reject(&mut stats, "footprint collision");
                    continue;
                }
                if placed.iter().any(|p| p.bbox.intersects(&bbox) && p.id != surface.id) {
                    reject(&mut stats, "interpenetration");
                    continue;
                }
                placed.push(Placed {
                    id: placed.len() as NodeId,
                    label: it.label.to_string(),
                    bbox,
                    support: Some(surface.id),
                });
                match checker.check(&placed) {
                    Ok(_) => {
                        done = true;
                        break;
                    }
                    Err(r) => {
                        reject(&mut stats, r);
                        placed.pop();
                    }
                }
            }
            if !done {
                stats.restarts += 1;
                continue 'layout;
            }
        }
        let obs = checker.check(&placed).expect("accepted layout");
        let scene = finish_scene(spec, &stage, &placed, &obs, rules, &params)?;
        return Ok((scene, stats));
    }
}

fn gt_graph(placed: &[Placed], user: Vec3, anchors: &[Vec3], boxes: &[Box3]) -> SceneGraph {
    let mut g = SceneGraph::new(user);
    for (k, p) in placed.iter().enumerate() {
        g.upsert_node(ObjectNode {
            id: p.id,
            label: p.label.clone(),
            confidence: 1.0,
            anchor: anchors[k],
            volume: boxes[k],
            last_seen: 0.0,
        })
        .expect("valid ground-truth node");
    }
    g
}

fn finish_scene(
    spec: &SceneSpec,
    stage: &Stage,
    placed: &[Placed],
    obs: &Rep,
    rules: Vec<RelationRule>,
    params: &RelationParams,
) -> Result<BenchmarkScene, BenchError> {
    let user = stage.pose.translation;
    let view_forward = stage.pose.horizontal_forward();
    let centers: Vec<Vec3> = placed.iter().map(|p| p.bbox.center).collect();
    let boxes: Vec<Box3> = placed.iter().map(|p| p.bbox).collect();
    let graph = gt_graph(placed, user, &centers, &boxes);
    let proposals = expand_rules(&rules, &graph);
    let edges = infer_relations(&graph, &proposals, params, view_forward).expect("ground-truth relations");
    let objects: Vec<GtObject> = placed
        .iter()
        .map(|p| GtObject {
            id: p.id,
            label: p.label.clone(),
            center: p.bbox.center,
            half_extents: p.bbox.half_extents,
            box2: project_gt_box(&p.bbox, &stage.intrinsics, &stage.pose).expect("visible object"),
            support_of: p.support,
        })
        .collect();
    let render: Vec<RenderObject> = placed.iter().map(|p| RenderObject { id: p.id, bbox: p.bbox }).collect();
    let depth = render_depth(&render, &stage.intrinsics, &stage.pose, &spec.noise, spec.seed);
    let obs_graph = gt_graph(placed, user, &obs.anchors, &obs.boxes);
    let mut qrng = stream_rng(spec.seed, Stream::Queries);
    let queries = author_queries(&objects, &edges, &graph, &obs_graph, &mut qrng);
    let scene = BenchmarkScene {
        spec: spec.clone(),
        intrinsics: stage.intrinsics,
        pose: stage.pose,
        depth,
        user_position: user,
        objects,
        edges,
        rules,
        queries,
    };
    scene.validate()?;
    Ok(scene)
}

fn pick<T: Clone>(mut v: Vec<T>, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut out = Vec::new();
    while !v.is_empty() && out.len() < MAX_QUERIES_PER_KIND {
        let k = rng.random_range(0..v.len());
        out.push(v.remove(k));
    }
    out
}

fn author_queries(
    objects: &[GtObject],
    edges: &[crate::graph::RelationEdge],
    gt: &SceneGraph,
    obs: &SceneGraph,
    rng: &mut ChaCha8Rng,
) -> Vec<BenchQuery> {
    let margins = LayoutMargins::default();
    let count = |label: &str| objects.iter().filter(|o| o.label == label).count();
    let unique: Vec<&GtObject> = objects.iter().filter(|o| count(&o.label) == 1).collect();
    let gt_anchor = |id: NodeId| gt.node(id).expect("gt node").anchor;
    let obs_anchor = |id: NodeId| obs.node(id).expect("obs node").anchor;
    let objects_answer = |mut ids: Vec<NodeId>| {
        ids.sort_unstable();
        ExpectedAnswer::Objects { ids }
    };
    let mut queries = Vec::new();

    let locate: Vec<BenchQuery> = unique
        .iter()
        .map(|o| BenchQuery {
            text: format!("LOCATE {}", quote_label(&o.label)),
            expected: objects_answer(vec![o.id]),
        })
        .collect();
    queries.extend(pick(locate, rng));

    let mut relate = Vec::new();
    for a in &unique {
        for r in RelationType::ALL {
            let ids: Vec<NodeId> = edges.iter().filter(|e| e.dst == a.id && e.relation == r).map(|e| e.src).collect();
            if !ids.is_empty() {
                relate.push(BenchQuery {
                    text: format!("RELATE {} {}", r.name(), quote_label(&a.label)),
                    expected: objects_answer(ids),
                });
            }
        }
    }
    queries.extend(pick(relate, rng));

    let mut measure = Vec::new();
    for a in unique.iter().filter(|o| !o.is_surface()) {
        for b in unique.iter().filter(|o| !o.is_surface() && o.id > a.id) {
            let d = gt_anchor(a.id).distance(gt_anchor(b.id));
            let seen = obs_anchor(a.id).distance(obs_anchor(b.id));
            if (d - seen).abs() <= margins.measure {
                measure.push(BenchQuery {
                    text: format!("MEASURE DIST {} {}", quote_label(&a.label), quote_label(&b.label)),
                    expected: ExpectedAnswer::Distance { meters: d },
                });
            }
        }
    }
    queries.extend(pick(measure, rng));

    let mut filter = Vec::new();
    for a in &unique {
        let mut d: Vec<(f64, f64, NodeId)> = objects
            .iter()
            .filter(|o| o.id != a.id)
            .map(|o| (gt_anchor(o.id).distance(gt_anchor(a.id)), obs_anchor(o.id).distance(obs_anchor(a.id)), o.id))
            .collect();
        d.sort_by(|x, y| x.0.total_cmp(&y.0));
        for k in 1..d.len() {
            let inside = &d[..k];
            let outside = &d[k..];
            let lo = inside.iter().map(|x| x.0.max(x.1)).fold(0.0, f64::max);
            let hi = outside.iter().map(|x| x.0.min(x.1)).fold(f64::INFINITY, f64::min);
            let cm = ((lo + hi) * 50.0).round();
            let meters = cm / 100.0;
            if meters - lo >= margins.distance && hi - meters >= margins.distance {
                filter.push(BenchQuery {
                    text: format!("FILTER WITHIN {cm}cm OF {}", quote_label(&a.label)),
                    expected: objects_answer(inside.iter().map(|x| x.2).collect()),
                });
            }
        }
    }
    queries.extend(pick(filter, rng));

    let mut closest = Vec::new();
    let mut labels: Vec<&str> = objects.iter().map(|o| o.label.as_str()).collect();
    labels.dedup();
    labels.sort_unstable();
    labels.dedup();
    for label in labels {
        for a in unique.iter().filter(|a| a.label != label) {
            let best = |graph: &SceneGraph| {
                let mut d: Vec<(f64, NodeId)> = objects
                    .iter()
                    .filter(|o| o.label == label)
                    .map(|o| (graph.node(o.id).unwrap().anchor.distance(graph.node(a.id).unwrap().anchor), o.id))
                    .collect();
                d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                let clear = d.len() < 2 || d[1].0 - d[0].0 >= margins.closest;
                (d[0].1, clear)
            };
            let (g, gc) = best(gt);
            let (o, oc) = best(obs);
            if g == o && gc && oc {
                closest.push(BenchQuery {
                    text: format!("CLOSEST {} TO {}", quote_label(label), quote_label(&a.label)),
                    expected: objects_answer(vec![g]),
                });
            }
        }
    }
    // Prefer the queries where the candidate label is shared by several objects.
    let (multi, single): (Vec<BenchQuery>, Vec<BenchQuery>) = closest.into_iter().partition(|q| {
        let ExpectedAnswer::Objects { ids } = &q.expected else { return false };
        objects.iter().filter(|o| o.label == objects.iter().find(|x| x.id == ids[0]).unwrap().label).count() > 1
    });
    let mut chosen = pick(multi, rng);
    if chosen.len() < 2 {
        chosen.extend(pick(single, rng).into_iter().take(2 - chosen.len()));
    }
    queries.extend(chosen);
    queries
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tidy_object_count_in_range() {
        for seed in 0..4 {
            let scene = generate_scene(&SceneSpec::new(Context::Desk, Difficulty::Tidy, seed)).unwrap();
            let n = scene.objects.iter().filter(|o| !o.is_surface()).count();
            assert!((3..=6).contains(&n), "{n}");
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::new(Context::Industrial, Difficulty::Cluttered, 42);
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(super::super::scene_to_json(&a), super::super::scene_to_json(&b));
    }
}
