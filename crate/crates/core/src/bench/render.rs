//! Analytic depth rendering against axis-aligned boxes and the floor plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NoiseConfig;
use crate::geometry::{
    forward_depth, pixel_to_ray, project_point, ray_box_intersect, ray_plane_intersect, Box2, Box3, CameraIntrinsics,
    DepthFrame, Pixel, Plane, PoseSE3, Ray,
};
use crate::graph::NodeId;

pub const FLOOR_HEIGHT: f64 = 0.0;

/// Independent random streams derived from one scene seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Layout = 1,
    DepthNoise = 2,
    Dropout = 3,
    Jitter = 4,
    Queries = 5,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderObject {
    pub id: NodeId,
    pub bbox: Box3,
}

/// What a ray hits first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Object(NodeId),
    Floor,
}

/// Nearest hit of `ray` among the objects and the floor.
pub fn cast_scene_ray(ray: &Ray, objects: &[RenderObject]) -> Option<(f64, Surface)> {
    let mut best: Option<(f64, Surface)> = ray_plane_intersect(ray, &Plane::horizontal(FLOOR_HEIGHT)).map(|t| (t, Surface::Floor));
    for o in objects {
        if let Some(t) = ray_box_intersect(ray, &o.bbox) {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, Surface::Object(o.id)));
            }
        }
    }
    best
}

/// Renders forward depth for every pixel center, then applies seeded
/// Gaussian noise and dropout. Pixels that hit nothing are invalid.
pub fn render_depth(
    objects: &[RenderObject],
    intrinsics: &CameraIntrinsics,
    pose: &PoseSE3,
    noise: &NoiseConfig,
    seed: u64,
) -> DepthFrame {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut frame = DepthFrame::filled(w, h, 0.0);
    let data = frame.data_mut();
    for y in 0..h {
        for x in 0..w {
            let ray = pixel_to_ray(Pixel::new(x as f64, y as f64), intrinsics, pose).expect("pixel in frame");
            if let Some((t, _)) = cast_scene_ray(&ray, objects) {
                let z = forward_depth(ray.at(t), pose);
                if z > 0.0 {
                    data[(y * w + x) as usize] = z as f32;
                }
            }
        }
    }
    if noise.depth_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.depth_sigma).expect("finite sigma");
        let mut rng = stream_rng(seed, Stream::DepthNoise);
        for d in data.iter_mut() {
            let n = normal.sample(&mut rng);
            if DepthFrame::is_valid_depth(*d) {
                *d = (*d as f64 + n) as f32;
            }
        }
    }
    if noise.dropout_fraction > 0.0 {
        let mut rng = stream_rng(seed, Stream::Dropout);
        for d in data.iter_mut() {
            if rng.random::<f64>() < noise.dropout_fraction {
                *d = 0.0;
            }
        }
    }
    frame
}

/// Hull of the projected corners of `bbox`, without clipping. Corners behind
/// the camera are ignored; `None` when every corner is behind it.
pub fn project_box_hull(bbox: &Box3, intrinsics: &CameraIntrinsics, pose: &PoseSE3) -> Option<Box2> {
    Box2::hull(bbox.corners().iter().filter_map(|c| project_point(*c, intrinsics, pose)))
}

/// Ground-truth 2D box: projected corner hull clipped to the frame.
pub fn project_gt_box(bbox: &Box3, intrinsics: &CameraIntrinsics, pose: &PoseSE3) -> Option<Box2> {
    project_box_hull(bbox, intrinsics, pose)?.clipped(intrinsics.width, intrinsics.height)
}
