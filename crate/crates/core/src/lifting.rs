//! 2D-to-3D lifting of detections by multi-point depth raycasting, plus the
//! planar-fit lifter used when no depth is available.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    backproject, forward_depth, pixel_to_ray, ray_plane_intersect, sample_depth, Box2, Box3, CameraIntrinsics,
    DepthFrame, GeometryError, Pixel, Plane, PoseSE3, Vec3,
};

/// Floor applied to the MAD before outlier rejection, in meters.
pub const MAD_FLOOR: f64 = 0.01;

pub const PLANE_MIN_POINTS: usize = 50;
pub const PLANE_MAX_POINTS: usize = 2000;
pub const PLANE_ITERATIONS: usize = 200;
pub const PLANE_INLIER_THRESHOLD: f64 = 0.02;
pub const PLANE_MIN_UP_ALIGNMENT: f64 = 0.9;
pub const PLANE_MIN_INLIER_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("insufficient depth: {accepted} usable samples, need {required}")]
    InsufficientDepth { accepted: usize, required: usize },
    #[error("no near-horizontal support plane found ({inliers} of {points} points)")]
    NoPlaneFound { inliers: usize, points: usize },
    #[error("invalid lift config: {0}")]
    InvalidConfig(String),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    pub label: String,
    #[serde(rename = "box", with = "box2_array")]
    pub bbox: Box2,
    #[serde(rename = "conf")]
    pub confidence: f64,
}

impl Detection2D {
    pub fn new(label: impl Into<String>, bbox: Box2, confidence: f64) -> Result<Self, LiftError> {
        let det = Self {
            label: label.into(),
            bbox,
            confidence,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<(), LiftError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(LiftError::InvalidDetection(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        self.bbox.validate()?;
        Ok(())
    }
}

pub(crate) mod box2_array {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::geometry::Box2;

    pub fn serialize<S: Serializer>(b: &Box2, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(b.to_array())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Box2, D::Error> {
        let [a, b, c, e] = <[f64; 4]>::deserialize(d)?;
        Box2::new(a, b, c, e).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    pub inset_fraction: f64,
    pub min_valid_samples: usize,
    pub mad_k: f64,
    pub min_half_extent: f64,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            inset_fraction: 0.1,
            min_valid_samples: 3,
            mad_k: 2.5,
            min_half_extent: 0.02,
        }
    }
}

impl LiftConfig {
    pub fn validate(&self) -> Result<(), LiftError> {
        let bad = |m: String| Err(LiftError::InvalidConfig(m));
        if !(0.0..0.5).contains(&self.inset_fraction) {
            return bad(format!("inset_fraction {} outside [0, 0.5)", self.inset_fraction));
        }
        if self.min_valid_samples == 0 || self.min_valid_samples > 9 {
            return bad(format!("min_valid_samples {} outside [1, 9]", self.min_valid_samples));
        }
        if !(self.mad_k > 0.0 && self.mad_k.is_finite()) {
            return bad(format!("mad_k {} must be positive", self.mad_k));
        }
        if !(self.min_half_extent > 0.0 && self.min_half_extent.is_finite()) {
            return bad(format!("min_half_extent {} must be positive", self.min_half_extent));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftResult {
    pub anchor: Vec3,
    pub volume: Box3,
    pub sample_count: usize,
    pub depth_spread: f64,
}

/// The nine sample locations for a box: center, four inset corners, then the
/// midpoints between the center and each inset corner. An axis narrower than
/// two pixels collapses onto the center.
pub fn sample_pixels(bbox: &Box2, inset_fraction: f64) -> [Pixel; 9] {
    let c = bbox.center();
    let (w, h) = (bbox.width(), bbox.height());
    let (x0, x1) = if w < 2.0 {
        (c.u, c.u)
    } else {
        (bbox.x_min + inset_fraction * w, bbox.x_max - inset_fraction * w)
    };
    let (y0, y1) = if h < 2.0 {
        (c.v, c.v)
    } else {
        (bbox.y_min + inset_fraction * h, bbox.y_max - inset_fraction * h)
    };
    let corners = [
        Pixel::new(x0, y0),
        Pixel::new(x1, y0),
        Pixel::new(x0, y1),
        Pixel::new(x1, y1),
    ];
    let mid = |p: Pixel| Pixel::new((c.u + p.u) * 0.5, (c.v + p.v) * 0.5);
    [
        c,
        corners[0],
        corners[1],
        corners[2],
        corners[3],
        mid(corners[0]),
        mid(corners[1]),
        mid(corners[2]),
        mid(corners[3]),
    ]
}

/// Center of the pixel nearest to `px`; depth is sampled and back-projected there.
pub fn snap_to_pixel(px: Pixel) -> Pixel {
    let (i, j) = px.nearest();
    Pixel::new(i as f64, j as f64)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub(crate) fn mad(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|d| (d - m).abs()).collect();
    median(&mut dev)
}

/// Aggregates per-sample `(forward depth, world point)` pairs into a lift.
/// `reject` enables median/MAD outlier rejection.
pub fn aggregate_samples(
    samples: &[(f64, Vec3)],
    cfg: &LiftConfig,
    reject: bool,
) -> Result<LiftResult, LiftError> {
    let required = cfg.min_valid_samples;
    if samples.len() < required {
        return Err(LiftError::InsufficientDepth {
            accepted: samples.len(),
            required,
        });
    }
    let mut accepted: Vec<(f64, Vec3)> = if reject {
        let depths: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let m = median(&mut depths.clone());
        let band = cfg.mad_k * mad(&depths).max(MAD_FLOOR);
        samples.iter().copied().filter(|s| (s.0 - m).abs() <= band).collect()
    } else {
        samples.to_vec()
    };
    if accepted.len() < required {
        return Err(LiftError::InsufficientDepth {
            accepted: accepted.len(),
            required,
        });
    }
    // Canonical order keeps the floating-point sums independent of sample order.
    accepted.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.x.total_cmp(&b.1.x))
            .then(a.1.y.total_cmp(&b.1.y))
            .then(a.1.z.total_cmp(&b.1.z))
    });
    let n = accepted.len() as f64;
    let mut sum = Vec3::ZERO;
    let mut lo = accepted[0].1;
    let mut hi = accepted[0].1;
    for (_, p) in &accepted {
        sum += *p;
        lo = lo.min(*p);
        hi = hi.max(*p);
    }
    let anchor = sum / n;
    let center = (lo + hi) * 0.5;
    let half = (hi - lo) * 0.5;
    let m = cfg.min_half_extent;
    let volume = Box3 {
        center,
        half_extents: Vec3::new(half.x.max(m), half.y.max(m), half.z.max(m)),
    };
    let depths: Vec<f64> = accepted.iter().map(|s| s.0).collect();
    Ok(LiftResult {
        anchor,
        volume,
        sample_count: accepted.len(),
        depth_spread: mad(&depths),
    })
}

/// Lifts a detection to a metric anchor and bounding volume using the depth map.
pub fn lift_detection(
    det: &Detection2D,
    frame: &DepthFrame,
    intrinsics: &CameraIntrinsics,
    pose: &PoseSE3,
    cfg: &LiftConfig,
) -> Result<LiftResult, LiftError> {
    cfg.validate()?;
    det.bbox.validate_in_frame(frame.width(), frame.height())?;
    let mut samples = Vec::with_capacity(9);
    for px in sample_pixels(&det.bbox, cfg.inset_fraction) {
        if let Some(d) = sample_depth(frame, px)? {
            let p = backproject(snap_to_pixel(px), d, intrinsics, pose)?;
            samples.push((d, p));
        }
    }
    aggregate_samples(&samples, cfg, true)
}

/// Fits the dominant near-horizontal plane to the back-projected depth map.
pub fn fit_support_plane(
    frame: &DepthFrame,
    intrinsics: &CameraIntrinsics,
    pose: &PoseSE3,
    seed: u64,
) -> Result<Plane, LiftError> {
    let w = frame.width();
    let valid: Vec<usize> = frame
        .data()
        .iter()
        .enumerate()
        .filter(|(_, d)| DepthFrame::is_valid_depth(**d))
        .map(|(i, _)| i)
        .collect();
    if valid.len() < PLANE_MIN_POINTS {
        return Err(LiftError::InsufficientDepth {
            accepted: valid.len(),
            required: PLANE_MIN_POINTS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if valid.len() > PLANE_MAX_POINTS {
        index::sample(&mut rng, valid.len(), PLANE_MAX_POINTS)
            .into_iter()
            .map(|i| valid[i])
            .collect()
    } else {
        valid
    };
    chosen.sort_unstable();
    let points: Vec<Vec3> = chosen
        .iter()
        .map(|&i| {
            let (x, y) = ((i % w as usize) as f64, (i / w as usize) as f64);
            backproject(Pixel::new(x, y), frame.data()[i] as f64, intrinsics, pose)
        })
        .collect::<Result<_, _>>()?;

    let n = points.len();
    let count_inliers = |plane: &Plane| {
        points
            .iter()
            .filter(|p| plane.signed_distance(**p).abs() <= PLANE_INLIER_THRESHOLD)
            .count()
    };
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..PLANE_ITERATIONS {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let c = rng.random_range(0..n);
        if a == b || b == c || a == c {
            continue;
        }
        let Some(mut normal) = (points[b] - points[a]).cross(points[c] - points[a]).normalized() else {
            continue;
        };
        if normal.dot(Vec3::UP) < 0.0 {
            normal = -normal;
        }
        if normal.dot(Vec3::UP) < PLANE_MIN_UP_ALIGNMENT {
            continue;
        }
        let plane = Plane {
            point: points[a],
            normal,
        };
        let inliers = count_inliers(&plane);
        if best.as_ref().is_none_or(|(k, _)| inliers > *k) {
            best = Some((inliers, plane));
        }
    }
    let (inliers, hypothesis) = best.ok_or(LiftError::NoPlaneFound { inliers: 0, points: n })?;
    if (inliers as f64) < PLANE_MIN_INLIER_FRACTION * n as f64 {
        return Err(LiftError::NoPlaneFound { inliers, points: n });
    }
    let members: Vec<Vec3> = points
        .iter()
        .copied()
        .filter(|p| hypothesis.signed_distance(*p).abs() <= PLANE_INLIER_THRESHOLD)
        .collect();
    Ok(refine_plane(&members).unwrap_or(hypothesis))
}

/// Total least-squares plane through `points`, normal oriented upwards.
fn refine_plane(points: &[Vec3]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::ZERO, |acc, p| acc + *p) / n;
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = *p - centroid;
        let v = Vector3::new(d.x, d.y, d.z);
        cov += v * v.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let k = eig.eigenvalues.imin();
    let e = eig.eigenvectors.column(k);
    let mut normal = Vec3::new(e[0], e[1], e[2]).normalized()?;
    if normal.dot(Vec3::UP) < 0.0 {
        normal = -normal;
    }
    (normal.dot(Vec3::UP) >= PLANE_MIN_UP_ALIGNMENT).then_some(Plane {
        point: centroid,
        normal,
    })
}

/// Lifts a detection by intersecting the sample rays with a support plane.
pub fn lift_detection_planar(
    det: &Detection2D,
    plane: &Plane,
    intrinsics: &CameraIntrinsics,
    pose: &PoseSE3,
    cfg: &LiftConfig,
) -> Result<LiftResult, LiftError> {
    cfg.validate()?;
    det.bbox
        .validate_in_frame(intrinsics.width, intrinsics.height)?;
    let mut samples = Vec::with_capacity(9);
    for px in sample_pixels(&det.bbox, cfg.inset_fraction) {
        let ray = pixel_to_ray(snap_to_pixel(px), intrinsics, pose)?;
        if let Some(t) = ray_plane_intersect(&ray, plane) {
            let p = ray.at(t);
            let z = forward_depth(p, pose);
            if z > 0.0 {
                samples.push((z, p));
            }
        }
    }
    aggregate_samples(&samples, cfg, false)
}
