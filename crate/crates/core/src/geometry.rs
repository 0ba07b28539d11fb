//! Camera model, rigid transforms and analytic ray intersection.
//!
//! Conventions used throughout the crate:
//!
//! * World frame is right-handed with `+y` up. Distances are meters.
//! * Camera frame has `+z` forward, `+x` right and `+y` up. Image rows grow
//!   downwards, so a pixel below the principal point maps to negative camera
//!   `y`. Under the identity pose the camera looks along world `+z`.
//! * Pixel coordinates are continuous; integer coordinates are pixel centers.
//!   The nearest pixel of `(u, v)` is `(floor(u + 0.5), floor(v + 0.5))`.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking unit vectors and rotation matrices.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) outside {width}x{height} frame")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: u32,
        height: u32,
    },
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("depth array has {actual} entries, expected {expected}")]
    DepthSizeMismatch { expected: usize, actual: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("non-finite vector component")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-12 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Projection onto the horizontal (x, z) plane.
    pub fn horizontal(self) -> Vec3 {
        Vec3::new(self.x, 0.0, self.z)
    }

    pub fn horizontal_distance(self, other: Vec3) -> f64 {
        (self - other).horizontal().norm()
    }

    pub fn min(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    pub fn max(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Continuous image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Integer pixel whose center is nearest to this point (may be negative).
    pub fn nearest(self) -> (i64, i64) {
        ((self.u + 0.5).floor() as i64, (self.v + 0.5).floor() as i64)
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    /// Row-major rotation; columns are the camera axes expressed in world.
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Builds a validated pose from a row-major rotation and translation.
    pub fn new(rotation: [[f64; 3]; 3], translation: Vec3) -> Result<Self, GeometryError> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Camera at `eye` looking at `target`, with image-up as close to world
    /// `+y` as the viewing direction allows.
    pub fn look_at(eye: Vec3, target: Vec3) -> Result<Self, GeometryError> {
        let forward = (target - eye)
            .normalized()
            .ok_or_else(|| GeometryError::InvalidPose("eye and target coincide".into()))?;
        let right = Vec3::UP
            .cross(forward)
            .normalized()
            .ok_or_else(|| GeometryError::InvalidPose("viewing direction is vertical".into()))?;
        let up = forward.cross(right);
        Self::new(
            [
                [right.x, up.x, forward.x],
                [right.y, up.y, forward.y],
                [right.z, up.z, forward.z],
            ],
            eye,
        )
    }

    /// Rotation of this pose expressed as a single rotation about `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self, GeometryError> {
        let a = axis
            .normalized()
            .ok_or_else(|| GeometryError::InvalidPose("zero rotation axis".into()))?;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let r = [
            [t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y],
            [t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x],
            [t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c],
        ];
        Self::new(r, translation)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.translation.is_finite() || self.rotation.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite entry".into()));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > UNIT_TOLERANCE {
                    return Err(GeometryError::InvalidPose(format!(
                        "rotation not orthonormal (RtR[{i}][{j}] = {dot})"
                    )));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!("det = {det}, expected +1")));
        }
        Ok(())
    }

    /// Rotates a camera-frame vector into the world frame.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    /// Rotates a world-frame vector into the camera frame.
    pub fn inverse_rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[1][0] * v.y + r[2][0] * v.z,
            r[0][1] * v.x + r[1][1] * v.y + r[2][1] * v.z,
            r[0][2] * v.x + r[1][2] * v.y + r[2][2] * v.z,
        )
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotate(p) + self.translation
    }

    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        self.inverse_rotate(p - self.translation)
    }

    /// World-frame optical axis.
    pub fn forward(&self) -> Vec3 {
        self.rotate(Vec3::new(0.0, 0.0, 1.0))
    }

    /// World-frame image-up axis.
    pub fn up(&self) -> Vec3 {
        self.rotate(Vec3::new(0.0, 1.0, 0.0))
    }

    /// Horizontal viewing direction used for viewer-relative depth ordering.
    /// Falls back to the image-up axis when the camera looks straight down.
    pub fn horizontal_forward(&self) -> Vec3 {
        self.forward()
            .horizontal()
            .normalized()
            .or_else(|| self.up().horizontal().normalized())
            .unwrap_or(Vec3::new(0.0, 0.0, 1.0))
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rotation[i][k] * other.rotation[k][j]).sum();
            }
        }
        PoseSE3 {
            rotation: r,
            translation: self.transform_point(other.translation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("principal point outside the image");
        }
        Ok(())
    }

    /// Integer pixel index for `px`, or an error when it falls outside the frame.
    pub fn pixel_index(&self, px: Pixel) -> Result<(u32, u32), GeometryError> {
        let (i, j) = px.nearest();
        if !px.u.is_finite() || !px.v.is_finite() || i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return Err(GeometryError::PixelOutOfBounds {
                u: px.u,
                v: px.v,
                width: self.width,
                height: self.height,
            });
        }
        Ok((i as u32, j as u32))
    }

    /// Camera-frame direction (not normalized) with unit forward component.
    fn camera_direction(&self, px: Pixel) -> Vec3 {
        Vec3::new((px.u - self.cx) / self.fx, -(px.v - self.cy) / self.fy, 1.0)
    }
}

/// Per-pixel metric depth along the camera's forward axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    width: u32,
    height: u32,
    depth: Vec<f32>,
}

impl DepthFrame {
    pub fn new(width: u32, height: u32, depth: Vec<f32>) -> Result<Self, GeometryError> {
        let expected = width as usize * height as usize;
        if depth.len() != expected {
            return Err(GeometryError::DepthSizeMismatch {
                expected,
                actual: depth.len(),
            });
        }
        Ok(Self { width, height, depth })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            depth: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.depth
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.depth
    }

    pub fn is_valid_depth(d: f32) -> bool {
        d.is_finite() && d > 0.0
    }

    /// Raw value at an integer pixel (may be a sentinel).
    pub fn raw(&self, x: u32, y: u32) -> f32 {
        self.depth[y as usize * self.width as usize + x as usize]
    }

    /// Depth at an integer pixel, `None` for sentinel values.
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        let d = self.raw(x, y);
        Self::is_valid_depth(d).then_some(d as f64)
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| Self::is_valid_depth(**d)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; fails for zero-length directions.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self, GeometryError> {
        let direction = direction.normalized().ok_or(GeometryError::NonFinite)?;
        Ok(Self { origin, direction })
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// World-axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub center: Vec3,
    pub half_extents: Vec3,
}

impl Box3 {
    pub fn new(center: Vec3, half_extents: Vec3) -> Result<Self, GeometryError> {
        let b = Self { center, half_extents };
        b.validate()?;
        Ok(b)
    }

    pub fn from_min_max(min: Vec3, max: Vec3) -> Self {
        Self {
            center: (min + max) * 0.5,
            half_extents: (max - min) * 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.center.is_finite() || !self.half_extents.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let h = self.half_extents;
        if h.x <= 0.0 || h.y <= 0.0 || h.z <= 0.0 {
            return Err(GeometryError::InvalidBox(format!("half extents must be positive, got {h:?}")));
        }
        Ok(())
    }

    pub fn min(&self) -> Vec3 {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Vec3 {
        self.center + self.half_extents
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.contains_with_tolerance(p, 0.0)
    }

    pub fn contains_with_tolerance(&self, p: Vec3, tol: f64) -> bool {
        let d = p - self.center;
        d.x.abs() <= self.half_extents.x + tol
            && d.y.abs() <= self.half_extents.y + tol
            && d.z.abs() <= self.half_extents.z + tol
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (self.min(), self.max());
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            );
        }
        out
    }

    pub fn translated(&self, by: Vec3) -> Box3 {
        Box3 {
            center: self.center + by,
            half_extents: self.half_extents,
        }
    }

    /// Half-extent of the box measured along a unit direction (support width).
    pub fn extent_along(&self, dir: Vec3) -> f64 {
        let h = self.half_extents;
        h.x * dir.x.abs() + h.y * dir.y.abs() + h.z * dir.z.abs()
    }

    /// Horizontal (x, z) footprint area.
    pub fn footprint_area(&self) -> f64 {
        4.0 * self.half_extents.x * self.half_extents.z
    }

    /// Area of the intersection of both horizontal footprints, with `other`
    /// dilated by `grow` meters on each side.
    pub fn footprint_overlap(&self, other: &Box3, grow: f64) -> f64 {
        let (a0, a1) = (self.min(), self.max());
        let (b0, b1) = (other.min(), other.max());
        let ox = (a1.x.min(b1.x + grow) - a0.x.max(b0.x - grow)).max(0.0);
        let oz = (a1.z.min(b1.z + grow) - a0.z.max(b0.z - grow)).max(0.0);
        ox * oz
    }

    pub fn intersects(&self, other: &Box3) -> bool {
        let d = other.center - self.center;
        let s = self.half_extents + other.half_extents;
        d.x.abs() < s.x && d.y.abs() < s.y && d.z.abs() < s.z
    }

    /// Parametric interval `[t_enter, t_exit]` where the line `origin + t*dir`
    /// is inside the box, or `None` when the line misses.
    pub fn slab_interval(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let lo = self.min();
        let hi = self.max();
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let o = origin.axis(axis);
            let d = dir.axis(axis);
            let (l, h) = (lo.axis(axis), hi.axis(axis));
            if d.abs() < 1e-15 {
                if o < l || o > h {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut a, mut b) = ((l - o) * inv, (h - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    /// True when the open segment `(a, b)` passes through the box.
    pub fn intersects_open_segment(&self, a: Vec3, b: Vec3) -> bool {
        match self.slab_interval(a, b - a) {
            Some((t0, t1)) => t0 < 1.0 && t1 > 0.0 && t0 <= t1,
            None => false,
        }
    }
}

/// Image-space axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Box2 {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let a = self.to_array();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(GeometryError::InvalidBox(format!("degenerate 2D box {a:?}")));
        }
        Ok(())
    }

    /// Checks that every point of the box maps to a pixel of the frame.
    pub fn validate_in_frame(&self, width: u32, height: u32) -> Result<(), GeometryError> {
        self.validate()?;
        if self.x_min < 0.0 || self.y_min < 0.0 || self.x_max > (width - 1) as f64 || self.y_max > (height - 1) as f64 {
            return Err(GeometryError::InvalidBox(format!(
                "box {:?} exceeds {width}x{height} frame",
                self.to_array()
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> Pixel {
        Pixel::new((self.x_min + self.x_max) * 0.5, (self.y_min + self.y_max) * 0.5)
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.u >= self.x_min && p.u <= self.x_max && p.v >= self.y_min && p.v <= self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Smallest box containing all points, or `None` for fewer than one point.
    pub fn hull(points: impl IntoIterator<Item = Pixel>) -> Option<Box2> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Box2 {
            x_min: first.u,
            y_min: first.v,
            x_max: first.u,
            y_max: first.v,
        };
        for p in it {
            b.x_min = b.x_min.min(p.u);
            b.y_min = b.y_min.min(p.v);
            b.x_max = b.x_max.max(p.u);
            b.y_max = b.y_max.max(p.v);
        }
        Some(b)
    }

    /// Intersection with the pixel-center extent of a frame.
    pub fn clipped(&self, width: u32, height: u32) -> Option<Box2> {
        let b = Box2 {
            x_min: self.x_min.max(0.0),
            y_min: self.y_min.max(0.0),
            x_max: self.x_max.min((width - 1) as f64),
            y_max: self.y_max.min((height - 1) as f64),
        };
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }
}

/// Infinite plane through `point` with unit `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self, GeometryError> {
        let normal = normal
            .normalized()
            .ok_or_else(|| GeometryError::InvalidBox("plane normal must be nonzero".into()))?;
        Ok(Self { point, normal })
    }

    pub fn horizontal(height: f64) -> Self {
        Self {
            point: Vec3::new(0.0, height, 0.0),
            normal: Vec3::UP,
        }
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p - self.point).dot(self.normal)
    }
}

/// World-frame ray through pixel `px`, starting at the camera center.
pub fn pixel_to_ray(px: Pixel, intrinsics: &CameraIntrinsics, pose: &PoseSE3) -> Result<Ray, GeometryError> {
    intrinsics.pixel_index(px)?;
    Ray::new(pose.translation, pose.rotate(intrinsics.camera_direction(px)))
}

/// Depth at the pixel nearest to `px`; `None` when that pixel holds a sentinel.
pub fn sample_depth(frame: &DepthFrame, px: Pixel) -> Result<Option<f64>, GeometryError> {
    let (i, j) = px.nearest();
    if !px.u.is_finite() || !px.v.is_finite() || i < 0 || j < 0 || i >= frame.width as i64 || j >= frame.height as i64 {
        return Err(GeometryError::PixelOutOfBounds {
            u: px.u,
            v: px.v,
            width: frame.width,
            height: frame.height,
        });
    }
    Ok(frame.get(i as u32, j as u32))
}

/// World point seen at pixel `px` with forward (camera `z`) depth `depth`.
pub fn backproject(px: Pixel, depth: f64, intrinsics: &CameraIntrinsics, pose: &PoseSE3) -> Result<Vec3, GeometryError> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    Ok(pose.transform_point(intrinsics.camera_direction(px) * depth))
}

/// Pinhole projection; `None` when the point is not in front of the camera.
pub fn project_point(p: Vec3, intrinsics: &CameraIntrinsics, pose: &PoseSE3) -> Option<Pixel> {
    let c = pose.inverse_transform_point(p);
    if !(c.z > 0.0) {
        return None;
    }
    Some(Pixel::new(
        intrinsics.cx + intrinsics.fx * c.x / c.z,
        intrinsics.cy - intrinsics.fy * c.y / c.z,
    ))
}

/// Forward (camera `z`) depth of a world point.
pub fn forward_depth(p: Vec3, pose: &PoseSE3) -> f64 {
    pose.inverse_transform_point(p).z
}

/// Smallest non-negative hit distance of `ray` with `bx` (slab method).
/// A ray starting inside the box reports its exit distance.
pub fn ray_box_intersect(ray: &Ray, bx: &Box3) -> Option<f64> {
    let (t0, t1) = bx.slab_interval(ray.origin, ray.direction)?;
    if t1 < 0.0 {
        None
    } else if t0 >= 0.0 {
        Some(t0)
    } else {
        Some(t1)
    }
}

/// Non-negative hit distance of `ray` with `plane`; `None` when parallel
/// (|n·d| < 1e-9) or when the hit lies behind the origin.
pub fn ray_plane_intersect(ray: &Ray, plane: &Plane) -> Option<f64> {
    let denom = plane.normal.dot(ray.direction);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = plane.normal.dot(plane.point - ray.origin) / denom;
    (t >= 0.0).then_some(t)
}
