//! Vectors, rays, pinhole cameras and point lights.
//!
//! Camera frames follow the computer-vision convention: `+x` right, `+y`
//! down, `+z` forward. The world is z-up.

use std::ops::{Add, AddAssign, Div, Index, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    /// Unit vector in the same direction. Zero vectors stay zero.
    pub fn normalized(self) -> Vec3 {
        let len = self.length();
        if len > 0.0 {
            self / len
        } else {
            self
        }
    }

    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
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

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl MulAssign<f64> for Vec3 {
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Linear radiometric color triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0.0, 0.0, 0.0);
    pub const WHITE: Rgb = Rgb::new(1.0, 1.0, 1.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Self { r, g, b }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn mul_elem(self, o: Rgb) -> Rgb {
        Rgb::new(self.r * o.r, self.g * o.g, self.b * o.b)
    }

    pub fn sum(self) -> f64 {
        self.r + self.g + self.b
    }

    pub fn mean(self) -> f64 {
        self.sum() / 3.0
    }

    pub fn max_abs_diff(self, o: Rgb) -> f64 {
        (self.r - o.r)
            .abs()
            .max((self.g - o.g).abs())
            .max((self.b - o.b).abs())
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }
}

impl Add for Rgb {
    type Output = Rgb;
    fn add(self, o: Rgb) -> Rgb {
        Rgb::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl AddAssign for Rgb {
    fn add_assign(&mut self, o: Rgb) {
        *self = *self + o;
    }
}

impl Sub for Rgb {
    type Output = Rgb;
    fn sub(self, o: Rgb) -> Rgb {
        Rgb::new(self.r - o.r, self.g - o.g, self.b - o.b)
    }
}

impl Mul<f64> for Rgb {
    type Output = Rgb;
    fn mul(self, s: f64) -> Rgb {
        Rgb::new(self.r * s, self.g * s, self.b * s)
    }
}

impl Mul<Rgb> for f64 {
    type Output = Rgb;
    fn mul(self, c: Rgb) -> Rgb {
        c * self
    }
}

impl Div<f64> for Rgb {
    type Output = Rgb;
    fn div(self, s: f64) -> Rgb {
        Rgb::new(self.r / s, self.g / s, self.b / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3, t_near: f64, t_far: f64) -> Result<Self> {
        let direction = direction.normalized();
        if !origin.is_finite() || !direction.is_finite() || direction.length_squared() == 0.0 {
            return Err(Error::InvalidInput("ray origin/direction must be finite and non-zero".into()));
        }
        if !(t_near >= 0.0 && t_near < t_far) {
            return Err(Error::InvalidInput(format!(
                "ray bounds must satisfy 0 <= t_near < t_far, got [{t_near}, {t_far}]"
            )));
        }
        Ok(Self {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    pub fn segment_length(&self) -> f64 {
        self.t_far - self.t_near
    }
}

/// Axis-aligned box; the scene bounds every field is confined to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// The normalized scene cube `[-1, 1]^3`.
    pub const fn unit() -> Self {
        Self::new(Vec3::splat(-1.0), Vec3::splat(1.0))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extent(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).length()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    /// Maps a world point into `[-1, 1]^3` box coordinates.
    pub fn normalize_point(&self, p: Vec3) -> Vec3 {
        let c = self.center();
        let h = self.half_extent();
        Vec3::new((p.x - c.x) / h.x, (p.y - c.y) / h.y, (p.z - c.z) / h.z)
    }

    /// Slab test. Returns the parametric overlap `[t0, t1]` of the line
    /// `origin + t*dir` with the box, clipped to `t >= 0`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let o = origin[axis];
            let d = dir[axis];
            let (lo, hi) = (self.min[axis], self.max[axis]);
            if d.abs() < 1e-300 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut a = (lo - o) * inv;
            let mut b = (hi - o) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        (t1 > t0).then_some((t0, t1))
    }

    /// Ray from `origin` along `dir` clipped to the box, if it hits.
    pub fn clip_ray(&self, origin: Vec3, dir: Vec3) -> Option<Ray> {
        let dir = dir.normalized();
        let (t0, t1) = self.intersect(origin, dir)?;
        Ray::new(origin, dir, t0, t1).ok()
    }
}

/// Row-major 3x3 rotation, world <- camera. Columns are the camera axes
/// expressed in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_columns(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Mat3([[a.x, b.x, c.x], [a.y, b.y, c.y], [a.z, b.z, c.z]])
    }

    pub fn from_row_major(v: [f64; 9]) -> Self {
        Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn column(&self, i: usize) -> Vec3 {
        Vec3::new(self.0[0][i], self.0[1][i], self.0[2][i])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose_mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }
}

/// Right-handed look-at frame (right, down, forward) for a camera at
/// `eye` looking at `target`. Falls back to a different up vector when
/// the view direction is parallel to `up`.
pub fn look_at_rotation(eye: Vec3, target: Vec3, up: Vec3) -> Result<Mat3> {
    let forward = (target - eye).normalized();
    if forward.length_squared() == 0.0 {
        return Err(Error::InvalidInput("look-at target coincides with the eye".into()));
    }
    let mut right = forward.cross(up);
    if right.length() < 1e-9 {
        let alt = if forward.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        right = forward.cross(alt);
    }
    let right = right.normalized();
    let down = forward.cross(right).normalized();
    Ok(Mat3::from_columns(right, down, forward))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub rotation: Mat3,
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub principal: (f64, f64),
}

impl Camera {
    /// Camera with the principal point at the image center.
    pub fn new(position: Vec3, rotation: Mat3, focal: f64, width: usize, height: usize) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::InvalidInput(format!("focal length must be positive, got {focal}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("camera resolution must be at least 1x1".into()));
        }
        Ok(Self {
            position,
            rotation,
            focal,
            width,
            height,
            principal: (width as f64 * 0.5, height as f64 * 0.5),
        })
    }

    /// Pinhole camera at `eye` looking at `target` with the given horizontal
    /// field of view in degrees.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidInput(format!("field of view must be in (0, 180), got {fov_deg}")));
        }
        let focal = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self::new(eye, look_at_rotation(eye, target, up)?, focal, width, height)
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2)
    }

    /// Unnormalized world direction through continuous pixel coordinates.
    pub fn direction_through(&self, px: f64, py: f64) -> Vec3 {
        let cam = Vec3::new(
            (px - self.principal.0) / self.focal,
            (py - self.principal.1) / self.focal,
            1.0,
        );
        self.rotation.mul_vec(cam)
    }

    /// Projects a world point to continuous pixel coordinates. `None` when
    /// the point is behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.rotation.transpose_mul_vec(p - self.position);
        if c.z <= 0.0 {
            return None;
        }
        Some((
            self.focal * c.x / c.z + self.principal.0,
            self.focal * c.y / c.z + self.principal.1,
        ))
    }

    /// Ray through pixel `(i, j)` (column, row) offset by `jitter` in
    /// `[0,1)^2`, clipped to `bounds`. `Ok(None)` when the ray misses the
    /// scene box.
    pub fn generate_ray(&self, pixel: (usize, usize), jitter: (f64, f64), bounds: &Aabb) -> Result<Option<Ray>> {
        let (i, j) = pixel;
        if i >= self.width || j >= self.height {
            return Err(Error::InvalidInput(format!(
                "pixel ({i}, {j}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let dir = self.direction_through(i as f64 + jitter.0, j as f64 + jitter.1);
        Ok(bounds.clip_ray(self.position, dir))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub intensity: Rgb,
}

impl PointLight {
    pub fn new(position: Vec3, intensity: Rgb) -> Result<Self> {
        if intensity.r < 0.0 || intensity.g < 0.0 || intensity.b < 0.0 || !intensity.is_finite() {
            return Err(Error::InvalidInput("light intensity must be finite and non-negative".into()));
        }
        Ok(Self { position, intensity })
    }
}
