//! Closest-hit raycasting of scene primitives through a body-mounted stereo
//! pinhole pair, with per-channel exponential water attenuation.

use super::scene::{Primitive, SceneGraph, Semantic, Shape};
use crate::geometry::Pose;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Depth value of pixels whose ray hits nothing.
pub const NO_HIT: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraParams {
    pub width: usize,
    pub height: usize,
    pub focal_px: f64,
    pub baseline: f64,
    /// Midpoint of the stereo pair in the body frame.
    pub mount: [f64; 3],
    /// Downward tilt of the optical axis, radians.
    pub tilt: f64,
    pub max_range: f64,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            focal_px: 32.0,
            baseline: 0.1,
            mount: [0.25, 0.0, 0.0],
            tilt: 0.5,
            max_range: 60.0,
        }
    }
}

impl CameraParams {
    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Body-frame rotation of the optical frame (x right, y down, z forward).
    fn optical_rotation(&self) -> UnitQuaternion<f64> {
        let optical_in_body = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
        let base = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(optical_in_body));
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), self.tilt) * base
    }

    /// World poses of the left and right optical frames.
    pub fn eye_poses(&self, body: &Pose) -> (Pose, Pose) {
        let rot = self.optical_rotation();
        let half = self.baseline / 2.0;
        let m = Vector3::from(self.mount);
        let left = Pose::new(rot, m + Vector3::new(0.0, half, 0.0));
        let right = Pose::new(rot, m - Vector3::new(0.0, half, 0.0));
        (body.compose(&left), body.compose(&right))
    }

    /// Unit ray direction in the optical frame through the center of pixel `(u, v)`.
    pub fn pixel_direction(&self, u: usize, v: usize) -> Vector3<f64> {
        let (cx, cy) = self.principal_point();
        Vector3::new(
            (u as f64 + 0.5 - cx) / self.focal_px,
            (v as f64 + 0.5 - cy) / self.focal_px,
            1.0,
        )
        .normalize()
    }

    /// Continuous pixel coordinates of an optical-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((self.focal_px * p.x / p.z + cx, self.focal_px * p.y / p.z + cy))
    }
}

/// One rendered view. Row-major, `v * width + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB in `[0, 1]`.
    pub rgb: Vec<f64>,
    /// Range along the pixel ray, meters; [`NO_HIT`] for misses.
    pub depth: Vec<f64>,
    pub semantic: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub left: Image,
    pub right: Image,
    pub focal_px: f64,
    pub principal_point: (f64, f64),
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub normal: Vector3<f64>,
    pub label: Semantic,
    pub color: [f64; 3],
}

fn ray_sphere(o: &Vector3<f64>, d: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = o - c;
    let b = oc.dot(d);
    let cc = oc.dot(&oc) - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = -b - s;
    if t0 > 1e-9 {
        return Some(t0);
    }
    let t1 = -b + s;
    (t1 > 1e-9).then_some(t1)
}

fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, h: &[f64; 3]) -> Option<(f64, Vector3<f64>)> {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    let mut axis = 0;
    let mut sign = 1.0;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > h[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let mut t0 = (-h[i] - o[i]) * inv;
        let mut t1 = (h[i] - o[i]) * inv;
        let mut s = -1.0;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
            s = 1.0;
        }
        if t0 > tmin {
            tmin = t0;
            axis = i;
            sign = s;
        }
        tmax = tmax.min(t1);
    }
    if tmin > tmax || tmin <= 1e-9 {
        return None;
    }
    let mut n = Vector3::zeros();
    n[axis] = sign;
    Some((tmin, n))
}

fn ray_cylinder(o: &Vector3<f64>, d: &Vector3<f64>, r: f64, hh: f64) -> Option<(f64, Vector3<f64>)> {
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |t: f64, n: Vector3<f64>| {
        if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / a, (-b + s) / a] {
                let z = o.z + t * d.z;
                if z.abs() <= hh {
                    let p = o + d * t;
                    consider(t, Vector3::new(p.x, p.y, 0.0) / r);
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for cap in [-hh, hh] {
            let t = (cap - o.z) / d.z;
            let p = o + d * t;
            if p.x * p.x + p.y * p.y <= r * r {
                consider(t, Vector3::new(0.0, 0.0, cap.signum()));
            }
        }
    }
    best
}

/// Ray against the capsule of radius `r` around segment `a`-`b`.
fn ray_segment_capsule(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    r: f64,
) -> Option<(f64, Vector3<f64>)> {
    let ba = b - a;
    let oa = o - a;
    let baba = ba.dot(&ba);
    let bard = ba.dot(d);
    let baoa = ba.dot(&oa);
    let rdoa = d.dot(&oa);
    let oaoa = oa.dot(&oa);
    let qa = baba - bard * bard;
    let qb = baba * rdoa - baoa * bard;
    let qc = baba * oaoa - baoa * baoa - r * r * baba;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    if qa.abs() > 1e-15 {
        let h = qb * qb - qa * qc;
        if h >= 0.0 {
            let s = h.sqrt();
            for t in [(-qb - s) / qa, (-qb + s) / qa] {
                let y = baoa + t * bard;
                if t > 1e-9 && y > 0.0 && y < baba {
                    let p = o + d * t;
                    let axis_pt = a + ba * (y / baba);
                    best = Some((t, (p - axis_pt) / r));
                    break;
                }
            }
        }
    }
    for c in [a, b] {
        if let Some(t) = ray_sphere(o, d, c, r) {
            if best.is_none_or(|(bt, _)| t < bt) {
                let p = o + d * t;
                best = Some((t, (p - c) / r));
            }
        }
    }
    best
}

fn bounding_radius(shape: &Shape) -> f64 {
    match shape {
        Shape::Sphere { radius } => *radius,
        Shape::Box { half_extents: h } => (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt(),
        Shape::Cylinder { radius, half_height } => radius.hypot(*half_height),
        Shape::Capsule { radius, half_height } => radius + half_height,
        Shape::Pipe { .. } => f64::INFINITY,
    }
}

/// Closest intersection of a world ray with one primitive.
pub fn intersect_primitive(p: &Primitive, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    if let Shape::Pipe { points, radius } = &p.shape {
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for w in points.windows(2) {
            let (a, b) = (Vector3::from(w[0]), Vector3::from(w[1]));
            if let Some(h) = ray_segment_capsule(origin, dir, &a, &b, *radius) {
                if best.is_none_or(|(bt, _)| h.0 < bt) {
                    best = Some(h);
                }
            }
        }
        return best;
    }
    // cheap bounding-sphere reject
    let c = p.pose.translation;
    let br = bounding_radius(&p.shape);
    let oc = origin - c;
    let b = oc.dot(dir);
    if oc.dot(&oc) - b * b > br * br && oc.norm() > br {
        return None;
    }
    let o = p.pose.inverse_transform_point(origin);
    let d = p.pose.rotation.inverse() * dir;
    let local = match &p.shape {
        Shape::Sphere { radius } => {
            ray_sphere(&o, &d, &Vector3::zeros(), *radius).map(|t| (t, (o + d * t) / *radius))
        }
        Shape::Box { half_extents } => ray_box(&o, &d, half_extents),
        Shape::Cylinder { radius, half_height } => ray_cylinder(&o, &d, *radius, *half_height),
        Shape::Capsule { radius, half_height } => ray_segment_capsule(
            &o,
            &d,
            &Vector3::new(0.0, 0.0, -half_height),
            &Vector3::new(0.0, 0.0, *half_height),
            *radius,
        ),
        Shape::Pipe { .. } => unreachable!(),
    };
    local.map(|(t, n)| (t, p.pose.rotation * n))
}

/// Closest hit of a world ray against the ground plane and every primitive.
pub fn cast_ray(scene: &SceneGraph, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    if dir.z < -1e-15 {
        let t = (scene.ground.z - origin.z) / dir.z;
        if t > 1e-9 && t <= max_range {
            best = Some(Hit {
                distance: t,
                normal: Vector3::z(),
                label: Semantic::Ground,
                color: scene.ground.color,
            });
        }
    }
    for p in &scene.primitives {
        if let Some((t, n)) = intersect_primitive(p, origin, dir) {
            if t <= max_range && best.is_none_or(|h| t < h.distance) {
                best = Some(Hit {
                    distance: t,
                    normal: n,
                    label: p.label,
                    color: p.color,
                });
            }
        }
    }
    best
}

/// Radiance reaching the camera from a hit: base color, ambient level with a
/// sun-facing term, attenuated per channel by `exp(-attenuation * distance)`.
pub fn shade(scene: &SceneGraph, hit: &Hit, dir: &Vector3<f64>) -> [f64; 3] {
    let o = &scene.optics;
    let sun = -Vector3::from(o.sun_direction);
    let mut n = hit.normal;
    if n.dot(dir) > 0.0 {
        n = -n;
    }
    let lambert = 0.5 + 0.5 * n.dot(&sun).max(0.0);
    let light = o.ambient * lambert;
    let mut c = [0.0; 3];
    for (i, ci) in c.iter_mut().enumerate() {
        *ci = (hit.color[i] * light * (-o.attenuation[i] * hit.distance).exp()).clamp(0.0, 1.0);
    }
    c
}

/// Renders one eye. `eye` is the world pose of the optical frame.
pub fn render_view(scene: &SceneGraph, eye: &Pose, cam: &CameraParams) -> Image {
    let n = cam.width * cam.height;
    let mut rgb = Vec::with_capacity(3 * n);
    let mut depth = Vec::with_capacity(n);
    let mut semantic = Vec::with_capacity(n);
    let origin = eye.translation;
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir = eye.rotation * cam.pixel_direction(u, v);
            match cast_ray(scene, &origin, &dir, cam.max_range) {
                Some(hit) => {
                    rgb.extend_from_slice(&shade(scene, &hit, &dir));
                    depth.push(hit.distance);
                    semantic.push(hit.label as u8);
                }
                None => {
                    rgb.extend_from_slice(&scene.optics.water_color);
                    depth.push(NO_HIT);
                    semantic.push(Semantic::Water as u8);
                }
            }
        }
    }
    Image {
        width: cam.width,
        height: cam.height,
        rgb,
        depth,
        semantic,
    }
}

/// Renders the stereo pair for a vehicle at `body` pose.
pub fn render_stereo(scene: &SceneGraph, body: &Pose, cam: &CameraParams) -> StereoFrame {
    let (left, right) = cam.eye_poses(body);
    StereoFrame {
        left: render_view(scene, &left, cam),
        right: render_view(scene, &right, cam),
        focal_px: cam.focal_px,
        principal_point: cam.principal_point(),
        baseline: cam.baseline,
    }
}
