//! Scene graphs and the nine randomized scenario builders.

use crate::geometry::Pose;
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

/// Semantic class written into the label channel of rendered frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Semantic {
    Water = 0,
    Ground = 1,
    Rock = 2,
    Pipeline = 3,
    Hull = 4,
    Structure = 5,
    Boat = 6,
    RedCylinder = 7,
    BlueCylinder = 8,
    PipePiece = 9,
    DropBox = 10,
    Wall = 11,
}

impl Semantic {
    pub const COUNT: u8 = 12;

    pub fn is_graspable(self) -> bool {
        matches!(self, Semantic::RedCylinder | Semantic::BlueCylinder | Semantic::PipePiece)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, half_height: f64 },
    /// Axis along local z; hemispherical caps at `z = ±half_height`.
    Capsule { radius: f64, half_height: f64 },
    /// Chain of capsules through world-frame points; the primitive pose is ignored.
    Pipe { points: Vec<[f64; 3]>, radius: f64 },
}

impl Shape {
    pub fn sizes_positive(&self) -> bool {
        match self {
            Shape::Sphere { radius } => *radius > 0.0,
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
            Shape::Cylinder { radius, half_height } | Shape::Capsule { radius, half_height } => {
                *radius > 0.0 && *half_height > 0.0
            }
            Shape::Pipe { points, radius } => *radius > 0.0 && points.len() >= 2,
        }
    }
}

/// Axis-aligned region a randomized placement was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    /// The same box moved up by `dz`.
    pub fn raised(self, dz: f64) -> Bounds {
        let mut b = self;
        b.min[2] += dz;
        b.max[2] += dz;
        b
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: u32,
    pub shape: Shape,
    pub pose: Pose,
    pub label: Semantic,
    pub color: [f64; 3],
    pub placement: Option<Bounds>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterOptics {
    /// Per-channel attenuation, 1/m.
    pub attenuation: [f64; 3],
    /// Ambient light level in `[0, 1]`.
    pub ambient: f64,
    /// Unit vector the sunlight travels along (pointing down into the water).
    pub sun_direction: [f64; 3],
    pub water_color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub z: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub scenario: ScenarioId,
    pub ground: GroundPlane,
    pub primitives: Vec<Primitive>,
    pub optics: WaterOptics,
    pub anchors: BTreeMap<String, Pose>,
    pub routes: BTreeMap<String, Vec<[f64; 3]>>,
}

impl SceneGraph {
    pub fn seabed_z(&self) -> f64 {
        self.ground.z
    }

    /// Water depth of the seabed, meters.
    pub fn terrain_depth(&self) -> f64 {
        -self.ground.z
    }

    pub fn primitive(&self, id: u32) -> Option<&Primitive> {
        self.primitives.iter().find(|p| p.id == id)
    }

    pub fn primitive_mut(&mut self, id: u32) -> Option<&mut Primitive> {
        self.primitives.iter_mut().find(|p| p.id == id)
    }

    pub fn find_label(&self, label: Semantic) -> Option<&Primitive> {
        self.primitives.iter().find(|p| p.label == label)
    }

    pub fn anchor(&self, name: &str) -> Option<&Pose> {
        self.anchors.get(name)
    }

    pub fn route(&self, name: &str) -> Option<Vec<Vector3<f64>>> {
        self.routes
            .get(name)
            .map(|r| r.iter().map(|p| Vector3::from(*p)).collect())
    }

    pub fn is_valid(&self) -> bool {
        self.primitives.iter().all(|p| p.shape.sizes_positive())
            && self.optics.attenuation.iter().all(|a| *a >= 0.0)
            && (0.0..=1.0).contains(&self.optics.ambient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Seabed,
    Pipeline,
    IndustrialPool,
    ChargeStation,
    Lake,
    OpenSea,
    Factory,
    WreckModern,
    WreckAncient,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 9] = [
        ScenarioId::Seabed,
        ScenarioId::Pipeline,
        ScenarioId::IndustrialPool,
        ScenarioId::ChargeStation,
        ScenarioId::Lake,
        ScenarioId::OpenSea,
        ScenarioId::Factory,
        ScenarioId::WreckModern,
        ScenarioId::WreckAncient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Seabed => "seabed",
            ScenarioId::Pipeline => "pipeline",
            ScenarioId::IndustrialPool => "industrial_pool",
            ScenarioId::ChargeStation => "charge_station",
            ScenarioId::Lake => "lake",
            ScenarioId::OpenSea => "open_sea",
            ScenarioId::Factory => "factory",
            ScenarioId::WreckModern => "wreck_modern",
            ScenarioId::WreckAncient => "wreck_ancient",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown scenario '{s}'"))
    }
}

/// Inclusive sampling range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsRanges {
    pub attenuation_red: Range,
    pub attenuation_green: Range,
    pub attenuation_blue: Range,
    pub ambient: Range,
    /// Sun elevation above the horizon, radians.
    pub sun_elevation: Range,
}

impl Default for OpticsRanges {
    fn default() -> Self {
        Self {
            attenuation_red: Range::new(0.25, 0.6),
            attenuation_green: Range::new(0.05, 0.2),
            attenuation_blue: Range::new(0.03, 0.15),
            ambient: Range::new(0.45, 1.0),
            sun_elevation: Range::new(0.7, FRAC_PI_2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    /// Scale of randomized object displacement, meters.
    pub placement_jitter: f64,
    pub optics: OpticsRanges,
}

impl ScenarioSpec {
    pub fn new(id: ScenarioId) -> Self {
        Self {
            id,
            placement_jitter: 1.0,
            optics: OpticsRanges::default(),
        }
    }
}

/// Ids of the graspable objects placed by the manipulation scenarios.
pub mod objects {
    pub const RED_CYLINDER: u32 = 100;
    pub const BLUE_CYLINDER: u32 = 101;
    pub const PIPE0: u32 = 102;
    pub const PIPE1: u32 = 103;
    pub const DROP_BOX: u32 = 110;
    pub const BOAT: u32 = 120;
    pub const HULL: u32 = 130;
}

struct Builder {
    rng: ChaCha8Rng,
    jitter: f64,
    primitives: Vec<Primitive>,
    anchors: BTreeMap<String, Pose>,
    routes: BTreeMap<String, Vec<[f64; 3]>>,
    next_id: u32,
}

impl Builder {
    fn add(&mut self, shape: Shape, pose: Pose, label: Semantic, color: [f64; 3]) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.add_with_id(id, shape, pose, label, color, None);
        id
    }

    fn add_with_id(
        &mut self,
        id: u32,
        shape: Shape,
        pose: Pose,
        label: Semantic,
        color: [f64; 3],
        placement: Option<Bounds>,
    ) {
        self.primitives.push(Primitive {
            id,
            shape,
            pose,
            label,
            color,
            placement,
        });
    }

    /// Uniform point in an axis-aligned box; returns the point and the box.
    fn place(&mut self, center: [f64; 3], half: [f64; 3]) -> (Vector3<f64>, Bounds) {
        let mut p = [0.0; 3];
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for i in 0..3 {
            let h = half[i] * self.jitter;
            min[i] = center[i] - h;
            max[i] = center[i] + h;
            p[i] = Range::new(min[i], max[i]).sample(&mut self.rng);
        }
        (Vector3::from(p), Bounds { min, max })
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        Range::new(lo, hi).sample(&mut self.rng)
    }

    fn anchor(&mut self, name: &str, pose: Pose) {
        self.anchors.insert(name.to_string(), pose);
    }

    fn rocks(&mut self, n: usize, seabed: f64, region: Bounds, keep_out: &[(Vector3<f64>, f64)]) {
        let mut placed = 0;
        let mut tries = 0;
        while placed < n && tries < 50 * n {
            tries += 1;
            let x = self.uniform(region.min[0], region.max[0]);
            let y = self.uniform(region.min[1], region.max[1]);
            let r = self.uniform(0.3, 1.0);
            let c = Vector3::new(x, y, seabed + 0.3 * r);
            if keep_out
                .iter()
                .any(|(k, rad)| (Vector3::new(k.x, k.y, 0.0) - Vector3::new(x, y, 0.0)).norm() < rad + r)
            {
                continue;
            }
            let shade = self.uniform(0.3, 0.5);
            self.add(
                Shape::Sphere { radius: r },
                Pose::from_translation(c.x, c.y, c.z),
                Semantic::Rock,
                [shade, shade * 0.95, shade * 0.85],
            );
            placed += 1;
        }
    }

    /// Graspable set laid out in a row in front of the start pose, plus the
    /// optional drop box.
    fn manipulation_objects(&mut self, seabed: f64, with_box: bool) {
        use objects::*;
        let slots = [
            (RED_CYLINDER, -1.2, Semantic::RedCylinder),
            (BLUE_CYLINDER, -0.4, Semantic::BlueCylinder),
            (PIPE0, 0.4, Semantic::PipePiece),
            (PIPE1, 1.2, Semantic::PipePiece),
        ];
        for (id, y, label) in slots {
            let (shape, z, yaw_base, color) = match label {
                Semantic::RedCylinder => (
                    Shape::Cylinder { radius: 0.04, half_height: 0.1 },
                    seabed + 0.1,
                    0.0,
                    [0.85, 0.1, 0.1],
                ),
                Semantic::BlueCylinder => (
                    Shape::Cylinder { radius: 0.04, half_height: 0.1 },
                    seabed + 0.1,
                    0.0,
                    [0.1, 0.2, 0.9],
                ),
                _ => (
                    Shape::Capsule { radius: 0.035, half_height: 0.15 },
                    seabed + 0.035,
                    if id == PIPE0 { 0.0 } else { FRAC_PI_2 },
                    [0.75, 0.7, 0.3],
                ),
            };
            let (mut p, bounds) = self.place([4.0, y, z], [0.3, 0.15, 0.0]);
            p.z = z;
            let yaw = self.uniform(-0.3, 0.3) + yaw_base;
            let rot = if matches!(label, Semantic::PipePiece) {
                // lay the capsule axis horizontal
                Pose::from_euler(0.0, FRAC_PI_2, yaw, p)
            } else {
                Pose::from_yaw(yaw, p)
            };
            self.add_with_id(id, shape, rot, label, color, Some(bounds));
        }
        if with_box {
            let (mut p, bounds) = self.place([2.5, 3.0, seabed + 0.15], [0.3, 0.3, 0.0]);
            p.z = seabed + 0.15;
            self.add_with_id(
                DROP_BOX,
                Shape::Box { half_extents: [0.35, 0.35, 0.15] },
                Pose::from_translation(p.x, p.y, p.z),
                Semantic::DropBox,
                [0.2, 0.6, 0.25],
                Some(bounds),
            );
            self.anchor("drop_box", Pose::from_translation(p.x, p.y, p.z));
        }
        self.anchor("start", Pose::from_translation(0.0, 0.0, seabed + 1.6));
    }

    fn finish(self, id: ScenarioId, ground: GroundPlane, optics: WaterOptics) -> SceneGraph {
        SceneGraph {
            scenario: id,
            ground,
            primitives: self.primitives,
            optics,
            anchors: self.anchors,
            routes: self.routes,
        }
    }
}

fn sample_optics(r: &OpticsRanges, rng: &mut ChaCha8Rng, water_color: [f64; 3]) -> WaterOptics {
    let attenuation = [
        r.attenuation_red.sample(rng),
        r.attenuation_green.sample(rng),
        r.attenuation_blue.sample(rng),
    ];
    let ambient = r.ambient.sample(rng);
    let elevation = r.sun_elevation.sample(rng);
    let azimuth = Range::new(0.0, TAU).sample(rng);
    let sun_direction = [
        -elevation.cos() * azimuth.cos(),
        -elevation.cos() * azimuth.sin(),
        -elevation.sin(),
    ];
    let fade = ambient.sqrt();
    WaterOptics {
        attenuation,
        ambient,
        sun_direction,
        water_color: water_color.map(|c| c * fade),
    }
}

/// Evenly spaced points along a polyline, at most `spacing` apart, endpoints included.
pub fn resample_polyline(points: &[Vector3<f64>], spacing: f64) -> Vec<Vector3<f64>> {
    let lengths: Vec<f64> = points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let total: f64 = lengths.iter().sum();
    let n = ((total / spacing).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let s = total * k as f64 / n as f64;
        while seg + 1 < lengths.len() && s > seg_start + lengths[seg] {
            seg_start += lengths[seg];
            seg += 1;
        }
        let frac = if lengths[seg] > 0.0 { (s - seg_start) / lengths[seg] } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]) * frac);
    }
    out.push(*points.last().unwrap());
    out
}

fn to_arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Builds a randomized scene. Pure function of `(spec, seed)`.
pub fn build_scenario(spec: &ScenarioSpec, seed: u64) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce9_e000_0000 ^ (spec.id as u64));
    let water = match spec.id {
        ScenarioId::IndustrialPool | ScenarioId::Factory => [0.1, 0.35, 0.45],
        ScenarioId::Lake => [0.12, 0.3, 0.22],
        _ => [0.04, 0.22, 0.38],
    };
    let optics = sample_optics(&spec.optics, &mut rng, water);
    let mut b = Builder {
        rng,
        jitter: spec.placement_jitter,
        primitives: Vec::new(),
        anchors: BTreeMap::new(),
        routes: BTreeMap::new(),
        next_id: 1,
    };
    let sand = [0.62, 0.56, 0.42];
    let concrete = [0.55, 0.55, 0.55];

    let ground = match spec.id {
        ScenarioId::Seabed => {
            let z = -6.0;
            b.manipulation_objects(z, true);
            b.rocks(
                8,
                z,
                Bounds { min: [-8.0, -10.0, 0.0], max: [14.0, 10.0, 0.0] },
                &[(Vector3::new(3.0, 0.5, 0.0), 4.5), (Vector3::zeros(), 2.0)],
            );
            GroundPlane { z, color: sand }
        }
        ScenarioId::Factory => {
            let z = -8.0;
            b.manipulation_objects(z, false);
            for i in 0..4 {
                let (p, bounds) = b.place([9.0 + 3.0 * i as f64, if i % 2 == 0 { -5.0 } else { 5.0 }, z + 1.0], [1.0, 1.0, 0.0]);
                let h = [1.0, 1.2, 1.0];
                b.add_with_id(
                    10 + i,
                    Shape::Box { half_extents: h },
                    Pose::from_translation(p.x, p.y, p.z),
                    Semantic::Structure,
                    [0.5, 0.45, 0.35],
                    Some(bounds),
                );
            }
            GroundPlane { z, color: concrete }
        }
        ScenarioId::Pipeline => {
            let z = -15.0;
            let radius = 0.3;
            let mut pts = Vec::new();
            for i in 0..6 {
                let x = 10.0 * i as f64;
                let y = if i == 0 { 0.0 } else { b.uniform(-2.0, 2.0) * b.jitter };
                pts.push(Vector3::new(x, y, z + radius));
            }
            b.add(
                Shape::Pipe { points: pts.iter().map(to_arr).collect(), radius },
                Pose::identity(),
                Semantic::Pipeline,
                [0.8, 0.55, 0.2],
            );
            let route: Vec<_> = resample_polyline(&pts, 2.5)
                .iter()
                .map(|p| to_arr(&(p + Vector3::new(0.0, 0.0, radius + 1.5))))
                .collect();
            b.routes.insert("inspect".into(), route);
            b.anchor("start", Pose::from_translation(-3.0, 0.0, z + 3.0));
            b.anchor("pipe_start", Pose::from_translation(pts[0].x, pts[0].y, pts[0].z));
            b.rocks(
                10,
                z,
                Bounds { min: [-5.0, -12.0, 0.0], max: [55.0, 12.0, 0.0] },
                &pts.iter().map(|p| (*p, 3.5)).collect::<Vec<_>>(),
            );
            GroundPlane { z, color: sand }
        }
        ScenarioId::IndustrialPool => {
            let z = -5.0;
            let (half_l, half_w) = (15.0, 8.0);
            for (i, (cx, cy, hx, hy)) in [
                (0.0, half_w, half_l, 0.2),
                (0.0, -half_w, half_l, 0.2),
                (half_l, 0.0, 0.2, half_w),
                (-half_l, 0.0, 0.2, half_w),
            ]
            .into_iter()
            .enumerate()
            {
                b.add_with_id(
                    20 + i as u32,
                    Shape::Box { half_extents: [hx, hy, 2.5] },
                    Pose::from_translation(cx, cy, z + 2.5),
                    Semantic::Wall,
                    [0.7, 0.75, 0.8],
                    None,
                );
            }
            let (c, _) = b.place([0.0, 0.0, z], [1.0, 1.0, 0.0]);
            let (lx, ly) = (11.0, 4.0);
            let corners = [
                Vector3::new(c.x - lx, c.y - ly, z + 0.2),
                Vector3::new(c.x + lx, c.y - ly, z + 0.2),
                Vector3::new(c.x + lx, c.y + ly, z + 0.2),
                Vector3::new(c.x - lx, c.y + ly, z + 0.2),
                Vector3::new(c.x - lx, c.y - ly + 1.0, z + 0.2),
            ];
            b.add(
                Shape::Pipe { points: corners.iter().map(to_arr).collect(), radius: 0.2 },
                Pose::identity(),
                Semantic::Pipeline,
                [0.9, 0.4, 0.1],
            );
            let route: Vec<_> = resample_polyline(&corners, 2.5)
                .iter()
                .map(|p| to_arr(&(p + Vector3::new(0.0, 0.0, 1.7))))
                .collect();
            b.routes.insert("inspect".into(), route);
            b.anchor("start", Pose::from_translation(corners[0].x - 2.0, corners[0].y, z + 2.5));
            GroundPlane { z, color: [0.75, 0.8, 0.82] }
        }
        ScenarioId::ChargeStation => {
            let z = -12.0;
            let (st, bounds) = b.place([25.0, 0.0, z], [1.0, 1.0, 0.0]);
            b.add_with_id(
                objects::HULL,
                Shape::Box { half_extents: [1.0, 1.5, 0.6] },
                Pose::from_translation(st.x, st.y, z + 0.6),
                Semantic::Structure,
                [0.3, 0.3, 0.35],
                Some(bounds.raised(0.6)),
            );
            b.add(
                Shape::Box { half_extents: [0.8, 1.4, 0.05] },
                Pose::from_euler(0.0, -0.3, 0.0, Vector3::new(st.x, st.y, z + 2.2)),
                Semantic::Structure,
                [0.15, 0.2, 0.6],
            );
            for dy in [-1.2, 1.2] {
                b.add(
                    Shape::Cylinder { radius: 0.1, half_height: 0.8 },
                    Pose::from_translation(st.x, st.y + dy, z + 1.4),
                    Semantic::Structure,
                    [0.6, 0.6, 0.6],
                );
            }
            // pillar on the direct line forces a detour through the corridor
            let (pillar, pb) = b.place([12.0, 0.0, z + 4.0], [0.5, 0.3, 0.0]);
            b.add_with_id(
                40,
                Shape::Cylinder { radius: 0.7, half_height: 4.0 },
                Pose::from_translation(pillar.x, pillar.y, pillar.z),
                Semantic::Structure,
                [0.45, 0.45, 0.4],
                Some(pb),
            );
            let depth = z + 2.5;
            let goal = Vector3::new(st.x - 2.5, st.y, depth);
            let corridor = [Vector3::new(pillar.x, pillar.y + 2.6, depth), goal];
            b.routes.insert("corridor".into(), corridor.iter().map(to_arr).collect());
            b.anchor("start", Pose::from_translation(0.0, 0.0, depth));
            b.anchor("goal", Pose::from_yaw(0.0, goal));
            b.anchor("charge_station", Pose::from_translation(st.x, st.y, z + 0.6));
            b.rocks(
                6,
                z,
                Bounds { min: [-6.0, -10.0, 0.0], max: [33.0, 10.0, 0.0] },
                &[(st, 3.5), (pillar, 4.0), (Vector3::zeros(), 2.5), (corridor[0], 2.5), (goal, 2.5)],
            );
            GroundPlane { z, color: sand }
        }
        ScenarioId::Lake => {
            let z = -10.0;
            let (tw, bounds) = b.place([48.0, 0.0, z], [2.0, 2.0, 0.0]);
            b.add_with_id(
                objects::HULL,
                Shape::Cylinder { radius: 1.2, half_height: 3.0 },
                Pose::from_translation(tw.x, tw.y, z + 3.0),
                Semantic::Structure,
                [0.7, 0.7, 0.65],
                Some(bounds.raised(3.0)),
            );
            b.add(
                Shape::Sphere { radius: 2.0 },
                Pose::from_translation(tw.x, tw.y, z + 7.5),
                Semantic::Structure,
                [0.75, 0.72, 0.6],
            );
            let depth = z + 3.0;
            let mut corridor = Vec::new();
            for (i, x) in [16.0, 32.0].into_iter().enumerate() {
                let side = if i == 0 { 1.0 } else { -1.0 };
                let (ob, obb) = b.place([x, 0.0, z + 2.5], [0.5, 0.4, 0.0]);
                b.add_with_id(
                    40 + i as u32,
                    Shape::Box { half_extents: [0.8, 0.8, 2.5] },
                    Pose::from_translation(ob.x, ob.y, ob.z),
                    Semantic::Rock,
                    [0.35, 0.33, 0.3],
                    Some(obb),
                );
                corridor.push(Vector3::new(ob.x, ob.y - side * 2.8, depth));
            }
            let goal = Vector3::new(tw.x - 3.5, tw.y, depth);
            corridor.push(goal);
            b.routes.insert("corridor".into(), corridor.iter().map(to_arr).collect());
            b.anchor("start", Pose::from_translation(0.0, 0.0, depth));
            b.anchor("goal", Pose::from_yaw(0.0, goal));
            b.anchor("water_tower", Pose::from_translation(tw.x, tw.y, z + 3.0));
            GroundPlane { z, color: [0.35, 0.32, 0.22] }
        }
        ScenarioId::OpenSea => {
            let z = -40.0;
            let heading = b.uniform(-PI, PI);
            let boat = Vector3::new(0.0, 0.0, -0.3);
            b.add_with_id(
                objects::BOAT,
                Shape::Box { half_extents: [1.6, 0.6, 0.3] },
                Pose::from_yaw(heading, boat),
                Semantic::Boat,
                [0.9, 0.9, 0.85],
                None,
            );
            b.anchor("boat_start", Pose::from_yaw(heading, boat));
            GroundPlane { z, color: sand }
        }
        ScenarioId::WreckModern | ScenarioId::WreckAncient => {
            let modern = spec.id == ScenarioId::WreckModern;
            let z = if modern { -25.0 } else { -20.0 };
            let (c, bounds) = b.place([20.0, 0.0, z], [2.0, 2.0, 0.0]);
            let yaw = b.uniform(-PI, PI);
            let (shape, lift, radius) = if modern {
                (Shape::Box { half_extents: [9.0, 2.5, 2.0] }, 2.0, 13.0)
            } else {
                (Shape::Capsule { radius: 2.0, half_height: 6.0 }, 1.5, 11.0)
            };
            let hull_pose = if modern {
                Pose::from_yaw(yaw, Vector3::new(c.x, c.y, z + lift))
            } else {
                Pose::from_euler(0.0, FRAC_PI_2, yaw, Vector3::new(c.x, c.y, z + lift))
            };
            b.add_with_id(
                objects::HULL,
                shape,
                hull_pose,
                Semantic::Hull,
                if modern { [0.45, 0.2, 0.15] } else { [0.4, 0.3, 0.2] },
                Some(bounds.raised(lift)),
            );
            let top = if modern {
                b.add(
                    Shape::Box { half_extents: [2.5, 1.8, 1.5] },
                    Pose::from_yaw(yaw, Vector3::new(c.x, c.y, z + 5.5)),
                    Semantic::Hull,
                    [0.5, 0.5, 0.45],
                );
                z + 7.0
            } else {
                b.add(
                    Shape::Cylinder { radius: 0.2, half_height: 3.0 },
                    Pose::from_translation(c.x, c.y, z + 6.0),
                    Semantic::Hull,
                    [0.35, 0.25, 0.15],
                );
                z + 3.5
            };
            let depth = top + 1.0;
            let start_angle = PI;
            let n = 16;
            let route: Vec<[f64; 3]> = (0..=n)
                .map(|k| {
                    let a = start_angle + TAU * k as f64 / n as f64;
                    [c.x + radius * a.cos(), c.y + radius * a.sin(), depth]
                })
                .collect();
            b.routes.insert("scan".into(), route);
            b.anchor("hull_center", Pose::from_yaw(yaw, Vector3::new(c.x, c.y, z + lift)));
            b.anchor("start", Pose::from_translation(c.x - radius - 3.0, c.y, depth));
            b.rocks(
                6,
                z,
                Bounds { min: [0.0, -20.0, 0.0], max: [40.0, 20.0, 0.0] },
                &[(c, radius + 3.0)],
            );
            GroundPlane { z, color: sand }
        }
    };
    b.finish(spec.id, ground, optics)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builds_are_deterministic() {
        for id in ScenarioId::ALL {
            let spec = ScenarioSpec::new(id);
            assert_eq!(build_scenario(&spec, 3), build_scenario(&spec, 3));
        }
    }

    #[test]
    fn seeds_change_the_scene() {
        let spec = ScenarioSpec::new(ScenarioId::Seabed);
        assert_ne!(build_scenario(&spec, 1), build_scenario(&spec, 2));
    }

    #[test]
    fn every_scenario_has_a_start_and_a_task_anchor() {
        for id in ScenarioId::ALL {
            let s = build_scenario(&ScenarioSpec::new(id), 0);
            assert!(s.is_valid(), "{id}");
            assert!(s.anchors.contains_key("start") || s.anchors.contains_key("boat_start"), "{id}");
            assert!(!s.anchors.is_empty(), "{id}");
        }
    }

    #[test]
    fn resampling_keeps_endpoints() {
        let pts = [Vector3::zeros(), Vector3::new(5.0, 0.0, 0.0), Vector3::new(5.0, 5.0, 0.0)];
        let r = resample_polyline(&pts, 2.0);
        assert_eq!(r[0], pts[0]);
        assert_eq!(*r.last().unwrap(), pts[2]);
        for w in r.windows(2) {
            assert!((w[1] - w[0]).norm() <= 2.0 + 1e-12);
        }
        assert_eq!(r.len(), 6);
    }

    #[test]
    fn scenario_names_round_trip() {
        for id in ScenarioId::ALL {
            assert_eq!(id.name().parse::<ScenarioId>().unwrap(), id);
        }
        assert!("atlantis".parse::<ScenarioId>().is_err());
    }
}
