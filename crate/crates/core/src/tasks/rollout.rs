//! Episode execution: world state, observation recording and the policy loop.

use super::{TaskFamily, TaskPhase, TaskSpec};
use crate::control::PidGains;
use crate::dataset::{frame_time, frames_for_duration, FrameRecord, StoredStereo, ARM_DIM, DVL_NO_ALTITUDE, STATE_DIM};
use crate::geometry::{target_in_robot_frame, Pose};
use crate::vehicle::{step_dynamics, ActionVector, Graspable, Surroundings, VehicleError, VehicleParams, VehicleState, ACTION_DIM, NUM_JOINTS};
use crate::world::{
    build_scenario, dvl_read, imu_read, pressure_read, render_stereo, objects, Bounds, CameraParams, OpticsRanges,
    ScenarioSpec, SceneGraph, SensorParams, Shape,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Physics step, seconds.
pub const PHYSICS_DT: f64 = 0.01;
/// Physics steps per recorded frame.
pub const SUBSTEPS: usize = 10;
/// Recording period, seconds.
pub const FRAME_DT: f64 = PHYSICS_DT * SUBSTEPS as f64;

const BOAT_SPEED: f64 = 0.5;
/// Vertical speed of released objects settling onto whatever is below them.
const SINK_SPEED: f64 = 0.5;

/// Everything that parameterizes the simulator apart from the task and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub vehicle: VehicleParams,
    pub gains: PidGains,
    pub camera: CameraParams,
    pub sensors: SensorParams,
    pub optics: OpticsRanges,
    /// Scale of the per-seed object placement randomization.
    pub placement_jitter: f64,
    /// Scale of the per-seed start pose offset.
    pub start_jitter: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            gains: PidGains::default(),
            camera: CameraParams::default(),
            sensors: SensorParams::default(),
            optics: OpticsRanges::default(),
            placement_jitter: 1.0,
            start_jitter: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloutError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("scene for task `{task}` lacks `{what}`")]
    Scene { task: &'static str, what: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy produced a non-finite action")]
    NonFinite,
    #[error("policy inference failed: {0}")]
    Inference(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyStatus {
    Running,
    /// The task is complete; the current action is the last one recorded.
    Finished,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub action: ActionVector,
    pub phase: Option<TaskPhase>,
    pub status: PolicyStatus,
}

impl PolicyOutput {
    pub fn running(action: ActionVector) -> Self {
        Self {
            action,
            phase: None,
            status: PolicyStatus::Running,
        }
    }
}

/// What a policy sees at each tick: the frame being recorded (action not yet
/// filled in).
pub type Observation = FrameRecord;

/// Closed-loop controller. Privileged policies may read the world directly;
/// learned ones should only use the observation.
pub trait Policy {
    fn reset(&mut self, _world: &World) {}
    fn act(&mut self, world: &World, obs: &Observation) -> Result<PolicyOutput, PolicyError>;
}

/// Uniformly random actions, for baselines.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    pub scale: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, scale: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scale,
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _world: &World, _obs: &Observation) -> Result<PolicyOutput, PolicyError> {
        let mut a = [0.0; ACTION_DIM];
        for v in a.iter_mut() {
            *v = self.rng.random_range(-1.0..=1.0) * self.scale;
        }
        let mut thrusters = [0.0; 8];
        thrusters.copy_from_slice(&a[..8]);
        let mut joints = [0.0; NUM_JOINTS];
        joints.copy_from_slice(&a[8..12]);
        Ok(PolicyOutput::running(ActionVector::new(thrusters, joints, a[12])))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    /// Render stereo images into every frame.
    pub render: bool,
    /// Overrides the task timeout.
    pub max_duration: Option<f64>,
}

/// Ground-truth snapshot taken alongside each recorded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub robot: Pose,
    pub gripper_tip: Vector3<f64>,
    /// World pose of the task target at this tick.
    pub target: Pose,
    /// Current pose of the object a grasping task is about.
    pub object: Option<Pose>,
    /// Whether that object is in the gripper.
    pub attached: bool,
}

/// Static facts about an episode that success checks need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskContext {
    pub goal: Option<Vector3<f64>>,
    pub route: Vec<Vector3<f64>>,
    pub object_spawn: Option<Pose>,
    /// Horizontal footprint of the drop box.
    pub drop_zone: Option<Bounds>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub samples: Vec<TraceSample>,
    pub context: TaskContext,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub frames: Vec<FrameRecord>,
    pub trace: EpisodeTrace,
    /// Phase reported by the policy at each frame, if any.
    pub phases: Vec<Option<TaskPhase>>,
    /// Set when the policy gave up or the simulation diverged.
    pub failure: Option<String>,
    /// True when the episode ran into its time limit.
    pub timed_out: bool,
}

impl Rollout {
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 * FRAME_DT
    }

    /// Consecutive distinct phases.
    pub fn phase_sequence(&self) -> Vec<TaskPhase> {
        let mut out: Vec<TaskPhase> = Vec::new();
        for p in self.phases.iter().flatten() {
            if out.last() != Some(p) {
                out.push(*p);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct TrackedObject {
    id: u32,
    /// Height of the object origin above the surface it rests on.
    rest_offset: f64,
}

#[derive(Debug, Clone)]
struct Boat {
    heading0: f64,
    position: Vector3<f64>,
    time: f64,
}

impl Boat {
    fn heading(&self) -> f64 {
        self.heading0 + 0.3 * (2.0 * PI * self.time / 45.0).sin()
    }

    fn advance(&mut self, dt: f64) {
        let h = self.heading();
        self.position += Vector3::new(h.cos(), h.sin(), 0.0) * BOAT_SPEED * dt;
        self.time += dt;
    }

    fn pose(&self) -> Pose {
        Pose::from_yaw(self.heading(), self.position)
    }

    fn velocity(&self) -> Vector3<f64> {
        let h = self.heading();
        Vector3::new(h.cos(), h.sin(), 0.0) * BOAT_SPEED
    }
}

/// Simulated environment of one episode.
#[derive(Debug, Clone)]
pub struct World {
    pub task: TaskSpec,
    pub cfg: SimConfig,
    pub scene: SceneGraph,
    pub vehicle: VehicleState,
    tick: usize,
    objects: Vec<TrackedObject>,
    object_spawn: Option<Pose>,
    target_grasped: bool,
    boat: Option<Boat>,
    route: Vec<Vector3<f64>>,
    covered: Vec<bool>,
    world_velocity: Vector3<f64>,
    accel_world: Vector3<f64>,
    sensor_rng: ChaCha8Rng,
}

fn yaw_towards(from: &Vector3<f64>, to: &Vector3<f64>) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

impl World {
    pub fn new(task: &TaskSpec, cfg: &SimConfig, seed: u64) -> Result<World, RolloutError> {
        cfg.vehicle.validate().map_err(|e| RolloutError::Config(e.to_string()))?;
        if !cfg.gains.is_valid() {
            return Err(RolloutError::Config("controller gains must be non-negative".into()));
        }
        let missing = |what: &str| RolloutError::Scene { task: task.id, what: what.to_string() };
        let spec = ScenarioSpec {
            placement_jitter: cfg.placement_jitter,
            optics: cfg.optics,
            ..ScenarioSpec::new(task.scenario)
        };
        let mut scene = build_scenario(&spec, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0e91_50de_7a5c_0001);
        let seabed = scene.seabed_z();

        let mut object_spawn = None;
        if let Some(obj) = task.object {
            let id = obj.object_id();
            let prim = scene.primitive_mut(id).ok_or_else(|| missing("target object"))?;
            if obj.perturbed() {
                let dx = rng.random_range(-0.35..=0.35);
                let dy = rng.random_range(-0.2..=0.2);
                let yaw = rng.random_range(-PI..PI);
                let t = prim.pose.translation + Vector3::new(dx, dy, 0.0);
                prim.pose = Pose::from_yaw(yaw, t);
            }
            object_spawn = Some(prim.pose);
        }
        let objects = scene
            .primitives
            .iter()
            .filter(|p| p.label.is_graspable())
            .map(|p| TrackedObject {
                id: p.id,
                rest_offset: p.pose.translation.z - seabed,
            })
            .collect();

        let route = match task.family {
            TaskFamily::Goto => scene.route("corridor").ok_or_else(|| missing("corridor route"))?,
            TaskFamily::Scan => scene.route("scan").ok_or_else(|| missing("scan route"))?,
            TaskFamily::Inspect => scene.route("inspect").ok_or_else(|| missing("inspect route"))?,
            _ => Vec::new(),
        };

        let mut boat = None;
        let start = if task.family == TaskFamily::Follow {
            let b = *scene.anchor("boat_start").ok_or_else(|| missing("boat_start anchor"))?;
            let h = b.yaw();
            let behind = Vector3::new(h.cos(), h.sin(), 0.0) * -2.4;
            boat = Some(Boat {
                heading0: h,
                position: b.translation,
                time: 0.0,
            });
            Pose::from_yaw(h, Vector3::new(b.translation.x + behind.x, b.translation.y + behind.y, -2.0))
        } else {
            let s = scene.anchor("start").ok_or_else(|| missing("start anchor"))?.translation;
            let facing = match (object_spawn, route.first()) {
                (Some(o), _) => o.translation,
                (None, Some(w)) => *w,
                (None, None) => s + Vector3::x(),
            };
            Pose::from_yaw(yaw_towards(&s, &facing), s)
        };
        let j = cfg.start_jitter;
        let offset = Vector3::new(
            rng.random_range(-0.3..=0.3) * j,
            rng.random_range(-0.3..=0.3) * j,
            rng.random_range(-0.15..=0.15) * j,
        );
        let yaw = start.yaw() + rng.random_range(-0.2..=0.2) * j;
        let mut p = start.translation + offset;
        p.z = p.z.max(seabed + cfg.vehicle.hull_radius + 0.1);
        let vehicle = VehicleState::at_rest(Pose::from_yaw(yaw, p), &cfg.vehicle);

        let covered = vec![false; route.len()];
        let mut world = World {
            task: task.clone(),
            cfg: cfg.clone(),
            scene,
            vehicle,
            tick: 0,
            objects,
            object_spawn,
            target_grasped: false,
            boat,
            route,
            covered,
            world_velocity: Vector3::zeros(),
            accel_world: Vector3::zeros(),
            sensor_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5e45_0a11_0000_0002),
        };
        world.sync_boat();
        Ok(world)
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn time(&self) -> f64 {
        frame_time(self.tick)
    }

    pub fn route(&self) -> &[Vector3<f64>] {
        &self.route
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn boat_pose(&self) -> Option<Pose> {
        self.boat.as_ref().map(Boat::pose)
    }

    pub fn boat_velocity(&self) -> Option<Vector3<f64>> {
        self.boat.as_ref().map(Boat::velocity)
    }

    pub fn object_spawn(&self) -> Option<Pose> {
        self.object_spawn
    }

    /// Current pose of the task's object, for grasping tasks.
    pub fn object_pose(&self) -> Option<Pose> {
        let id = self.task.object?.object_id();
        self.scene.primitive(id).map(|p| p.pose)
    }

    pub fn object_attached(&self) -> bool {
        match (self.task.object, &self.vehicle.attached) {
            (Some(o), Some(a)) => a.object_id == o.object_id(),
            _ => false,
        }
    }

    pub fn gripper_tip(&self) -> Vector3<f64> {
        self.vehicle.gripper_pose(&self.cfg.vehicle).translation
    }

    pub fn drop_zone(&self) -> Option<Bounds> {
        let p = self.scene.primitive(objects::DROP_BOX)?;
        match p.shape {
            Shape::Box { half_extents: h } => {
                let c = p.pose.translation;
                Some(Bounds {
                    min: [c.x - h[0], c.y - h[1], c.z - h[2]],
                    max: [c.x + h[0], c.y + h[1], c.z + h[2]],
                })
            }
            _ => None,
        }
    }

    pub fn goal(&self) -> Option<Vector3<f64>> {
        match self.task.family {
            TaskFamily::Goto => self.scene.anchor("goal").map(|p| p.translation),
            _ => None,
        }
    }

    /// World pose the episode is currently about.
    pub fn target_pose(&self) -> Pose {
        let anchor = |name: &str| self.scene.anchor(name).copied().unwrap_or_else(Pose::identity);
        match self.task.family {
            TaskFamily::Goto => anchor("goal"),
            TaskFamily::Follow => self.boat_pose().unwrap_or_else(Pose::identity),
            TaskFamily::Scan => anchor("hull_center"),
            TaskFamily::Inspect => {
                let n = self.route.len();
                let i = self.covered.iter().position(|c| !c).unwrap_or(n - 1);
                let (a, b) = if i + 1 < n { (i, i + 1) } else { (i.saturating_sub(1), i) };
                Pose::from_yaw(yaw_towards(&self.route[a], &self.route[b]), self.route[i])
            }
            TaskFamily::Pick => self.object_pose().unwrap_or_else(Pose::identity),
            TaskFamily::Transfer => {
                if self.target_grasped {
                    anchor("drop_box")
                } else {
                    self.object_pose().unwrap_or_else(Pose::identity)
                }
            }
        }
    }

    fn context(&self) -> TaskContext {
        TaskContext {
            goal: self.goal(),
            route: self.route.clone(),
            object_spawn: self.object_spawn,
            drop_zone: self.drop_zone(),
        }
    }

    fn sample(&self) -> TraceSample {
        TraceSample {
            time: self.time(),
            robot: self.vehicle.pose,
            gripper_tip: self.gripper_tip(),
            target: self.target_pose(),
            object: self.object_pose(),
            attached: self.object_attached(),
        }
    }

    fn update_coverage(&mut self) {
        let p = self.vehicle.pose.translation;
        let r = self.task.success.coverage_radius;
        for (c, w) in self.covered.iter_mut().zip(&self.route) {
            *c |= (p - w).norm() <= r;
        }
    }

    /// Sensor readings and labels for the current tick. `prev_action` is
    /// echoed into the state vector.
    pub fn observe(&mut self, prev_action: &ActionVector, render: bool) -> FrameRecord {
        self.update_coverage();
        let s = &self.cfg.sensors;
        let v = &self.vehicle;
        let imu = imu_read(v, &self.accel_world, &s.imu, &mut self.sensor_rng);
        let dvl = dvl_read(v, &self.scene, &s.dvl, &mut self.sensor_rng);
        let pressure = pressure_read(v.depth(), s.pressure_sigma, &mut self.sensor_rng);

        let mut state = [0.0; STATE_DIM];
        state[..ACTION_DIM].copy_from_slice(&prev_action.0);
        state[ACTION_DIM..ACTION_DIM + 7].copy_from_slice(&v.pose.to_array());
        state[ACTION_DIM + 7..].copy_from_slice(v.body_velocity().as_slice());

        let target_world = self.target_pose();
        let mut arm = [0.0; ARM_DIM];
        arm[..NUM_JOINTS].copy_from_slice(&v.joints);
        arm[NUM_JOINTS] = v.gripper_opening;

        let images = render.then(|| StoredStereo::from_frame(&render_stereo(&self.scene, &v.pose, &self.cfg.camera)));
        FrameRecord {
            timestamp: self.time(),
            images,
            imu: [imu.gyro.x, imu.gyro.y, imu.gyro.z, imu.accel.x, imu.accel.y, imu.accel.z],
            dvl: [
                dvl.velocity.x,
                dvl.velocity.y,
                dvl.velocity.z,
                dvl.altitude.unwrap_or(DVL_NO_ALTITUDE),
            ],
            pressure: [pressure.pressure, pressure.depth],
            state,
            action: [0.0; ACTION_DIM],
            target: target_in_robot_frame(&target_world, &v.pose).to_array(),
            target_world: target_world.to_array(),
            arm,
            instruction: self.task.instruction_id,
        }
    }

    fn sync_boat(&mut self) {
        if let Some(pose) = self.boat_pose() {
            if let Some(p) = self.scene.primitive_mut(objects::BOAT) {
                p.pose = pose;
            }
        }
    }

    fn rest_height(&self, obj: &TrackedObject, at: &Vector3<f64>) -> f64 {
        match self.drop_zone() {
            Some(b) if at.x >= b.min[0] && at.x <= b.max[0] && at.y >= b.min[1] && at.y <= b.max[1] => {
                b.max[2] + obj.rest_offset
            }
            _ => self.scene.seabed_z() + obj.rest_offset,
        }
    }

    /// Advances one recording period under a held action.
    pub fn step(&mut self, action: &ActionVector) -> Result<(), VehicleError> {
        let seabed = self.scene.seabed_z();
        for _ in 0..SUBSTEPS {
            let held = self.vehicle.attached.map(|a| a.object_id);
            let graspables: Vec<Graspable> = self
                .objects
                .iter()
                .filter(|o| Some(o.id) != held)
                .filter_map(|o| self.scene.primitive(o.id).map(|p| Graspable { id: o.id, pose: p.pose }))
                .collect();
            let surroundings = Surroundings {
                seabed_z: Some(seabed),
                graspables: &graspables,
            };
            self.vehicle = step_dynamics(&self.vehicle, action, &self.cfg.vehicle, PHYSICS_DT, &surroundings)?;

            let held = self.vehicle.attached_object_pose(&self.cfg.vehicle);
            if let Some((id, pose)) = held {
                if self.task.object.map(|o| o.object_id()) == Some(id) {
                    self.target_grasped = true;
                }
                if let Some(p) = self.scene.primitive_mut(id) {
                    p.pose = pose;
                }
            }
            for k in 0..self.objects.len() {
                let obj = self.objects[k].clone();
                if held.map(|h| h.0) == Some(obj.id) {
                    continue;
                }
                let Some(pose) = self.scene.primitive(obj.id).map(|p| p.pose) else { continue };
                let rest = self.rest_height(&obj, &pose.translation);
                let z = pose.translation.z;
                if z != rest {
                    let nz = if z > rest { (z - SINK_SPEED * PHYSICS_DT).max(rest) } else { rest };
                    let p = self.scene.primitive_mut(obj.id).expect("tracked object exists");
                    p.pose.translation.z = nz;
                }
            }
            if let Some(b) = self.boat.as_mut() {
                b.advance(PHYSICS_DT);
            }
            self.sync_boat();
        }
        let v = self.vehicle.pose.rotation * self.vehicle.linear_velocity;
        self.accel_world = (v - self.world_velocity) / FRAME_DT;
        self.world_velocity = v;
        self.tick += 1;
        Ok(())
    }
}

/// Runs one episode to completion, failure or timeout.
pub fn run_episode(
    task: &TaskSpec,
    cfg: &SimConfig,
    seed: u64,
    policy: &mut dyn Policy,
    opts: &RolloutOptions,
) -> Result<Rollout, RolloutError> {
    let mut world = World::new(task, cfg, seed)?;
    policy.reset(&world);
    let max_frames = frames_for_duration(opts.max_duration.unwrap_or(task.timeout));
    let mut frames = Vec::with_capacity(max_frames);
    let mut samples = Vec::with_capacity(max_frames);
    let mut phases = Vec::with_capacity(max_frames);
    let mut failure = None;
    let mut timed_out = true;
    let mut prev = ActionVector::default();
    while frames.len() < max_frames {
        let mut frame = world.observe(&prev, opts.render);
        samples.push(world.sample());
        let out = policy.act(&world, &frame).and_then(|o| {
            if o.action.is_finite() {
                Ok(o)
            } else {
                Err(PolicyError::NonFinite)
            }
        });
        let out = match out {
            Ok(o) => o,
            Err(e) => PolicyOutput {
                action: ActionVector::default(),
                phase: None,
                status: PolicyStatus::Failed(e.to_string()),
            },
        };
        frame.action = out.action.0;
        frames.push(frame);
        phases.push(out.phase);
        match out.status {
            PolicyStatus::Running => {}
            PolicyStatus::Finished => {
                timed_out = false;
                break;
            }
            PolicyStatus::Failed(reason) => {
                timed_out = false;
                failure = Some(reason);
                break;
            }
        }
        if frames.len() == max_frames {
            break;
        }
        if let Err(e) = world.step(&out.action) {
            timed_out = false;
            failure = Some(format!("simulation diverged: {e}"));
            break;
        }
        prev = out.action;
    }
    Ok(Rollout {
        frames,
        trace: EpisodeTrace {
            samples,
            context: world.context(),
        },
        phases,
        failure,
        timed_out,
    })
}
