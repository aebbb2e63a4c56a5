//! Privileged expert policies that generate the demonstrations.

use super::rollout::{Observation, Policy, PolicyError, PolicyOutput, PolicyStatus, SimConfig, World, FRAME_DT};
use super::{TaskFamily, TaskPhase, TaskSpec};
use crate::control::{plan_joint_trajectory, solve_reach, ArmConfig, JointTrajectory, PidController};
use crate::dataset::frames_for_duration;
use crate::geometry::Pose;
use crate::vehicle::{ActionVector, ThrustAllocator, NUM_JOINTS, NUM_THRUSTERS};
use nalgebra::Vector3;

/// Waypoints count as reached inside this radius.
const SWITCH_RADIUS: f64 = 1.0;
/// Where the object should sit relative to the arm base before reaching.
const REACH_POINT: [f64; 3] = [0.32, 0.0, -0.15];
/// Height of the approach hover above the grasp pose.
const HOVER: f64 = 0.6;
const SETTLE_TICKS: usize = 10;
const ALIGN_TIMEOUT: f64 = 20.0;
const REACH_SERVO_TIME: f64 = 3.0;
const GRASP_TIME: f64 = 1.0;
const LIFT_TIMEOUT: f64 = 15.0;
const CARRY_TIMEOUT: f64 = 40.0;
const RELEASE_TIME: f64 = 1.0;
/// Height of the gripper tip above the drop box top when letting go.
const DROP_HEIGHT: f64 = 0.5;
const ARM_SPEED: f64 = 0.6;
const ARM_ACCEL: f64 = 1.0;
/// Horizontal and vertical offset kept behind and below the boat.
const TRAIL_DISTANCE: f64 = 2.4;
const TRAIL_DEPTH: f64 = -2.0;
/// Lead time on the boat's velocity when placing the follow setpoint.
const TRAIL_LEAD: f64 = 1.0;

/// Phase machine that drives the vehicle and arm through the control stack.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    task: TaskSpec,
    pid: PidController,
    allocator: ThrustAllocator,
    phase: TaskPhase,
    phase_start: f64,
    waypoint: usize,
    hold_yaw: f64,
    settled: usize,
    grasp_pose: Option<Pose>,
    lift_pose: Option<Pose>,
    arm_plan: Option<JointTrajectory>,
    carry_yaw: Option<f64>,
    pursuit_duration: f64,
}

fn yaw_towards(from: &Vector3<f64>, to: &Vector3<f64>) -> f64 {
    (to.y - from.y).atan2(to.x - from.x)
}

fn horizontal(v: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 0.0)
}

impl ScriptedPolicy {
    pub fn new(task: &TaskSpec, cfg: &SimConfig) -> Self {
        Self {
            task: task.clone(),
            pid: PidController::new(cfg.gains.clone()),
            allocator: ThrustAllocator::new(&cfg.vehicle),
            phase: task.family.phase_order()[0],
            phase_start: 0.0,
            waypoint: 0,
            hold_yaw: 0.0,
            settled: 0,
            grasp_pose: None,
            lift_pose: None,
            arm_plan: None,
            carry_yaw: None,
            pursuit_duration: task.nominal_duration,
        }
    }

    /// Length of a follow episode, seconds. Defaults to the nominal duration.
    pub fn with_pursuit_duration(mut self, seconds: f64) -> Self {
        self.pursuit_duration = seconds;
        self
    }

    pub fn phase(&self) -> TaskPhase {
        self.phase
    }

    fn enter(&mut self, phase: TaskPhase, now: f64) {
        if phase != self.phase {
            debug_assert!(self.task.family.transition_allowed(self.phase, phase));
            self.phase = phase;
            self.phase_start = now;
            self.settled = 0;
        }
    }

    fn drive(&mut self, world: &World, setpoint: &Pose) -> [f64; NUM_THRUSTERS] {
        let wrench = self.pid.step(setpoint, &world.vehicle, FRAME_DT);
        self.allocator.allocate(&wrench).commands
    }

    fn output(&self, thrusters: [f64; NUM_THRUSTERS], joints: [f64; NUM_JOINTS], gripper: f64) -> PolicyOutput {
        PolicyOutput {
            action: ActionVector::new(thrusters, joints, gripper),
            phase: Some(self.phase),
            status: PolicyStatus::Running,
        }
    }

    fn finished(&self) -> PolicyOutput {
        PolicyOutput {
            action: ActionVector::default(),
            phase: Some(self.phase),
            status: PolicyStatus::Finished,
        }
    }

    fn fail(&self, reason: &str) -> PolicyOutput {
        PolicyOutput {
            action: ActionVector::default(),
            phase: Some(self.phase),
            status: PolicyStatus::Failed(format!("{} during {:?}", reason, self.phase)),
        }
    }

    fn goto(&mut self, world: &World) -> PolicyOutput {
        let now = world.time();
        if self.phase == TaskPhase::Done {
            return self.finished();
        }
        let route = world.route();
        let last = route.len() - 1;
        let p = world.vehicle.pose.translation;
        while self.waypoint < last && (route[self.waypoint] - p).norm() < SWITCH_RADIUS {
            self.waypoint += 1;
        }
        let wp = route[self.waypoint];
        // finishing only depends on the goal, not on how the route was walked
        let d = (route[last] - p).norm();
        let speed = world.vehicle.linear_velocity.norm();
        let r = self.task.success.goal_radius;
        if d <= r && (speed < 0.25 || d < 0.5 * r) {
            self.enter(TaskPhase::Done, now);
            return self.finished();
        }
        if horizontal(wp - p).norm() > SWITCH_RADIUS {
            self.hold_yaw = yaw_towards(&p, &wp);
        }
        let thr = self.drive(world, &Pose::from_yaw(self.hold_yaw, wp));
        self.output(thr, [0.0; NUM_JOINTS], 0.0)
    }

    fn follow(&mut self, world: &World) -> PolicyOutput {
        let (Some(boat), Some(bv)) = (world.boat_pose(), world.boat_velocity()) else {
            return self.fail("no boat to follow");
        };
        if world.tick() + 1 >= frames_for_duration(self.pursuit_duration) {
            return self.finished();
        }
        let h = boat.yaw();
        let b = boat.translation;
        let mut sp = b - Vector3::new(h.cos(), h.sin(), 0.0) * TRAIL_DISTANCE + bv * TRAIL_LEAD;
        sp.z = TRAIL_DEPTH;
        let p = world.vehicle.pose.translation;
        let yaw = yaw_towards(&p, &b);
        let thr = self.drive(world, &Pose::from_yaw(yaw, sp));
        self.output(thr, [0.0; NUM_JOINTS], 0.0)
    }

    /// Scan and inspect: reach the first waypoint, then sweep the route.
    fn sweep(&mut self, world: &World) -> PolicyOutput {
        let now = world.time();
        let route = world.route();
        let p = world.vehicle.pose.translation;
        match self.phase {
            TaskPhase::Done => return self.finished(),
            TaskPhase::Transit if (route[0] - p).norm() < SWITCH_RADIUS => {
                self.enter(TaskPhase::Sweep, now);
                self.waypoint = 1.min(route.len() - 1);
            }
            TaskPhase::Sweep => {
                while self.waypoint < route.len() && (route[self.waypoint] - p).norm() < SWITCH_RADIUS {
                    self.waypoint += 1;
                }
                if self.waypoint == route.len() {
                    self.enter(TaskPhase::Done, now);
                    return self.finished();
                }
            }
            _ => {}
        }
        let wp = route[self.waypoint];
        let yaw = match (self.task.family, self.phase) {
            (TaskFamily::Scan, TaskPhase::Sweep) => {
                let c = world.scene.anchor("hull_center").map(|a| a.translation).unwrap_or(wp);
                yaw_towards(&p, &c)
            }
            _ => {
                if horizontal(wp - p).norm() > 0.5 {
                    self.hold_yaw = yaw_towards(&p, &wp);
                }
                self.hold_yaw
            }
        };
        let thr = self.drive(world, &Pose::from_yaw(yaw, wp));
        self.output(thr, [0.0; NUM_JOINTS], 0.0)
    }

    /// Joint rates that bring the arm to `q` within one frame.
    fn joint_rates_to(world: &World, q: &[f64; NUM_JOINTS], gain: f64) -> [f64; NUM_JOINTS] {
        let vmax = world.cfg.vehicle.arm.joint_speed_max;
        let mut out = [0.0; NUM_JOINTS];
        for (j, o) in out.iter_mut().enumerate() {
            *o = (gain * (q[j] - world.vehicle.joints[j]) / FRAME_DT).clamp(-vmax, vmax);
        }
        out
    }

    /// Arm solution for putting the tip on `point` from the current vehicle pose.
    fn reach_solution(world: &World, point: &Vector3<f64>) -> Result<[f64; NUM_JOINTS], String> {
        let b = world.cfg.vehicle.arm.base_offset;
        let base = world.vehicle.pose.compose(&Pose::from_translation(b[0], b[1], b[2]));
        let local = base.inverse_transform_point(point);
        solve_reach(&local, &world.cfg.vehicle.arm).map_err(|e| e.to_string())
    }

    fn grasp(&mut self, world: &World) -> PolicyOutput {
        let now = world.time();
        let elapsed = now - self.phase_start;
        let (Some(obj), Some(spawn)) = (world.object_pose(), world.object_spawn()) else {
            return self.fail("no object to grasp");
        };
        let o = obj.translation;
        let p = world.vehicle.pose.translation;
        let arm = &world.cfg.vehicle.arm;
        let reach_body = Vector3::from(arm.base_offset) + Vector3::from(REACH_POINT);

        let grasp_pose = *self.grasp_pose.get_or_insert_with(|| {
            let yaw = yaw_towards(&p, &o);
            let t = o - Pose::from_yaw(yaw, Vector3::zeros()).transform_point(&reach_body);
            Pose::from_yaw(yaw, t)
        });
        let hover = Pose::from_yaw(grasp_pose.yaw(), grasp_pose.translation + Vector3::new(0.0, 0.0, HOVER));
        let hold = [0.0; NUM_JOINTS];
        let open = 1.0;
        let close = -1.0;
        let speed = world.vehicle.linear_velocity.norm();

        match self.phase {
            TaskPhase::Approach => {
                if (p - hover.translation).norm() < 0.25 {
                    self.enter(TaskPhase::Align, now);
                } else {
                    let thr = self.drive(world, &hover);
                    return self.output(thr, hold, open);
                }
            }
            TaskPhase::Align if (p - grasp_pose.translation).norm() > 1.0 => {
                self.enter(TaskPhase::Approach, now);
                let thr = self.drive(world, &hover);
                return self.output(thr, hold, open);
            }
            _ => {}
        }

        match self.phase {
            TaskPhase::Align => {
                let err = (p - grasp_pose.translation).norm();
                let yaw_err = (world.vehicle.pose.rotation.inverse() * grasp_pose.rotation).angle();
                if err < 0.05 && speed < 0.05 && yaw_err < 0.05 {
                    self.settled += 1;
                } else {
                    self.settled = 0;
                }
                if self.settled >= SETTLE_TICKS {
                    let q = match Self::reach_solution(world, &o) {
                        Ok(q) => q,
                        Err(e) => return self.fail(&e),
                    };
                    let from = ArmConfig {
                        joints: world.vehicle.joints,
                        gripper: world.vehicle.gripper_opening,
                    };
                    let to = ArmConfig {
                        joints: q,
                        gripper: world.cfg.vehicle.gripper.max_opening,
                    };
                    self.arm_plan = Some(plan_joint_trajectory(&from, &to, ARM_SPEED, ARM_ACCEL));
                    self.enter(TaskPhase::Reach, now);
                } else if elapsed > ALIGN_TIMEOUT {
                    return self.fail("alignment timeout");
                }
                let thr = self.drive(world, &grasp_pose);
                if self.phase == TaskPhase::Align {
                    return self.output(thr, hold, open);
                }
                let q = self.arm_plan.as_ref().expect("planned on entry").sample(FRAME_DT).joints;
                self.output(thr, Self::joint_rates_to(world, &q, 1.0), open)
            }
            TaskPhase::Reach => {
                let plan = self.arm_plan.as_ref().expect("planned on entry");
                let tau = elapsed + FRAME_DT;
                let tip_err = (world.gripper_tip() - o).norm();
                let rates = if tau <= plan.duration() {
                    Self::joint_rates_to(world, &plan.sample(tau).joints, 1.0)
                } else if tip_err < 0.03 {
                    self.enter(TaskPhase::Grasp, now);
                    hold
                } else if elapsed > plan.duration() + REACH_SERVO_TIME {
                    if tip_err < world.cfg.vehicle.gripper.grasp_radius {
                        self.enter(TaskPhase::Grasp, now);
                        hold
                    } else {
                        return self.fail("reach timeout");
                    }
                } else {
                    match Self::reach_solution(world, &o) {
                        Ok(q) => Self::joint_rates_to(world, &q, 0.5),
                        Err(e) => return self.fail(&e),
                    }
                };
                let grip = if self.phase == TaskPhase::Grasp { close } else { open };
                let thr = self.drive(world, &grasp_pose);
                self.output(thr, rates, grip)
            }
            TaskPhase::Grasp => {
                if elapsed >= GRASP_TIME {
                    if !world.object_attached() {
                        return self.fail("grasp missed");
                    }
                    self.lift_pose = Some(Pose::from_yaw(
                        grasp_pose.yaw(),
                        grasp_pose.translation + Vector3::new(0.0, 0.0, HOVER + 0.1),
                    ));
                    self.enter(TaskPhase::Lift, now);
                }
                let thr = self.drive(world, &grasp_pose);
                self.output(thr, hold, close)
            }
            TaskPhase::Lift => {
                let lift = self.lift_pose.expect("set on entry");
                if !world.object_attached() {
                    return self.fail("object dropped");
                }
                if o.z - spawn.translation.z >= self.task.success.lift_height + 0.15 {
                    if self.task.family == TaskFamily::Transfer {
                        self.enter(TaskPhase::Carry, now);
                    } else {
                        self.enter(TaskPhase::Done, now);
                        return self.finished();
                    }
                } else if elapsed > LIFT_TIMEOUT {
                    return self.fail("lift timeout");
                }
                let thr = self.drive(world, &lift);
                self.output(thr, hold, close)
            }
            TaskPhase::Carry | TaskPhase::Release => {
                let Some(zone) = world.drop_zone() else {
                    return self.fail("no drop box");
                };
                let target = Vector3::new(
                    0.5 * (zone.min[0] + zone.max[0]),
                    0.5 * (zone.min[1] + zone.max[1]),
                    zone.max[2] + DROP_HEIGHT,
                );
                let yaw = *self.carry_yaw.get_or_insert_with(|| yaw_towards(&p, &target));
                let tip = world.gripper_tip();
                let tip_body = world.vehicle.pose.inverse_transform_point(&tip);
                let sp = Pose::from_yaw(yaw, target - Pose::from_yaw(yaw, Vector3::zeros()).transform_point(&tip_body));
                if self.phase == TaskPhase::Carry {
                    if (tip - target).norm() < 0.12 && speed < 0.1 {
                        self.enter(TaskPhase::Release, now);
                    } else if elapsed > CARRY_TIMEOUT {
                        return self.fail("carry timeout");
                    }
                } else if elapsed >= RELEASE_TIME {
                    self.enter(TaskPhase::Done, now);
                    return self.finished();
                }
                let grip = if self.phase == TaskPhase::Release { open } else { close };
                let thr = self.drive(world, &sp);
                self.output(thr, hold, grip)
            }
            TaskPhase::Done => self.finished(),
            _ => self.fail("unexpected phase"),
        }
    }
}

impl Policy for ScriptedPolicy {
    fn reset(&mut self, world: &World) {
        let duration = self.pursuit_duration;
        *self = ScriptedPolicy::new(&world.task, &world.cfg).with_pursuit_duration(duration);
        self.hold_yaw = world.vehicle.pose.yaw();
    }

    fn act(&mut self, world: &World, _obs: &Observation) -> Result<PolicyOutput, PolicyError> {
        Ok(match self.task.family {
            TaskFamily::Goto => self.goto(world),
            TaskFamily::Follow => self.follow(world),
            TaskFamily::Scan | TaskFamily::Inspect => self.sweep(world),
            TaskFamily::Pick | TaskFamily::Transfer => self.grasp(world),
        })
    }
}
