//! Pose-tracking PID, arm trajectory planning and closed-form reach IK.

use crate::geometry::{rotation_vector, target_in_robot_frame, Pose};
use crate::vehicle::{arm_forward_kinematics, ArmParams, VehicleState, Wrench, NUM_JOINTS};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis order: surge, sway, heave, roll, pitch, yaw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: [f64; 6],
    pub ki: [f64; 6],
    pub kd: [f64; 6],
    /// Bound on the magnitude of the integral term, per axis (N or N·m).
    pub integral_clamp: [f64; 6],
    pub output_clamp: [f64; 6],
    /// The integrator only accumulates while the axis error is inside this band.
    pub integral_window: [f64; 6],
}

impl Default for PidGains {
    // Tuned by hand against the default vehicle: 5 m surge steps settle in
    // about 6 s with a few centimeters of overshoot.
    fn default() -> Self {
        Self {
            kp: [30.0, 30.0, 40.0, 6.0, 6.0, 6.0],
            ki: [1.0, 1.0, 2.0, 0.1, 0.1, 0.2],
            kd: [35.0, 35.0, 40.0, 1.5, 1.5, 1.5],
            integral_clamp: [10.0, 10.0, 15.0, 1.0, 1.0, 1.0],
            output_clamp: [80.0, 80.0, 100.0, 6.0, 6.0, 6.0],
            integral_window: [0.5, 0.5, 0.5, 0.2, 0.2, 0.2],
        }
    }
}

impl PidGains {
    pub fn zero() -> Self {
        Self {
            kp: [0.0; 6],
            ki: [0.0; 6],
            kd: [0.0; 6],
            integral_clamp: [1.0; 6],
            output_clamp: [1.0; 6],
            integral_window: [1.0; 6],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.kp
            .iter()
            .chain(&self.ki)
            .chain(&self.kd)
            .all(|g| *g >= 0.0)
            && self
                .integral_clamp
                .iter()
                .chain(&self.output_clamp)
                .chain(&self.integral_window)
                .all(|c| *c > 0.0)
    }
}

/// Per-axis body-frame pose error: robot-frame position error and the
/// rotation vector that carries the vehicle attitude onto the setpoint.
pub fn pose_error(setpoint: &Pose, current: &Pose) -> [f64; 6] {
    let rel = target_in_robot_frame(setpoint, current).0;
    let rot = rotation_vector(&rel.rotation);
    let t = rel.translation;
    [t.x, t.y, t.z, rot.x, rot.y, rot.z]
}

/// Pose-tracking controller. Holds the integrator state for one episode.
#[derive(Debug, Clone)]
pub struct PidController {
    pub gains: PidGains,
    integral: [f64; 6],
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: [0.0; 6],
        }
    }

    pub fn reset(&mut self) {
        self.integral = [0.0; 6];
    }

    /// Current integral term per axis (`ki * accumulated error`).
    pub fn integral_term(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.gains.ki[i] * self.integral[i];
        }
        out
    }

    /// Body wrench for the current setpoint. The derivative acts on the
    /// measured body velocity, so setpoint jumps do not kick.
    pub fn step(&mut self, setpoint: &Pose, state: &VehicleState, dt: f64) -> Wrench {
        assert!(dt > 0.0, "dt must be positive");
        let e = pose_error(setpoint, &state.pose);
        let nu = state.body_velocity();
        let g = &self.gains;
        let mut out = Wrench::zeros();
        for i in 0..6 {
            if e[i].abs() < g.integral_window[i] {
                self.integral[i] += e[i] * dt;
            }
            if g.ki[i] > 0.0 {
                let bound = g.integral_clamp[i] / g.ki[i];
                self.integral[i] = self.integral[i].clamp(-bound, bound);
            } else {
                self.integral[i] = 0.0;
            }
            let u = g.kp[i] * e[i] + g.ki[i] * self.integral[i] - g.kd[i] * nu[i];
            out[i] = u.clamp(-g.output_clamp[i], g.output_clamp[i]);
        }
        out
    }
}

/// Stateless single step from a zero integrator.
pub fn pid_step(gains: &PidGains, setpoint: &Pose, state: &VehicleState, dt: f64) -> Wrench {
    PidController::new(gains.clone()).step(setpoint, state, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub joints: [f64; NUM_JOINTS],
    pub gripper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub time: f64,
    pub joints: [f64; NUM_JOINTS],
    pub gripper: f64,
}

/// Time-indexed arm knots, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub knots: Vec<Knot>,
}

/// Knot spacing of planned trajectories, seconds.
pub const KNOT_SPACING: f64 = 0.02;

impl JointTrajectory {
    pub fn duration(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.time)
    }

    pub fn sample(&self, t: f64) -> ArmConfig {
        let first = self.knots.first().expect("trajectory has at least one knot");
        if t <= first.time || self.knots.len() == 1 {
            return ArmConfig {
                joints: first.joints,
                gripper: first.gripper,
            };
        }
        let last = self.knots.last().unwrap();
        if t >= last.time {
            return ArmConfig {
                joints: last.joints,
                gripper: last.gripper,
            };
        }
        let i = self.knots.partition_point(|k| k.time <= t);
        let (a, b) = (&self.knots[i - 1], &self.knots[i]);
        let s = (t - a.time) / (b.time - a.time);
        let mut joints = [0.0; NUM_JOINTS];
        for (j, q) in joints.iter_mut().enumerate() {
            *q = a.joints[j] + s * (b.joints[j] - a.joints[j]);
        }
        ArmConfig {
            joints,
            gripper: a.gripper + s * (b.gripper - a.gripper),
        }
    }
}

/// Duration of a rest-to-rest trapezoidal (or triangular) move of `distance`.
pub fn trapezoid_duration(distance: f64, vmax: f64, amax: f64) -> f64 {
    let d = distance.abs();
    if d == 0.0 {
        0.0
    } else if d >= vmax * vmax / amax {
        d / vmax + vmax / amax
    } else {
        2.0 * (d / amax).sqrt()
    }
}

/// Normalized progress `s(t)` in `[0, 1]` of a trapezoidal profile of
/// `distance` executed in `duration`, with acceleration `amax` scaled down so the
/// profile fits exactly.
fn trapezoid_progress(t: f64, distance: f64, vmax: f64, amax: f64) -> f64 {
    let total = trapezoid_duration(distance, vmax, amax);
    if total == 0.0 {
        return 1.0;
    }
    let d = distance.abs();
    let t = t.clamp(0.0, total);
    let (ta, v) = if d >= vmax * vmax / amax {
        (vmax / amax, vmax)
    } else {
        let ta = total / 2.0;
        (ta, amax * ta)
    };
    let pos = if t < ta {
        0.5 * amax * t * t
    } else if t <= total - ta {
        0.5 * amax * ta * ta + v * (t - ta)
    } else {
        let r = total - t;
        d - 0.5 * amax * r * r
    };
    (pos / d).clamp(0.0, 1.0)
}

/// Synchronized joint-space move: every joint follows the slowest joint's
/// trapezoidal timing, so peak rates scale with each joint's share of the motion.
pub fn plan_joint_trajectory(current: &ArmConfig, target: &ArmConfig, vmax: f64, amax: f64) -> JointTrajectory {
    assert!(vmax > 0.0 && amax > 0.0, "vmax and amax must be positive");
    let lead = (0..NUM_JOINTS)
        .map(|j| (target.joints[j] - current.joints[j]).abs())
        .fold(0.0, f64::max);
    let total = trapezoid_duration(lead, vmax, amax);
    if total == 0.0 {
        return JointTrajectory {
            knots: vec![Knot {
                time: 0.0,
                joints: target.joints,
                gripper: target.gripper,
            }],
        };
    }
    let steps = (total / KNOT_SPACING).ceil() as usize;
    let mut knots = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let last = k == steps;
        let t = if last { total } else { k as f64 * KNOT_SPACING };
        let s = if last { 1.0 } else { trapezoid_progress(t, lead, vmax, amax) };
        let mut joints = [0.0; NUM_JOINTS];
        for (j, q) in joints.iter_mut().enumerate() {
            *q = if last {
                target.joints[j]
            } else {
                current.joints[j] + s * (target.joints[j] - current.joints[j])
            };
        }
        let gripper = if last {
            target.gripper
        } else {
            current.gripper + s * (target.gripper - current.gripper)
        };
        knots.push(Knot { time: t, joints, gripper });
    }
    JointTrajectory { knots }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReachError {
    #[error("target {0:?} is outside the reachable workspace")]
    Unreachable([f64; 3]),
    #[error("target is not finite")]
    NonFinite,
}

/// Joint angles that put the gripper tip on `target` (arm base frame) with
/// the gripper level. Elbow-down branch; a straight arm counts as elbow-down.
pub fn solve_reach(target: &Vector3<f64>, arm: &ArmParams) -> Result<[f64; NUM_JOINTS], ReachError> {
    if target.iter().any(|v| !v.is_finite()) {
        return Err(ReachError::NonFinite);
    }
    let unreachable = || ReachError::Unreachable([target.x, target.y, target.z]);
    let horizontal = target.x.hypot(target.y);
    let yaw = if horizontal < 1e-12 { 0.0 } else { target.y.atan2(target.x) };
    let r = horizontal - arm.gripper_length;
    let z = target.z;
    let (l1, l2) = (arm.upper_link, arm.forearm);
    let d2 = r * r + z * z;
    let d = d2.sqrt();
    const SLACK: f64 = 1e-12;
    if d > l1 + l2 + SLACK || d < (l1 - l2).abs() - SLACK {
        return Err(unreachable());
    }
    let c = ((d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let elbow = c.acos();
    let shoulder = z.atan2(r) - (l2 * elbow.sin()).atan2(l1 + l2 * elbow.cos());
    let wrist = -(shoulder + elbow);
    let q = [yaw, shoulder, elbow, wrist];
    let within = (0..NUM_JOINTS).all(|i| q[i] >= arm.joint_min[i] - SLACK && q[i] <= arm.joint_max[i] + SLACK);
    if !within {
        return Err(unreachable());
    }
    let mut q = q;
    for (i, qi) in q.iter_mut().enumerate() {
        *qi = qi.clamp(arm.joint_min[i], arm.joint_max[i]);
    }
    debug_assert!((arm_forward_kinematics(arm, &q).translation - target).norm() < 1e-6);
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::VehicleParams;
    use approx::assert_abs_diff_eq;

    fn state_at(pose: Pose) -> VehicleState {
        VehicleState::at_rest(pose, &VehicleParams::default())
    }

    #[test]
    fn zero_error_gives_zero_wrench() {
        let p = Pose::from_euler(0.1, 0.2, 0.3, Vector3::new(1.0, 2.0, -3.0));
        let w = pid_step(&PidGains::default(), &p, &state_at(p), 0.1);
        assert!(w.norm() < 1e-12);
    }

    #[test]
    fn proportional_surge() {
        let mut g = PidGains::zero();
        g.kp[0] = 10.0;
        g.output_clamp = [100.0; 6];
        let w = pid_step(&g, &Pose::from_translation(2.0, 0.0, 0.0), &state_at(Pose::identity()), 0.1);
        assert_abs_diff_eq!(w[0], 20.0, epsilon = 1e-12);
        for i in 1..6 {
            assert_eq!(w[i], 0.0);
        }
    }

    #[test]
    fn error_is_expressed_in_body_frame() {
        let robot = Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vector3::zeros());
        let e = pose_error(&Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vector3::new(0.0, 1.0, 0.0)), &robot);
        assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[1], 0.0, epsilon = 1e-12);
        let e = pose_error(&Pose::from_yaw(0.3, Vector3::zeros()), &Pose::identity());
        assert_abs_diff_eq!(e[5], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn integral_never_exceeds_clamp() {
        let g = PidGains::default();
        let mut c = PidController::new(g.clone());
        let s = state_at(Pose::identity());
        let far = Pose::from_euler(1.0, -1.0, 2.0, Vector3::new(50.0, -50.0, 50.0));
        for _ in 0..10_000 {
            c.step(&far, &s, 0.1);
            for (t, bound) in c.integral_term().iter().zip(&g.integral_clamp) {
                assert!(t.abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_identity_and_triangle() {
        let a = ArmConfig { joints: [0.1, 0.2, 0.3, 0.4], gripper: 0.05 };
        let t = plan_joint_trajectory(&a, &a, 1.0, 1.0);
        assert_eq!(t.knots.len(), 1);
        assert_eq!(t.knots[0].time, 0.0);

        let b = ArmConfig { joints: [1.1, 0.2, 0.3, 0.4], gripper: 0.05 };
        let t = plan_joint_trajectory(&a, &b, 1.0, 1.0);
        assert_abs_diff_eq!(t.duration(), 2.0, epsilon = 1e-12);
        assert_eq!(t.knots.last().unwrap().joints, b.joints);
        assert_abs_diff_eq!(trapezoid_duration(0.25, 1.0, 1.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trapezoid_duration(3.0, 1.0, 1.0), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn straight_ahead_is_zero_pose() {
        let arm = ArmParams::default();
        let reach = arm.upper_link + arm.forearm + arm.gripper_length;
        let q = solve_reach(&Vector3::new(reach, 0.0, 0.0), &arm).unwrap();
        for qi in q {
            assert_abs_diff_eq!(qi, 0.0, epsilon = 1e-7);
        }
        assert!(matches!(
            solve_reach(&Vector3::new(reach + 0.01, 0.0, 0.0), &arm),
            Err(ReachError::Unreachable(_))
        ));
        assert_eq!(
            solve_reach(&Vector3::new(f64::NAN, 0.0, 0.0), &arm),
            Err(ReachError::NonFinite)
        );
    }

    #[test]
    fn grasp_geometry_is_reachable() {
        let arm = ArmParams::default();
        let q = solve_reach(&Vector3::new(0.32, 0.0, -0.15), &arm).unwrap();
        let tip = arm_forward_kinematics(&arm, &q);
        assert!((tip.translation - Vector3::new(0.32, 0.0, -0.15)).norm() < 1e-9);
        assert!(q[2] >= 0.0, "elbow-down branch");
    }
}
