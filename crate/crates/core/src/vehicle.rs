//! Six-degree-of-freedom ROV model with an eight-thruster frame and a
//! four-joint arm.
//!
//! Equations of motion use a diagonal Fossen-style model (rigid-body plus
//! added mass, linear and quadratic damping, restoring wrench). Coriolis and
//! centripetal coupling are left out. Body frame is x forward, y left, z up;
//! world z is up with the water surface at `z = 0`.

use crate::geometry::Pose;
use nalgebra::{SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_THRUSTERS: usize = 8;
pub const NUM_JOINTS: usize = 4;
pub const ACTION_DIM: usize = NUM_THRUSTERS + NUM_JOINTS + 1;
pub const GRAVITY: f64 = 9.81;

pub type Wrench = SVector<f64, 6>;
pub type ConfigMatrix = SMatrix<f64, 6, NUM_THRUSTERS>;

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("non-finite value in {0}: simulation diverged")]
    NonFinite(&'static str),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("time step {0} s outside (0, 0.05]")]
    BadTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwmRange {
    pub min: f64,
    pub center: f64,
    pub max: f64,
}

impl Default for PwmRange {
    fn default() -> Self {
        Self {
            min: 1100.0,
            center: 1500.0,
            max: 1900.0,
        }
    }
}

/// Mounting of one thruster: position in the body frame and unit thrust axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrusterMount {
    pub position: [f64; 3],
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    /// Arm base position in the body frame.
    pub base_offset: [f64; 3],
    pub upper_link: f64,
    pub forearm: f64,
    /// Wrist to gripper tip.
    pub gripper_length: f64,
    pub joint_min: [f64; NUM_JOINTS],
    pub joint_max: [f64; NUM_JOINTS],
    pub joint_speed_max: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            base_offset: [0.2, 0.0, -0.15],
            upper_link: 0.25,
            forearm: 0.2,
            gripper_length: 0.08,
            joint_min: [-1.5, -2.0, -0.2, -2.8],
            joint_max: [1.5, 1.6, 2.8, 2.8],
            joint_speed_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    pub max_opening: f64,
    /// Opening rate at full command, m/s.
    pub speed: f64,
    pub grasp_radius: f64,
}

impl Default for GripperParams {
    fn default() -> Self {
        Self {
            max_opening: 0.12,
            speed: 0.1,
            grasp_radius: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub added_mass: [f64; 6],
    pub linear_damping: [f64; 6],
    pub quadratic_damping: [f64; 6],
    pub weight: f64,
    pub buoyancy: f64,
    pub center_of_buoyancy: [f64; 3],
    pub thrusters: Vec<ThrusterMount>,
    pub thruster_max_force: f64,
    pub thruster_deadband: f64,
    pub pwm: PwmRange,
    /// Clearance kept between the body origin and the seabed.
    pub hull_radius: f64,
    pub arm: ArmParams,
    pub gripper: GripperParams,
}

fn heavy_frame() -> Vec<ThrusterMount> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = |x: f64, y: f64, dx: f64, dy: f64| ThrusterMount {
        position: [x, y, 0.0],
        direction: [dx * s, dy * s, 0.0],
    };
    let v = |x: f64, y: f64| ThrusterMount {
        position: [x, y, 0.085],
        direction: [0.0, 0.0, 1.0],
    };
    vec![
        h(0.156, -0.111, 1.0, 1.0),
        h(0.156, 0.111, 1.0, -1.0),
        h(-0.156, -0.111, 1.0, -1.0),
        h(-0.156, 0.111, 1.0, 1.0),
        v(0.12, -0.218),
        v(0.12, 0.218),
        v(-0.12, -0.218),
        v(-0.12, 0.218),
    ]
}

impl Default for VehicleParams {
    fn default() -> Self {
        let mass = 11.5;
        Self {
            mass,
            inertia: [0.16, 0.16, 0.16],
            added_mass: [5.5, 12.7, 14.57, 0.12, 0.12, 0.12],
            linear_damping: [4.03, 6.22, 5.18, 0.07, 0.07, 0.07],
            quadratic_damping: [18.18, 21.66, 36.99, 1.55, 1.55, 1.55],
            weight: mass * GRAVITY,
            buoyancy: mass * GRAVITY,
            center_of_buoyancy: [0.0, 0.0, 0.02],
            thrusters: heavy_frame(),
            thruster_max_force: 40.0,
            thruster_deadband: 0.05,
            pwm: PwmRange::default(),
            hull_radius: 0.25,
            arm: ArmParams::default(),
            gripper: GripperParams::default(),
        }
    }
}

impl VehicleParams {
    /// Column `j` is the body wrench produced by one newton of thrust on thruster `j`.
    pub fn configuration_matrix(&self) -> ConfigMatrix {
        let mut b = ConfigMatrix::zeros();
        for (j, t) in self.thrusters.iter().enumerate().take(NUM_THRUSTERS) {
            let p = Vector3::from(t.position);
            let d = Vector3::from(t.direction);
            let m = p.cross(&d);
            b.fixed_view_mut::<3, 1>(0, j).copy_from(&d);
            b.fixed_view_mut::<3, 1>(3, j).copy_from(&m);
        }
        b
    }

    pub fn mass_diagonal(&self) -> [f64; 6] {
        let mut m = [0.0; 6];
        for (i, mi) in m.iter_mut().enumerate() {
            let rigid = if i < 3 { self.mass } else { self.inertia[i - 3] };
            *mi = rigid + self.added_mass[i];
        }
        m
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let bad = |msg: &str| Err(VehicleError::InvalidParams(msg.to_string()));
        if self.mass <= 0.0 {
            return bad("mass must be positive");
        }
        let nonneg = self
            .inertia
            .iter()
            .chain(&self.added_mass)
            .chain(&self.linear_damping)
            .chain(&self.quadratic_damping)
            .all(|v| *v >= 0.0);
        if !nonneg {
            return bad("inertia, added mass and damping must be non-negative");
        }
        if self.mass_diagonal().iter().any(|m| *m <= 0.0) {
            return bad("effective mass must be positive on every axis");
        }
        if !(self.pwm.min < self.pwm.center && self.pwm.center < self.pwm.max) {
            return bad("pwm range must satisfy min < center < max");
        }
        if self.thrusters.len() != NUM_THRUSTERS {
            return bad("exactly eight thrusters are required");
        }
        if self.thruster_max_force <= 0.0 || !(0.0..1.0).contains(&self.thruster_deadband) {
            return bad("thruster curve parameters out of range");
        }
        let svd = self.configuration_matrix().svd(false, false);
        let rank = svd.singular_values.iter().filter(|s| **s > 1e-9).count();
        if rank != 6 {
            return bad("thruster configuration must have rank 6");
        }
        let a = &self.arm;
        if (0..NUM_JOINTS).any(|i| a.joint_min[i] > 0.0 || a.joint_max[i] < 0.0) {
            return bad("joint limits must contain the zero reference");
        }
        Ok(())
    }

    pub fn allocator(&self) -> ThrustAllocator {
        ThrustAllocator::new(self)
    }
}

/// 13 action channels: 8 normalized thruster commands, 4 joint velocities
/// (rad/s) and one gripper command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionVector(pub [f64; ACTION_DIM]);

impl Default for ActionVector {
    fn default() -> Self {
        Self([0.0; ACTION_DIM])
    }
}

impl ActionVector {
    pub fn new(thrusters: [f64; NUM_THRUSTERS], joint_velocities: [f64; NUM_JOINTS], gripper: f64) -> Self {
        let mut a = [0.0; ACTION_DIM];
        for (i, u) in thrusters.iter().enumerate() {
            a[i] = u.clamp(-1.0, 1.0);
        }
        a[NUM_THRUSTERS..NUM_THRUSTERS + NUM_JOINTS].copy_from_slice(&joint_velocities);
        a[ACTION_DIM - 1] = gripper.clamp(-1.0, 1.0);
        Self(a)
    }

    pub fn thrusters(&self) -> [f64; NUM_THRUSTERS] {
        let mut t = [0.0; NUM_THRUSTERS];
        t.copy_from_slice(&self.0[..NUM_THRUSTERS]);
        t
    }

    pub fn joint_velocities(&self) -> [f64; NUM_JOINTS] {
        let mut j = [0.0; NUM_JOINTS];
        j.copy_from_slice(&self.0[NUM_THRUSTERS..NUM_THRUSTERS + NUM_JOINTS]);
        j
    }

    pub fn gripper(&self) -> f64 {
        self.0[ACTION_DIM - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object_id: u32,
    /// Object pose in the gripper frame, frozen at grasp time.
    pub offset: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub joints: [f64; NUM_JOINTS],
    pub gripper_opening: f64,
    pub attached: Option<Attachment>,
}

impl VehicleState {
    pub fn at_rest(pose: Pose, params: &VehicleParams) -> Self {
        Self {
            pose,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            joints: [0.0; NUM_JOINTS],
            gripper_opening: params.gripper.max_opening,
            attached: None,
        }
    }

    pub fn depth(&self) -> f64 {
        (-self.pose.translation.z).max(0.0)
    }

    pub fn body_velocity(&self) -> Wrench {
        let v = &self.linear_velocity;
        let w = &self.angular_velocity;
        Wrench::new(v.x, v.y, v.z, w.x, w.y, w.z)
    }

    pub fn kinetic_energy(&self, params: &VehicleParams) -> f64 {
        let m = params.mass_diagonal();
        let nu = self.body_velocity();
        0.5 * (0..6).map(|i| m[i] * nu[i] * nu[i]).sum::<f64>()
    }

    /// World pose of the gripper tip.
    pub fn gripper_pose(&self, params: &VehicleParams) -> Pose {
        let base = Pose::from_translation(
            params.arm.base_offset[0],
            params.arm.base_offset[1],
            params.arm.base_offset[2],
        );
        self.pose
            .compose(&base)
            .compose(&arm_forward_kinematics(&params.arm, &self.joints))
    }

    pub fn attached_object_pose(&self, params: &VehicleParams) -> Option<(u32, Pose)> {
        self.attached
            .map(|a| (a.object_id, self.gripper_pose(params).compose(&a.offset)))
    }

    fn is_finite(&self) -> bool {
        self.pose.is_finite()
            && self.linear_velocity.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.joints.iter().all(|v| v.is_finite())
            && self.gripper_opening.is_finite()
    }
}

/// Gripper-tip pose in the arm base frame. Joint order: base yaw, shoulder,
/// elbow, wrist; pitch joints are positive upward and all-zero is the arm
/// stretched straight ahead along body +x.
pub fn arm_forward_kinematics(arm: &ArmParams, q: &[f64; NUM_JOINTS]) -> Pose {
    let p1 = q[1];
    let p2 = q[1] + q[2];
    let p3 = q[1] + q[2] + q[3];
    let r = arm.upper_link * p1.cos() + arm.forearm * p2.cos() + arm.gripper_length * p3.cos();
    let z = arm.upper_link * p1.sin() + arm.forearm * p2.sin() + arm.gripper_length * p3.sin();
    let rotation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q[0])
        * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -p3);
    Pose::new(rotation, Vector3::new(r * q[0].cos(), r * q[0].sin(), z))
}

/// Normalized thruster command from a pulse width in microseconds.
pub fn pwm_to_normalized(pwm_us: f64, range: &PwmRange) -> f64 {
    let half = if pwm_us >= range.center {
        range.max - range.center
    } else {
        range.center - range.min
    };
    ((pwm_us - range.center) / half).clamp(-1.0, 1.0)
}

pub fn normalized_to_pwm(u: f64, range: &PwmRange) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    if u >= 0.0 {
        range.center + u * (range.max - range.center)
    } else {
        range.center + u * (range.center - range.min)
    }
}

/// Quadratic thruster curve with a symmetric deadband.
pub fn thruster_force(u: f64, max_force: f64, deadband: f64) -> f64 {
    if u.abs() < deadband {
        0.0
    } else {
        max_force * u * u.abs()
    }
}

/// Command that realizes `force` through [`thruster_force`], saturated to `[-1, 1]`.
/// Forces too small to clear the deadband map to zero.
pub fn thruster_command(force: f64, max_force: f64, deadband: f64) -> f64 {
    let u = force.signum() * (force.abs() / max_force).sqrt();
    if u.abs() < deadband {
        0.0
    } else {
        u.clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub commands: [f64; NUM_THRUSTERS],
    /// Euclidean norm of requested minus realized wrench.
    pub residual: f64,
}

/// Least-squares thrust allocation through the Moore-Penrose pseudo-inverse.
#[derive(Debug, Clone)]
pub struct ThrustAllocator {
    config: ConfigMatrix,
    pinv: SMatrix<f64, NUM_THRUSTERS, 6>,
    max_force: f64,
    deadband: f64,
}

impl ThrustAllocator {
    pub fn new(params: &VehicleParams) -> Self {
        let config = params.configuration_matrix();
        let pinv = config
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse of a finite matrix");
        Self {
            config,
            pinv,
            max_force: params.thruster_max_force,
            deadband: params.thruster_deadband,
        }
    }

    pub fn config(&self) -> &ConfigMatrix {
        &self.config
    }

    /// Per-thruster forces of the minimum-norm solution, before the thruster curve.
    pub fn ideal_forces(&self, wrench: &Wrench) -> SVector<f64, NUM_THRUSTERS> {
        self.pinv * wrench
    }

    pub fn allocate(&self, wrench: &Wrench) -> Allocation {
        let forces = self.ideal_forces(wrench);
        let mut commands = [0.0; NUM_THRUSTERS];
        for (c, f) in commands.iter_mut().zip(forces.iter()) {
            *c = thruster_command(*f, self.max_force, self.deadband);
        }
        let residual = (self.wrench_from_commands(&commands) - wrench).norm();
        Allocation { commands, residual }
    }

    pub fn wrench_from_commands(&self, commands: &[f64; NUM_THRUSTERS]) -> Wrench {
        let forces = SVector::<f64, NUM_THRUSTERS>::from_iterator(
            commands
                .iter()
                .map(|u| thruster_force(*u, self.max_force, self.deadband)),
        );
        self.config * forces
    }
}

/// Body wrench produced by a set of normalized thruster commands.
pub fn thrust_wrench(commands: &[f64; NUM_THRUSTERS], params: &VehicleParams) -> Wrench {
    let forces = SVector::<f64, NUM_THRUSTERS>::from_iterator(commands.iter().map(|u| {
        thruster_force(*u, params.thruster_max_force, params.thruster_deadband)
    }));
    params.configuration_matrix() * forces
}

pub fn allocate_thrust(wrench: &Wrench, params: &VehicleParams) -> Allocation {
    ThrustAllocator::new(params).allocate(wrench)
}

/// Something the gripper can pick up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Graspable {
    pub id: u32,
    pub pose: Pose,
}

/// Environment seen by one dynamics step.
#[derive(Debug, Clone, Copy)]
pub struct Surroundings<'a> {
    /// World z of the seabed, if any.
    pub seabed_z: Option<f64>,
    pub graspables: &'a [Graspable],
}

impl Surroundings<'_> {
    pub fn open_water() -> Surroundings<'static> {
        Surroundings {
            seabed_z: None,
            graspables: &[],
        }
    }
}

/// Restoring wrench (weight and buoyancy) in the body frame.
pub fn restoring_wrench(pose: &Pose, params: &VehicleParams) -> Wrench {
    let down = pose.rotation.inverse() * Vector3::new(0.0, 0.0, -1.0);
    let force = down * (params.weight - params.buoyancy);
    let cob = Vector3::from(params.center_of_buoyancy);
    let moment = cob.cross(&(-down * params.buoyancy));
    Wrench::new(force.x, force.y, force.z, moment.x, moment.y, moment.z)
}

/// Advances the rigid body under a prescribed thrust wrench.
pub fn step_with_wrench(
    state: &VehicleState,
    thrust: &Wrench,
    params: &VehicleParams,
    dt: f64,
    surroundings: &Surroundings<'_>,
) -> Result<VehicleState, VehicleError> {
    if !(dt > 0.0 && dt <= 0.05) {
        return Err(VehicleError::BadTimeStep(dt));
    }
    if !state.is_finite() {
        return Err(VehicleError::NonFinite("state"));
    }
    if thrust.iter().any(|v| !v.is_finite()) {
        return Err(VehicleError::NonFinite("wrench"));
    }
    let nu = state.body_velocity();
    let restoring = restoring_wrench(&state.pose, params);
    let m = params.mass_diagonal();
    let mut next_nu = Wrench::zeros();
    for i in 0..6 {
        let damping = params.linear_damping[i] * nu[i] + params.quadratic_damping[i] * nu[i] * nu[i].abs();
        let accel = (thrust[i] + restoring[i] - damping) / m[i];
        next_nu[i] = nu[i] + dt * accel;
    }
    let mut v = Vector3::new(next_nu[0], next_nu[1], next_nu[2]);
    let w = Vector3::new(next_nu[3], next_nu[4], next_nu[5]);

    let mut translation = state.pose.translation + state.pose.rotation * v * dt;
    let rotation = state.pose.rotation * UnitQuaternion::from_scaled_axis(w * dt);

    if let Some(seabed) = surroundings.seabed_z {
        let floor = seabed + params.hull_radius;
        if translation.z < floor {
            translation.z = floor;
            let mut vw = rotation * v;
            if vw.z < 0.0 {
                vw.z = 0.0;
            }
            v = rotation.inverse() * vw;
        }
    }

    let next = VehicleState {
        pose: Pose::new(rotation, translation),
        linear_velocity: v,
        angular_velocity: w,
        ..state.clone()
    };
    if !next.is_finite() {
        return Err(VehicleError::NonFinite("state"));
    }
    Ok(next)
}

/// One physics step: thrusters, arm joints and gripper.
pub fn step_dynamics(
    state: &VehicleState,
    action: &ActionVector,
    params: &VehicleParams,
    dt: f64,
    surroundings: &Surroundings<'_>,
) -> Result<VehicleState, VehicleError> {
    if !action.is_finite() {
        return Err(VehicleError::NonFinite("action"));
    }
    let thrust = thrust_wrench(&action.thrusters(), params);
    let mut next = step_with_wrench(state, &thrust, params, dt, surroundings)?;

    let arm = &params.arm;
    let qd = action.joint_velocities();
    for i in 0..NUM_JOINTS {
        let rate = qd[i].clamp(-arm.joint_speed_max, arm.joint_speed_max);
        next.joints[i] = (state.joints[i] + rate * dt).clamp(arm.joint_min[i], arm.joint_max[i]);
    }

    let grip = action.gripper();
    let g = &params.gripper;
    next.gripper_opening = (state.gripper_opening + grip * g.speed * dt).clamp(0.0, g.max_opening);

    if grip > 0.5 {
        next.attached = None;
    } else if grip < -params.thruster_deadband && next.attached.is_none() {
        let tip = next.gripper_pose(params);
        let nearest = surroundings
            .graspables
            .iter()
            .map(|o| ((o.pose.translation - tip.translation).norm(), o))
            .filter(|(d, _)| *d <= g.grasp_radius)
            .min_by(|a, b| a.0.total_cmp(&b.0));
        if let Some((_, obj)) = nearest {
            next.attached = Some(Attachment {
                object_id: obj.id,
                offset: tip.inverse().compose(&obj.pose),
            });
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn default_params_are_valid() {
        params().validate().unwrap();
    }

    #[test]
    fn pwm_examples() {
        let r = PwmRange::default();
        assert_eq!(pwm_to_normalized(1500.0, &r), 0.0);
        assert_eq!(pwm_to_normalized(1900.0, &r), 1.0);
        assert_eq!(pwm_to_normalized(1100.0, &r), -1.0);
        assert_eq!(pwm_to_normalized(1700.0, &r), 0.5);
        assert_eq!(pwm_to_normalized(2500.0, &r), 1.0);
        assert_eq!(normalized_to_pwm(0.5, &r), 1700.0);
    }

    #[test]
    fn thruster_curve_examples() {
        assert_eq!(thruster_force(0.0, 40.0, 0.05), 0.0);
        assert_eq!(thruster_force(1.0, 40.0, 0.05), 40.0);
        assert_eq!(thruster_force(-1.0, 40.0, 0.05), -40.0);
        assert_eq!(thruster_force(0.5, 40.0, 0.05), 10.0);
        assert_eq!(thruster_force(0.049, 40.0, 0.05), 0.0);
        assert_abs_diff_eq!(thruster_command(10.0, 40.0, 0.05), 0.5, epsilon = 1e-15);
        assert_eq!(thruster_command(1e3, 40.0, 0.05), 1.0);
    }

    #[test]
    fn zero_wrench_allocates_nothing() {
        let a = allocate_thrust(&Wrench::zeros(), &params());
        assert_eq!(a.commands, [0.0; NUM_THRUSTERS]);
        assert_eq!(a.residual, 0.0);
    }

    #[test]
    fn heave_uses_vertical_thrusters_only() {
        let a = allocate_thrust(&Wrench::new(0.0, 0.0, 40.0, 0.0, 0.0, 0.0), &params());
        for c in &a.commands[..4] {
            assert_eq!(*c, 0.0);
        }
        for c in &a.commands[4..] {
            assert_abs_diff_eq!(*c, a.commands[4], epsilon = 1e-12);
        }
        assert!(a.commands[4] > 0.0);
        assert!(a.residual < 1e-9);
    }

    #[test]
    fn neutral_rest_is_an_equilibrium() {
        let p = params();
        let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -5.0), &p);
        let start = s.clone();
        for _ in 0..1000 {
            s = step_dynamics(&s, &ActionVector::default(), &p, 0.01, &Surroundings::open_water()).unwrap();
        }
        assert!((s.pose.translation - start.pose.translation).norm() < 1e-12);
        assert_eq!(s.linear_velocity, Vector3::zeros());
    }

    #[test]
    fn positive_buoyancy_ascends() {
        let mut p = params();
        p.buoyancy = p.weight + 5.0;
        let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -5.0), &p);
        let mut depth = s.depth();
        for _ in 0..200 {
            s = step_dynamics(&s, &ActionVector::default(), &p, 0.01, &Surroundings::open_water()).unwrap();
            assert!(s.depth() < depth);
            depth = s.depth();
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params();
        let s = VehicleState::at_rest(Pose::identity(), &p);
        let mut a = ActionVector::default();
        a.0[0] = f64::NAN;
        assert_eq!(
            step_dynamics(&s, &a, &p, 0.01, &Surroundings::open_water()),
            Err(VehicleError::NonFinite("action"))
        );
        assert_eq!(
            step_dynamics(&s, &ActionVector::default(), &p, 0.1, &Surroundings::open_water()),
            Err(VehicleError::BadTimeStep(0.1))
        );
    }

    #[test]
    fn seabed_is_not_penetrated() {
        let mut p = params();
        p.buoyancy = p.weight - 20.0;
        let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -9.0), &p);
        let env = Surroundings {
            seabed_z: Some(-10.0),
            graspables: &[],
        };
        for _ in 0..2000 {
            s = step_dynamics(&s, &ActionVector::default(), &p, 0.01, &env).unwrap();
            assert!(s.pose.translation.z >= -10.0 + p.hull_radius - 1e-12);
        }
        assert!(s.linear_velocity.z.abs() < 1e-9);
    }

    #[test]
    fn straight_arm_reaches_forward() {
        let a = ArmParams::default();
        let tip = arm_forward_kinematics(&a, &[0.0; 4]);
        assert_abs_diff_eq!(tip.translation.x, a.upper_link + a.forearm + a.gripper_length, epsilon = 1e-15);
        assert_eq!(tip.translation.y, 0.0);
        assert_eq!(tip.translation.z, 0.0);
    }

    #[test]
    fn grasp_attaches_and_tracks() {
        let p = params();
        let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -3.0), &p);
        let tip = s.gripper_pose(&p);
        let obj = Graspable {
            id: 7,
            pose: Pose::from_translation(tip.translation.x + 0.02, tip.translation.y, tip.translation.z),
        };
        let objs = [obj];
        let env = Surroundings {
            seabed_z: None,
            graspables: &objs,
        };
        let close = ActionVector::new([0.0; 8], [0.0; 4], -1.0);
        s = step_dynamics(&s, &close, &p, 0.01, &env).unwrap();
        let (id, pose) = s.attached_object_pose(&p).unwrap();
        assert_eq!(id, 7);
        assert!((pose.translation - obj.pose.translation).norm() < 1e-12);

        let swing = ActionVector::new([0.6, 0.6, 0.6, 0.6, 0.3, 0.3, 0.3, 0.3], [0.5, 0.4, 0.0, 0.0], 0.0);
        for _ in 0..50 {
            s = step_dynamics(&s, &swing, &p, 0.01, &env).unwrap();
            let a = s.attached.unwrap();
            let tracked = s.gripper_pose(&p).compose(&a.offset);
            assert_eq!(tracked, s.attached_object_pose(&p).unwrap().1);
            assert!((tracked.translation - s.gripper_pose(&p).translation).norm() < 0.03);
        }
        let open = ActionVector::new([0.0; 8], [0.0; 4], 1.0);
        s = step_dynamics(&s, &open, &p, 0.01, &env).unwrap();
        assert!(s.attached.is_none());
    }
}
