use aquasim::control::{plan_joint_trajectory, solve_reach, ArmConfig, PidController, PidGains, ReachError};
use aquasim::geometry::Pose;
use aquasim::vehicle::*;
use nalgebra::{SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.01;

fn surge_only(f: f64, dq: f64) -> (VehicleParams, Wrench) {
    let mut p = VehicleParams::default();
    p.linear_damping[0] = 0.0;
    p.quadratic_damping[0] = dq;
    (p, Wrench::new(f, 0.0, 0.0, 0.0, 0.0, 0.0))
}

#[test]
fn terminal_surge_speed_matches_closed_form() {
    for (f, dq) in [(40.0, 20.0), (10.0, 18.18), (80.0, 5.0)] {
        let (params, thrust) = surge_only(f, dq);
        let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -10.0), &params);
        for _ in 0..6000 {
            s = step_with_wrench(&s, &thrust, &params, DT, &Surroundings::open_water()).unwrap();
        }
        let expected = (f / dq).sqrt();
        let rel = (s.linear_velocity.x - expected).abs() / expected;
        assert!(rel < 0.01, "F={f} Dq={dq}: {} vs {expected}", s.linear_velocity.x);
    }
    let (params, thrust) = surge_only(40.0, 20.0);
    let mut s = VehicleState::at_rest(Pose::identity(), &params);
    for _ in 0..6000 {
        s = step_with_wrench(&s, &thrust, &params, DT, &Surroundings::open_water()).unwrap();
    }
    assert!((s.linear_velocity.x - 2f64.sqrt()).abs() < 0.01 * 2f64.sqrt());
}

#[test]
fn neutral_vehicle_holds_still() {
    let params = VehicleParams::default();
    let start = Pose::from_yaw(0.7, Vector3::new(3.0, -2.0, -8.0));
    let mut s = VehicleState::at_rest(start, &params);
    for _ in 0..1000 {
        s = step_dynamics(&s, &ActionVector::default(), &params, DT, &Surroundings::open_water()).unwrap();
    }
    assert!((s.pose.translation - start.translation).norm() < 1e-9);
    assert!(s.pose.rotation.angle_to(&start.rotation) < 1e-9);
}

#[test]
fn positive_buoyancy_rises_every_step() {
    let mut params = VehicleParams::default();
    params.buoyancy = params.weight + 5.0;
    let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -20.0), &params);
    let mut depth = s.depth();
    for _ in 0..500 {
        s = step_dynamics(&s, &ActionVector::default(), &params, DT, &Surroundings::open_water()).unwrap();
        assert!(s.depth() < depth);
        depth = s.depth();
    }
}

#[test]
fn steps_are_bit_reproducible() {
    let params = VehicleParams::default();
    let mut s = VehicleState::at_rest(Pose::from_euler(0.1, -0.2, 0.3, Vector3::new(1.0, 2.0, -3.0)), &params);
    s.linear_velocity = Vector3::new(0.3, -0.1, 0.05);
    s.angular_velocity = Vector3::new(0.01, 0.02, -0.2);
    let a = ActionVector::new([0.3, -0.2, 0.5, -0.7, 0.1, 0.9, -0.4, 0.0], [0.1, -0.2, 0.3, 0.0], -0.5);
    let x = step_dynamics(&s, &a, &params, DT, &Surroundings::open_water()).unwrap();
    let y = step_dynamics(&s, &a, &params, DT, &Surroundings::open_water()).unwrap();
    assert_eq!(x, y);
}

#[test]
fn pwm_and_thruster_curve_examples() {
    let r = PwmRange::default();
    assert_eq!(pwm_to_normalized(1500.0, &r), 0.0);
    assert_eq!(pwm_to_normalized(1900.0, &r), 1.0);
    assert_eq!(pwm_to_normalized(1100.0, &r), -1.0);
    assert!((pwm_to_normalized(1700.0, &r) - 0.5).abs() < 1e-15);
    let p = VehicleParams::default();
    let f = |u| thruster_force(u, p.thruster_max_force, p.thruster_deadband);
    assert_eq!(f(0.0), 0.0);
    assert_eq!(f(1.0), 40.0);
    assert_eq!(f(-1.0), -40.0);
    assert!((f(0.5) - 10.0).abs() < 1e-12);
}

#[test]
fn heave_request_splits_evenly_over_vertical_thrusters() {
    let p = VehicleParams::default();
    let a = allocate_thrust(&Wrench::new(0.0, 0.0, 30.0, 0.0, 0.0, 0.0), &p);
    for c in &a.commands[..4] {
        assert!(c.abs() < 1e-12);
    }
    for c in &a.commands[5..] {
        assert!((c - a.commands[4]).abs() < 1e-12);
    }
    assert!(a.commands[4] > 0.0);
    assert!(allocate_thrust(&Wrench::zeros(), &p).commands.iter().all(|c| *c == 0.0));
}

#[test]
fn achievable_wrenches_are_reconstructed() {
    let p = VehicleParams::default();
    let alloc = p.allocator();
    let b = *alloc.config();
    let proj = b.pseudo_inverse(1e-12).unwrap() * b;
    let min_force = p.thruster_max_force * p.thruster_deadband * p.thruster_deadband;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tested = 0;
    while tested < 100 {
        let raw = SVector::<f64, NUM_THRUSTERS>::from_fn(|_, _| rng.random_range(-30.0..30.0));
        // forces in the row space are exactly what the minimum-norm solve returns
        let forces = proj * raw;
        if forces.iter().any(|f| f.abs() <= 1.01 * min_force || f.abs() >= p.thruster_max_force) {
            continue;
        }
        let wrench = b * forces;
        let a = alloc.allocate(&wrench);
        let realized = thrust_wrench(&a.commands, &p);
        assert!((realized - wrench).norm() < 1e-6, "residual {}", (realized - wrench).norm());
        assert!(a.residual < 1e-6);
        tested += 1;
    }
}

/// Closes the loop PID -> allocation -> dynamics for a 5 m surge step and
/// returns the time after which the position error stays below `band`.
fn settle_time(seed: u64, band: f64, horizon: f64) -> f64 {
    let params = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Pose::from_yaw(
        rng.random_range(-3.0..3.0),
        Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-30.0..-3.0)),
    );
    let goal = start.compose(&Pose::from_translation(5.0, 0.0, 0.0));
    let alloc = params.allocator();
    let mut pid = PidController::new(PidGains::default());
    let mut s = VehicleState::at_rest(start, &params);
    let mut settled_at = 0.0;
    let steps = (horizon / DT) as usize;
    for k in 0..steps {
        let w = pid.step(&goal, &s, DT);
        let a = ActionVector::new(alloc.allocate(&w).commands, [0.0; NUM_JOINTS], 0.0);
        s = step_dynamics(&s, &a, &params, DT, &Surroundings::open_water()).unwrap();
        if (s.pose.translation - goal.translation).norm() >= band {
            settled_at = (k + 1) as f64 * DT;
        }
    }
    settled_at
}

#[test]
fn surge_step_settles() {
    for seed in 0..10 {
        let t = settle_time(seed, 0.1, 45.0);
        assert!(t <= 30.0, "seed {seed} settled at {t} s");
    }
}

#[test]
fn integral_is_bounded() {
    let mut pid = PidController::new(PidGains::default());
    let params = VehicleParams::default();
    let s = VehicleState::at_rest(Pose::identity(), &params);
    let goal = Pose::from_translation(0.3, 0.0, 0.0);
    for _ in 0..100_000 {
        pid.step(&goal, &s, DT);
    }
    for (i, v) in pid.integral_term().iter().enumerate() {
        assert!(v.abs() <= pid.gains.integral_clamp[i] + 1e-12);
    }
}

#[test]
fn trajectory_examples() {
    let here = ArmConfig { joints: [0.1, 0.2, 0.3, 0.4], gripper: 0.5 };
    let t = plan_joint_trajectory(&here, &here, 1.0, 1.0);
    assert_eq!(t.knots.len(), 1);
    assert_eq!(t.knots[0].time, 0.0);

    let there = ArmConfig { joints: [1.1, 0.2, 0.3, 0.4], gripper: 0.5 };
    let t = plan_joint_trajectory(&here, &there, 1.0, 1.0);
    assert!((t.duration() - 2.0).abs() < 1e-12);
    assert_eq!(t.sample(10.0).joints, there.joints);
    assert!((t.sample(1.0).joints[0] - 0.6).abs() < 1e-9);
}

#[test]
fn reach_examples() {
    let arm = ArmParams::default();
    let full = arm.upper_link + arm.forearm + arm.gripper_length;
    assert_eq!(solve_reach(&Vector3::new(full, 0.0, 0.0), &arm).unwrap(), [0.0; 4]);
    assert!(matches!(solve_reach(&Vector3::new(full + 0.01, 0.0, 0.0), &arm), Err(ReachError::Unreachable(_))));
    assert!(matches!(solve_reach(&Vector3::new(f64::NAN, 0.0, 0.0), &arm), Err(ReachError::NonFinite)));
}

#[test]
fn reach_inverts_forward_kinematics() {
    let arm = ArmParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tested = 0;
    while tested < 100 {
        let yaw = rng.random_range(arm.joint_min[0]..arm.joint_max[0]);
        let shoulder = rng.random_range(arm.joint_min[1]..arm.joint_max[1]);
        let elbow = rng.random_range(0.05..arm.joint_max[2]);
        let wrist = -(shoulder + elbow);
        // the planar solve assumes the wrist sits in front of the base axis
        let reach = arm.upper_link * shoulder.cos() + arm.forearm * (shoulder + elbow).cos();
        if wrist < arm.joint_min[3] || wrist > arm.joint_max[3] || reach < 0.01 {
            continue;
        }
        let p = arm_forward_kinematics(&arm, &[yaw, shoulder, elbow, wrist]).translation;
        let q = solve_reach(&p, &arm).unwrap_or_else(|e| panic!("{e}"));
        assert!((arm_forward_kinematics(&arm, &q).translation - p).norm() < 1e-6);
        tested += 1;
    }
}
