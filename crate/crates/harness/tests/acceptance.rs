//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use aquasim::control::{PidController, PidGains};
use aquasim::dataset::{frames_for_duration, read_episode, DatasetManifest};
use aquasim::geometry::{target_in_robot_frame, Pose};
use aquasim::learner::{cap_forward, grad_check, CapConfig, CapParams, TokenGrid, GRID_CELLS, GRID_CHANNELS};
use aquasim::vehicle::*;
use harness::*;
use nalgebra::{Quaternion, SVector, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

const DT: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let q = Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let t = Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..0.0));
    Pose::new(UnitQuaternion::from_quaternion(q), t)
}

fn pose_gap(a: &Pose, b: &Pose) -> f64 {
    a.to_array().iter().zip(b.to_array()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(Pose, Pose)> = (0..1000).map(|_| (random_pose(&mut rng), random_pose(&mut rng))).collect();
    let start = Instant::now();
    let worst = pairs
        .iter()
        .map(|(t, r)| pose_gap(&r.compose(target_in_robot_frame(t, r).pose()), t))
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-9 && secs < 1.0, format!("max error {worst:.2e}, {secs:.4} s for 1000 pairs"))
}

fn dynamics() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (f, dq) in [(40.0, 20.0), (10.0, 18.18), (80.0, 5.0)] {
        let mut p = VehicleParams::default();
        p.linear_damping[0] = 0.0;
        p.quadratic_damping[0] = dq;
        let thrust = Wrench::new(f, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut s = VehicleState::at_rest(Pose::from_translation(0.0, 0.0, -10.0), &p);
        for _ in 0..6000 {
            s = step_with_wrench(&s, &thrust, &p, DT, &Surroundings::open_water()).unwrap();
        }
        let expected: f64 = (f / dq).sqrt();
        let rel = (s.linear_velocity.x - expected).abs() / expected;
        pass &= rel < 0.01;
        notes.push(format!("F={f} Dq={dq}: {:.2e}", rel));
    }
    let params = VehicleParams::default();
    let start = Pose::from_yaw(0.4, Vector3::new(1.0, 2.0, -12.0));
    let mut s = VehicleState::at_rest(start, &params);
    for _ in 0..1000 {
        s = step_dynamics(&s, &ActionVector::default(), &params, DT, &Surroundings::open_water()).unwrap();
    }
    let drift = (s.pose.translation - start.translation).norm();
    pass &= drift < 1e-9;
    outcome(pass, format!("terminal speed rel errors [{}], equilibrium drift {drift:.2e} m", notes.join(", ")))
}

fn allocation() -> Outcome {
    let p = VehicleParams::default();
    let alloc = p.allocator();
    let b = *alloc.config();
    let proj = b.pseudo_inverse(1e-12).unwrap() * b;
    let min_force = p.thruster_max_force * p.thruster_deadband * p.thruster_deadband;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut tested, mut worst) = (0, 0.0f64);
    while tested < 100 {
        let raw = SVector::<f64, NUM_THRUSTERS>::from_fn(|_, _| rng.random_range(-30.0..30.0));
        let forces = proj * raw;
        if forces.iter().any(|f| f.abs() <= 1.01 * min_force || f.abs() >= p.thruster_max_force) {
            continue;
        }
        let wrench = b * forces;
        let realized = thrust_wrench(&alloc.allocate(&wrench).commands, &p);
        worst = worst.max((realized - wrench).norm());
        tested += 1;
    }
    outcome(worst < 1e-6, format!("max residual {worst:.2e} over 100 achievable wrenches"))
}

fn pid_step() -> Outcome {
    let params = VehicleParams::default();
    let alloc = params.allocator();
    let mut times = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Pose::from_yaw(
            rng.random_range(-3.0..3.0),
            Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-30.0..-3.0)),
        );
        let goal = start.compose(&Pose::from_translation(5.0, 0.0, 0.0));
        let mut pid = PidController::new(PidGains::default());
        let mut s = VehicleState::at_rest(start, &params);
        let mut settled = 0.0;
        for k in 0..4500 {
            let w = pid.step(&goal, &s, DT);
            let a = ActionVector::new(alloc.allocate(&w).commands, [0.0; NUM_JOINTS], 0.0);
            s = step_dynamics(&s, &a, &params, DT, &Surroundings::open_water()).unwrap();
            if (s.pose.translation - goal.translation).norm() >= 0.1 {
                settled = (k + 1) as f64 * DT;
            }
        }
        times.push(settled);
    }
    let ok = times.iter().filter(|t| **t <= 30.0).count();
    let worst = times.iter().cloned().fold(0.0, f64::max);
    outcome(ok == 10, format!("{ok}/10 seeds settled within 0.1 m by 30 s (slowest {worst:.1} s)"))
}

fn random_grid(rng: &mut ChaCha8Rng, cells: usize, p_masked: f64) -> TokenGrid {
    let n = cells * cells;
    let features = (0..n * GRID_CHANNELS).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= p_masked).collect();
    mask[0] = true;
    TokenGrid::new(cells, cells, GRID_CHANNELS, features, mask).unwrap()
}

fn perturbed_params(seed: u64) -> CapParams {
    let mut p = CapParams::init(CapConfig::default(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    p
}

fn cap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut grad_err = 0.0f64;
    let mut masked_change = 0.0f64;
    let mut crop_gap = 0.0f64;
    for seed in 0..5 {
        let p = perturbed_params(seed);
        let grid = random_grid(&mut rng, GRID_CELLS, 0.2).padded(1);
        let q = UnitQuaternion::from_euler_angles(0.2, -0.1, rng.random_range(-3.0f64..3.0));
        let label = [q.w.abs(), q.i * q.w.signum(), q.j * q.w.signum(), q.k * q.w.signum(), 1.5, -0.5, 0.8];
        grad_err = grad_err.max(grad_check(&p, &grid, &label, 300, seed).unwrap());

        let out = cap_forward(&p, &grid).unwrap();
        let mut noisy = grid.clone();
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                if !grid.is_valid(y, x) {
                    noisy.cell_mut(y, x).iter_mut().for_each(|v| *v = rng.random_range(-1e3..1e3));
                }
            }
        }
        let again = cap_forward(&p, &noisy).unwrap();
        masked_change = out.iter().zip(&again).map(|(a, b)| (a - b).abs()).fold(masked_change, f64::max);

        let inner = random_grid(&mut rng, GRID_CELLS, 0.0);
        let padded = cap_forward(&p, &inner.padded(2)).unwrap();
        let dense = cap_forward(&p, &inner.padded(2).crop_to_valid().unwrap()).unwrap();
        crop_gap = padded.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(crop_gap, f64::max);
    }
    outcome(
        grad_err < 1e-4 && masked_change == 0.0 && crop_gap < 1e-9,
        format!("grad check {grad_err:.2e}, masked-cell change {masked_change:e}, masked vs cropped {crop_gap:.2e}"),
    )
}

fn desk_generate(out: &Path, workers: usize) -> GenerateSummary {
    let req = GenerateRequest {
        seed: 7,
        workers,
        tasks: None,
        episodes: None,
        out: out.to_path_buf(),
    };
    generate(&HarnessConfig::desk(), &req).unwrap()
}

fn training(dataset: &Path) -> Outcome {
    let out = tempfile::tempdir().unwrap();
    let t = train_command(&HarnessConfig::desk(), dataset, out.path(), 7).unwrap();
    let test = t.test.expect("desk split has test frames");
    let ratio = test.e_target / test.baseline_e_target;
    outcome(
        ratio <= 0.5 && t.trailing_mean < t.leading_mean,
        format!(
            "held-out e_target {:.3} m vs mean predictor {:.3} m (ratio {ratio:.2}); loss first-100 {:.4}, last-100 {:.4}",
            test.e_target, test.baseline_e_target, t.leading_mean, t.trailing_mean
        ),
    )
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism(one: &Path) -> Outcome {
    let eight = tempfile::tempdir().unwrap();
    desk_generate(eight.path(), 8);
    let identical = tree(one) == tree(eight.path());
    let report = validate(one);
    let m = DatasetManifest::load(one).unwrap();
    let counts_ok = m.episodes.iter().all(|e| {
        let ep = read_episode(&one.join(&e.file)).unwrap();
        ep.frames.len() == frames_for_duration(e.meta.duration_s) && ep.frames.len() == e.meta.frame_count as usize
    });
    outcome(
        identical && report.passed() && counts_ok,
        format!(
            "workers 1 vs 8 identical: {identical}; validate: {} issues over {} episodes; frame counts match: {counts_ok}",
            report.issues.len(),
            report.episodes_checked
        ),
    )
}

fn closed_loop() -> Outcome {
    let cfg = HarnessConfig::desk();
    let run = |tasks: &str| {
        let req = ClosedLoopRequest {
            tasks: tasks.into(),
            episodes: 10,
            seed: 7,
            workers: 1,
        };
        eval_closed_loop(&cfg, &req, &PolicyKind::Scripted).unwrap()
    };
    let mut pass = true;
    let mut notes = Vec::new();
    for family in ["goto", "inspect", "scan"] {
        let results = run(family);
        let wins: usize = results.iter().map(|r| r.successes()).sum();
        let total: usize = results.iter().map(|r| r.episodes.len()).sum();
        let worst = results.iter().map(|r| r.success_rate()).fold(1.0, f64::min);
        pass &= worst >= 0.9;
        notes.push(format!("{family} {wins}/{total}"));
    }
    let grasping = run("pick,transfer");
    let finite = grasping.iter().all(|r| r.grasping && r.episodes.iter().all(|e| e.final_distance.is_finite()));
    let mean = grasping.iter().map(|r| r.mean_final_distance()).sum::<f64>() / grasping.len() as f64;
    pass &= finite;
    notes.push(format!("grasping distances finite: {finite} (mean {mean:.3} m)"));
    outcome(pass, notes.join(", "))
}

fn main() {
    let dataset = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("relative pose round trip", round_trip()),
        ("vehicle dynamics", dynamics()),
        ("thrust allocation", allocation()),
        ("PID surge step", pid_step()),
        ("CAP masked attention pooling", cap()),
    ];
    desk_generate(dataset.path(), 1);
    results.push(("desk training", training(dataset.path())));
    results.push(("dataset determinism", determinism(dataset.path())));
    results.push(("closed-loop scripted policies", closed_loop()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
