use aquasim::geometry::{target_in_robot_frame, Pose};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

type Mat4 = [[f64; 4]; 4];

// Homogeneous matrix written out from the quaternion components by hand.
fn homogeneous(p: &Pose) -> Mat4 {
    let [w, x, y, z, tx, ty, tz] = p.to_array();
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), tx],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x), ty],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y), tz],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

// Rigid inverse: [R^T, -R^T t].
fn rigid_inverse(m: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
        out[i][3] = -(0..3).map(|k| m[k][i] * m[k][3]).sum::<f64>();
    }
    out[3][3] = 1.0;
    out
}

fn max_diff(a: &Mat4, b: &Mat4) -> f64 {
    (0..4).flat_map(|i| (0..4).map(move |j| (a[i][j] - b[i][j]).abs())).fold(0.0, f64::max)
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let q = Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let t = Vector3::new(
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    );
    Pose::new(UnitQuaternion::from_quaternion(q), t)
}

fn pose_gap(a: &Pose, b: &Pose) -> f64 {
    a.to_array().iter().zip(b.to_array()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn identity_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_pose(&mut rng);
    assert!(pose_gap(&Pose::identity().compose(&p), &p) < 1e-15);
    assert!(pose_gap(&p.compose(&Pose::identity()), &p) < 1e-15);
}

#[test]
fn two_quarter_yaws_make_a_half_turn() {
    let q = Pose::from_yaw(FRAC_PI_2, Vector3::zeros());
    let half = q.compose(&q);
    assert!(pose_gap(&half, &Pose::from_yaw(std::f64::consts::PI, Vector3::zeros())) < 1e-12);
    assert_eq!(half.translation, Vector3::zeros());
}

#[test]
fn composition_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
        let expected = matmul(&homogeneous(&a), &homogeneous(&b));
        assert!(max_diff(&homogeneous(&a.compose(&b)), &expected) < 1e-9);
    }
}

#[test]
fn inverse_examples() {
    assert!(pose_gap(&Pose::identity().inverse(), &Pose::identity()) < 1e-15);
    let inv = Pose::from_translation(1.0, 2.0, 3.0).inverse();
    assert_eq!(inv.translation, Vector3::new(-1.0, -2.0, -3.0));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let p = random_pose(&mut rng);
        assert!(pose_gap(&p.compose(&p.inverse()), &Pose::identity()) < 1e-9);
        assert!(max_diff(&homogeneous(&p.inverse()), &rigid_inverse(&homogeneous(&p))) < 1e-9);
    }
}

#[test]
fn robot_frame_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = random_pose(&mut rng);
    assert!(pose_gap(target_in_robot_frame(&t, &Pose::identity()).pose(), &t) < 1e-15);

    let rel = target_in_robot_frame(&Pose::from_translation(2.0, 0.0, 0.0), &Pose::from_translation(1.0, 0.0, 0.0));
    assert!((rel.pose().translation - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);

    // robot turned left by 90 degrees sees a point on world +y straight ahead
    let robot = Pose::from_yaw(FRAC_PI_2, Vector3::zeros());
    let rel = target_in_robot_frame(&Pose::from_translation(0.0, 1.0, 0.0), &robot);
    let oracle = matmul(&rigid_inverse(&homogeneous(&robot)), &homogeneous(&Pose::from_translation(0.0, 1.0, 0.0)));
    assert!((rel.pose().translation - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    assert!(max_diff(&homogeneous(rel.pose()), &oracle) < 1e-12);
}

#[test]
fn serialized_quaternion_has_nonnegative_scalar() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p = random_pose(&mut rng);
        let a = p.to_array();
        assert!(a[0] >= 0.0);
        assert!(pose_gap(&Pose::from_array(&a), &p) < 1e-15);
    }
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform3(-100.0f64..100.0),
    )
        .prop_filter("degenerate quaternion", |(q, _)| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)
        .prop_map(|(q, t)| {
            Pose::new(
                UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])),
                Vector3::from(t),
            )
        })
}

proptest! {
    #[test]
    fn relative_pose_round_trips(t in arb_pose(), r in arb_pose()) {
        let back = r.compose(target_in_robot_frame(&t, &r).pose());
        prop_assert!(pose_gap(&back, &t) < 1e-9);
    }

    #[test]
    fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
        prop_assert!(pose_gap(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c))) < 1e-9);
    }

    #[test]
    fn points_follow_the_matrix(p in arb_pose(), x in prop::array::uniform3(-10.0f64..10.0)) {
        let m = homogeneous(&p);
        let v = Vector3::from(x);
        let got = p.transform_point(&v);
        for i in 0..3 {
            let want = m[i][0] * x[0] + m[i][1] * x[1] + m[i][2] * x[2] + m[i][3];
            prop_assert!((got[i] - want).abs() < 1e-9);
        }
        prop_assert!((p.inverse_transform_point(&got) - v).norm() < 1e-9);
    }
}
