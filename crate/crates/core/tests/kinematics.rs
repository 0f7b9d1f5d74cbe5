use mobman::kinematics::*;
use nalgebra::{Matrix4, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn rz(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn ry(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, 0.0, s, 0.0, 0.0, 1.0, 0.0, 0.0, -s, 0.0, c, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn tr(x: f64, y: f64, z: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = x;
    m[(1, 3)] = y;
    m[(2, 3)] = z;
    m
}

/// Per-link homogeneous product, written independently of the library chain.
fn matrix_chain(arm: &ArmModel, base: &BasePose, q: &JointConfig) -> Matrix4<f64> {
    tr(base.x, base.y, 0.0)
        * rz(base.yaw())
        * tr(arm.mount_offset.x, arm.mount_offset.y, arm.base_height)
        * rz(q[0])
        * ry(q[1])
        * tr(0.0, 0.0, arm.upper_arm)
        * ry(q[2])
        * tr(0.0, 0.0, arm.forearm)
        * rz(q[3])
        * ry(q[4])
        * rz(q[5])
        * tr(0.0, 0.0, arm.tool_length)
        * ry(-FRAC_PI_2)
}

fn random_q(rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig::new(std::array::from_fn(|_| rng.gen_range(-PI..PI)))
}

fn test_arm() -> ArmModel {
    ArmModel::desk_default()
        .with_tool_length(0.1)
        .with_mount_offset(Vector2::new(0.05, -0.02))
}

#[test]
fn fk_matches_matrix_chain() {
    let arm = test_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let base = BasePose::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-PI..PI));
        let q = random_q(&mut rng);
        let m = matrix_chain(&arm, &base, &q);
        let ee = arm.forward_kinematics(&base, &q).unwrap();
        let iso = ee.to_isometry();
        let p = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        assert!((iso.translation.vector - p).norm() < 1e-12);
        let r = iso.rotation.to_rotation_matrix();
        assert!((r.matrix() - m.fixed_view::<3, 3>(0, 0)).norm() < 1e-12);
    }
}

#[test]
fn fk_rejects_limit_violation() {
    let arm = ArmModel::desk_default();
    let q = JointConfig::new([0.0, 0.0, 4.0, 0.0, 0.0, 0.0]);
    assert!(arm.forward_kinematics(&BasePose::default(), &q).is_err());
}

#[test]
fn jacobian_columns_match_finite_differences() {
    let arm = test_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    for _ in 0..200 {
        let q = random_q(&mut rng);
        let j = arm.jacobian_ee_in_base(&q).unwrap();
        for c in 0..DOF {
            let mut hi = q;
            hi.0[c] += h;
            let mut lo = q;
            lo.0[c] -= h;
            let (a, b) = (arm.ee_in_base(&hi), arm.ee_in_base(&lo));
            let lin = (a.translation.vector - b.translation.vector) / (2.0 * h);
            // angular velocity from the rotation difference
            let ang = (a.rotation * b.rotation.inverse()).scaled_axis() / (2.0 * h);
            let fd = [lin, ang];
            for (k, v) in fd.iter().enumerate() {
                let col = j.fixed_view::<3, 1>(3 * k, c).into_owned();
                let err = (col - v).norm() / col.norm().max(1.0);
                assert!(err < 1e-5, "column {c} block {k}: rel err {err}");
            }
        }
    }
}

#[test]
fn planar_two_link_block() {
    let arm = ArmModel::new(1.0, 1.0, 0.0).unwrap();
    let q = JointConfig::new([0.0, 0.0, FRAC_PI_2, 0.0, 0.3, 0.0]);
    let j = arm.jacobian_ee_in_base(&q).unwrap();
    // in the x-z plane the chain reaches (x, z) = (l2 s2 + l3 s23, l2 c2 + l3 c23)
    let (q2, q3) = (q[1], q[2]);
    let dx2 = q2.cos() + (q2 + q3).cos();
    let dx3 = (q2 + q3).cos();
    let dz2 = -q2.sin() - (q2 + q3).sin();
    let dz3 = -(q2 + q3).sin();
    assert!((j[(0, 1)] - dx2).abs() < 1e-12);
    assert!((j[(0, 2)] - dx3).abs() < 1e-12);
    assert!((j[(2, 1)] - dz2).abs() < 1e-12);
    assert!((j[(2, 2)] - dz3).abs() < 1e-12);
}

#[test]
fn wrist_singularity_is_rank_deficient() {
    let arm = ArmModel::desk_default();
    let q = JointConfig::new([0.2, 0.4, 1.0, 0.3, 0.0, -0.5]);
    let j = arm.jacobian_ee_in_base(&q).unwrap();
    assert!(j.singular_values().min() < 1e-9);
}

/// Base pose keeping `ee` fixed with joints `q`, as a 6-vector `[x y z R P Y]`.
fn fixed_ee_base(arm: &ArmModel, ee: &nalgebra::Isometry3<f64>, q: &JointConfig) -> [f64; 6] {
    let b = ee * arm.ee_in_base(q).inverse();
    let (r, p, y) = b.rotation.euler_angles();
    let t = b.translation.vector;
    [t.x, t.y, t.z, r, p, y]
}

#[test]
fn base_jacobian_matches_fixed_ee_solve() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 100 {
        let q = random_q(&mut rng);
        if arm.jacobian_ee_in_base(&q).unwrap().singular_values().min() < 1e-2 {
            continue;
        }
        let base = BasePose::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.5..2.5));
        let ee = base.to_isometry() * arm.ee_in_base(&q);
        let jb = arm.jacobian_base_wrt_global_fixed_ee(&base, &q).unwrap();
        for c in 0..DOF {
            let mut hi = q;
            hi.0[c] += h;
            let mut lo = q;
            lo.0[c] -= h;
            let (a, b) = (fixed_ee_base(&arm, &ee, &hi), fixed_ee_base(&arm, &ee, &lo));
            for r in 0..6 {
                let d = if r < 3 { a[r] - b[r] } else { wrap_angle(a[r] - b[r]) };
                let fd = d / (2.0 * h);
                let err = (jb[(r, c)] - fd).abs() / jb.column(c).norm().max(1.0);
                assert!(err < 1e-4, "row {r} col {c}: {err}");
            }
        }
        checked += 1;
    }
}

#[test]
fn null_space_motion_keeps_base_level_to_second_order() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = BasePose::new(0.3, -0.2, 0.4);
    let q = JointConfig::new([0.3, 0.5, 1.2, 0.4, 0.8, -0.3]);
    let ee = base.to_isometry() * arm.ee_in_base(&q);
    let jb = arm.jacobian_base_wrt_global_fixed_ee(&base, &q).unwrap();
    let sj = jb.fixed_rows::<3>(2).into_owned();
    let svd = sj.svd(false, true);
    let vt = svd.v_t.unwrap();
    // a direction from the kernel of the z/roll/pitch rows
    let w: nalgebra::Vector6<f64> = nalgebra::Vector6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    let mut dq = w;
    for r in 0..3 {
        let row = vt.row(r).transpose();
        dq -= &row * row.dot(&w);
    }
    dq /= dq.norm();
    let drift = |eps: f64| {
        let b = fixed_ee_base(&arm, &ee, &JointConfig(q.0 + dq * eps));
        b[2].abs().max(b[3].abs()).max(b[4].abs())
    };
    let (d1, d2) = (drift(1e-2), drift(5e-3));
    assert!(d1 < 1e-3);
    // halving the step quarters the drift
    assert!((d1 / d2 - 4.0).abs() < 0.5, "ratio {}", d1 / d2);
}

#[test]
fn ik_round_trip_over_1000_configs() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut n = 0;
    while n < 1000 {
        // q in (-pi, pi] so the canonical representative is comparable
        let q = random_q(&mut rng);
        if arm.jacobian_ee_in_base(&q).unwrap().singular_values().min() < 1e-3 {
            continue;
        }
        let base = BasePose::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-PI..PI));
        let target = arm.forward_kinematics(&base, &q).unwrap();
        let sols = ik_enumerate(&arm, &base, &target);
        let best = sols
            .iter()
            .map(|s| s.q.max_abs_diff(&q))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-6, "q {:?}: closest solution {best}", q.0);
        for s in &sols {
            let fk = arm.forward_kinematics(&base, &s.q).unwrap();
            assert!((fk.position - target.position).norm() < 1e-6);
            assert!(fk.angular_distance(&target) < 1e-6, "{} pitch {}", fk.angular_distance(&target), target.pitch());
        }
        n += 1;
    }
}

#[test]
fn ik_unreachable_and_boundary() {
    let arm = ArmModel::desk_default();
    let far = EePose::from_parts(arm.upper_arm + arm.forearm + 1.0, 0.0, arm.base_height, 0.0, 0.0, 0.0);
    assert!(ik_enumerate(&arm, &BasePose::default(), &far).is_empty());

    let generic = JointConfig::new([0.2, 0.6, 1.0, 0.3, 0.7, 0.1]);
    let generic_target = arm.forward_kinematics(&BasePose::default(), &generic).unwrap();
    let n_generic = ik_enumerate(&arm, &BasePose::default(), &generic_target).len();

    // elbow fully stretched: up and down branches coincide
    let straight = JointConfig::new([0.2, 0.6, 0.0, 0.3, 0.7, 0.1]);
    let target = arm.forward_kinematics(&BasePose::default(), &straight).unwrap();
    let sols = ik_enumerate(&arm, &BasePose::default(), &target);
    assert!(!sols.is_empty());
    assert!(sols.len() < n_generic, "{} vs {n_generic}", sols.len());
    for (i, a) in sols.iter().enumerate() {
        for b in &sols[i + 1..] {
            assert!(a.q.max_abs_diff(&b.q) > ik::DEDUP_TOL);
        }
    }
}

#[test]
fn manipulability_matches_svd_oracle() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let q = random_q(&mut rng);
        let m = manipulability_exact(&arm, &q).unwrap();
        let jp = arm.jacobian_ee_in_base(&q).unwrap().fixed_rows::<3>(0).into_owned();
        let oracle: f64 = jp.singular_values().iter().product();
        assert!(m >= 0.0);
        assert!((m - oracle).abs() <= 1e-8 * oracle.max(1e-12) + 1e-15, "{m} vs {oracle}");
    }
    let stretched = JointConfig::new([0.1, 0.4, 0.0, 0.2, 0.5, 0.0]);
    assert!(manipulability_exact(&arm, &stretched).unwrap() < 1e-9);
}

#[test]
fn planar_manipulability_closed_form() {
    let arm = ArmModel::new(1.0, 1.0, 0.0).unwrap();
    // (l2 sin q2 + l3 sin(q2 + q3)) sin q3 l2 l3 with q2 = q3 = pi/2
    let q = JointConfig::new([0.0, FRAC_PI_2, FRAC_PI_2, 0.0, 0.0, 0.0]);
    let m = manipulability_exact(&arm, &q).unwrap();
    assert!((m - 1.0).abs() < 1e-12, "{m}");
}

#[test]
fn frame_equivariance() {
    let arm = test_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let base = BasePose::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-PI..PI));
        let g = BasePose::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-PI..PI));
        let q = random_q(&mut rng);
        let moved = arm.forward_kinematics(&g.compose(&base), &q).unwrap();
        let expected = EePose::from_isometry(&(g.to_isometry() * arm.forward_kinematics(&base, &q).unwrap().to_isometry()));
        assert!((moved.position - expected.position).norm() < 1e-12);
        assert!(moved.angular_distance(&expected) < 1e-9, "{} pitch {}", moved.angular_distance(&expected), expected.pitch());
    }
}

proptest! {
    #[test]
    fn composed_angles_stay_wrapped(
        a in (-50.0f64..50.0, -50.0f64..50.0, -20.0f64..20.0),
        b in (-50.0f64..50.0, -50.0f64..50.0, -20.0f64..20.0),
    ) {
        let p = BasePose::new(a.0, a.1, a.2).compose(&BasePose::new(b.0, b.1, b.2));
        prop_assert!(p.yaw() > -PI && p.yaw() <= PI);
        let inv = BasePose::new(a.0, a.1, a.2).inverse();
        prop_assert!(inv.yaw() > -PI && inv.yaw() <= PI);
    }

    #[test]
    fn wrap_is_idempotent(a in -1e3f64..1e3) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        prop_assert_eq!(wrap_angle(w), w);
        prop_assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-9 || (1.0 - ((a - w) / (2.0 * PI)).fract().abs()) < 1e-9);
    }
}
