use mobman::interpolation::*;
use mobman::kinematics::*;
use nalgebra::{Matrix6, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn random_nonsingular(rng: &mut ChaCha8Rng, arm: &ArmModel) -> JointConfig {
    loop {
        let q = JointConfig::new(std::array::from_fn(|_| rng.gen_range(-PI..PI)));
        let ctx = projection_context(arm, &q).unwrap();
        if !ctx.rank_deficient && arm.jacobian_ee_in_base(&q).unwrap().singular_values().min() > 1e-3 {
            return q;
        }
    }
}

#[test]
fn projector_algebra_on_500_configs() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..500 {
        let q = random_nonsingular(&mut rng, &arm);
        let ctx = projection_context(&arm, &q).unwrap();
        let p = ctx.projector;
        assert!((p * p - p).norm() < 1e-9);
        assert!((p - p.transpose()).norm() < 1e-9);
        assert!((ctx.sub_jacobian * p).norm() < 1e-9);
        let dq: SVector<f64, 6> = SVector::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let out = nullspace_project(&arm, &q, &dq).unwrap();
        assert!((ctx.sub_jacobian * out).norm() < 1e-9);
        assert!(out.norm() <= dq.norm() + 1e-12);
    }
}

#[test]
fn projector_matches_svd_null_space_basis() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..200 {
        let q = random_nonsingular(&mut rng, &arm);
        let ctx = projection_context(&arm, &q).unwrap();
        // kernel basis from the full SVD of the 6x6 padded matrix
        let mut padded = Matrix6::zeros();
        padded.fixed_rows_mut::<3>(0).copy_from(&ctx.sub_jacobian);
        let svd = padded.svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|a, b| svd.singular_values[*b].total_cmp(&svd.singular_values[*a]));
        let mut oracle = Matrix6::zeros();
        for &r in &order[3..] {
            let v = vt.row(r).transpose();
            oracle += &v * v.transpose();
        }
        assert!((oracle - ctx.projector).norm() < 1e-9);
    }
}

#[test]
fn projector_fixes_kernel_and_kills_row_space() {
    let arm = ArmModel::desk_default();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..100 {
        let q = random_nonsingular(&mut rng, &arm);
        let ctx = projection_context(&arm, &q).unwrap();
        let w = nalgebra::Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let row = ctx.sub_jacobian.transpose() * w;
        assert!(nullspace_project(&arm, &q, &row).unwrap().norm() < 1e-9);
        let dq: SVector<f64, 6> = SVector::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let kernel = ctx.projector * dq;
        assert!((nullspace_project(&arm, &q, &kernel).unwrap() - kernel).norm() < 1e-12);
    }
}

fn smooth_path(arm: &ArmModel) -> (Vec<PathState>, Vec<JointConfig>) {
    let mut states = Vec::new();
    let mut configs = Vec::new();
    for k in 0..8 {
        let base = BasePose::new(0.05 * k as f64, 0.0, 0.0);
        let q = JointConfig::new([0.01 * k as f64, 0.5, 1.2, 0.1, 0.7, 0.0]);
        states.push(PathState::new(arm.forward_kinematics(&base, &q).unwrap(), base));
        configs.push(q);
    }
    (states, configs)
}

#[test]
fn smooth_input_is_unchanged() {
    let arm = ArmModel::desk_default();
    let (s, q) = smooth_path(&arm);
    let out = run_interpolation(&s, &q, &arm, &InterpolationParams::default()).unwrap();
    assert_eq!(out.states, s);
    assert_eq!(out.configs, q);
    assert!(out.refined_segments.is_empty());
}

#[test]
fn one_jump_inserts_n_plus_one() {
    let arm = ArmModel::desk_default();
    let (s, mut q) = smooth_path(&arm);
    // a tightly folded elbow from waypoint 4 on gives one detected pair
    q[4] = JointConfig::new([0.04, 0.5, 2.5, 0.1, 0.7, 0.0]);
    q[5] = q[4];
    q[6] = q[4];
    q[7] = q[4];
    let params = InterpolationParams {
        jacobian_threshold: 0.05,
        ..InterpolationParams::default()
    };
    assert_eq!(count_jumps(&q, &arm, params.jacobian_threshold), 1);
    let out = run_interpolation(&s, &q, &arm, &params).unwrap();
    assert_eq!(out.states.len(), s.len() + params.insertions + 1);
    assert_eq!(out.refined_segments, vec![3]);
    // originals survive as a subsequence, endpoints of the insert are exact
    let mut it = out.states.iter();
    for orig in &s {
        assert!(it.any(|x| x == orig));
    }
    let ins = &out.states[4..4 + params.insertions + 1];
    assert_eq!(ins[0].ee.position, s[3].ee.position);
    assert!((ins[params.insertions].ee.position - s[4].ee.position).norm() < 1e-12);
    let gaps: Vec<f64> = ins.windows(2).map(|w| (w[1].ee.position - w[0].ee.position).norm()).collect();
    for g in &gaps {
        assert!((g - gaps[0]).abs() < 1e-9);
    }
}

#[test]
fn degenerate_segment_adds_no_motion() {
    let arm = ArmModel::desk_default();
    let q = JointConfig::new([0.2, 0.5, 1.2, 0.1, 0.7, 0.0]);
    let base = BasePose::new(0.3, 0.1, 0.2);
    let s = PathState::new(arm.forward_kinematics(&base, &q).unwrap(), base);
    let seg = interpolate_segment((&s, &q), (&s, &q), &arm, &InterpolationParams::default()).unwrap();
    for (st, c) in seg.states.iter().zip(&seg.configs) {
        assert!((st.ee.position - s.ee.position).norm() < 1e-12);
        assert_eq!(*c, q);
        assert!((st.base.xy() - base.xy()).norm() < 1e-9);
    }
}

#[test]
fn length_mismatch_is_rejected() {
    let arm = ArmModel::desk_default();
    let (s, q) = smooth_path(&arm);
    assert!(run_interpolation(&s, &q[..3], &arm, &InterpolationParams::default()).is_err());
}
