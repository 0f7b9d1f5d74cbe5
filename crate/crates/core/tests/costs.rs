use mobman::costs::*;
use mobman::esdf::{build_esdf, EsdfGrid, VoxelGrid};
use mobman::kinematics::*;
use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene() -> EsdfGrid {
    let mut g = VoxelGrid::new(Vector3::new(-1.0, -1.0, -0.2), 0.05, [60, 40, 30]).unwrap();
    g.add_box(Vector3::new(0.4, 0.3, 0.0), Vector3::new(0.8, 0.6, 0.4));
    g.add_sphere(Vector3::new(-0.3, -0.4, 0.6), 0.15);
    build_esdf(&g, 5.0).unwrap()
}

/// Waypoint near a plausible arm pose, keeping angles away from wrap points.
fn random_state(rng: &mut ChaCha8Rng) -> StateVector {
    let bx = rng.gen_range(-0.6..0.6);
    let by = rng.gen_range(-0.6..0.6);
    let yaw: f64 = rng.gen_range(-1.5..1.5);
    let reach = rng.gen_range(0.25..0.7);
    let side = rng.gen_range(-0.8..0.8);
    StateVector::from_column_slice(&[
        bx + reach * (yaw + side).cos(),
        by + reach * (yaw + side).sin(),
        rng.gen_range(0.2..0.9),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-2.0..2.0),
        bx,
        by,
        yaw,
    ])
}

fn all_kinds() -> Vec<TermKind> {
    let mut k = vec![TermKind::Manip, TermKind::EeAccel, TermKind::EeCurv, TermKind::BaseHeading, TermKind::Workspace];
    for b in [Body::Ee, Body::Base] {
        k.push(TermKind::ObstaclePos(b));
        k.push(TermKind::ObstacleVel(b));
    }
    k
}

/// Central differences of the public residual over the whole state list.
fn independent_fd(term: &CostTerm, xs: &[StateVector], ctx: &CostContext, first: usize, count: usize) -> DMatrix<f64> {
    let h = 1e-6;
    let dim = residual(term, xs, ctx).unwrap().len();
    let mut jac = DMatrix::zeros(dim, 9 * count);
    let mut work = xs.to_vec();
    for w in 0..count {
        for c in 0..9 {
            let orig = work[first + w][c];
            work[first + w][c] = orig + h;
            let hi = residual(term, &work, ctx).unwrap();
            work[first + w][c] = orig - h;
            let lo = residual(term, &work, ctx).unwrap();
            work[first + w][c] = orig;
            jac.set_column(9 * w + c, &((hi - lo) / (2.0 * h)));
        }
    }
    jac
}

#[test]
fn every_term_jacobian_matches_finite_differences() {
    let arm = ArmModel::desk_default();
    let esdf = scene();
    let config = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let xs: Vec<StateVector> = (0..3).map(|_| random_state(&mut rng)).collect();
        let penalties = PenaltyState { lambda: vec![PENALTY_ACTIVE; 3] };
        let ctx = CostContext {
            arm: &arm,
            esdf: Some(&esdf),
            config: &config,
            penalties: &penalties,
        };
        for kind in all_kinds() {
            for index in 0..3 {
                let term = CostTerm::new(kind, index, 1.0);
                let Some((first, count)) = term.waypoints(3) else { continue };
                let (f, j) = jacobian_of(&term, &xs, &ctx).unwrap();
                assert_eq!(f, first);
                let fd = independent_fd(&term, &xs, &ctx, first, count);
                let scale = j.norm().max(fd.norm());
                if scale < 1e-12 {
                    continue;
                }
                let rel = (&j - &fd).norm() / scale;
                worst = worst.max(rel);
                assert!(rel < 1e-5, "{} at {index}: rel err {rel:.3e}", kind.name());
            }
        }
    }
    println!("worst relative error {worst:.3e}");
}

#[test]
fn accel_jacobian_wrt_cur_is_scaled_identity() {
    let arm = ArmModel::desk_default();
    let config = CostConfig::default();
    let penalties = PenaltyState::zeros(3);
    let ctx = CostContext {
        arm: &arm,
        esdf: None,
        config: &config,
        penalties: &penalties,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let xs: Vec<StateVector> = (0..3).map(|_| random_state(&mut rng)).collect();
    let (_, j) = jacobian_of(&CostTerm::new(TermKind::EeAccel, 1, 1.0), &xs, &ctx).unwrap();
    let t = config.timestep;
    let block = j.view((0, 9), (3, 3));
    assert!((block - DMatrix::identity(3, 3) * (-2.0 / (2.0 * t * t))).norm() < 1e-12);
}

#[test]
fn residuals_stay_finite_under_fuzzing() {
    let arm = ArmModel::desk_default();
    let esdf = scene();
    let mut config = CostConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for n in 0..100_000 {
        config.displacement = if n % 2 == 0 { Displacement::Normalized } else { Displacement::Raw };
        let penalties = PenaltyState { lambda: vec![PENALTY_ACTIVE; 3] };
        let ctx = CostContext {
            arm: &arm,
            esdf: Some(&esdf),
            config: &config,
            penalties: &penalties,
        };
        // wide ranges plus exact repeats and zero reach
        let mut xs: Vec<StateVector> = (0..3)
            .map(|_| StateVector::from_fn(|_, _| rng.gen_range(-20.0..20.0)))
            .collect();
        match n % 4 {
            1 => xs[1] = xs[0],
            2 => {
                xs[1][0] = xs[1][6];
                xs[1][1] = xs[1][7];
            }
            3 => xs[2] = xs[1],
            _ => {}
        }
        let kind = all_kinds()[n % 9];
        let term = CostTerm::new(kind, 1, 1.0);
        let r = residual(&term, &xs, &ctx).unwrap();
        assert!(r.iter().all(|v| v.is_finite()));
        if kind == TermKind::EeCurv && config.displacement == Displacement::Normalized {
            assert!((0.0..=2.0 + 1e-12).contains(&r[0]));
        }
    }
}

#[test]
fn translation_invariance_of_geometric_terms() {
    let arm = ArmModel::desk_default();
    let config = CostConfig::default();
    let penalties = PenaltyState { lambda: vec![PENALTY_ACTIVE; 3] };
    let ctx = CostContext {
        arm: &arm,
        esdf: None,
        config: &config,
        penalties: &penalties,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let xs: Vec<StateVector> = (0..3).map(|_| random_state(&mut rng)).collect();
        let (dx, dy) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let moved: Vec<StateVector> = xs
            .iter()
            .map(|x| {
                let mut m = *x;
                m[0] += dx;
                m[1] += dy;
                m[6] += dx;
                m[7] += dy;
                m
            })
            .collect();
        for kind in [TermKind::Manip, TermKind::EeAccel, TermKind::EeCurv, TermKind::BaseHeading, TermKind::Workspace] {
            let term = CostTerm::new(kind, 1, 1.0);
            let a = residual(&term, &xs, &ctx).unwrap();
            let b = residual(&term, &moved, &ctx).unwrap();
            assert!((&a - &b).norm() <= 1e-9 * (1.0 + b.norm()), "{}", kind.name());
        }
    }
}
