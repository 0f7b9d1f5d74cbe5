//! Stability metrics over a sampled end-effector trajectory.

use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, EePose};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Population std of the EE linear acceleration norm, m/s^2.
    pub sigma_la: f64,
    /// Population std of the EE angular acceleration norm, rad/s^2.
    pub sigma_aa: f64,
    pub kappa_max: f64,
    /// Largest distance between any two EE positions.
    pub p_max: f64,
    pub v_mean: f64,
    pub v_max: f64,
    pub a_mean: f64,
    pub a_max: f64,
    pub task: Option<super::task::TaskOutcome>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

/// Curvature of the circle through three points, 0 when any two coincide.
pub fn circumcircle_curvature(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let (ab, bc, ca) = ((b - a).norm(), (c - b).norm(), (a - c).norm());
    let denom = ab * bc * ca;
    if denom < 1e-18 {
        return 0.0;
    }
    2.0 * (b - a).cross(&(c - a)).norm() / denom
}

pub fn max_pairwise_distance(ps: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            best = best.max((ps[i] - ps[j]).norm_squared());
        }
    }
    best.sqrt()
}

pub fn compute_metrics(ee: &[EePose], dt: f64) -> Result<RunMetrics> {
    if ee.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: ee.len() });
    }
    if !(dt > 0.0) {
        return Err(Error::validation("dt", "must be > 0"));
    }
    let p: Vec<Vector3<f64>> = ee.iter().map(|e| e.position).collect();
    let r: Vec<Vector3<f64>> = ee.iter().map(|e| e.rpy()).collect();
    let wrapped = |a: &Vector3<f64>, b: &Vector3<f64>| (a - b).map(wrap_angle);
    let n = ee.len();
    let mut v = Vec::with_capacity(n - 2);
    let mut a = Vec::with_capacity(n - 2);
    let mut aa = Vec::with_capacity(n - 2);
    let mut kappa = 0.0f64;
    for i in 1..n - 1 {
        v.push(((p[i + 1] - p[i - 1]) / (2.0 * dt)).norm());
        a.push(((p[i + 1] - 2.0 * p[i] + p[i - 1]) / (dt * dt)).norm());
        aa.push(((wrapped(&r[i + 1], &r[i]) - wrapped(&r[i], &r[i - 1])) / (dt * dt)).norm());
        kappa = kappa.max(circumcircle_curvature(&p[i - 1], &p[i], &p[i + 1]));
    }
    Ok(RunMetrics {
        sigma_la: population_std(&a),
        sigma_aa: population_std(&aa),
        kappa_max: kappa,
        p_max: max_pairwise_distance(&p),
        v_mean: mean(&v),
        v_max: max(&v),
        a_mean: mean(&a),
        a_max: max(&a),
        task: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn at(x: f64, y: f64, z: f64) -> EePose {
        EePose::from_parts(x, y, z, 0.0, 0.0, 0.0)
    }

    #[test]
    fn stationary_is_all_zero() {
        let m = compute_metrics(&vec![at(0.3, 0.1, 0.5); 20], 0.01).unwrap();
        assert_eq!(m, RunMetrics::default());
        assert!(compute_metrics(&vec![at(0.0, 0.0, 0.0); 2], 0.01).is_err());
    }

    #[test]
    fn line_and_circle() {
        let dt = 0.01;
        let line: Vec<_> = (0..50).map(|i| at(0.2 * i as f64 * dt, 0.0, 0.0)).collect();
        let m = compute_metrics(&line, dt).unwrap();
        assert!((m.v_mean - 0.2).abs() < 1e-6 && m.sigma_la < 1e-9);
        assert!((m.p_max - 0.2 * 49.0 * dt).abs() < 1e-12);

        let r = 0.5;
        let circle: Vec<_> = (0..100)
            .map(|i| {
                let th = TAU * i as f64 / 100.0;
                at(r * th.cos(), r * th.sin(), 0.0)
            })
            .collect();
        let m = compute_metrics(&circle, dt).unwrap();
        assert!((m.kappa_max - 1.0 / r).abs() < 0.02 / r);
        assert!((m.p_max - 2.0 * r).abs() < 0.02 * r);
    }
}
