//! Receding-horizon tracking of a planar base path with a unicycle model.
//!
//! Each call linearizes the rollout around the current control sequence and
//! takes a few damped Gauss–Newton sweeps on cross-track, heading and
//! control-deviation residuals. The first control is returned, saturated.

use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, BasePose};
use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseCommand {
    pub v: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub w_cross: f64,
    pub w_heading: f64,
    pub w_effort: f64,
    pub sweeps: usize,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            w_cross: 10.0,
            w_heading: 1.0,
            w_effort: 0.1,
            sweeps: 5,
            v_max: 0.3,
            omega_max: 0.8,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(Error::validation("control.mpc", "horizon and dt must be positive"));
        }
        if !(self.v_max > 0.0 && self.omega_max > 0.0) {
            return Err(Error::validation("control.mpc", "velocity limits must be positive"));
        }
        Ok(())
    }
}

/// Planar polyline with cumulative arc length.
#[derive(Clone, Debug, PartialEq)]
pub struct BasePath {
    points: Vec<Vector2<f64>>,
    cumulative: Vec<f64>,
    /// Planned yaw per point; the tangent is used when absent.
    headings: Option<Vec<f64>>,
}

impl BasePath {
    pub fn new(points: Vec<Vector2<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("base path is empty".into()));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            s += (w[1] - w[0]).norm();
            cumulative.push(s);
        }
        Ok(Self {
            points,
            cumulative,
            headings: None,
        })
    }

    pub fn from_poses(poses: &[BasePose]) -> Result<Self> {
        let mut path = Self::new(poses.iter().map(|p| p.xy()).collect())?;
        path.headings = Some(poses.iter().map(|p| p.yaw()).collect());
        Ok(path)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn arc_length_at(&self, index: usize) -> f64 {
        self.cumulative[index.min(self.len() - 1)]
    }

    /// Arc length of the closest point and the fractional waypoint index there.
    /// Among equally close points the furthest along wins, so progress passes
    /// through runs of coincident waypoints.
    pub fn project(&self, p: &Vector2<f64>) -> (f64, f64) {
        if self.len() == 1 {
            return (0.0, 0.0);
        }
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..self.len() - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let d = b - a;
            let len2 = d.norm_squared();
            let f = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 1.0 };
            let dist = (a + d * f - p).norm();
            if dist <= best.0 + 1e-12 {
                best = (dist, self.cumulative[i] + f * len2.sqrt(), i as f64 + f);
            }
        }
        (best.1, best.2)
    }

    /// Point and tangent heading at arc length `s`, clamped to the path.
    pub fn sample(&self, s: f64) -> (Vector2<f64>, f64) {
        let n = self.len();
        if n == 1 {
            return (self.points[0], self.headings.as_ref().map_or(0.0, |h| h[0]));
        }
        let s = s.clamp(0.0, self.total_length());
        let mut i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        // skip zero-length segments when looking for a tangent
        let mut j = i;
        while j < n - 1 && (self.points[j + 1] - self.points[j]).norm() < 1e-12 {
            j += 1;
        }
        if j == n - 1 {
            j = i;
            while j > 0 && (self.points[j + 1] - self.points[j]).norm() < 1e-12 {
                j -= 1;
            }
        }
        let seg = self.points[j + 1] - self.points[j];
        let heading = if seg.norm() < 1e-12 { 0.0 } else { seg.y.atan2(seg.x) };
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let f = if len < 1e-12 {
            i = i.min(n - 2);
            1.0
        } else {
            (s - self.cumulative[i]) / len
        };
        let heading = match &self.headings {
            Some(h) => h[i] + wrap_angle(h[i + 1] - h[i]) * f,
            None => heading,
        };
        (self.points[i] + (self.points[i + 1] - self.points[i]) * f, wrap_angle(heading))
    }
}

/// Stateful tracker keeping the previous control sequence as warm start.
#[derive(Clone, Debug)]
pub struct Mpc {
    pub config: MpcConfig,
    controls: Vec<BaseCommand>,
}

fn rollout(start: &BasePose, controls: &[BaseCommand], dt: f64) -> Vec<[f64; 3]> {
    let mut x = [start.x, start.y, start.yaw()];
    let mut out = Vec::with_capacity(controls.len());
    for u in controls {
        x = [x[0] + u.v * x[2].cos() * dt, x[1] + u.v * x[2].sin() * dt, x[2] + u.omega * dt];
        out.push(x);
    }
    out
}

impl Mpc {
    pub fn new(config: MpcConfig) -> Self {
        Self {
            config,
            controls: vec![BaseCommand::default(); config.horizon],
        }
    }

    /// Default speed profile: the maximum speed, slowing to stop at the end.
    pub fn default_speed(&self, path: &BasePath, cur: &BasePose) -> f64 {
        let remaining = path.total_length() - path.project(&cur.xy()).0;
        self.config.v_max.min(remaining.max(0.0))
    }

    /// One receding-horizon solve. `v_ref` is the speed the references advance at.
    pub fn step(&mut self, path: &BasePath, cur: &BasePose, v_ref: f64) -> BaseCommand {
        let cfg = self.config;
        let h = cfg.horizon;
        let v_ref = v_ref.clamp(0.0, cfg.v_max);
        let (s0, _) = path.project(&cur.xy());
        let refs: Vec<(Vector2<f64>, f64)> = (0..h).map(|k| path.sample(s0 + v_ref * cfg.dt * (k + 1) as f64)).collect();
        let u_ref: Vec<BaseCommand> = (0..h)
            .map(|k| {
                let dh = if k == 0 {
                    wrap_angle(refs[0].1 - path.sample(s0).1)
                } else {
                    wrap_angle(refs[k].1 - refs[k - 1].1)
                };
                BaseCommand {
                    v: v_ref,
                    omega: (dh / cfg.dt).clamp(-cfg.omega_max, cfg.omega_max),
                }
            })
            .collect();

        // warm start: previous solution shifted by one step
        let mut u: Vec<BaseCommand> = self.controls[1..].to_vec();
        u.push(*self.controls.last().unwrap_or(&BaseCommand::default()));
        let (wc, wh, we) = (cfg.w_cross.sqrt(), cfg.w_heading.sqrt(), cfg.w_effort.sqrt());
        let nres = 4 * h;
        for _ in 0..cfg.sweeps {
            let xs = rollout(cur, &u, cfg.dt);
            let mut r = DVector::zeros(nres);
            let mut jac = DMatrix::zeros(nres, 2 * h);
            // sensitivity of the state after step k to control j, as 3x2 blocks
            let mut sens: Vec<[[f64; 2]; 3]> = vec![[[0.0; 2]; 3]; h];
            for k in 0..h {
                let prev_theta = if k == 0 { cur.yaw() } else { xs[k - 1][2] };
                let (s, c) = prev_theta.sin_cos();
                // propagate earlier sensitivities through A_k
                for j in 0..k {
                    let m = sens[j];
                    let mut out = m;
                    for col in 0..2 {
                        out[0][col] = m[0][col] - u[k].v * s * cfg.dt * m[2][col];
                        out[1][col] = m[1][col] + u[k].v * c * cfg.dt * m[2][col];
                    }
                    sens[j] = out;
                }
                sens[k] = [[c * cfg.dt, 0.0], [s * cfg.dt, 0.0], [0.0, cfg.dt]];
                let (rp, rh) = refs[k];
                let (sr, cr) = rh.sin_cos();
                let x = xs[k];
                r[4 * k] = wc * (-sr * (x[0] - rp.x) + cr * (x[1] - rp.y));
                r[4 * k + 1] = wh * wrap_angle(x[2] - rh);
                r[4 * k + 2] = we * (u[k].v - u_ref[k].v);
                r[4 * k + 3] = we * (u[k].omega - u_ref[k].omega);
                for j in 0..=k {
                    for col in 0..2 {
                        let m = sens[j];
                        jac[(4 * k, 2 * j + col)] = wc * (-sr * m[0][col] + cr * m[1][col]);
                        jac[(4 * k + 1, 2 * j + col)] = wh * m[2][col];
                    }
                }
                jac[(4 * k + 2, 2 * k)] = we;
                jac[(4 * k + 3, 2 * k + 1)] = we;
            }
            let jt = jac.transpose();
            let lhs = &jt * &jac + DMatrix::identity(2 * h, 2 * h) * 1e-6;
            let rhs = -(&jt * &r);
            let Some(chol) = lhs.cholesky() else { break };
            let delta = chol.solve(&rhs);
            for k in 0..h {
                u[k].v = (u[k].v + delta[2 * k]).clamp(-cfg.v_max, cfg.v_max);
                u[k].omega = (u[k].omega + delta[2 * k + 1]).clamp(-cfg.omega_max, cfg.omega_max);
            }
            if delta.amax() < 1e-9 {
                break;
            }
        }
        self.controls = u;
        self.controls[0]
    }
}
