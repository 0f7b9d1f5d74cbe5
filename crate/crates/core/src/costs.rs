//! Residuals and Jacobians of the path cost terms.
//!
//! Every term touches one to three consecutive waypoints of the 9-vector state
//! `[ee x y z, ee roll pitch yaw, base x y yaw]` and carries a scalar weight.
//! The weighted cost of a term is `weight * |r|^2`.

use crate::error::{Error, Result};
use crate::esdf::EsdfGrid;
use crate::kinematics::{layout, manipulability_simplified, wrap_angle, ArmModel, PathState, StateVector};
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Upper bound applied to reciprocal residuals.
pub const RESIDUAL_CAP: f64 = 1e6;
/// Multiplier applied to violated workspace terms.
pub const PENALTY_ACTIVE: f64 = 1e4;
/// Central finite-difference step for the numeric Jacobians.
pub const FD_STEP: f64 = 1e-6;
const MIN_DISPLACEMENT: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub manip: f64,
    pub ee_accel: f64,
    pub ee_curv: f64,
    pub base_heading: f64,
    pub workspace: f64,
    pub obst_pos: f64,
    pub obst_vel: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            manip: 50.0,
            ee_accel: 100.0,
            ee_curv: 100.0,
            base_heading: 100.0,
            workspace: 1000.0,
            obst_pos: 100.0,
            obst_vel: 100.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("manip", self.manip),
            ("ee_accel", self.ee_accel),
            ("ee_curv", self.ee_curv),
            ("base_heading", self.base_heading),
            ("workspace", self.workspace),
            ("obst_pos", self.obst_pos),
            ("obst_vel", self.obst_vel),
        ];
        for (name, w) in all {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::validation(format!("weights.{name}"), format!("{w} must be > 0")));
            }
        }
        Ok(())
    }
}

/// How displacement vectors enter the curvature and obstacle-direction terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Displacement {
    /// Unit displacements: the residual measures direction change only.
    #[default]
    Normalized,
    /// Displacements as they are.
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub weights: CostWeights,
    /// Time between adjacent waypoints, seconds.
    pub timestep: f64,
    /// Workspace radius `eps_ew` around the shoulder height, meters.
    pub workspace_threshold: f64,
    pub displacement: Displacement,
    /// Height at which the base is probed in the distance field.
    pub chassis_height: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            timestep: 0.2,
            workspace_threshold: 0.85,
            displacement: Displacement::Normalized,
            chassis_height: 0.2,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.timestep > 0.0 && self.timestep.is_finite()) {
            return Err(Error::validation("costs.timestep", "must be > 0"));
        }
        if !(self.workspace_threshold > 0.0) {
            return Err(Error::validation("costs.workspace_threshold", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    Ee,
    Base,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermKind {
    Manip,
    EeAccel,
    EeCurv,
    BaseHeading,
    Workspace,
    ObstaclePos(Body),
    ObstacleVel(Body),
}

impl TermKind {
    pub fn name(&self) -> &'static str {
        match self {
            TermKind::Manip => "manip",
            TermKind::EeAccel => "ee_accel",
            TermKind::EeCurv => "ee_curv",
            TermKind::BaseHeading => "base_heading",
            TermKind::Workspace => "workspace",
            TermKind::ObstaclePos(Body::Ee) => "obst_pos_ee",
            TermKind::ObstaclePos(Body::Base) => "obst_pos_base",
            TermKind::ObstacleVel(Body::Ee) => "obst_vel_ee",
            TermKind::ObstacleVel(Body::Base) => "obst_vel_base",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TermKind::EeAccel => 6,
            _ => 1,
        }
    }

    /// `(offset, count)`: the term anchored at `i` touches waypoints
    /// `i + offset .. i + offset + count`.
    fn span(&self) -> (isize, usize) {
        match self {
            TermKind::Manip | TermKind::Workspace | TermKind::ObstaclePos(_) => (0, 1),
            TermKind::EeAccel | TermKind::EeCurv => (-1, 3),
            TermKind::BaseHeading => (-1, 2),
            TermKind::ObstacleVel(_) => (0, 2),
        }
    }

    pub fn weight(&self, w: &CostWeights) -> f64 {
        match self {
            TermKind::Manip => w.manip,
            TermKind::EeAccel => w.ee_accel,
            TermKind::EeCurv => w.ee_curv,
            TermKind::BaseHeading => w.base_heading,
            TermKind::Workspace => w.workspace,
            TermKind::ObstaclePos(_) => w.obst_pos,
            TermKind::ObstacleVel(_) => w.obst_vel,
        }
    }

    fn analytic(&self) -> bool {
        matches!(
            self,
            TermKind::EeAccel | TermKind::EeCurv | TermKind::BaseHeading | TermKind::Workspace
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostTerm {
    pub kind: TermKind,
    /// Anchor waypoint `i`.
    pub index: usize,
    pub weight: f64,
}

impl CostTerm {
    pub fn new(kind: TermKind, index: usize, weight: f64) -> Self {
        Self { kind, index, weight }
    }

    /// First touched waypoint and number of touched waypoints, or `None` when
    /// the span leaves `0..n`.
    pub fn waypoints(&self, n: usize) -> Option<(usize, usize)> {
        let (off, count) = self.kind.span();
        let first = self.index as isize + off;
        (first >= 0 && first as usize + count <= n).then_some((first as usize, count))
    }
}

/// Workspace multiplier per waypoint, refreshed between inner solves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PenaltyState {
    pub lambda: Vec<f64>,
}

impl PenaltyState {
    pub fn zeros(n: usize) -> Self {
        Self { lambda: vec![0.0; n] }
    }

    /// Two-level update: `PENALTY_ACTIVE` where the workspace inequality is
    /// violated, zero elsewhere.
    pub fn update(&mut self, states: &[PathState], arm: &ArmModel, threshold: f64) {
        self.lambda = states.iter().map(|s| penalty_multiplier(s, arm, threshold)).collect();
    }
}

/// Everything a residual may need beyond the states themselves.
#[derive(Clone, Copy)]
pub struct CostContext<'a> {
    pub arm: &'a ArmModel,
    pub esdf: Option<&'a EsdfGrid>,
    pub config: &'a CostConfig,
    pub penalties: &'a PenaltyState,
}

fn cap(x: f64) -> f64 {
    if x.is_nan() {
        RESIDUAL_CAP
    } else {
        x.min(RESIDUAL_CAP)
    }
}

fn reciprocal(x: f64) -> f64 {
    if x <= 0.0 {
        RESIDUAL_CAP
    } else {
        cap(1.0 / x)
    }
}

pub fn residual_manip(state: &PathState, arm: &ArmModel) -> f64 {
    reciprocal(manipulability_simplified(arm, &state.ee, &state.base).value)
}

/// Second difference of the end-effector pose over `2 t^2`, angles wrapped.
pub fn residual_ee_accel(prev: &PathState, cur: &PathState, next: &PathState, t: f64) -> Vector6<f64> {
    let fwd = next.ee.difference(&cur.ee);
    let back = cur.ee.difference(&prev.ee);
    let mut d = fwd - back;
    for i in 3..6 {
        d[i] = wrap_angle(d[i]);
    }
    d / (2.0 * t * t)
}

fn unit_or_raw(v: &Vector3<f64>, mode: Displacement) -> Option<Vector3<f64>> {
    let n = v.norm();
    if n <= MIN_DISPLACEMENT {
        return None;
    }
    Some(match mode {
        Displacement::Normalized => v / n,
        Displacement::Raw => *v,
    })
}

pub fn residual_ee_curv(prev: &PathState, cur: &PathState, next: &PathState, mode: Displacement) -> f64 {
    let a = next.ee.position - cur.ee.position;
    let b = cur.ee.position - prev.ee.position;
    match (unit_or_raw(&a, mode), unit_or_raw(&b, mode)) {
        (Some(u), Some(v)) => 1.0 - u.dot(&v),
        _ => 0.0,
    }
}

fn heading_error(prev: &PathState, cur: &PathState) -> Option<f64> {
    let dx = cur.base.x - prev.base.x;
    let dy = cur.base.y - prev.base.y;
    if dx.hypot(dy) <= MIN_DISPLACEMENT {
        return None;
    }
    Some(wrap_angle(cur.base.yaw() - dy.atan2(dx)))
}

pub fn residual_base_heading(prev: &PathState, cur: &PathState) -> f64 {
    heading_error(prev, cur).map_or(0.0, f64::abs)
}

/// Left-hand side of the workspace inequality, `D^2 - eps^2`.
pub fn workspace_violation(state: &PathState, arm: &ArmModel, threshold: f64) -> f64 {
    let d = state.workspace_distance(arm.base_height);
    d * d - threshold * threshold
}

pub fn penalty_multiplier(state: &PathState, arm: &ArmModel, threshold: f64) -> f64 {
    if workspace_violation(state, arm, threshold) > 0.0 {
        PENALTY_ACTIVE
    } else {
        0.0
    }
}

pub fn residual_workspace(state: &PathState, arm: &ArmModel, threshold: f64, lambda: f64) -> f64 {
    lambda * workspace_violation(state, arm, threshold)
}

/// Point probed in the distance field for the given body.
pub fn probe_point(state: &PathState, body: Body, chassis_height: f64) -> Vector3<f64> {
    match body {
        Body::Ee => state.ee.position,
        Body::Base => Vector3::new(state.base.x, state.base.y, chassis_height),
    }
}

/// `[1 / sdf(p_i), 1 - d . grad(p_i)]` with `d = p_{i+1} - p_i`; the second
/// component is zero without a following waypoint or with zero displacement.
pub fn residual_obstacle(
    cur: &PathState,
    next: Option<&PathState>,
    esdf: &EsdfGrid,
    body: Body,
    chassis_height: f64,
    mode: Displacement,
) -> [f64; 2] {
    let p = probe_point(cur, body, chassis_height);
    let pos = reciprocal(esdf.sdf_dist(&p).value);
    let vel = next
        .and_then(|n| unit_or_raw(&(probe_point(n, body, chassis_height) - p), mode))
        .map_or(0.0, |d| 1.0 - d.dot(&esdf.sdf_grad(&p).value));
    [pos, vel]
}

fn states_of(xs: &[StateVector]) -> Vec<PathState> {
    xs.iter().map(PathState::from_vector).collect()
}

/// Residual of `term` given the touched waypoints only.
fn eval_local(term: &CostTerm, xs: &[StateVector], ctx: &CostContext) -> DVector<f64> {
    let s = states_of(xs);
    let cfg = ctx.config;
    match term.kind {
        TermKind::Manip => DVector::from_element(1, residual_manip(&s[0], ctx.arm)),
        TermKind::EeAccel => {
            let r = residual_ee_accel(&s[0], &s[1], &s[2], cfg.timestep);
            DVector::from_column_slice(r.as_slice())
        }
        TermKind::EeCurv => DVector::from_element(1, residual_ee_curv(&s[0], &s[1], &s[2], cfg.displacement)),
        TermKind::BaseHeading => DVector::from_element(1, residual_base_heading(&s[0], &s[1])),
        TermKind::Workspace => {
            let lambda = ctx.penalties.lambda.get(term.index).copied().unwrap_or(0.0);
            DVector::from_element(1, residual_workspace(&s[0], ctx.arm, cfg.workspace_threshold, lambda))
        }
        TermKind::ObstaclePos(body) => {
            let v = ctx.esdf.map_or(0.0, |e| {
                residual_obstacle(&s[0], None, e, body, cfg.chassis_height, cfg.displacement)[0]
            });
            DVector::from_element(1, v)
        }
        TermKind::ObstacleVel(body) => {
            let v = ctx.esdf.map_or(0.0, |e| {
                residual_obstacle(&s[0], Some(&s[1]), e, body, cfg.chassis_height, cfg.displacement)[1]
            });
            DVector::from_element(1, v)
        }
    }
}

fn touched<'s>(term: &CostTerm, states: &'s [StateVector]) -> Result<&'s [StateVector]> {
    let (first, count) = term
        .waypoints(states.len())
        .ok_or_else(|| Error::Problem(format!("`{}` term at {} out of range", term.kind.name(), term.index)))?;
    Ok(&states[first..first + count])
}

/// Residual of one term over the full state list.
pub fn residual(term: &CostTerm, states: &[StateVector], ctx: &CostContext) -> Result<DVector<f64>> {
    let r = eval_local(term, touched(term, states)?, ctx);
    if r.iter().all(|v| v.is_finite()) {
        Ok(r)
    } else {
        Err(Error::NonFinite {
            term: term.kind.name(),
            index: term.index,
        })
    }
}

/// `weight * |r|^2` of one term.
pub fn term_cost(term: &CostTerm, states: &[StateVector], ctx: &CostContext) -> Result<f64> {
    Ok(term.weight * residual(term, states, ctx)?.norm_squared())
}

/// Central-difference Jacobian of the local residual, `dim x 9*count`.
pub fn numeric_jacobian(term: &CostTerm, xs: &[StateVector], ctx: &CostContext) -> DMatrix<f64> {
    let dim = term.kind.dim();
    let mut jac = DMatrix::zeros(dim, 9 * xs.len());
    let mut work = xs.to_vec();
    for w in 0..xs.len() {
        for c in 0..layout::DIM {
            let orig = work[w][c];
            work[w][c] = orig + FD_STEP;
            let hi = eval_local(term, &work, ctx);
            work[w][c] = orig - FD_STEP;
            let lo = eval_local(term, &work, ctx);
            work[w][c] = orig;
            let mut col = (hi - lo) / (2.0 * FD_STEP);
            // angle components may wrap across the step
            if term.kind == TermKind::EeAccel {
                let scale = 2.0 * ctx.config.timestep * ctx.config.timestep;
                for k in 3..6 {
                    col[k] = wrap_angle(col[k] * 2.0 * FD_STEP * scale) / (2.0 * FD_STEP * scale);
                }
            }
            jac.column_mut(9 * w + c).copy_from(&col);
        }
    }
    jac
}

fn analytic_jacobian(term: &CostTerm, xs: &[StateVector], ctx: &CostContext) -> DMatrix<f64> {
    let cfg = ctx.config;
    let mut jac = DMatrix::zeros(term.kind.dim(), 9 * xs.len());
    match term.kind {
        TermKind::EeAccel => {
            let k = 1.0 / (2.0 * cfg.timestep * cfg.timestep);
            for (w, coeff) in [(0usize, k), (1, -2.0 * k), (2, k)] {
                for r in 0..6 {
                    jac[(r, 9 * w + r)] = coeff;
                }
            }
        }
        TermKind::EeCurv => {
            let p: Vec<Vector3<f64>> = xs.iter().map(|x| Vector3::new(x[0], x[1], x[2])).collect();
            let a = p[2] - p[1];
            let b = p[1] - p[0];
            let (na, nb) = (a.norm(), b.norm());
            if na > MIN_DISPLACEMENT && nb > MIN_DISPLACEMENT {
                let (da, db) = match cfg.displacement {
                    Displacement::Normalized => {
                        let (u, v) = (a / na, b / nb);
                        (-(v - u * u.dot(&v)) / na, -(u - v * v.dot(&u)) / nb)
                    }
                    Displacement::Raw => (-b, -a),
                };
                for ax in 0..3 {
                    jac[(0, ax)] = -db[ax];
                    jac[(0, 9 + ax)] = db[ax] - da[ax];
                    jac[(0, 18 + ax)] = da[ax];
                }
            }
        }
        TermKind::BaseHeading => {
            let s = states_of(xs);
            if let Some(e) = heading_error(&s[0], &s[1]) {
                let sign = if e > 0.0 {
                    1.0
                } else if e < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let dx = s[1].base.x - s[0].base.x;
                let dy = s[1].base.y - s[0].base.y;
                let r2 = dx * dx + dy * dy;
                // d atan2(dy, dx) = (dx ddy - dy ddx) / r2
                let (gx, gy) = (-dy / r2, dx / r2);
                jac[(0, 9 + layout::BASE_YAW)] = sign;
                jac[(0, 9 + layout::BASE_X)] = -sign * gx;
                jac[(0, 9 + layout::BASE_Y)] = -sign * gy;
                jac[(0, layout::BASE_X)] = sign * gx;
                jac[(0, layout::BASE_Y)] = sign * gy;
            }
        }
        TermKind::Workspace => {
            let lambda = ctx.penalties.lambda.get(term.index).copied().unwrap_or(0.0);
            let x = &xs[0];
            let ex = x[0] - x[layout::BASE_X];
            let ey = x[1] - x[layout::BASE_Y];
            let ez = x[2] - ctx.arm.base_height;
            jac[(0, 0)] = 2.0 * lambda * ex;
            jac[(0, 1)] = 2.0 * lambda * ey;
            jac[(0, 2)] = 2.0 * lambda * ez;
            jac[(0, layout::BASE_X)] = -2.0 * lambda * ex;
            jac[(0, layout::BASE_Y)] = -2.0 * lambda * ey;
        }
        _ => unreachable!("numeric term routed to analytic Jacobian"),
    }
    jac
}

/// Jacobian of one term w.r.t. the touched waypoints, `dim x 9*count`; the
/// first touched waypoint is returned alongside.
pub fn jacobian_of(term: &CostTerm, states: &[StateVector], ctx: &CostContext) -> Result<(usize, DMatrix<f64>)> {
    let (first, _) = term
        .waypoints(states.len())
        .ok_or_else(|| Error::Problem(format!("`{}` term at {} out of range", term.kind.name(), term.index)))?;
    let xs = touched(term, states)?;
    let j = if term.kind.analytic() {
        analytic_jacobian(term, xs, ctx)
    } else {
        numeric_jacobian(term, xs, ctx)
    };
    Ok((first, j))
}

/// Default term set for `n` waypoints: manipulability and workspace at every
/// waypoint, acceleration and curvature at interior ones, heading from the second on.
pub fn standard_terms(n: usize, weights: &CostWeights) -> Vec<CostTerm> {
    let mut terms = Vec::new();
    for i in 0..n {
        terms.push(CostTerm::new(TermKind::Manip, i, weights.manip));
        terms.push(CostTerm::new(TermKind::Workspace, i, weights.workspace));
        if i > 0 {
            terms.push(CostTerm::new(TermKind::BaseHeading, i, weights.base_heading));
        }
        if i > 0 && i + 1 < n {
            terms.push(CostTerm::new(TermKind::EeAccel, i, weights.ee_accel));
            terms.push(CostTerm::new(TermKind::EeCurv, i, weights.ee_curv));
        }
    }
    terms
}

/// Obstacle terms for both bodies at waypoint `i`.
pub fn obstacle_terms(i: usize, n: usize, weights: &CostWeights) -> Vec<CostTerm> {
    let mut terms = Vec::with_capacity(4);
    for body in [Body::Ee, Body::Base] {
        terms.push(CostTerm::new(TermKind::ObstaclePos(body), i, weights.obst_pos));
        if i + 1 < n {
            terms.push(CostTerm::new(TermKind::ObstacleVel(body), i, weights.obst_vel));
        }
    }
    terms
}
