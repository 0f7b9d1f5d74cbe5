//! Joint optimization of end-effector and base waypoints with sparse
//! Levenberg–Marquardt.
//!
//! Fixed coordinates are eliminated: their rows of the normal equations are
//! replaced by identity rows with a zero right-hand side, so they are never
//! written. An outer loop refreshes the two-level workspace multiplier before
//! every inner run.

pub mod banded;

use crate::costs::{
    self, jacobian_of, standard_terms, workspace_violation, CostConfig, CostContext, CostTerm, PenaltyState,
    TermKind, PENALTY_ACTIVE,
};
use crate::error::{Error, Result};
use crate::esdf::EsdfGrid;
use crate::kinematics::{layout, wrap_angle, ArmModel, EePose, PathState, StateVector};
use banded::BandedSym;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

/// Terms couple at most three consecutive waypoints.
pub const BANDWIDTH: usize = 3 * layout::DIM - 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_inner_iterations: usize,
    pub max_outer_iterations: usize,
    pub relative_cost_tol: f64,
    pub gradient_tol: f64,
    pub initial_damping: f64,
    /// Multiply the multiplier by ten on repeated violation instead of the
    /// fixed two-level rule.
    pub multiplier_growth: bool,
    /// Allowed `D - eps_ew`, meters.
    pub feasibility_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_inner_iterations: 100,
            max_outer_iterations: 10,
            relative_cost_tol: 1e-8,
            gradient_tol: 1e-8,
            initial_damping: 1e-3,
            multiplier_growth: false,
            feasibility_tol: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    RelativeCostChange,
    GradientNorm,
    MaxIterations,
    DampingOverflow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Accepted plus rejected inner steps over all outer rounds.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub per_term: BTreeMap<String, f64>,
    pub convergence: Convergence,
    pub wall_time_s: f64,
    /// Largest `D - eps_ew` over waypoints carrying a workspace term.
    pub max_workspace_excess: f64,
    /// `(outer round, cost)` after every accepted step.
    pub history: Vec<(usize, f64)>,
}

/// The path problem: waypoints, cost terms and the elimination mask.
#[derive(Clone, Debug)]
pub struct Problem {
    pub arm: ArmModel,
    pub esdf: Option<Arc<EsdfGrid>>,
    pub config: CostConfig,
    states: Vec<StateVector>,
    terms: Vec<CostTerm>,
    fixed: Vec<[bool; layout::DIM]>,
    penalties: PenaltyState,
}

impl Problem {
    /// Problem without terms and nothing fixed.
    pub fn new(arm: ArmModel, states: &[PathState], config: CostConfig) -> Result<Self> {
        if states.len() < 3 {
            return Err(Error::Problem(format!("need at least 3 waypoints, got {}", states.len())));
        }
        config.validate()?;
        Ok(Self {
            arm,
            esdf: None,
            config,
            states: states.iter().map(PathState::to_vector).collect(),
            terms: Vec::new(),
            fixed: vec![[false; layout::DIM]; states.len()],
            penalties: PenaltyState::zeros(states.len()),
        })
    }

    /// Problem with the standard term set and the first base waypoint fixed.
    pub fn standard(arm: ArmModel, states: &[PathState], config: CostConfig) -> Result<Self> {
        let mut p = Self::new(arm, states, config)?;
        let terms = standard_terms(states.len(), &p.config.weights);
        p.add_terms(terms)?;
        p.fix_base(0)?;
        Ok(p)
    }

    pub fn with_esdf(mut self, esdf: Arc<EsdfGrid>) -> Self {
        self.esdf = Some(esdf);
        self
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> Vec<PathState> {
        self.states.iter().map(PathState::from_vector).collect()
    }

    pub fn state_vectors(&self) -> &[StateVector] {
        &self.states
    }

    pub fn terms(&self) -> &[CostTerm] {
        &self.terms
    }

    pub fn penalties(&self) -> &PenaltyState {
        &self.penalties
    }

    pub fn set_penalties(&mut self, penalties: PenaltyState) -> Result<()> {
        if penalties.lambda.len() != self.len() {
            return Err(Error::Problem("penalty count differs from waypoint count".into()));
        }
        self.penalties = penalties;
        Ok(())
    }

    pub fn add_terms(&mut self, terms: impl IntoIterator<Item = CostTerm>) -> Result<()> {
        let n = self.len();
        for t in terms {
            if t.waypoints(n).is_none() {
                return Err(Error::Problem(format!("`{}` term at {} out of range", t.kind.name(), t.index)));
            }
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::Problem(format!("`{}` term weight {} must be > 0", t.kind.name(), t.weight)));
            }
            self.terms.push(t);
        }
        Ok(())
    }

    pub fn is_fixed(&self, waypoint: usize, coord: usize) -> bool {
        self.fixed[waypoint][coord]
    }

    /// Sets the end-effector blocks of waypoints `s..=t` to `desired` and
    /// removes them from the variables.
    pub fn fix_ee_window(&mut self, desired: &EePose, s: usize, t: usize) -> Result<()> {
        if self.is_empty() || s > t || t >= self.len() {
            return Err(Error::Problem(format!("fixed window [{s}, {t}] invalid for {} waypoints", self.len())));
        }
        let d = desired.to_vector();
        for i in s..=t {
            for c in layout::EE {
                self.states[i][c] = d[c];
                self.fixed[i][c] = true;
            }
        }
        Ok(())
    }

    /// Keeps the end-effector blocks of waypoints `s..=t` at their current values.
    pub fn freeze_ee(&mut self, s: usize, t: usize) -> Result<()> {
        if s > t || t >= self.len() {
            return Err(Error::Problem(format!("window [{s}, {t}] invalid for {} waypoints", self.len())));
        }
        for i in s..=t {
            for c in layout::EE {
                self.fixed[i][c] = true;
            }
        }
        Ok(())
    }

    pub fn fix_base(&mut self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Problem(format!("base index {i} out of range")));
        }
        for c in layout::BASE {
            self.fixed[i][c] = true;
        }
        Ok(())
    }

    fn context(&self) -> CostContext<'_> {
        CostContext {
            arm: &self.arm,
            esdf: self.esdf.as_deref(),
            config: &self.config,
            penalties: &self.penalties,
        }
    }

    /// `sum weight * |r|^2` over all terms.
    pub fn total_cost(&self) -> Result<f64> {
        cost_at(&self.terms, &self.states, &self.context())
    }

    pub fn per_term_cost(&self) -> Result<BTreeMap<String, f64>> {
        let ctx = self.context();
        let mut out = BTreeMap::new();
        for t in &self.terms {
            *out.entry(t.kind.name().to_string()).or_insert(0.0) += costs::term_cost(t, &self.states, &ctx)?;
        }
        Ok(out)
    }

    fn free_count(&self) -> usize {
        self.fixed.iter().flatten().filter(|f| !**f).count()
    }

    /// Gauss–Newton normal equations `(H, g)` with `H = sum w J^T J` and
    /// `g = sum w J^T r`, before elimination.
    fn normal_equations(&self, ctx: &CostContext) -> Result<(BandedSym, DVector<f64>)> {
        let dim = layout::DIM * self.len();
        let mut h = BandedSym::zeros(dim, BANDWIDTH);
        let mut g = DVector::zeros(dim);
        for t in &self.terms {
            let r = costs::residual(t, &self.states, ctx)?;
            let (first, j) = jacobian_of(t, &self.states, ctx)?;
            let base = layout::DIM * first;
            let jtj = j.transpose() * &j * t.weight;
            let jtr = j.transpose() * &r * t.weight;
            for a in 0..j.ncols() {
                g[base + a] += jtr[a];
                for b in 0..=a {
                    let v = jtj[(a, b)];
                    if v != 0.0 {
                        h.add(base + a, base + b, v);
                    }
                }
            }
        }
        Ok((h, g))
    }

    /// Dense normal matrix at the current state, for inspection.
    pub fn normal_matrix(&self) -> Result<DMatrix<f64>> {
        Ok(self.normal_equations(&self.context())?.0.to_dense())
    }

    /// Largest `D - eps_ew` over waypoints that carry a workspace term.
    pub fn max_workspace_excess(&self) -> f64 {
        let eps = self.config.workspace_threshold;
        self.terms
            .iter()
            .filter(|t| t.kind == TermKind::Workspace)
            .map(|t| PathState::from_vector(&self.states[t.index]).workspace_distance(self.arm.base_height) - eps)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn refresh_penalties(&mut self, growth: bool) {
        let eps = self.config.workspace_threshold;
        for (i, x) in self.states.iter().enumerate() {
            let violated = workspace_violation(&PathState::from_vector(x), &self.arm, eps) > 0.0;
            let prev = self.penalties.lambda[i];
            self.penalties.lambda[i] = match (violated, growth) {
                (false, _) => 0.0,
                (true, false) => PENALTY_ACTIVE,
                (true, true) if prev > 0.0 => prev * 10.0,
                (true, true) => PENALTY_ACTIVE,
            };
        }
    }

    /// Multipliers a candidate would carry: active wherever it violates the
    /// workspace bound, keeping any grown value, and zero elsewhere.
    fn penalties_for(&self, states: &[StateVector]) -> PenaltyState {
        let eps = self.config.workspace_threshold;
        let lambda = states
            .iter()
            .zip(&self.penalties.lambda)
            .map(|(x, prev)| {
                if workspace_violation(&PathState::from_vector(x), &self.arm, eps) > 0.0 {
                    prev.max(PENALTY_ACTIVE)
                } else {
                    0.0
                }
            })
            .collect();
        PenaltyState { lambda }
    }

    /// One Levenberg–Marquardt run. The linear model uses the multipliers of
    /// the current state; candidates are scored with their own, so a step
    /// into the infeasible region pays the penalty it incurs. Returns the
    /// number of steps taken and the stopping reason.
    fn inner(&mut self, opts: &SolverOptions, outer: usize, history: &mut Vec<(usize, f64)>) -> Result<(usize, Convergence)> {
        let mut mu = opts.initial_damping;
        let mut cost = self.total_cost()?;
        for it in 0..opts.max_inner_iterations {
            let ctx = self.context();
            let (h, mut g) = self.normal_equations(&ctx)?;
            let mut grad_inf: f64 = 0.0;
            for (w, mask) in self.fixed.iter().enumerate() {
                for (c, fixed) in mask.iter().enumerate() {
                    let k = layout::DIM * w + c;
                    if *fixed {
                        g[k] = 0.0;
                    } else {
                        grad_inf = grad_inf.max((2.0 * g[k]).abs());
                    }
                }
            }
            if grad_inf < opts.gradient_tol {
                return Ok((it, Convergence::GradientNorm));
            }
            let mut step_found = false;
            while !step_found {
                let mut a = h.clone();
                for (w, mask) in self.fixed.iter().enumerate() {
                    for (c, fixed) in mask.iter().enumerate() {
                        let k = layout::DIM * w + c;
                        if *fixed {
                            a.isolate(k, 1.0);
                        } else {
                            a.add(k, k, mu);
                        }
                    }
                }
                let Some(chol) = a.cholesky() else {
                    mu *= 2.0;
                    if mu > 1e16 {
                        return Ok((it, Convergence::DampingOverflow));
                    }
                    continue;
                };
                let delta = chol.solve(&(-&g));
                let mut candidate = self.states.clone();
                for (w, x) in candidate.iter_mut().enumerate() {
                    for c in 0..layout::DIM {
                        if !self.fixed[w][c] {
                            x[c] += delta[layout::DIM * w + c];
                            if layout::is_angle(c) {
                                x[c] = wrap_angle(x[c]);
                            }
                        }
                    }
                }
                let cand_penalties = self.penalties_for(&candidate);
                let new_cost = cost_at(
                    &self.terms,
                    &candidate,
                    &CostContext {
                        penalties: &cand_penalties,
                        ..self.context()
                    },
                )?;
                // predicted decrease of the linear model: -2 d.g - d.H.d
                let predicted = -2.0 * delta.dot(&g) - delta.dot(&h.mul_vec(&delta));
                let rho = if predicted > 0.0 { (cost - new_cost) / predicted } else { -1.0 };
                if rho > 0.0 && new_cost <= cost {
                    let rel = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    self.states = candidate;
                    self.penalties = cand_penalties;
                    cost = new_cost;
                    history.push((outer, cost));
                    mu = (mu * 0.5).max(1e-12);
                    step_found = true;
                    if rel < opts.relative_cost_tol {
                        return Ok((it + 1, Convergence::RelativeCostChange));
                    }
                } else {
                    mu *= 2.0;
                    if mu > 1e16 {
                        return Ok((it + 1, Convergence::DampingOverflow));
                    }
                }
            }
        }
        Ok((opts.max_inner_iterations, Convergence::MaxIterations))
    }

    /// Solves in place and returns the optimized states with a report.
    pub fn solve(&mut self, opts: &SolverOptions) -> Result<(Vec<PathState>, SolveReport)> {
        if self.free_count() == 0 {
            return Err(Error::Problem("every coordinate is fixed".into()));
        }
        let start = Instant::now();
        self.refresh_penalties(false);
        let initial_cost = self.total_cost()?;
        let has_workspace = self.terms.iter().any(|t| t.kind == TermKind::Workspace);
        let mut history = Vec::new();
        let mut iterations = 0;
        let mut outer = 0;
        let mut convergence = Convergence::MaxIterations;
        while outer < opts.max_outer_iterations {
            if outer > 0 {
                self.refresh_penalties(opts.multiplier_growth);
            }
            let used = self.penalties.lambda.clone();
            let (its, why) = self.inner(opts, outer, &mut history)?;
            iterations += its;
            convergence = why;
            outer += 1;
            if !has_workspace || self.max_workspace_excess() <= opts.feasibility_tol {
                break;
            }
            let mut next = self.penalties.clone();
            next.update(&self.states(), &self.arm, self.config.workspace_threshold);
            if next.lambda == used && why != Convergence::MaxIterations && !opts.multiplier_growth {
                break;
            }
        }
        let report = SolveReport {
            iterations,
            outer_iterations: outer,
            initial_cost,
            final_cost: self.total_cost()?,
            per_term: self.per_term_cost()?,
            convergence,
            wall_time_s: start.elapsed().as_secs_f64(),
            max_workspace_excess: if has_workspace { self.max_workspace_excess() } else { 0.0 },
            history,
        };
        Ok((self.states(), report))
    }
}

fn cost_at(terms: &[CostTerm], states: &[StateVector], ctx: &CostContext) -> Result<f64> {
    terms.iter().map(|t| costs::term_cost(t, states, ctx)).sum()
}
