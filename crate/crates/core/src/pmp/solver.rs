use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmp::sweep::{discrete_adjoint, Sensitivity};
use crate::pmp::{AdjointTrajectory, ControlGrid, OcpState, PairProblem};
use crate::vehicle::ControlBounds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Descent step size, in (0, 1).
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once |J3(k+1) - J3(k)| <= upsilon.
    pub upsilon: f64,
    /// Stop once dt * sum(H_u^2) < delta.
    pub delta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iterations: 300,
            upsilon: 1e-4,
            delta: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "step size must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.upsilon > 0.0 && self.delta > 0.0) {
            return Err(Error::invalid("stopping thresholds must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientSmall,
    ObjectiveStalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// J3 of every evaluated iterate, in order.
    pub history: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// 1-based iteration of the returned control.
    pub best_iteration: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub controls: ControlGrid,
    pub states: Vec<OcpState>,
    pub objective: f64,
    /// Costate and sensitivities at the returned control.
    pub costate: AdjointTrajectory,
    pub direction: Vec<f64>,
    pub report: SolveReport,
}

pub fn project_control(values: &[f64], bounds: ControlBounds) -> Result<ControlGrid> {
    ControlGrid::new(values.iter().map(|&u| bounds.clamp(u)).collect(), bounds)
}

/// Projected-gradient forward-backward sweep.
///
/// Each iteration integrates the pair forward, evaluates J3, integrates the
/// costate backward and steps `u <- clamp(u - epsilon * H_u)`. The
/// lowest-J3 iterate is returned whatever the stop reason.
pub fn solve(problem: &PairProblem, config: &SolverConfig, init: &ControlGrid) -> Result<Solution> {
    config.validate()?;
    problem.horizon.check_len(init.values().len())?;
    let bounds = problem.bounds;
    let dt = problem.horizon.dt();
    let mut u = ControlGrid::new(init.values().to_vec(), bounds)?.into_values();

    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<OcpState>, usize)> = None;
    let mut stop_reason = StopReason::MaxIterations;

    for iteration in 1..=config.max_iterations {
        let states = problem.forward(&u)?;
        let j = problem.objective(&states, &u)?;
        if !j.is_finite() {
            return Err(Error::NonFinite { iteration });
        }
        let previous = history.last().copied();
        history.push(j);
        if best.as_ref().is_none_or(|(bj, ..)| j < *bj) {
            best = Some((j, u.clone(), states.clone(), iteration));
        }
        if previous.is_some_and(|p| (j - p).abs() <= config.upsilon) {
            stop_reason = StopReason::ObjectiveStalled;
            break;
        }

        let sens = discrete_adjoint(problem, &states, &u)?;
        let grad_sq: f64 = dt * sens.direction.iter().map(|g| g * g).sum::<f64>();
        if grad_sq < config.delta {
            stop_reason = StopReason::GradientSmall;
            break;
        }
        let next: Vec<f64> = u
            .iter()
            .zip(&sens.direction)
            .map(|(ui, gi)| bounds.clamp(ui - config.epsilon * gi))
            .collect();
        if next == u {
            // Every node pinned at a bound: J3 cannot change.
            stop_reason = StopReason::ObjectiveStalled;
            break;
        }
        u = next;
    }

    let (objective, controls, states, best_iteration) = best.expect("at least one iteration runs");
    let Sensitivity {
        costate, direction, ..
    } = discrete_adjoint(problem, &states, &controls)?;
    Ok(Solution {
        controls: ControlGrid::new(controls, bounds)?,
        states,
        objective,
        costate,
        direction,
        report: SolveReport {
            iterations: history.len(),
            history,
            converged: stop_reason != StopReason::MaxIterations,
            stop_reason,
            best_iteration,
        },
    })
}

/// Central differences of J3 under per-node perturbation of the control.
pub fn finite_difference_gradient(problem: &PairProblem, u: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    problem.horizon.check_len(u.len())?;
    let mut work = u.to_vec();
    let mut grad = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        work[k] = u[k] + step;
        let up = problem.cost(&work)?;
        work[k] = u[k] - step;
        let down = problem.cost(&work)?;
        work[k] = u[k];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}
