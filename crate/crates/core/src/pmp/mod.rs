//! Optimal additive control for one AV and its human follower.
//!
//! The optimization state is `y = [x_av, v_av, x_f, v_f]`. The AV's
//! predecessor is an exogenous signal known on the grid. The control is held
//! constant over each step (`u_k` on `[t_k, t_{k+1})`) and the cost is the
//! trapezoidal sum of the running cost at the nodes.

mod dynamics;
mod solver;
mod sweep;

pub use dynamics::{
    adjoint_rhs, hamiltonian, hamiltonian_gradient, state_jacobian, system_dynamics,
};
pub use solver::{
    finite_difference_gradient, project_control, solve, Solution, SolveReport, SolverConfig,
    StopReason,
};
pub use sweep::{backward_integrate, discrete_adjoint, forward_integrate, Sensitivity};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::objective::{evaluate_objective, Horizon, ObjectiveParams};
use crate::vehicle::{ControlBounds, IdmParams, OvrvParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcpState(pub [f64; 4]);

impl OcpState {
    pub fn new(x_av: f64, v_av: f64, x_f: f64, v_f: f64) -> Self {
        Self([x_av, v_av, x_f, v_f])
    }

    pub fn av_position(&self) -> f64 {
        self.0[0]
    }

    pub fn av_speed(&self) -> f64 {
        self.0[1]
    }

    pub fn follower_position(&self) -> f64 {
        self.0[2]
    }

    pub fn follower_speed(&self) -> f64 {
        self.0[3]
    }

    pub(crate) fn offset(&self, h: f64, d: &[f64; 4]) -> Self {
        let y = &self.0;
        Self([
            y[0] + h * d[0],
            y[1] + h * d[1],
            y[2] + h * d[2],
            y[3] + h * d[3],
        ])
    }
}

/// Predecessor position, speed, and length at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExoSample {
    pub x: f64,
    pub v: f64,
    pub length: f64,
}

/// Predecessor trajectory on the solve grid. Between nodes it is
/// interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousTrajectory {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub length: f64,
}

impl ExogenousTrajectory {
    pub fn new(x: Vec<f64>, v: Vec<f64>, length: f64) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::GridMismatch {
                expected: x.len(),
                got: v.len(),
            });
        }
        if !(length > 0.0) {
            return Err(Error::invalid(format!(
                "predecessor length must be positive, got {length}"
            )));
        }
        Ok(Self { x, v, length })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn sample(&self, k: usize) -> ExoSample {
        ExoSample {
            x: self.x[k],
            v: self.v[k],
            length: self.length,
        }
    }

    /// Sample halfway between nodes `k` and `k + 1`.
    pub fn midpoint(&self, k: usize) -> ExoSample {
        ExoSample {
            x: 0.5 * (self.x[k] + self.x[k + 1]),
            v: 0.5 * (self.v[k] + self.v[k + 1]),
            length: self.length,
        }
    }
}

/// Per-node control values, each inside the bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    values: Vec<f64>,
    bounds: ControlBounds,
}

impl ControlGrid {
    pub fn new(values: Vec<f64>, bounds: ControlBounds) -> Result<Self> {
        bounds.validate()?;
        if let Some((k, u)) = values
            .iter()
            .enumerate()
            .find(|(_, u)| !bounds.contains(**u))
        {
            return Err(Error::invalid(format!(
                "control {u} at node {k} outside [{}, {}]",
                bounds.u_min, bounds.u_max
            )));
        }
        Ok(Self { values, bounds })
    }

    pub fn zeros(nodes: usize, bounds: ControlBounds) -> Self {
        Self {
            values: vec![0.0; nodes],
            bounds,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> ControlBounds {
        self.bounds
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Costate on the grid.
///
/// `psi[k]` approximates `psi(t_k)` and is exactly zero at the terminal
/// node. `control_coupling[k]` is the costate's projection onto the control
/// direction over step `k` (the `psi_2` entering `H_u`); it is zero at the
/// terminal node, where the control has no dynamic effect.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub psi: Vec<[f64; 4]>,
    pub control_coupling: Vec<f64>,
}

/// Parameters of the AV-follower pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairModel {
    pub ovrv: OvrvParams,
    pub idm: IdmParams,
    /// AV length, which sets the follower's gap.
    pub av_length: f64,
    pub objective: ObjectiveParams,
}

impl PairModel {
    pub fn validate(&self) -> Result<()> {
        self.ovrv.validate()?;
        self.idm.validate()?;
        self.objective.validate()?;
        if !(self.av_length > 0.0) {
            return Err(Error::invalid("AV length must be positive"));
        }
        Ok(())
    }
}

/// Everything the solver needs: initial pair state, predecessor signal,
/// model, bounds and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProblem {
    pub initial: OcpState,
    pub exo: ExogenousTrajectory,
    pub model: PairModel,
    pub bounds: ControlBounds,
    pub horizon: Horizon,
}

impl PairProblem {
    pub fn new(
        initial: OcpState,
        exo: ExogenousTrajectory,
        model: PairModel,
        bounds: ControlBounds,
        horizon: Horizon,
    ) -> Result<Self> {
        model.validate()?;
        bounds.validate()?;
        horizon.check_len(exo.len())?;
        let lead_gap = exo.x[0] - initial.av_position() - exo.length;
        if !(lead_gap > 0.0) {
            return Err(Error::invalid(format!(
                "predecessor must start ahead of the AV (gap {lead_gap})"
            )));
        }
        let follower_gap = initial.av_position() - initial.follower_position() - model.av_length;
        if !(follower_gap > 0.0) {
            return Err(Error::invalid(format!(
                "follower must start behind the AV (gap {follower_gap})"
            )));
        }
        Ok(Self {
            initial,
            exo,
            model,
            bounds,
            horizon,
        })
    }

    pub fn forward(&self, controls: &[f64]) -> Result<Vec<OcpState>> {
        forward_integrate(self, controls)
    }

    pub fn objective(&self, states: &[OcpState], controls: &[f64]) -> Result<f64> {
        evaluate_objective(
            states,
            controls,
            &self.exo,
            &self.model.objective,
            &self.model.ovrv,
            &self.horizon,
        )
    }

    /// Forward pass followed by J3.
    pub fn cost(&self, controls: &[f64]) -> Result<f64> {
        let states = self.forward(controls)?;
        self.objective(&states, controls)
    }
}
