//! Randomized adjoint-versus-finite-difference checks on the AV pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::objective::{FollowerPayoff, Horizon, ObjectiveParams, SvoAngle};
use crate::pmp::{
    discrete_adjoint, finite_difference_gradient, ExogenousTrajectory, OcpState, PairModel,
    PairProblem,
};
use crate::scenario::integrate_lead;
use crate::vehicle::{ControlBounds, IdmParams, OvrvParams, DEFAULT_LENGTH};

/// Relative error with an absolute floor: below `|fd| = 1e-3` the error is
/// measured against `1e-3`, so a pass at `1e-3` means an absolute error
/// under `1e-6`.
pub const RELATIVE_FLOOR: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub phi: f64,
    pub payoff: FollowerPayoff,
    pub max_relative_error: f64,
    pub worst_node: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub cases: Vec<CaseReport>,
    pub max_relative_error: f64,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

pub fn relative_error(adjoint: f64, fd: f64) -> f64 {
    (adjoint - fd).abs() / fd.abs().max(RELATIVE_FLOOR)
}

/// A random feasible pair problem over `tf` seconds plus a random control
/// inside the default bounds.
pub fn random_problem(rng: &mut impl Rng, tf: f64, dt: f64) -> Result<(PairProblem, Vec<f64>)> {
    let horizon = Horizon::new(0.0, tf, dt)?;
    let bounds = ControlBounds::default();
    let payoff = match rng.gen_range(0..3) {
        0 => FollowerPayoff::DesiredSpeed,
        1 => FollowerPayoff::MaxSpeed,
        _ => FollowerPayoff::Smoothness,
    };
    let model = PairModel {
        ovrv: OvrvParams::default(),
        idm: IdmParams::default(),
        av_length: DEFAULT_LENGTH,
        objective: ObjectiveParams {
            phi: SvoAngle::new(rng.gen_range(0.0..=std::f64::consts::FRAC_PI_2))?,
            follower_payoff: payoff,
            ..Default::default()
        },
    };

    // Predecessor oscillating around a cruise speed, never stopping.
    let (base, amp) = (rng.gen_range(8.0..20.0), rng.gen_range(0.0..4.0));
    let (freq, shift) = (
        rng.gen_range(0.1..0.6),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let speeds: Vec<f64> = horizon
        .times()
        .iter()
        .map(|t| base + amp * (freq * t + shift).sin())
        .collect();
    let exo: ExogenousTrajectory = integrate_lead(&speeds, 0.0, dt, DEFAULT_LENGTH)?;

    let x_av = -DEFAULT_LENGTH - rng.gen_range(25.0..60.0);
    let x_f = x_av - DEFAULT_LENGTH - rng.gen_range(20.0..45.0);
    let initial = OcpState::new(
        x_av,
        rng.gen_range(6.0..20.0),
        x_f,
        rng.gen_range(6.0..20.0),
    );
    let problem = PairProblem::new(initial, exo, model, bounds, horizon)?;
    let u = (0..horizon.nodes())
        .map(|_| rng.gen_range(bounds.u_min..=bounds.u_max))
        .collect();
    Ok((problem, u))
}

pub fn check_case(problem: &PairProblem, u: &[f64]) -> Result<CaseReport> {
    let states = problem.forward(u)?;
    let sens = discrete_adjoint(problem, &states, u)?;
    let fd = finite_difference_gradient(problem, u, FD_STEP)?;
    let (worst_node, max_relative_error) = sens
        .gradient
        .iter()
        .zip(&fd)
        .map(|(g, f)| relative_error(*g, *f))
        .enumerate()
        .fold((0, 0.0), |acc, (k, e)| if e > acc.1 { (k, e) } else { acc });
    Ok(CaseReport {
        phi: problem.model.objective.phi.radians(),
        payoff: problem.model.objective.follower_payoff,
        max_relative_error,
        worst_node,
    })
}

/// `cases` random problems over `tf` seconds at step `dt`. Draws that
/// collide under their random control are redrawn.
pub fn run_gradcheck(seed: u64, cases: usize, tf: f64, dt: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(cases);
    while reports.len() < cases {
        let (problem, u) = random_problem(&mut rng, tf, dt)?;
        match check_case(&problem, &u) {
            Ok(r) => reports.push(r),
            Err(crate::Error::Collision { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let max_relative_error = reports
        .iter()
        .map(|r| r.max_relative_error)
        .fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        cases: reports,
        max_relative_error,
    })
}
