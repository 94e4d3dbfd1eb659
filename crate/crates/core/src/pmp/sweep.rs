use crate::error::Result;
use crate::objective::{running_cost_gradient, trapezoid_weight};
use crate::pmp::dynamics::{adjoint_rhs, state_jacobian, system_dynamics};
use crate::pmp::{AdjointTrajectory, ExoSample, OcpState, PairProblem};

const SPEEDS: [usize; 2] = [1, 3];

/// Intermediate RK4 stages of one step, kept for the reverse sweep.
struct Step {
    stages: [OcpState; 4],
    next: OcpState,
    clamped: [bool; 2],
}

fn rk4_step(problem: &PairProblem, k: usize, y: &OcpState, u: f64) -> Result<Step> {
    let h = problem.horizon.dt();
    let t = problem.horizon.time(k);
    let model = &problem.model;
    let (e0, em, e1) = (
        problem.exo.sample(k),
        problem.exo.midpoint(k),
        problem.exo.sample(k + 1),
    );
    let k1 = system_dynamics(t, y, u, &e0, model)?;
    let y2 = y.offset(0.5 * h, &k1);
    let k2 = system_dynamics(t + 0.5 * h, &y2, u, &em, model)?;
    let y3 = y.offset(0.5 * h, &k2);
    let k3 = system_dynamics(t + 0.5 * h, &y3, u, &em, model)?;
    let y4 = y.offset(h, &k3);
    let k4 = system_dynamics(t + h, &y4, u, &e1, model)?;

    let mut next = *y;
    for i in 0..4 {
        next.0[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut clamped = [false; 2];
    for (c, &i) in clamped.iter_mut().zip(&SPEEDS) {
        if next.0[i] < 0.0 {
            next.0[i] = 0.0;
            *c = true;
        }
    }
    Ok(Step {
        stages: [*y, y2, y3, y4],
        next,
        clamped,
    })
}

/// Fixed-step RK4 of the pair dynamics. Speeds are clamped at zero.
pub fn forward_integrate(problem: &PairProblem, controls: &[f64]) -> Result<Vec<OcpState>> {
    let horizon = &problem.horizon;
    horizon.check_len(controls.len())?;
    let mut states = Vec::with_capacity(horizon.nodes());
    let mut y = problem.initial;
    states.push(y);
    for (k, &u) in controls.iter().enumerate().take(horizon.steps()) {
        y = rk4_step(problem, k, &y, u)?.next;
        states.push(y);
    }
    // Gap check at the terminal node.
    let last = horizon.steps();
    system_dynamics(
        horizon.time(last),
        &y,
        controls[last],
        &problem.exo.sample(last),
        &problem.model,
    )?;
    Ok(states)
}

/// Exact sensitivities of the discretized J3.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub costate: AdjointTrajectory,
    /// `dJ3 / du_k` for every node value.
    pub gradient: Vec<f64>,
    /// `gradient / dt`: the grid form of `H_u` used as descent direction.
    pub direction: Vec<f64>,
}

fn transpose_apply(jac: &[[f64; 4]; 4], v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (j, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|i| jac[i][j] * v[i]).sum();
    }
    out
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reverse-mode pass through one RK4 step: given `dJ/dy_{k+1}`, returns
/// `(dJ/dy_k, dJ/du_k)` restricted to the dynamic path.
fn step_vjp(
    problem: &PairProblem,
    k: usize,
    step: &Step,
    u: f64,
    mut next_bar: [f64; 4],
) -> Result<([f64; 4], f64)> {
    let h = problem.horizon.dt();
    let t = problem.horizon.time(k);
    let model = &problem.model;
    for (&c, &i) in step.clamped.iter().zip(&SPEEDS) {
        if c {
            next_bar[i] = 0.0;
        }
    }
    let exo: [ExoSample; 4] = [
        problem.exo.sample(k),
        problem.exo.midpoint(k),
        problem.exo.midpoint(k),
        problem.exo.sample(k + 1),
    ];
    let times = [t, t + 0.5 * h, t + 0.5 * h, t + h];
    // Stage s feeds stage s+1 through Y_{s+1} = y + c_{s+1} h k_s.
    let feed = [0.5 * h, 0.5 * h, h];
    let mut k_bar = [
        next_bar.map(|x| h / 6.0 * x),
        next_bar.map(|x| h / 3.0 * x),
        next_bar.map(|x| h / 3.0 * x),
        next_bar.map(|x| h / 6.0 * x),
    ];
    let mut y_bar = next_bar;
    let mut u_bar = 0.0;
    for s in (0..4).rev() {
        let (jac, g_u) = state_jacobian(times[s], &step.stages[s], u, &exo[s], model)?;
        let stage_bar = transpose_apply(&jac, &k_bar[s]);
        u_bar += dot(&g_u, &k_bar[s]);
        for i in 0..4 {
            y_bar[i] += stage_bar[i];
        }
        if s > 0 {
            for i in 0..4 {
                k_bar[s - 1][i] += feed[s - 1] * stage_bar[i];
            }
        }
    }
    Ok((y_bar, u_bar))
}

/// Discrete adjoint sweep: the costate recursion that differentiates the
/// RK4 map and the trapezoidal cost exactly, integrated backward from
/// `psi(t_f) = 0`.
pub fn discrete_adjoint(
    problem: &PairProblem,
    states: &[OcpState],
    controls: &[f64],
) -> Result<Sensitivity> {
    let horizon = &problem.horizon;
    horizon.check_len(states.len())?;
    horizon.check_len(controls.len())?;
    let n = horizon.nodes();
    let dt = horizon.dt();
    let model = &problem.model;

    let mut psi = vec![[0.0; 4]; n];
    let mut coupling = vec![0.0; n];
    let mut gradient = vec![0.0; n];

    let last = n - 1;
    let (l_y, l_u) = running_cost_gradient(
        &states[last],
        controls[last],
        &problem.exo.sample(last),
        &model.objective,
        &model.ovrv,
    );
    let w = trapezoid_weight(last, n, dt);
    let mut lambda = l_y.map(|x| w * x);
    gradient[last] = w * l_u;

    for k in (0..last).rev() {
        let step = rk4_step(problem, k, &states[k], controls[k])?;
        let (y_bar, u_bar) = step_vjp(problem, k, &step, controls[k], lambda)?;
        let (l_y, l_u) = running_cost_gradient(
            &states[k],
            controls[k],
            &problem.exo.sample(k),
            &model.objective,
            &model.ovrv,
        );
        let w = trapezoid_weight(k, n, dt);
        psi[k] = y_bar;
        coupling[k] = u_bar / dt;
        gradient[k] = u_bar + w * l_u;
        for i in 0..4 {
            lambda[i] = y_bar[i] + w * l_y[i];
        }
    }
    let direction = gradient.iter().map(|g| g / dt).collect();
    Ok(Sensitivity {
        costate: AdjointTrajectory {
            psi,
            control_coupling: coupling,
        },
        gradient,
        direction,
    })
}

fn lerp(a: &OcpState, b: &OcpState) -> OcpState {
    let mut m = *a;
    for i in 0..4 {
        m.0[i] = 0.5 * (a.0[i] + b.0[i]);
    }
    m
}

/// RK4 of the continuous adjoint equation backward from `psi(t_f) = 0`,
/// with stored states interpolated linearly at half-steps and the step's
/// held control.
pub fn backward_integrate(
    problem: &PairProblem,
    states: &[OcpState],
    controls: &[f64],
) -> Result<AdjointTrajectory> {
    let horizon = &problem.horizon;
    horizon.check_len(states.len())?;
    horizon.check_len(controls.len())?;
    let n = horizon.nodes();
    let h = horizon.dt();
    let model = &problem.model;
    let mut psi = vec![[0.0; 4]; n];
    for k in (0..n - 1).rev() {
        let u = controls[k];
        let t1 = horizon.time(k + 1);
        let tm = t1 - 0.5 * h;
        let mid = lerp(&states[k], &states[k + 1]);
        let em = problem.exo.midpoint(k);
        let p = psi[k + 1];
        let offset = |p: &[f64; 4], d: &[f64; 4], c: f64| -> [f64; 4] {
            [
                p[0] - c * d[0],
                p[1] - c * d[1],
                p[2] - c * d[2],
                p[3] - c * d[3],
            ]
        };
        let k1 = adjoint_rhs(t1, &states[k + 1], u, &p, &problem.exo.sample(k + 1), model)?;
        let k2 = adjoint_rhs(tm, &mid, u, &offset(&p, &k1, 0.5 * h), &em, model)?;
        let k3 = adjoint_rhs(tm, &mid, u, &offset(&p, &k2, 0.5 * h), &em, model)?;
        let k4 = adjoint_rhs(
            horizon.time(k),
            &states[k],
            u,
            &offset(&p, &k3, h),
            &problem.exo.sample(k),
            model,
        )?;
        for i in 0..4 {
            psi[k][i] = p[i] - h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let control_coupling = psi.iter().map(|p| p[1]).collect();
    Ok(AdjointTrajectory {
        psi,
        control_coupling,
    })
}
