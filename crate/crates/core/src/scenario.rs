//! Platoon scenarios: lead speed profile, initial conditions, and the
//! solve-then-replay pipeline.
//!
//! Vehicles are simulated front to back. Each one sees its predecessor's
//! trajectory on the grid (linear between nodes); the AV and its follower
//! are integrated together as the optimization pair.

use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::objective::{Horizon, ObjectiveParams, SvoAngle};
use crate::pmp::{
    self, system_dynamics, ControlGrid, ExoSample, ExogenousTrajectory, OcpState, PairModel,
    PairProblem, SolveReport, SolverConfig,
};
use crate::vehicle::{
    CarFollowingModel, ControlBounds, IdmParams, OvrvParams, VehicleKind, VehicleSpec,
    VehicleState, DEFAULT_LENGTH,
};

/// Time-speed samples driven by the first vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadProfile {
    times: Vec<f64>,
    speeds: Vec<f64>,
}

impl LeadProfile {
    pub fn new(times: Vec<f64>, speeds: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != speeds.len() {
            return Err(Error::invalid(
                "lead profile needs matching, non-empty samples",
            ));
        }
        if let Some(w) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "lead profile times must increase strictly (sample {})",
                w + 1
            )));
        }
        if let Some(v) = speeds.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "negative or invalid lead speed {v}"
            )));
        }
        Ok(Self { times, speeds })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// 15 m/s cruise with two signal stops, sampled every 0.5 s over 120 s.
    ///
    /// First stop: brake 30-36 s, stand 36-41 s, pull away 41-49 s.
    /// Second stop: the same shape 48 s later.
    pub fn synthetic_two_stop() -> Self {
        const CRUISE: f64 = 15.0;
        // Smooth 0 -> 1 ramp on [a, b].
        let ramp = |t: f64, a: f64, b: f64| -> f64 {
            if t <= a {
                0.0
            } else if t >= b {
                1.0
            } else {
                0.5 - 0.5 * (std::f64::consts::PI * (t - a) / (b - a)).cos()
            }
        };
        let speed = |t: f64| -> f64 {
            let stop = |t: f64, brake: f64, stand: f64, go: f64, cruise: f64| {
                ramp(t, brake, stand) - ramp(t, go, cruise)
            };
            let dip = stop(t, 30.0, 36.0, 41.0, 49.0) + stop(t, 78.0, 84.0, 89.0, 97.0);
            CRUISE * (1.0 - dip)
        };
        let times: Vec<f64> = (0..=240).map(|k| 0.5 * k as f64).collect();
        let speeds = times.iter().map(|&t| speed(t).max(0.0)).collect();
        Self { times, speeds }
    }
}

/// Reads a `t,v` CSV (header required, LF or CRLF).
pub fn load_lead_profile<R: Read>(source: R) -> Result<LeadProfile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ["t", "v"] {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header \"t,v\", got {:?}",
                header.iter().collect::<Vec<_>>()
            ),
        });
    }
    let mut times: Vec<f64> = Vec::new();
    let mut speeds = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing {name}"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("bad {name}: {e}"),
                })
        };
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let (t, v) = (field(0, "time")?, field(1, "speed")?);
        if !t.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("time {t} is not finite"),
            });
        }
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: format!("speed {v} must be finite and non-negative"),
            });
        }
        if times.last().is_some_and(|&prev| !(t > prev)) {
            return Err(Error::Parse {
                line,
                message: format!("time {t} does not increase"),
            });
        }
        times.push(t);
        speeds.push(v);
    }
    if times.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no samples".into(),
        });
    }
    LeadProfile::new(times, speeds)
}

/// Linear interpolation of the profile onto the grid.
pub fn resample_profile(profile: &LeadProfile, horizon: &Horizon) -> Result<Vec<f64>> {
    let (first, last) = (profile.times[0], *profile.times.last().unwrap());
    let slack = 1e-9 * horizon.tf().abs().max(1.0);
    if horizon.t0() < first - slack || horizon.tf() > last + slack {
        return Err(Error::invalid(format!(
            "horizon [{}, {}] outside lead profile span [{first}, {last}]",
            horizon.t0(),
            horizon.tf()
        )));
    }
    let times = &profile.times;
    let mut j = 0;
    Ok(horizon
        .times()
        .into_iter()
        .map(|t| {
            let t = t.clamp(first, last);
            while j + 2 < times.len() && times[j + 1] < t {
                j += 1;
            }
            if times.len() == 1 {
                return profile.speeds[0];
            }
            let (t0, t1) = (times[j], times[j + 1]);
            if t == t0 {
                profile.speeds[j]
            } else if t == t1 {
                profile.speeds[j + 1]
            } else {
                let s = (t - t0) / (t1 - t0);
                profile.speeds[j] + s * (profile.speeds[j + 1] - profile.speeds[j])
            }
        })
        .collect())
}

/// Trapezoidal integration of gridded speeds into positions.
pub fn integrate_lead(
    speeds: &[f64],
    x0: f64,
    dt: f64,
    length: f64,
) -> Result<ExogenousTrajectory> {
    let mut x = Vec::with_capacity(speeds.len());
    let mut pos = x0;
    x.push(pos);
    for w in speeds.windows(2) {
        pos += 0.5 * dt * (w[0] + w[1]);
        x.push(pos);
    }
    ExogenousTrajectory::new(x, speeds.to_vec(), length)
}

/// Optional explicit initial conditions. `gaps[i]` is the gap of vehicle
/// `i + 1` to vehicle `i`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    pub speeds: Vec<f64>,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Lead first. Exactly one autonomous vehicle, never the lead, followed
    /// by a human driver.
    pub platoon: Vec<VehicleSpec>,
    pub lead_profile: LeadProfile,
    pub horizon: Horizon,
    pub objective: ObjectiveParams,
    pub bounds: ControlBounds,
    pub solver: SolverConfig,
    pub initial: Option<InitialConditions>,
    /// Lead position at `t0` (m).
    pub lead_position: f64,
}

impl Scenario {
    /// Lead HV, controlled AV, three HV followers behind the synthetic
    /// two-stop profile over 120 s at dt = 0.1 s.
    pub fn five_vehicle_preset(phi: SvoAngle) -> Self {
        let hv = VehicleSpec::human(DEFAULT_LENGTH, IdmParams::default());
        let av = VehicleSpec::autonomous(DEFAULT_LENGTH, OvrvParams::default());
        Self {
            platoon: vec![hv, av, hv, hv, hv],
            lead_profile: LeadProfile::synthetic_two_stop(),
            horizon: Horizon::new(0.0, 120.0, 0.1).expect("valid preset horizon"),
            objective: ObjectiveParams {
                phi,
                ..Default::default()
            },
            bounds: ControlBounds::default(),
            solver: SolverConfig::default(),
            initial: None,
            lead_position: 0.0,
        }
    }

    pub fn with_phi(&self, phi: SvoAngle) -> Self {
        let mut s = self.clone();
        s.objective.phi = phi;
        s
    }

    pub fn av_index(&self) -> Result<usize> {
        let avs: Vec<usize> = self
            .platoon
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind() == VehicleKind::Autonomous)
            .map(|(i, _)| i)
            .collect();
        match avs.as_slice() {
            [i] => Ok(*i),
            _ => Err(Error::invalid(format!(
                "platoon needs exactly one autonomous vehicle, found {}",
                avs.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.platoon.len();
        if n < 3 {
            return Err(Error::invalid(format!(
                "platoon needs at least 3 vehicles, got {n}"
            )));
        }
        for v in &self.platoon {
            v.validate()?;
        }
        let av = self.av_index()?;
        if av == 0 {
            return Err(Error::invalid(
                "the lead vehicle cannot be the controlled AV",
            ));
        }
        if av + 1 >= n || self.platoon[av + 1].kind() != VehicleKind::HumanDriven {
            return Err(Error::invalid(
                "the AV must be followed by a human-driven vehicle",
            ));
        }
        self.objective.validate()?;
        self.bounds.validate()?;
        self.solver.validate()?;
        if let Some(init) = &self.initial {
            if init.speeds.len() != n || init.gaps.len() != n - 1 {
                return Err(Error::invalid(format!(
                    "initial conditions need {n} speeds and {} gaps",
                    n - 1
                )));
            }
            if init.speeds.iter().any(|v| !(*v >= 0.0)) || init.gaps.iter().any(|g| !(*g > 0.0)) {
                return Err(Error::invalid("initial speeds must be >= 0 and gaps > 0"));
            }
        }
        Ok(())
    }

    fn lead_speeds(&self) -> Result<Vec<f64>> {
        resample_profile(&self.lead_profile, &self.horizon)
    }
}

/// Initial positions and speeds. Without explicit conditions every vehicle
/// starts at the lead's initial speed with its model's equilibrium gap.
pub fn init_platoon(scenario: &Scenario) -> Result<Vec<VehicleState>> {
    scenario.validate()?;
    let (speeds, gaps) = match &scenario.initial {
        Some(init) => (init.speeds.clone(), init.gaps.clone()),
        None => {
            let v_lead = scenario.lead_speeds()?[0];
            let gaps = scenario.platoon[1..]
                .iter()
                .map(|spec| spec.equilibrium_gap(v_lead))
                .collect::<Result<Vec<_>>>()?;
            (vec![v_lead; scenario.platoon.len()], gaps)
        }
    };
    let mut states = Vec::with_capacity(speeds.len());
    let mut x = scenario.lead_position;
    states.push(VehicleState { x, v: speeds[0] });
    for (i, gap) in gaps.iter().enumerate() {
        x -= scenario.platoon[i].length + gap;
        states.push(VehicleState {
            x,
            v: speeds[i + 1],
        });
    }
    Ok(states)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleSeries {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Realized acceleration at each node.
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub times: Vec<f64>,
    /// Lead first.
    pub vehicles: Vec<VehicleSeries>,
    pub av_index: usize,
    /// Additive control applied to the AV.
    pub control: Vec<f64>,
    /// J3 of the applied control.
    pub objective: f64,
    /// Absent for baseline runs.
    pub report: Option<SolveReport>,
    pub baseline: bool,
}

impl SimResult {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn av(&self) -> &VehicleSeries {
        &self.vehicles[self.av_index]
    }
}

fn lead_series(exo: &ExogenousTrajectory, dt: f64) -> VehicleSeries {
    let v = &exo.v;
    let n = v.len();
    let a = (0..n)
        .map(|k| match k {
            _ if n == 1 => 0.0,
            0 => (v[1] - v[0]) / dt,
            k if k == n - 1 => (v[k] - v[k - 1]) / dt,
            k => (v[k + 1] - v[k - 1]) / (2.0 * dt),
        })
        .collect();
    VehicleSeries {
        x: exo.x.clone(),
        v: v.clone(),
        a,
    }
}

/// IDM acceleration with the standstill clamp and a collision check.
fn idm_step_accel(
    params: &IdmParams,
    vehicle: usize,
    t: f64,
    x: f64,
    v: f64,
    pred: ExoSample,
) -> Result<f64> {
    let gap = pred.x - x - pred.length;
    if !(gap > 0.0) {
        return Err(Error::Collision {
            vehicle,
            time: t,
            gap,
        });
    }
    let a = params.accel(gap, v, pred.v - v)?;
    Ok(if v <= 0.0 && a < 0.0 { 0.0 } else { a })
}

/// RK4 of a single IDM vehicle behind a gridded predecessor.
fn simulate_human(
    vehicle: usize,
    params: &IdmParams,
    start: VehicleState,
    pred: &VehicleSeries,
    pred_len: f64,
    horizon: &Horizon,
) -> Result<VehicleSeries> {
    let h = horizon.dt();
    let n = horizon.nodes();
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let (mut xs, mut vs) = (start.x, start.v);
    for k in 0..n {
        let t = horizon.time(k);
        let acc = |xs: f64, vs: f64, px: f64, pv: f64, t: f64| {
            idm_step_accel(
                params,
                vehicle,
                t,
                xs,
                vs,
                ExoSample {
                    x: px,
                    v: pv,
                    length: pred_len,
                },
            )
        };
        x.push(xs);
        v.push(vs);
        a.push(acc(xs, vs, pred.x[k], pred.v[k], t)?);
        if k + 1 == n {
            break;
        }
        let (pm_x, pm_v) = (
            0.5 * (pred.x[k] + pred.x[k + 1]),
            0.5 * (pred.v[k] + pred.v[k + 1]),
        );
        let tm = t + 0.5 * h;
        let (k1x, k1v) = (vs, a[k]);
        let (x2, v2) = (xs + 0.5 * h * k1x, vs + 0.5 * h * k1v);
        let (k2x, k2v) = (v2, acc(x2, v2, pm_x, pm_v, tm)?);
        let (x3, v3) = (xs + 0.5 * h * k2x, vs + 0.5 * h * k2v);
        let (k3x, k3v) = (v3, acc(x3, v3, pm_x, pm_v, tm)?);
        let (x4, v4) = (xs + h * k3x, vs + h * k3v);
        let (k4x, k4v) = (v4, acc(x4, v4, pred.x[k + 1], pred.v[k + 1], t + h)?);
        xs += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        vs = (vs + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)).max(0.0);
    }
    Ok(VehicleSeries { x, v, a })
}

fn relabel(err: Error, offset: usize) -> Error {
    match err {
        Error::Collision { vehicle, time, gap } => Error::Collision {
            vehicle: vehicle + offset,
            time,
            gap,
        },
        other => other,
    }
}

fn simulate_human_at(
    scenario: &Scenario,
    init: &[VehicleState],
    i: usize,
    pred: &VehicleSeries,
) -> Result<VehicleSeries> {
    let CarFollowingModel::Idm(params) = scenario.platoon[i].model else {
        unreachable!("only one autonomous vehicle");
    };
    let pred_len = scenario.platoon[i - 1].length;
    simulate_human(i, &params, init[i], pred, pred_len, &scenario.horizon)
}

/// Lead plus every human driver ahead of the AV.
fn vehicles_ahead(
    scenario: &Scenario,
    init: &[VehicleState],
    av: usize,
) -> Result<Vec<VehicleSeries>> {
    let horizon = scenario.horizon;
    let lead = integrate_lead(
        &scenario.lead_speeds()?,
        init[0].x,
        horizon.dt(),
        scenario.platoon[0].length,
    )?;
    let mut vehicles = vec![lead_series(&lead, horizon.dt())];
    for i in 1..av {
        let series = simulate_human_at(scenario, init, i, &vehicles[i - 1])?;
        vehicles.push(series);
    }
    Ok(vehicles)
}

fn build_pair(
    scenario: &Scenario,
    init: &[VehicleState],
    av: usize,
    pred: &VehicleSeries,
) -> Result<PairProblem> {
    let (CarFollowingModel::Ovrv(ovrv), CarFollowingModel::Idm(idm)) =
        (scenario.platoon[av].model, scenario.platoon[av + 1].model)
    else {
        unreachable!("validated platoon layout");
    };
    let exo = ExogenousTrajectory::new(
        pred.x.clone(),
        pred.v.clone(),
        scenario.platoon[av - 1].length,
    )?;
    let model = PairModel {
        ovrv,
        idm,
        av_length: scenario.platoon[av].length,
        objective: scenario.objective,
    };
    let y0 = OcpState::new(init[av].x, init[av].v, init[av + 1].x, init[av + 1].v);
    PairProblem::new(y0, exo, model, scenario.bounds, scenario.horizon)
}

/// The AV-follower optimal control problem the scenario solves, with the
/// AV's predecessor already simulated.
pub fn pair_problem(scenario: &Scenario) -> Result<PairProblem> {
    let init = init_platoon(scenario)?;
    let av = scenario.av_index()?;
    let ahead = vehicles_ahead(scenario, &init, av)?;
    build_pair(scenario, &init, av, &ahead[av - 1])
}

fn simulate(scenario: &Scenario, optimize: bool) -> Result<SimResult> {
    let init = init_platoon(scenario)?;
    let horizon = scenario.horizon;
    let av = scenario.av_index()?;
    let mut vehicles = vehicles_ahead(scenario, &init, av)?;
    let problem = build_pair(scenario, &init, av, &vehicles[av - 1])?;

    let mut control = vec![0.0; horizon.nodes()];
    let mut report = None;
    let (states, objective) = if optimize {
        let zero = ControlGrid::zeros(horizon.nodes(), scenario.bounds);
        let sol = pmp::solve(&problem, &scenario.solver, &zero).map_err(|e| relabel(e, av))?;
        control = sol.controls.into_values();
        report = Some(sol.report);
        (sol.states, sol.objective)
    } else {
        let states = problem.forward(&control).map_err(|e| relabel(e, av))?;
        let j = problem.objective(&states, &control)?;
        (states, j)
    };

    let mut av_series = VehicleSeries {
        x: vec![],
        v: vec![],
        a: vec![],
    };
    let mut f_series = av_series.clone();
    for (k, y) in states.iter().enumerate() {
        let g = system_dynamics(
            horizon.time(k),
            y,
            control[k],
            &problem.exo.sample(k),
            &problem.model,
        )
        .map_err(|e| relabel(e, av))?;
        av_series.x.push(y.av_position());
        av_series.v.push(y.av_speed());
        av_series.a.push(g[1]);
        f_series.x.push(y.follower_position());
        f_series.v.push(y.follower_speed());
        f_series.a.push(g[3]);
    }
    vehicles.push(av_series);
    vehicles.push(f_series);
    for i in av + 2..scenario.platoon.len() {
        let series = simulate_human_at(scenario, &init, i, &vehicles[i - 1])?;
        vehicles.push(series);
    }

    Ok(SimResult {
        times: horizon.times(),
        vehicles,
        av_index: av,
        control,
        objective,
        report,
        baseline: !optimize,
    })
}

/// Solves for the AV's control and replays the whole platoon with it.
pub fn run_scenario(scenario: &Scenario) -> Result<SimResult> {
    simulate(scenario, true)
}

/// Same pipeline with the additive control held at zero.
pub fn run_baseline(scenario: &Scenario) -> Result<SimResult> {
    simulate(scenario, false)
}
