//! Evaluation metrics, SVO sweeps, and trajectory export.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::objective::{payoff_self, SvoAngle};
use crate::pmp::StopReason;
use crate::scenario::{run_scenario, Scenario, SimResult};

pub const DEFAULT_WINDOW: (f64, f64) = (30.0, 60.0);

/// |U_AV| from the AV's realized acceleration, control included.
pub fn abs_payoff_self(result: &SimResult) -> f64 {
    payoff_self(&result.av().a, result.dt()).abs()
}

/// Trapezoidal time average of one vehicle's speed over `[t_a, t_b]`.
/// Window ends between nodes are linearly interpolated.
pub fn average_speed(result: &SimResult, vehicle: usize, window: (f64, f64)) -> Result<f64> {
    let series = result
        .vehicles
        .get(vehicle)
        .ok_or_else(|| Error::invalid(format!("no vehicle {vehicle}")))?;
    window_average(&result.times, &series.v, window)
}

fn window_average(times: &[f64], values: &[f64], (ta, tb): (f64, f64)) -> Result<f64> {
    let (first, last) = (times[0], *times.last().unwrap());
    let slack = 1e-9 * last.abs().max(1.0);
    if !(tb > ta) || ta < first - slack || tb > last + slack {
        return Err(Error::invalid(format!(
            "window [{ta}, {tb}] must be non-empty and inside [{first}, {last}]"
        )));
    }
    let (ta, tb) = (ta.max(first), tb.min(last));
    let at = |t: f64| -> f64 {
        let k = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[k - 1], times[k]);
        values[k - 1] + (t - t0) / (t1 - t0) * (values[k] - values[k - 1])
    };
    let mut points = vec![(ta, at(ta))];
    points.extend(
        times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t > ta && **t < tb)
            .map(|(t, v)| (*t, *v)),
    );
    points.push((tb, at(tb)));
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(area / (tb - ta))
}

pub fn percent_change(value: f64, base: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::Domain("percent change against a zero base".into()));
    }
    Ok(100.0 * (value - base) / base)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageSpeeds {
    /// One entry per vehicle, lead first.
    pub full: Vec<f64>,
    pub window: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentChanges {
    pub base_phi: f64,
    pub abs_payoff_self: f64,
    pub avg_speed: AverageSpeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub phi: f64,
    pub abs_payoff_self: f64,
    pub window: (f64, f64),
    pub avg_speed: AverageSpeeds,
    pub percent_change: Option<PercentChanges>,
    pub solver: Option<SolverSummary>,
}

impl MetricsReport {
    pub fn compute(result: &SimResult, phi: SvoAngle, window: (f64, f64)) -> Result<Self> {
        let full_window = (result.times[0], *result.times.last().unwrap());
        let averages = |w| {
            (0..result.vehicles.len())
                .map(|i| average_speed(result, i, w))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            phi: phi.radians(),
            abs_payoff_self: abs_payoff_self(result),
            window,
            avg_speed: AverageSpeeds {
                full: averages(full_window)?,
                window: averages(window)?,
            },
            percent_change: None,
            solver: result.report.as_ref().map(|r| SolverSummary {
                iterations: r.iterations,
                converged: r.converged,
                stop_reason: r.stop_reason,
                objective: result.objective,
            }),
        })
    }

    /// Fills `percent_change` relative to `base`.
    pub fn compare_to(&mut self, base: &MetricsReport) -> Result<()> {
        let changes = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(v, b)| percent_change(*v, *b))
                .collect()
        };
        self.percent_change = Some(PercentChanges {
            base_phi: base.phi,
            abs_payoff_self: percent_change(self.abs_payoff_self, base.abs_payoff_self)?,
            avg_speed: AverageSpeeds {
                full: changes(&self.avg_speed.full, &base.avg_speed.full)?,
                window: changes(&self.avg_speed.window, &base.avg_speed.window)?,
            },
        });
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub phi: SvoAngle,
    pub metrics: MetricsReport,
    pub result: SimResult,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub base_index: usize,
}

impl SweepResult {
    pub fn base(&self) -> &SweepEntry {
        &self.entries[self.base_index]
    }

    pub fn reports(&self) -> Vec<&MetricsReport> {
        self.entries.iter().map(|e| &e.metrics).collect()
    }
}

/// Runs the scenario once per angle (in parallel) and compares every run to
/// the base angle's.
pub fn sweep_svo(
    template: &Scenario,
    phis: &[SvoAngle],
    base: SvoAngle,
    window: (f64, f64),
) -> Result<SweepResult> {
    if phis.is_empty() {
        return Err(Error::invalid("empty SVO list"));
    }
    for (i, a) in phis.iter().enumerate() {
        if phis[..i].contains(a) {
            return Err(Error::invalid(format!(
                "duplicate SVO angle {}",
                a.radians()
            )));
        }
    }
    let base_index = phis
        .iter()
        .position(|p| *p == base)
        .ok_or_else(|| Error::invalid(format!("base angle {} not in the sweep", base.radians())))?;

    let mut entries = phis
        .par_iter()
        .map(|&phi| {
            let wrap = |e: Error| Error::Sweep {
                phi: phi.radians(),
                source: Box::new(e),
            };
            let result = run_scenario(&template.with_phi(phi)).map_err(wrap)?;
            let metrics = MetricsReport::compute(&result, phi, window).map_err(wrap)?;
            Ok(SweepEntry {
                phi,
                metrics,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let base_metrics = entries[base_index].metrics.clone();
    for e in &mut entries {
        e.metrics.compare_to(&base_metrics)?;
    }
    Ok(SweepResult {
        entries,
        base_index,
    })
}

/// `t,x1,v1,a1,x2,v2,a2,u2,...` with a `u` column only for the AV.
pub fn trajectory_header(result: &SimResult) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 0..result.vehicles.len() {
        let n = i + 1;
        cols.extend([format!("x{n}"), format!("v{n}"), format!("a{n}")]);
        if i == result.av_index {
            cols.push(format!("u{n}"));
        }
    }
    cols
}

pub fn write_trajectories<W: Write>(result: &SimResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::invalid(format!("csv write: {e}"));
    w.write_record(trajectory_header(result)).map_err(csv_err)?;
    for (k, t) in result.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for (i, s) in result.vehicles.iter().enumerate() {
            row.extend([s.x[k].to_string(), s.v[k].to_string(), s.a[k].to_string()]);
            if i == result.av_index {
                row.push(result.control[k].to_string());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    Ok(())
}

pub fn export_trajectories(result: &SimResult, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = BufWriter::new(file);
    write_trajectories(result, &mut buf).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::io(path, std::io::Error::other(msg)),
        other => other,
    })?;
    buf.flush().map_err(|e| Error::io(path, e))
}

/// Column-major contents of a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(&self.columns[i])
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

pub fn read_trajectories<R: Read>(source: R) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(source);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for record in r.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(field.parse().map_err(|e| Error::Parse {
                line,
                message: format!("{field:?}: {e}"),
            })?);
        }
    }
    Ok(TrajectoryTable { header, columns })
}

pub fn load_trajectories(path: &Path) -> Result<TrajectoryTable> {
    read_trajectories(File::open(path).map_err(|e| Error::io(path, e))?)
}
