use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use svo_platoon::config::ScenarioConfig;
use svo_platoon::gradcheck::run_gradcheck;
use svo_platoon::metrics::{export_trajectories, sweep_svo, MetricsReport};
use svo_platoon::objective::SvoAngle;
use svo_platoon::scenario::{run_baseline, run_scenario, Scenario, SimResult};
use svo_platoon::{Error, Result};

#[derive(Parser)]
#[command(
    name = "svo-platoon",
    version,
    about = "SVO-aware eco-driving control for a mixed platoon"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the AV control and replay the platoon.
    Simulate(RunArgs),
    /// Replay the platoon with the additive control held at zero.
    Baseline(RunArgs),
    /// Run one scenario per SVO angle and compare against a base angle.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated SVO angles in radians.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.1,0.7853981634,1.5707963268"
        )]
        phis: Vec<f64>,
        /// Base angle for percent changes; must appear in --phis.
        #[arg(long, default_value_t = 0.1)]
        base: f64,
    },
    /// Compare adjoint gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        cases: usize,
        /// Horizon length of each random problem (s).
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Objective value per solver iteration.
    Convergence(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON. Omitted: the synthetic five-vehicle preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Analysis window `A,B` in seconds.
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Override the grid step.
    #[arg(long)]
    dt: Option<f64>,
}

fn parse_window(text: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = text.split(',').collect();
    let [a, b] = parts.as_slice() else {
        return Err(format!("expected A,B, got {text:?}"));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

impl RunArgs {
    fn load(&self) -> Result<(Scenario, (f64, f64))> {
        let (mut cfg, base_dir) = match &self.config {
            Some(path) => (
                ScenarioConfig::load(path)?,
                path.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (ScenarioConfig::default(), PathBuf::from(".")),
        };
        if let Some(dt) = self.dt {
            cfg.horizon.dt = dt;
        }
        if let Some(w) = self.window {
            cfg.window = w;
        }
        Ok((cfg.to_scenario(&base_dir)?, cfg.window))
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct RunReport<'a> {
    phi: f64,
    baseline: bool,
    dt: f64,
    nodes: usize,
    objective: f64,
    solver: Option<&'a svo_platoon::pmp::SolveReport>,
}

fn write_run(dir: &Path, result: &SimResult, metrics: &MetricsReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    export_trajectories(result, &dir.join("trajectories.csv"))?;
    write_json(&dir.join("metrics.json"), metrics)?;
    write_json(
        &dir.join("report.json"),
        &RunReport {
            phi: metrics.phi,
            baseline: result.baseline,
            dt: result.dt(),
            nodes: result.times.len(),
            objective: result.objective,
            solver: result.report.as_ref(),
        },
    )
}

fn print_summary(result: &SimResult, metrics: &MetricsReport) {
    println!("phi = {:.6}", metrics.phi);
    println!("J3 = {:.6}", result.objective);
    println!("|U_AV| = {:.6}", metrics.abs_payoff_self);
    if let Some(s) = &metrics.solver {
        println!(
            "solver: {} iterations, stop = {:?}, converged = {}",
            s.iterations, s.stop_reason, s.converged
        );
    }
    let (a, b) = metrics.window;
    println!("vehicle  avg speed (full)  avg speed [{a}, {b}]");
    for (i, (f, w)) in metrics
        .avg_speed
        .full
        .iter()
        .zip(&metrics.avg_speed.window)
        .enumerate()
    {
        println!("#{:<7} {f:>16.4}  {w:>16.4}", i + 1);
    }
}

fn simulate(args: &RunArgs, baseline: bool) -> Result<()> {
    let (scenario, window) = args.load()?;
    let result = if baseline {
        run_baseline(&scenario)?
    } else {
        run_scenario(&scenario)?
    };
    let metrics = MetricsReport::compute(&result, scenario.objective.phi, window)?;
    write_run(args.out_dir()?, &result, &metrics)?;
    print_summary(&result, &metrics);
    Ok(())
}

fn sweep(args: &RunArgs, phis: &[f64], base: f64) -> Result<()> {
    let (scenario, window) = args.load()?;
    let phis = phis
        .iter()
        .map(|p| SvoAngle::snapped(*p))
        .collect::<Result<Vec<_>>>()?;
    let base = SvoAngle::snapped(base)?;
    let sweep = sweep_svo(&scenario, &phis, base, window)?;
    let out = args.out_dir()?;
    for entry in &sweep.entries {
        let dir = out.join(format!("phi_{:.4}", entry.phi.radians()));
        write_run(&dir, &entry.result, &entry.metrics)?;
    }
    write_json(&out.join("sweep.json"), &sweep.reports())?;

    println!(
        "base phi = {:.4}, window [{}, {}]",
        base.radians(),
        window.0,
        window.1
    );
    println!(
        "{:>8} {:>12} {:>10}  avg speed full / window (percent vs base)",
        "phi", "|U_AV|", "J3"
    );
    for e in &sweep.entries {
        let m = &e.metrics;
        let pc = m.percent_change.as_ref().expect("filled by sweep");
        let cells: Vec<String> = (1..m.avg_speed.full.len())
            .map(|i| {
                format!(
                    "#{}: {:.3} ({:+.2}%) / {:.3} ({:+.2}%)",
                    i + 1,
                    m.avg_speed.full[i],
                    pc.avg_speed.full[i],
                    m.avg_speed.window[i],
                    pc.avg_speed.window[i]
                )
            })
            .collect();
        println!(
            "{:>8.4} {:>12.4} {:>10.2}  {}",
            m.phi,
            m.abs_payoff_self,
            e.result.objective,
            cells.join("  ")
        );
    }
    Ok(())
}

fn convergence(args: &RunArgs) -> Result<()> {
    let (scenario, _) = args.load()?;
    let result = run_scenario(&scenario)?;
    let report = result.report.as_ref().expect("optimized run has a report");
    let out = args.out_dir()?;
    let path = out.join("convergence.csv");
    let mut text = String::from("iteration,objective,running_min\n");
    let mut best = f64::INFINITY;
    for (i, j) in report.history.iter().enumerate() {
        best = best.min(*j);
        text.push_str(&format!("{},{},{}\n", i + 1, j, best));
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_json(&out.join("report.json"), report)?;
    let h = &report.history;
    let last_change = match h.as_slice() {
        [.., a, b] => (b - a).abs(),
        _ => 0.0,
    };
    println!("iterations = {}", report.iterations);
    println!(
        "stop = {:?}, converged = {}",
        report.stop_reason, report.converged
    );
    println!(
        "J3 first = {:.6}, best = {:.6} (iteration {})",
        h[0], result.objective, report.best_iteration
    );
    println!("final |dJ3| = {last_change:.3e}");
    Ok(())
}

fn gradcheck(
    seed: u64,
    cases: usize,
    horizon: f64,
    dt: f64,
    tolerance: f64,
    out: Option<&Path>,
) -> Result<bool> {
    let report = run_gradcheck(seed, cases, horizon, dt)?;
    for (i, c) in report.cases.iter().enumerate() {
        println!(
            "case {:>3}: phi = {:.4}, payoff = {:?}, max rel err = {:.3e} (node {})",
            i + 1,
            c.phi,
            c.payoff,
            c.max_relative_error,
            c.worst_node
        );
    }
    let ok = report.passes(tolerance);
    println!(
        "max relative error = {:.3e} ({} at tolerance {tolerance:e})",
        report.max_relative_error,
        if ok { "pass" } else { "FAIL" }
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("gradcheck.json"), &report)?;
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(args) => simulate(&args, false).map(|_| true),
        Command::Baseline(args) => simulate(&args, true).map(|_| true),
        Command::Sweep { run, phis, base } => sweep(&run, &phis, base).map(|_| true),
        Command::Convergence(args) => convergence(&args).map(|_| true),
        Command::Gradcheck {
            seed,
            cases,
            horizon,
            dt,
            tolerance,
            out,
        } => gradcheck(seed, cases, horizon, dt, tolerance, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            // Display already folds in the underlying cause.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
