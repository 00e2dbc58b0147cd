//! File-level drivers behind the `mmg` binary: `run`, `check`, `sweep`.
//!
//! Every driver is an ordinary function so examples and tests can call it
//! without spawning a process; [`main_from_args`] maps results to exit codes
//! (2 validation, 3 non-convergence, 4 failed check).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::game_solver::{self, SolveOptions};
use crate::hetero::{self, HeteroSystem};
use crate::isaacs::{self, MatrixClassReport};
use crate::linear_game::{self, EquilibriumPath};
use crate::scenario::{IntensityDoc, IntensitySpec, MarketScenario, PhiDoc, ScenarioDoc, TimeGrid, XiSpec};

pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "mmg", version, about = "Nash equilibria of market-making games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one scenario and write paths.csv + report.json
    Run(RunArgs),
    /// Classify a square matrix (Z / M / M₀, Varah bound)
    Check(CheckArgs),
    /// Re-run a scenario over a list of parameter values
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Linear,
    General,
    Hetero,
    #[value(alias = "quasi_infinite")]
    #[serde(rename = "quasi_infinite")]
    Quasi,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub solver: SolverKind,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub opts: RunFlags,
}

/// Flags shared by `run` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct RunFlags {
    /// shooting tolerance (general / quasi)
    #[arg(long)]
    pub tol: Option<f64>,
    /// override the scenario's step count
    #[arg(long)]
    pub steps: Option<usize>,
    /// hetero terminal condition Y_T = −f·A·Q_T
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub terminal_factor: u8,
    /// hetero only: horizons to scan for the ordering breakdown
    #[arg(long, value_delimiter = ',')]
    pub breakdown: Option<Vec<f64>>,
}

impl Default for RunFlags {
    fn default() -> Self {
        RunFlags { tol: None, steps: None, terminal_factor: 1, breakdown: None }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CheckArgs {
    #[arg(long)]
    pub matrix: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// T, A, phi, gamma or q0[i]
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// defaults to hetero/linear for the linear model, general otherwise
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[command(flatten)]
    pub opts: RunFlags,
}

// ---------------------------------------------------------------------------
// reports

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub metric: f64,
    /// "<=" or ">"
    pub relation: &'static str,
    pub threshold: f64,
}

impl CheckResult {
    fn at_most(name: &str, metric: f64, threshold: f64) -> Self {
        CheckResult { name: name.into(), pass: metric <= threshold, metric, relation: "<=", threshold }
    }

    fn above(name: &str, metric: f64, threshold: f64, also: bool) -> Self {
        CheckResult { name: name.into(), pass: also && metric > threshold, metric, relation: ">", threshold }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub solver: SolverKind,
    pub passed: bool,
    pub horizon: f64,
    pub steps: usize,
    /// Y at t = 0, in document order
    pub y0: Vec<f64>,
    pub checks: Vec<CheckResult>,
    pub residuals: BTreeMap<String, f64>,
    pub details: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

/// Solver output before anything touches the file system.
pub struct Outcome {
    pub scenario: MarketScenario,
    pub path: EquilibriumPath,
    pub report: RunReport,
}

fn agent_doc_order(sc: &MarketScenario) -> Vec<usize> {
    // doc position k -> sorted index
    let mut inv = vec![0; sc.order.len()];
    for (i, &k) in sc.order.iter().enumerate() {
        inv[k] = i;
    }
    inv
}

fn solve_options(flags: &RunFlags) -> Result<SolveOptions> {
    let mut o = SolveOptions::default();
    if let Some(t) = flags.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::validation("--tol must be positive"));
        }
        o.tol = t;
    }
    Ok(o)
}

/// Apply `--steps`: same horizon, new grid.
pub fn with_steps(sc: &MarketScenario, steps: usize) -> Result<MarketScenario> {
    let mut doc = sc.to_document();
    doc.steps = steps;
    let _ = TimeGrid::new(doc.horizon, steps)?;
    doc.into_scenario()
}

/// Solve `sc` with `solver` and evaluate that solver's checks.
pub fn solve_scenario(sc: &MarketScenario, id: &str, solver: SolverKind, flags: &RunFlags) -> Result<Outcome> {
    let sc = match flags.steps {
        Some(s) => with_steps(sc, s)?,
        None => sc.clone(),
    };
    let mut checks = Vec::new();
    let mut details = BTreeMap::new();
    let mut warnings = Vec::new();
    let path = match solver {
        SolverKind::Linear => {
            let path = linear_game::build_linear_equilibrium(&sc)?;
            let foc = linear_game::check_linear_foc(&path, &sc)?;
            checks.push(CheckResult::at_most("foc", foc.max_foc, 1e-6));
            checks.push(CheckResult::at_most("dynamics", foc.max_dynamics, 1e-6));
            checks.push(CheckResult::at_most("ordering", path.ordering_violation(), 1e-9));
            if let Some(&c) = path.residuals.get("chain_consistency") {
                checks.push(CheckResult::at_most("chain_consistency", c, 1e-8));
            }
            path
        }
        SolverKind::General => {
            let opts = solve_options(flags)?;
            let sol = game_solver::solve_general_game_with(&sc, &opts)?;
            let r = &sol.path.residuals;
            checks.push(CheckResult::at_most("terminal_gap", r["terminal_gap"], (10.0 * opts.tol).max(1e-8)));
            checks.push(CheckResult::at_most("step_doubling", r["step_doubling"], 1e-6));
            let stride = (sc.grid.steps() / 50).max(1);
            let isaacs_rep = game_solver::verify_maximum_principle(&sol.path, &sc, 401, stride)?;
            checks.push(CheckResult::at_most("isaacs_gap", isaacs_rep.worst_relative_gap, 1e-6));
            checks.push(CheckResult::at_most("ordering", sol.path.ordering_violation(), 1e-9));
            let mut wide = sc.clone();
            wide.xi = XiSpec::Explicit(2.0 * sc.xi_value()?);
            let other = game_solver::solve_general_game_with(&wide, &opts)?;
            checks.push(CheckResult::at_most("xi_independence", sol.path.max_quote_diff(&other.path), 1e-9));
            details.insert("shooting".into(), serde_json::to_value(&sol.shooting).expect("plain data"));
            details.insert("isaacs".into(), serde_json::to_value(&isaacs_rep).expect("plain data"));
            if let Ok(imp) = game_solver::price_impact(&sc, 0) {
                details.insert("price_impact_t0".into(), serde_json::to_value(imp).expect("plain data"));
            }
            warnings.extend(sol.warnings);
            sol.path
        }
        SolverKind::Hetero => {
            let sys = HeteroSystem::from_scenario(&sc, f64::from(flags.terminal_factor))?;
            let sol = hetero::solve_hetero(&sys)?;
            let r = &sol.path.residuals;
            checks.push(CheckResult::at_most("terminal_gap", r["terminal_gap"], 1e-8));
            checks.push(CheckResult::at_most("forward_ode", r["forward_ode"], 1e-8));
            checks.push(CheckResult::at_most("backward_ode", r["backward_ode"], 1e-8));
            checks.push(CheckResult::at_most("riccati_symmetry", r["riccati_symmetry"], 1e-10));
            details.insert("terminal_factor".into(), json!(flags.terminal_factor));
            details.insert("DeltaY0".into(), json!(sol.delta_y()[0]));
            if let Some(horizons) = &flags.breakdown {
                let per_unit = ((sc.grid.steps() as f64 / sc.grid.horizon()).ceil() as usize).max(100);
                let rep = hetero::ordering_breakdown_experiment(&sys, horizons, per_unit)?;
                let found = match (rep.t_star, rep.crossing_time) {
                    (Some(t), Some(c)) => c < t && rep.min_delta_y.unwrap_or(0.0) < 0.0,
                    _ => false,
                };
                checks.push(CheckResult::above("breakdown_found", rep.delta_y0.unwrap_or(f64::NAN), 0.0, found));
                details.insert("breakdown".into(), serde_json::to_value(&rep).expect("plain data"));
            }
            sol.path
        }
        SolverKind::Quasi => {
            let opts = solve_options(flags)?;
            let sol = game_solver::solve_quasi_infinite_game(&sc.q0(), &sc, &opts)?;
            checks.push(CheckResult::at_most("beta_consistency", sol.consistency, 1e-6));
            checks.push(CheckResult::at_most("artificial_terminal_gap", sol.artificial.residuals["terminal_gap"], (10.0 * opts.tol).max(1e-8)));
            checks.push(CheckResult::at_most("ordering", sol.path.ordering_violation(), 1e-9));
            details.insert("beta_a0".into(), json!(sol.beta_a[0]));
            details.insert("beta_b0".into(), json!(sol.beta_b[0]));
            sol.path
        }
    };
    let inv = agent_doc_order(&sc);
    let report = RunReport {
        scenario_id: id.to_string(),
        solver,
        passed: checks.iter().all(|c| c.pass),
        horizon: sc.grid.horizon(),
        steps: sc.grid.steps(),
        y0: inv.iter().map(|&i| path.y[i][0]).collect(),
        checks,
        residuals: path.residuals.clone(),
        details,
        warnings,
        artifacts: Vec::new(),
    };
    Ok(Outcome { scenario: sc, path, report })
}

// ---------------------------------------------------------------------------
// output files

/// C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= 17 {
        let mant = trim_zeros(mant);
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rows ordered by time, then agent in document order.
pub fn write_paths_csv(path: &EquilibriumPath, sc: &MarketScenario, file: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(file).map_err(csv_err)?;
    w.write_record(["t", "agent", "Q", "Y", "delta_a", "delta_b", "best_ask", "best_bid"]).map_err(csv_err)?;
    let inv = agent_doc_order(sc);
    for j in 0..=path.grid.steps() {
        let (t, ba, bb) = (path.grid.node(j), path.best_ask(j), path.best_bid(j));
        for (k, &i) in inv.iter().enumerate() {
            w.write_record([
                fmt_g17(t),
                k.to_string(),
                fmt_g17(path.q[i][j]),
                fmt_g17(path.y[i][j]),
                fmt_g17(path.delta_a[i][j]),
                fmt_g17(path.delta_b[i][j]),
                fmt_g17(ba),
                fmt_g17(bb),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn write_json(value: &impl Serialize, file: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialise");
    text.push('\n');
    fs::write(file, text)?;
    Ok(())
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

fn scenario_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into())
}

fn save(outcome: &mut Outcome, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let csv_file = out.join("paths.csv");
    write_paths_csv(&outcome.path, &outcome.scenario, &csv_file)?;
    outcome.report.artifacts = vec!["paths.csv".into(), "report.json".into()];
    write_json(&outcome.report, &out.join("report.json"))
}

// ---------------------------------------------------------------------------
// commands

/// `mmg run`: solve, write `paths.csv` and `report.json` into `out`.
pub fn run(args: &RunArgs) -> Result<RunReport> {
    let sc = ScenarioDoc::parse(&read_input(&args.scenario)?)?.into_scenario()?;
    let mut outcome = solve_scenario(&sc, &scenario_id(&args.scenario), args.solver, &args.opts)?;
    save(&mut outcome, &args.out)?;
    Ok(outcome.report)
}

/// Whitespace- or comma-separated square matrix, one row per line.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad matrix entry {s:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::validation(format!("matrix must be square; got {n} row(s) of lengths {:?}", rows.iter().map(Vec::len).collect::<Vec<_>>())));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// `mmg check`: classification report of the matrix in `args.matrix`.
pub fn check(args: &CheckArgs) -> Result<MatrixClassReport> {
    let a = parse_matrix(&read_input(&args.matrix)?)?;
    isaacs::classify_matrix(&a, 1e-12)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    /// "pass", "check_failed" or "error"
    pub status: String,
    pub exit_code: i32,
    pub y0: Vec<f64>,
    pub delta_y0: Option<f64>,
    pub impact: Option<game_solver::ImpactDecomposition>,
    pub failed_checks: Vec<String>,
    pub message: String,
}

/// Scenario document with one parameter replaced.
pub fn apply_param(doc: &ScenarioDoc, param: &str, value: f64) -> Result<ScenarioDoc> {
    let mut d = doc.clone();
    match param {
        "T" => {
            if !(value > 0.0) {
                return Err(Error::validation("horizon must be positive"));
            }
            // keep the step size
            d.steps = ((doc.steps as f64 * value / doc.horizon).round() as usize).max(1);
            d.horizon = value;
        }
        "A" => d.agents.iter_mut().for_each(|a| a.a = value),
        "phi" => d.agents.iter_mut().for_each(|a| a.phi = PhiDoc::Value(value)),
        "gamma" => {
            d.gamma = value;
            if let IntensityDoc::Exponential { gamma } = &mut d.intensity {
                *gamma = value;
            }
        }
        p => {
            let idx = p
                .strip_prefix("q0[")
                .and_then(|s| s.strip_suffix(']'))
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::validation(format!("unknown sweep parameter {p:?}; use T, A, phi, gamma or q0[i]")))?;
            let n = d.agents.len();
            let agent = d.agents.get_mut(idx).ok_or_else(|| Error::validation(format!("q0[{idx}] out of range for {n} agents")))?;
            agent.q0 = value;
        }
    }
    Ok(d)
}

/// Solver used by `sweep` when none is given.
pub fn default_solver(sc: &MarketScenario) -> SolverKind {
    match sc.intensity {
        IntensitySpec::Linear if sc.n_agents() == 2 && sc.homogeneous_penalties().is_err() => SolverKind::Hetero,
        IntensitySpec::Linear => SolverKind::Linear,
        IntensitySpec::Function(_) => SolverKind::General,
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("MMG_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// `mmg sweep`: one run per value in `out/run_NNN`, summary in `out/sweep.csv`.
/// Individual failures are recorded, not propagated.
pub fn sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    if args.values.is_empty() {
        return Err(Error::validation("sweep needs at least one value"));
    }
    let doc = ScenarioDoc::parse(&read_input(&args.scenario)?)?;
    // reject a bad parameter name before doing any work
    apply_param(&doc, &args.param, args.values[0])?;
    let base = doc.clone().into_scenario()?;
    let solver = args.solver.unwrap_or_else(|| default_solver(&base));
    let id = scenario_id(&args.scenario);
    let n = doc.agents.len();
    fs::create_dir_all(&args.out)?;

    let one = |(index, &value): (usize, &f64)| -> SweepRow {
        let dir = args.out.join(format!("run_{index:03}"));
        let res = apply_param(&doc, &args.param, value)
            .and_then(ScenarioDoc::into_scenario)
            .and_then(|sc| solve_scenario(&sc, &format!("{id}[{}={value}]", args.param), solver, &args.opts))
            .and_then(|mut o| save(&mut o, &dir).map(|_| o));
        match res {
            Ok(o) => {
                let r = &o.report;
                SweepRow {
                    index,
                    value,
                    status: if r.passed { "pass" } else { "check_failed" }.into(),
                    exit_code: if r.passed { 0 } else { EXIT_CHECK_FAILED },
                    y0: r.y0.clone(),
                    delta_y0: (n == 2).then(|| o.path.y[0][0] - o.path.y[1][0]),
                    impact: game_solver::price_impact(&o.scenario, 0).ok(),
                    failed_checks: r.failed_checks().into_iter().map(String::from).collect(),
                    message: r.warnings.join("; "),
                }
            }
            Err(e) => SweepRow {
                index,
                value,
                status: "error".into(),
                exit_code: e.exit_code(),
                y0: vec![f64::NAN; n],
                delta_y0: None,
                impact: None,
                failed_checks: Vec::new(),
                message: e.to_string(),
            },
        }
    };
    let rows: Vec<SweepRow> = match thread_cap() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::validation(format!("MMG_THREADS: {e}")))?
            .install(|| args.values.par_iter().enumerate().map(one).collect()),
        None => args.values.par_iter().enumerate().map(one).collect(),
    };
    write_sweep_csv(&rows, &args.param, n, &args.out.join("sweep.csv"))?;
    Ok(rows)
}

fn write_sweep_csv(rows: &[SweepRow], param: &str, n: usize, file: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(file).map_err(csv_err)?;
    let mut head: Vec<String> = vec!["run".into(), "param".into(), "value".into(), "status".into(), "exit_code".into()];
    head.extend((0..n).map(|k| format!("Y0_{k}")));
    head.push("DeltaY0".into());
    for c in ["half_spread", "ex_post", "ex_ante_terminal", "ex_ante_running", "total_ask"] {
        head.push(c.into());
    }
    head.push("failed_checks".into());
    head.push("message".into());
    w.write_record(&head).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(fmt_g17).unwrap_or_default();
    for r in rows {
        let mut rec = vec![format!("run_{:03}", r.index), param.to_string(), fmt_g17(r.value), r.status.clone(), r.exit_code.to_string()];
        rec.extend(r.y0.iter().map(|&v| fmt_g17(v)));
        rec.push(opt(r.delta_y0));
        let imp = r.impact.as_ref();
        rec.push(opt(imp.map(|i| i.half_spread)));
        rec.push(opt(imp.map(|i| i.ex_post)));
        rec.push(opt(imp.map(|i| i.ex_ante_terminal)));
        rec.push(opt(imp.map(|i| i.ex_ante_running)));
        rec.push(opt(imp.map(|i| i.total_ask)));
        rec.push(r.failed_checks.join(";"));
        rec.push(r.message.clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse `args`, dispatch, print a summary and return the exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mmg: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Run(a) => {
            let rep = run(a)?;
            for c in &rep.checks {
                println!("{} {:<24} {:.3e} ({} {:.1e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.metric, c.relation, c.threshold);
            }
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            Ok(if rep.passed { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Check(a) => {
            let rep = check(a)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("reports always serialise"));
            Ok(0)
        }
        Command::Sweep(a) => {
            let rows = sweep(a)?;
            let bad = rows.iter().filter(|r| r.exit_code != 0).count();
            println!("{} run(s), {} failed; summary in {}", rows.len(), bad, a.out.join("sweep.csv").display());
            Ok(if bad == 0 { 0 } else { EXIT_CHECK_FAILED })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.10000000000000001"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (123456789.0, "123456789"),
            (1e17, "1e+17"),
            (1.0 / 3.0, "0.33333333333333331"),
            (0.0001, "0.0001"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g17(x), want, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [std::f64::consts::PI, -1.0 / 7.0, 6.02214076e23, 1.5e-300] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn matrix_parsing() {
        let a = parse_matrix("1 -1\n-1 1\n").unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let b = parse_matrix("2, -1\n0, 3").unwrap();
        assert_eq!(b[(0, 1)], -1.0);
        assert!(matches!(parse_matrix("1 2 3\n4 5 6"), Err(Error::Validation(_))));
        assert!(matches!(parse_matrix("1 x\n1 1"), Err(Error::Parse(_))));
    }

    #[test]
    fn sweep_parameter_names() {
        let doc = ScenarioDoc::parse(
            r#"{"horizon": 2.0, "steps": 100, "gamma": 1.0, "zeta": 1.0,
                "intensity": {"kind": "exponential", "gamma": 1.0},
                "ask_flow": {"kind": "constant", "value": 1.0},
                "bid_flow": {"kind": "constant", "value": 1.0},
                "agents": [{"q0": 0.0, "phi": 0.1, "A": 1.0}, {"q0": 1.0, "phi": 0.1, "A": 1.0}]}"#,
        )
        .unwrap();
        let t = apply_param(&doc, "T", 4.0).unwrap();
        assert_eq!((t.horizon, t.steps), (4.0, 200));
        let g = apply_param(&doc, "gamma", 2.0).unwrap();
        assert_eq!(g.intensity, IntensityDoc::Exponential { gamma: 2.0 });
        assert_eq!(apply_param(&doc, "q0[1]", -3.0).unwrap().agents[1].q0, -3.0);
        assert!(apply_param(&doc, "q0[2]", 0.0).is_err());
        assert!(apply_param(&doc, "zeta", 0.0).is_err());
        assert_eq!(apply_param(&doc, "A", 0.25).unwrap().agents[0].a, 0.25);
    }

    #[test]
    fn cli_parses_flags() {
        let cli = Cli::try_parse_from([
            "mmg", "run", "--scenario", "s.json", "--solver", "quasi", "--out", "o", "--tol", "1e-9", "--steps", "50",
            "--terminal-factor", "2",
        ])
        .unwrap();
        let Command::Run(r) = cli.command else { panic!() };
        assert_eq!(r.solver, SolverKind::Quasi);
        assert_eq!((r.opts.tol, r.opts.steps, r.opts.terminal_factor), (Some(1e-9), Some(50), 2));
        assert!(Cli::try_parse_from(["mmg", "run", "--scenario", "s", "--solver", "x", "--out", "o"]).is_err());
        assert!(Cli::try_parse_from(["mmg", "run", "--scenario", "s", "--solver", "hetero", "--out", "o", "--terminal-factor", "3"]).is_err());
        let s = Cli::try_parse_from(["mmg", "sweep", "--scenario", "s", "--param", "T", "--values", "1,2,3", "--out", "o"]).unwrap();
        let Command::Sweep(s) = s.command else { panic!() };
        assert_eq!(s.values, vec![1.0, 2.0, 3.0]);
    }
}
