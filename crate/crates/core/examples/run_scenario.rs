//! The `mmg run` pipeline from code: load a scenario file, solve, check,
//! and write `paths.csv` / `report.json`.
//!
//! ```bash
//! cargo run -p mmgame --example run_scenario -- [scenario.json] [linear|general|hetero|quasi]
//! ```

use mmgame::cli::{run, RunArgs, RunFlags, SolverKind};

fn main() -> mmgame::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/linear_four.json").into());
    let solver = match args.next().as_deref() {
        None | Some("linear") => SolverKind::Linear,
        Some("general") => SolverKind::General,
        Some("hetero") => SolverKind::Hetero,
        Some("quasi") => SolverKind::Quasi,
        Some(other) => return Err(mmgame::Error::validation(format!("unknown solver {other}"))),
    };
    let out = std::env::temp_dir().join("mmgame_run_scenario");
    let report = run(&RunArgs { scenario: scenario.into(), solver, out: out.clone(), opts: RunFlags::default() })?;
    for c in &report.checks {
        println!("{:<5} {:<22} {:.3e}", if c.pass { "ok" } else { "FAIL" }, c.name, c.metric);
    }
    println!("Y0 = {:?}", report.y0);
    println!("wrote {}", out.display());
    Ok(())
}
