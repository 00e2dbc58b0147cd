//! The `mmg sweep` pipeline: re-solve a scenario for several values of one
//! parameter. Here the terminal penalty A of three identical agents; the
//! ex ante terminal impact is linear in A.
//!
//! ```bash
//! cargo run -p mmgame --example parameter_sweep
//! ```

use mmgame::cli::{sweep, RunFlags, SweepArgs};

fn main() -> mmgame::Result<()> {
    let out = std::env::temp_dir().join("mmgame_parameter_sweep");
    let rows = sweep(&SweepArgs {
        scenario: concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/identical_impact.json").into(),
        param: "A".into(),
        values: vec![0.0, 0.25, 0.5, 1.0, 2.0],
        out: out.clone(),
        solver: None,
        opts: RunFlags::default(),
    })?;
    println!("{:>6} {:>8} {:>14} {:>10}", "A", "status", "ante terminal", "Y0");
    for r in &rows {
        let ante = r.impact.as_ref().map_or(f64::NAN, |i| i.ex_ante_terminal);
        println!("{:>6.2} {:>8} {:>14.8} {:>10.6}", r.value, r.status, ante, r.y0[0]);
    }
    println!("summary: {}", out.join("sweep.csv").display());
    Ok(())
}
