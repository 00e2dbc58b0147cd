//! Large population: best quotes come from a four-player game on the
//! extreme inventories; every sampled agent then best-responds to them.
//!
//! ```bash
//! cargo run -p mmgame --example quasi_infinite
//! ```

use mmgame::game_solver::{solve_quasi_infinite_game, SolveOptions};
use mmgame::load_scenario;

fn main() -> mmgame::Result<()> {
    let template = load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/quasi_sample.json"))?;
    let sample: Vec<f64> = (0..25).map(|k| -1.0 + 2.0 * k as f64 / 24.0).collect();
    let sol = solve_quasi_infinite_game(&sample, &template, &SolveOptions::default())?;
    println!("best ask / bid at t = 0: {:.6} / {:.6}", sol.beta_a[0], sol.beta_b[0]);
    println!("consistency with the sampled quotes: {:.2e}", sol.consistency);
    println!("\n{:>7} {:>10} {:>10} {:>10}", "q0", "ask(0)", "bid(0)", "Q(T)");
    let m = template.grid.steps();
    for i in (0..sample.len()).step_by(4) {
        println!("{:>7.3} {:>10.5} {:>10.5} {:>10.5}", sol.inventories[i], sol.path.delta_a[i][0], sol.path.delta_b[i][0], sol.path.q[i][m]);
    }
    Ok(())
}
