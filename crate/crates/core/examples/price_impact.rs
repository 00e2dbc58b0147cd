//! Identical zero-inventory agents: the equilibrium ask splits into the
//! half-spread plus ex post and ex ante imbalance terms. The decomposition
//! is checked against the full solver.
//!
//! ```bash
//! cargo run -p mmgame --example price_impact
//! ```

use mmgame::game_solver::{benchmark_inventory, price_impact_path, solve_general_game};
use mmgame::load_scenario;

fn main() -> mmgame::Result<()> {
    let sc = load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/identical_impact.json"))?;
    let parts = price_impact_path(&sc)?;
    let sol = solve_general_game(&sc)?;
    let m = sc.grid.steps();

    println!("{:>5} {:>9} {:>9} {:>11} {:>11} {:>9} {:>9}", "t", "spread/2", "ex post", "ante term", "ante run", "total", "solver");
    for j in (0..=m).step_by(m / 10) {
        let p = &parts[j];
        println!(
            "{:>5.2} {:>9.5} {:>9.5} {:>11.5} {:>11.5} {:>9.5} {:>9.5}",
            p.time, p.half_spread, p.ex_post, p.ex_ante_terminal, p.ex_ante_running, p.total_ask, sol.path.delta_a[0][j]
        );
    }
    let worst = (0..=m).map(|j| (parts[j].total_ask - sol.path.delta_a[0][j]).abs()).fold(0.0, f64::max);
    println!("max |decomposition − solver| = {worst:.2e}");
    println!("benchmark inventory at t = 0: {:.6}", benchmark_inventory(&sc, 0)?);
    Ok(())
}
