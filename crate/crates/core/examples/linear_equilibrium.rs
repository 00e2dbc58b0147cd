//! Closed-form equilibrium of the linear-intensity game for six agents.
//!
//! ```bash
//! cargo run -p mmgame --example linear_equilibrium
//! ```

use std::time::Instant;

use mmgame::linear_game::{build_linear_equilibrium, check_linear_foc};
use mmgame::scenario::{AgentParams, IntensitySpec, XiSpec};
use mmgame::{CoefficientPath, MarketScenario, TimeGrid};

fn main() -> mmgame::Result<()> {
    let q0 = [-1.7, -0.9, -0.1, 0.35, 1.2, 1.9];
    let agents = q0
        .iter()
        .map(|&q0| AgentParams { q0, phi: CoefficientPath::constant(0.5), terminal: 1.0 })
        .collect();
    let sc = MarketScenario::new(
        TimeGrid::new(1.0, 1000)?,
        CoefficientPath::constant(1.0),
        CoefficientPath::constant(1.0),
        agents,
        IntensitySpec::Linear,
        Some(1.0),
        1.0,
        XiSpec::Auto,
    )?;

    let start = Instant::now();
    let path = build_linear_equilibrium(&sc)?;
    let foc = check_linear_foc(&path, &sc)?;
    println!("solved in {:?}", start.elapsed());
    println!("max FOC residual      {:.2e}", foc.max_foc);
    println!("max dynamics residual {:.2e}", foc.max_dynamics);
    println!("ordering violation    {:.2e}", path.ordering_violation());

    println!("\n{:>6} {:>8} {:>10} {:>10}", "agent", "q0", "ask(0)", "bid(0)");
    for i in 0..path.n_agents() {
        println!("{:>6} {:>8.3} {:>10.5} {:>10.5}", i, q0[i], path.delta_a[i][0], path.delta_b[i][0]);
    }
    let m = sc.grid.steps();
    println!("\nbest ask/bid at t=0: {:.5} / {:.5}", path.best_ask(0), path.best_bid(0));
    println!("best ask/bid at t=T: {:.5} / {:.5}", path.best_ask(m), path.best_bid(m));
    Ok(())
}
