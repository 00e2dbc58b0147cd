//! General (exponential-intensity) game for two agents solved by shooting,
//! then certified: terminal condition, Hamiltonian maximisation and
//! independence from the truncation level.
//!
//! For q0 = (1, −1), a = b = γ = 1, φ = 0 and A = ½ the ask-side adjoint
//! of the long agent solves Y + 1 + 2 sinh(2Y) = 0.
//!
//! ```bash
//! cargo run -p mmgame --example general_game
//! ```

use std::time::Instant;

use mmgame::game_solver::{solve_general_game, verify_maximum_principle, xi_sensitivity, SolveOptions};
use mmgame::load_scenario;

fn main() -> mmgame::Result<()> {
    let sc = load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/general_duo.json"))?;
    let start = Instant::now();
    let sol = solve_general_game(&sc)?;
    println!("solved in {:?}: {} Newton iteration(s), {} segment(s)", start.elapsed(), sol.shooting.iterations, sol.shooting.segments);

    // agents are stored by ascending q0, so index 1 holds q0 = +1
    let y0 = sol.shooting.y0[1];
    let (mut lo, mut hi) = (-1.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + 1.0 + 2.0 * (2.0 * mid).sinh() > 0.0 {
            hi = mid
        } else {
            lo = mid
        }
    }
    println!("Y0 = {y0:.12}, scalar root = {lo:.12}");
    for (k, v) in &sol.path.residuals {
        println!("  {k:<22} {v:.3e}");
    }

    let isaacs = verify_maximum_principle(&sol.path, &sc, 401, 20)?;
    println!("worst Hamiltonian gap {:.2e} over {} checks", isaacs.worst_gap, isaacs.checked);
    println!("quote change when xi doubles: {:.2e}", xi_sensitivity(&sc, &SolveOptions::default())?);
    Ok(())
}
