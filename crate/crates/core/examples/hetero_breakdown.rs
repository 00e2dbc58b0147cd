//! Two agents with different terminal penalties. For
//! 0 < q0¹ < q0² < (A¹/A²)·q0¹ the agent holding less inventory starts
//! with the larger adjoint, so "more inventory ⇒ better ask" cannot hold
//! at every time: ΔY = Y¹ − Y² must change sign.
//!
//! ```bash
//! cargo run -p mmgame --example hetero_breakdown
//! ```

use mmgame::hetero::{ordering_breakdown_experiment, solve_hetero, HeteroSystem};
use mmgame::load_scenario;

fn main() -> mmgame::Result<()> {
    let sc = load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/hetero_breakdown.json"))?;
    for factor in [1.0, 2.0] {
        let sys = HeteroSystem::from_scenario(&sc, factor)?;
        let sol = solve_hetero(&sys)?;
        let dy = sol.delta_y();
        println!("terminal factor {factor}: DeltaY(0) = {:.6}, DeltaY(T) = {:.6}", dy[0], dy[dy.len() - 1]);

        let horizons: Vec<f64> = (1..=20).map(f64::from).collect();
        let rep = ordering_breakdown_experiment(&sys, &horizons, 200)?;
        println!(
            "  T* = {:?}, crossing at t = {:.4}, asymptote {:.6} (rel. error at T = 20: {:.1e})",
            rep.t_star,
            rep.crossing_time.unwrap_or(f64::NAN),
            rep.asymptote,
            rep.asymptote_rel_error
        );
    }
    Ok(())
}
