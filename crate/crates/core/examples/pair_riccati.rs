//! Scalar Riccati equations of neighbouring agent pairs.
//!
//! With φ = 0, κ = 1 and A = 1 the interior pair solves P′ = −P², P(T) = −1,
//! i.e. P(t) = −1/(1 + T − t).
//!
//! ```bash
//! cargo run -p mmgame --example pair_riccati
//! ```

use mmgame::linear_game::{pair_riccati_with, PairVariant};
use mmgame::scenario::Staged;
use mmgame::TimeGrid;

fn main() -> mmgame::Result<()> {
    let grid = TimeGrid::new(1.0, 1000)?;
    // κ = γ(a+b) for the interior pair
    let half = Staged::constant(0.5, &grid);
    let zero = Staged::constant(0.0, &grid);
    let mid = pair_riccati_with(PairVariant::Mid, &half, &half, &zero, 1.0, 1.0, &grid);
    let worst = (0..=grid.steps())
        .map(|j| (mid.p[j] + 1.0 / (2.0 - grid.node(j))).abs())
        .fold(0.0, f64::max);
    println!("mid pair vs closed form: max error {worst:.2e}");

    let phi = Staged::constant(0.5, &grid);
    let one = Staged::constant(1.0, &grid);
    println!("\n{:<8} {:>10} {:>10} {:>10}", "variant", "kappa", "P(0)", "P(T)");
    for v in [PairVariant::Top, PairVariant::Mid, PairVariant::Bottom, PairVariant::Duo] {
        let p = pair_riccati_with(v, &one, &one, &phi, 1.0, 1.0, &grid);
        println!("{:<8} {:>10.4} {:>10.5} {:>10.5}", format!("{v:?}"), p.kappa[0], p.p[0], p.p[grid.steps()]);
    }
    Ok(())
}
