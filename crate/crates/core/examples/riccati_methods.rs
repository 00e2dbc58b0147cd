//! Three constructions of the same 2×2 matrix Riccati solution: direct
//! RK4, the linear (U, V) system, and the scalar reduction, plus the
//! structural properties they share.
//!
//! ```bash
//! cargo run -p mmgame --example riccati_methods
//! ```

use mmgame::riccati::{check_two_dim_properties, integrate_matrix_riccati, radon_integrate, two_dim_reduction, MatrixPath};
use mmgame::scenario::Staged;
use mmgame::TimeGrid;

fn main() -> mmgame::Result<()> {
    let grid = TimeGrid::new(1.0, 400)?;
    let b1 = Staged::constant(0.5, &grid);
    let b2 = Staged::constant(0.8, &grid);
    let phi = Staged::constant(1.0, &grid);
    let big_a = 1.0;
    let b = MatrixPath::two_dim(b1.clone(), b2.clone());

    let direct = integrate_matrix_riccati(&b, &phi, big_a, &grid)?;
    let radon = radon_integrate(&b, &phi, big_a, &grid)?.to_solution(&grid, &phi, big_a);
    let red = two_dim_reduction(&b1, &b2, &phi, big_a, &grid)?;

    println!("X(0) direct:\n{:.8}", direct.x[0]);
    println!("direct vs (U, V):       {:.2e}", direct.max_diff(&radon));
    println!("direct vs reduction:    {:.2e}", direct.max_diff(&red.x));
    println!("row-sum invariant:      {:.2e}", direct.row_sum_residual);
    let props = check_two_dim_properties(&direct)?;
    println!("non-positive: {}, column dominant: {}", props.non_positive, props.column_dominant);

    // b1 + b2 = 1, A = 0: the first scalar factor is −√2·tanh(√2(T − t))
    let half = Staged::constant(0.5, &grid);
    let red0 = two_dim_reduction(&half, &half, &phi, 0.0, &grid)?;
    let want = -(2f64.sqrt()) * (2f64.sqrt()).tanh();
    println!("\ntheta1(0) = {:.10}, closed form {:.10}", red0.theta1[0], want);
    Ok(())
}
