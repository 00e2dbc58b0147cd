//! The Isaacs fixed point: every agent's quote is a best response to the
//! best competing quote. Solves it for one side, compares the analytic
//! Jacobian with finite differences and classifies the inventory-drift
//! Jacobian.
//!
//! ```bash
//! cargo run -p mmgame --example isaacs_fixed_point
//! ```

use mmgame::isaacs::{classify_matrix, psi_jacobian, psi_jacobian_fd, psi_solve, rho_jacobian_fd_with, Side};
use mmgame::IntensityFunction;

fn main() -> mmgame::Result<()> {
    let f = IntensityFunction::exponential(1.0)?;
    let xi = 50.0;
    let y = [-0.8, -0.1, 0.3, 1.1];

    for side in [Side::Ask, Side::Bid] {
        let fp = psi_solve(&y, side, &f, xi)?;
        println!("{side:?}: quotes {:?} ({} iterations, residual {:.1e})", round(&fp.delta), fp.iterations, fp.residual);
        let exact = psi_jacobian(&y, side, &f, xi)?;
        let fd = psi_jacobian_fd(&y, side, &f, xi, 1e-5)?;
        println!("  |analytic - finite difference| = {:.2e}", (&exact - &fd).amax());
    }

    let jac = rho_jacobian_fd_with(1.0, 1.0, &y, &f, xi, 1e-6)?;
    let class = classify_matrix(&jac, 1e-8)?;
    println!("\ndrift Jacobian:\n{jac:.5}");
    println!("Z: {}  M0: {}  row sums: {:?}", class.is_z, class.is_m0, round(&class.row_sums));
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e6).round() / 1e6).collect()
}
