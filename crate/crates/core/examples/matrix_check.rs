//! Matrix classes used throughout: Z, M, M₀ (singular M with zero row
//! sums) and the Varah bound ‖A⁻¹‖∞ ≤ 1/α for row-dominant matrices.
//!
//! ```bash
//! cargo run -p mmgame --example matrix_check
//! ```

use mmgame::isaacs::{classify_matrix, norm_inf, varah_bound};
use nalgebra::DMatrix;

fn main() -> mmgame::Result<()> {
    let cases = [
        ("laplacian", DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])),
        ("identity", DMatrix::identity(2, 2)),
        ("dominant", DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.0, 3.0])),
        ("3x3", DMatrix::from_row_slice(3, 3, &[4.0, -1.0, -2.0, -1.0, 3.0, -1.0, 0.0, -2.0, 5.0])),
    ];
    for (name, a) in &cases {
        let c = classify_matrix(a, 1e-12)?;
        print!("{name:<10} Z={:<5} M={:<5} M0={:<5}", c.is_z, c.is_m, c.is_m0);
        match (varah_bound(a), a.clone().try_inverse()) {
            (Ok(bound), Some(inv)) => println!(" varah {bound:.4} >= |A^-1| {:.4}", norm_inf(&inv)),
            _ => println!(" (no Varah bound)"),
        }
    }
    Ok(())
}
