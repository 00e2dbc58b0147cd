//! Fill-rate functions: the exponential closed forms and a tabulated
//! logistic-type curve handled by a log-spline.
//!
//! ```bash
//! cargo run -p mmgame --example intensity_functions
//! ```

use mmgame::IntensityFunction;

fn main() -> mmgame::Result<()> {
    let gamma = 1.5;
    let exp = IntensityFunction::exponential(gamma)?;
    println!("exponential, gamma = {gamma}");
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "p", "delta*(p)", "p + 1/g", "W(p)", "e^(-gp-1)/g");
    for p in [-1.0, -0.25, 0.0, 0.5, 2.0] {
        println!(
            "{:>6.2} {:>12.8} {:>12.8} {:>12.8} {:>12.8}",
            p,
            exp.delta_star(p)?,
            p + 1.0 / gamma,
            exp.w_value(p)?,
            (-gamma * p - 1.0).exp() / gamma
        );
    }

    // Λ(x) = 2 / (1 + e^{x}) decays like e^{-x} and has ΛΛ″/Λ′² < 1
    let tab = IntensityFunction::tabulate(|x| 2.0 / (1.0 + x.exp()), -6.0, 8.0, 141)?;
    let probe: Vec<f64> = (0..=100).map(|k| -5.0 + 0.12 * k as f64).collect();
    let diag = tab.validate(&probe)?;
    println!("\ntabulated 2/(1+e^x): admissible = {}, ratio in [{:.4}, {:.4}]", diag.pass, diag.min_ratio, diag.max_ratio);
    for p in [-1.0, 0.0, 1.0] {
        println!("  p = {p:>4}: delta* = {:.6}, slope = {:.6}", tab.delta_star(p)?, tab.delta_star_prime(p)?);
    }
    Ok(())
}
