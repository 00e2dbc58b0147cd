//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use mmgame::game_solver::{
    price_impact_path, solve_general_game, solve_general_game_with, solve_quasi_infinite_game, verify_maximum_principle,
    xi_sensitivity, SolveOptions,
};
use mmgame::hetero::{ordering_breakdown_experiment, HeteroSystem};
use mmgame::isaacs::{
    classify_matrix_with, interaction_jacobian, norm_inf, psi_jacobian, psi_jacobian_fd, psi_solve, rho_jacobian_fd_with,
    varah_bound, ClassTolerance, Side,
};
use mmgame::linear_game::{build_linear_equilibrium, check_linear_foc, pair_riccati_with, PairVariant};
use mmgame::riccati::{check_two_dim_properties, integrate_matrix_riccati, radon_integrate, two_dim_reduction, MatrixPath};
use mmgame::scenario::{AgentParams, IntensitySpec, Staged, XiSpec};
use mmgame::{CoefficientPath, IntensityFunction, MarketScenario, TimeGrid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn scenario(q0: &[f64], a: f64, b: f64, phi: f64, big_a: f64, t: f64, steps: usize, intensity: IntensitySpec, zeta: Option<f64>) -> MarketScenario {
    MarketScenario::new(
        TimeGrid::new(t, steps).unwrap(),
        CoefficientPath::constant(a),
        CoefficientPath::constant(b),
        q0.iter().map(|&q0| AgentParams { q0, phi: CoefficientPath::constant(phi), terminal: big_a }).collect(),
        intensity,
        zeta,
        1.0,
        XiSpec::Auto,
    )
    .unwrap()
}

fn exponential() -> IntensitySpec {
    IntensitySpec::Function(IntensityFunction::exponential(1.0).unwrap())
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

fn random_y(r: &mut ChaCha8Rng, n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-span..span)).collect()
}

fn c01_linear_foc() -> Outcome {
    let mut r = rng(1);
    let mut q0: Vec<f64> = (0..6).map(|_| r.gen_range(-2.0..2.0)).collect();
    q0.sort_by(f64::total_cmp);
    let sc = scenario(&q0, 1.0, 1.0, 0.5, 1.0, 1.0, 1000, IntensitySpec::Linear, Some(1.0));
    let start = Instant::now();
    let path = build_linear_equilibrium(&sc).unwrap();
    let foc = check_linear_foc(&path, &sc).unwrap();
    let elapsed = start.elapsed();
    let ord = path.ordering_violation();
    outcome(
        foc.max_foc < 1e-6 && ord <= 0.0 && elapsed < Duration::from_secs(1),
        format!("foc {:.2e}, ordering violation {:.1e}, {}", foc.max_foc, ord, secs(elapsed)),
    )
}

fn c02_pair_riccati() -> Outcome {
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let half = Staged::constant(0.5, &grid);
    let zero = Staged::constant(0.0, &grid);
    let p = pair_riccati_with(PairVariant::Mid, &half, &half, &zero, 1.0, 1.0, &grid);
    let err = (0..=grid.steps()).map(|j| (p.p[j] + 1.0 / (2.0 - grid.node(j))).abs()).fold(0.0, f64::max);
    outcome(err < 1e-8 && p.kappa[0] == 1.0, format!("max error {err:.2e}"))
}

fn c03_exponential_identities() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let gamma = r.gen_range(0.2..5.0);
        let f = IntensityFunction::exponential(gamma).unwrap();
        let p = r.gen_range(-5.0..5.0);
        worst = worst
            .max((f.delta_star(p).unwrap() - p - 1.0 / gamma).abs())
            .max((f.delta_star_prime(p).unwrap() - 1.0).abs())
            .max((f.ratio(p) - 1.0).abs());
    }
    outcome(worst < 1e-12, format!("max deviation {worst:.2e}"))
}

fn c04_bid_closed_form() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 1000 {
        let n = r.gen_range(2..=6);
        let gamma = r.gen_range(0.5..3.0);
        let f = IntensityFunction::exponential(gamma).unwrap();
        let y = random_y(&mut r, n, 3.0);
        let fp = psi_solve(&y, Side::Bid, &f, 100.0).unwrap();
        if fp.delta.iter().any(|d| d.abs() >= 100.0) {
            continue;
        }
        count += 1;
        for i in 0..n {
            worst = worst.max((fp.delta[i] - (1.0 / gamma - y[i])).abs());
        }
    }
    outcome(worst < 1e-10, format!("max error {worst:.2e} over {count} points"))
}

fn c05_jacobians() -> Outcome {
    let mut r = rng(5);
    let logistic = IntensityFunction::tabulate(|x| 2.0 / (1.0 + x.exp()), -8.0, 10.0, 181).unwrap();
    let fns = [IntensityFunction::exponential(1.0).unwrap(), logistic];
    let (mut jac_err, mut row_sum): (f64, f64) = (0.0, 0.0);
    let mut count = 0;
    while count < 100 {
        let f = &fns[count % 2];
        let side = if r.gen_bool(0.5) { Side::Ask } else { Side::Bid };
        let n = r.gen_range(2..=6);
        let y = random_y(&mut r, n, 2.0);
        let xi = 50.0;
        let fp = psi_solve(&y, side, f, xi).unwrap();
        if !fp.smooth {
            continue;
        }
        count += 1;
        let exact = psi_jacobian(&y, side, f, xi).unwrap();
        let fd = psi_jacobian_fd(&y, side, f, xi, 1e-5).unwrap();
        jac_err = jac_err.max((&exact - &fd).amax());
        let ij = interaction_jacobian(&y, side, f, xi).unwrap();
        for i in 0..ij.nrows() {
            row_sum = row_sum.max(ij.row(i).sum().abs());
        }
    }
    outcome(jac_err < 1e-5 && row_sum < 1e-10, format!("jacobian error {jac_err:.2e}, interaction row sums {row_sum:.1e}"))
}

fn c06_m0_structure() -> Outcome {
    let tol = ClassTolerance { entry: 1e-8, row_sum: 1e-6, eig: 1e-8 };
    let f = IntensityFunction::exponential(1.0).unwrap();
    let mut r = rng(6);
    let smooth = |y: &[f64], xi: f64| {
        [Side::Ask, Side::Bid].iter().all(|&s| psi_solve(y, s, &f, xi).map(|p| p.smooth).unwrap_or(false))
    };
    let (mut free_ok, mut free) = (0, 0);
    while free < 200 {
        let n = r.gen_range(2..=6);
        let y = random_y(&mut r, n, 2.0);
        if !smooth(&y, 50.0) {
            continue;
        }
        free += 1;
        let (a, b) = (r.gen_range(0.5..2.0), r.gen_range(0.5..2.0));
        let jac = rho_jacobian_fd_with(a, b, &y, &f, 50.0, 1e-6).unwrap();
        if classify_matrix_with(&jac, tol).unwrap().is_m0 {
            free_ok += 1;
        }
    }
    // small ξ: at least one quote sits on the clamp
    let (mut bound_ok, mut bound) = (0, 0);
    let xi = 1.2;
    while bound < 200 {
        let n = r.gen_range(2..=6);
        let y = random_y(&mut r, n, 2.0);
        let clamped = [Side::Ask, Side::Bid]
            .iter()
            .any(|&s| psi_solve(&y, s, &f, xi).unwrap().delta.iter().any(|d| d.abs() == xi));
        if !clamped || !smooth(&y, xi) {
            continue;
        }
        bound += 1;
        let jac = rho_jacobian_fd_with(1.0, 1.0, &y, &f, xi, 1e-6).unwrap();
        if classify_matrix_with(&jac, tol).unwrap().is_z_plus {
            bound_ok += 1;
        }
    }
    outcome(free_ok == free && bound_ok == bound, format!("M0 {free_ok}/{free}, Z+ with xi binding {bound_ok}/{bound}"))
}

fn two_dim_case(steps: usize) -> (TimeGrid, Staged, Staged, Staged) {
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let half = Staged::constant(0.5, &grid);
    let phi = Staged::constant(1.0, &grid);
    (grid, half.clone(), half, phi)
}

fn radon_vs_direct(steps: usize) -> f64 {
    let (grid, b1, b2, phi) = two_dim_case(steps);
    let b = MatrixPath::two_dim(b1, b2);
    let direct = integrate_matrix_riccati(&b, &phi, 1.0, &grid).unwrap();
    let radon = radon_integrate(&b, &phi, 1.0, &grid).unwrap().to_solution(&grid, &phi, 1.0);
    direct.max_diff(&radon)
}

fn c07_radon() -> Outcome {
    let fine = radon_vs_direct(1000);
    // at 1000 steps both sit at round-off, so the order is measured on coarse grids
    let (coarse, half) = (radon_vs_direct(10), radon_vs_direct(20));
    let ratio = coarse / half;
    outcome(fine < 1e-6 && ratio >= 8.0, format!("diff {fine:.2e} at 1000 steps; 10→20 steps ratio {ratio:.1}"))
}

fn c08_row_sums() -> Outcome {
    let (grid, b1, b2, phi) = two_dim_case(1000);
    let direct = integrate_matrix_riccati(&MatrixPath::two_dim(b1.clone(), b2.clone()), &phi, 1.0, &grid).unwrap();
    let red = two_dim_reduction(&b1, &b2, &phi, 1.0, &grid).unwrap();
    let props = check_two_dim_properties(&direct).unwrap();
    let assembly = direct.max_diff(&red.x);
    outcome(
        direct.row_sum_residual < 1e-6 && assembly < 1e-6 && props.pass(),
        format!(
            "row sums {:.2e}, reduction vs direct {:.2e}, non-positive {}, column dominant {}",
            direct.row_sum_residual, assembly, props.non_positive, props.column_dominant
        ),
    )
}

fn c09_theta_closed_form() -> Outcome {
    let (grid, b1, b2, phi) = two_dim_case(1000);
    let red = two_dim_reduction(&b1, &b2, &phi, 0.0, &grid).unwrap();
    let want = -(2f64.sqrt()) * 2f64.sqrt().tanh();
    let err = (red.theta1[0] - want).abs();
    outcome(err < 1e-6, format!("theta1(0) = {:.10}, error {err:.2e}", red.theta1[0]))
}

fn duo() -> MarketScenario {
    scenario(&[1.0, -1.0], 1.0, 1.0, 0.0, 0.5, 1.0, 1000, exponential(), None)
}

fn c10_general_shooting() -> Outcome {
    let sc = duo();
    let start = Instant::now();
    let sol = solve_general_game(&sc).unwrap();
    let isaacs = verify_maximum_principle(&sol.path, &sc, 401, 10).unwrap();
    let elapsed = start.elapsed();
    let (mut lo, mut hi) = (-1.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + 1.0 + 2.0 * (2.0 * mid).sinh() > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // ascending order: index 1 holds q0 = +1
    let err = (sol.shooting.y0[1] - lo).abs();
    let gap = sol.path.residuals["terminal_gap"];
    outcome(
        err < 1e-8 && gap < 1e-8 && isaacs.worst_gap < 1e-6 && elapsed < Duration::from_secs(5),
        format!("Y0 error {err:.2e}, terminal gap {gap:.1e}, Isaacs gap {:.1e}, {}", isaacs.worst_gap, secs(elapsed)),
    )
}

fn c11_xi_independence() -> Outcome {
    let d = xi_sensitivity(&duo(), &SolveOptions::default()).unwrap();
    outcome(d <= 1e-9, format!("max quote change {d:.2e}"))
}

fn c12_price_impact() -> Outcome {
    let sc = scenario(&[0.0, 0.0, 0.0], 1.1, 0.9, 0.0, 1.0, 1.0, 1000, exponential(), None);
    let parts = price_impact_path(&sc).unwrap();
    let sol = solve_general_game(&sc).unwrap();
    let (mut vs_solver, mut vs_const): (f64, f64) = (0.0, 0.0);
    for (j, p) in parts.iter().enumerate() {
        for i in 0..3 {
            vs_solver = vs_solver.max((p.total_ask - sol.path.delta_a[i][j]).abs());
        }
        vs_const = vs_const.max((p.ex_post + p.ex_ante_terminal + p.ex_ante_running - 0.4).abs());
    }
    outcome(vs_solver < 1e-8 && vs_const < 1e-8, format!("vs solver {vs_solver:.2e}, impact vs 0.4 {vs_const:.2e}"))
}

fn c13_quasi_infinite() -> Outcome {
    let sample = [-1.0, -1.0, 1.0, 1.0];
    let sc = scenario(&sample, 1.0, 0.8, 0.3, 0.5, 1.0, 500, exponential(), None);
    let opts = SolveOptions::default();
    let direct = solve_general_game_with(&sc, &opts).unwrap();
    let quasi = solve_quasi_infinite_game(&sample, &sc, &opts).unwrap();
    let d = quasi.path.max_quote_diff(&direct.path);
    outcome(d < 1e-6, format!("max quote difference {d:.2e}"))
}

fn c14_hetero_breakdown() -> Outcome {
    let sc = scenario(&[1.0, 1.5], 1.5, 1.5, 1.0, 1.0, 1.0, 200, IntensitySpec::Linear, Some(1.0));
    let mut sys = HeteroSystem::from_scenario(&sc, 1.0).unwrap();
    sys.terminal = [2.0, 1.0];
    let horizons: Vec<f64> = (1..=20).map(f64::from).collect();
    let start = Instant::now();
    let rep = ordering_breakdown_experiment(&sys, &horizons, 200).unwrap();
    let elapsed = start.elapsed();
    let t20 = rep.scan.last().unwrap();
    let ok = matches!((rep.t_star, rep.crossing_time), (Some(t), Some(c)) if t <= 20.0 && c < t)
        && rep.delta_y0.unwrap_or(0.0) > 0.0
        && rep.min_delta_y.unwrap_or(0.0) < 0.0
        && t20.horizon == 20.0
        && rep.asymptote_rel_error < 0.05
        && elapsed < Duration::from_secs(10);
    outcome(
        ok,
        format!(
            "T* = {:?}, DeltaY0 = {:.4}, crossing t = {:.4}, DeltaY0(T=20) = {:.6} vs {:.6}, {}",
            rep.t_star,
            rep.delta_y0.unwrap_or(f64::NAN),
            rep.crossing_time.unwrap_or(f64::NAN),
            t20.delta_y0,
            rep.asymptote,
            secs(elapsed)
        ),
    )
}

fn c15_varah() -> Outcome {
    let mut r = rng(15);
    let mut worst_slack = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..=8);
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j {
                    a[(i, j)] = r.gen_range(-1.0..1.0);
                    off += a[(i, j)].abs();
                }
            }
            a[(i, i)] = off + r.gen_range(1e-3..2.0);
        }
        let bound = varah_bound(&a).unwrap();
        let actual = norm_inf(&a.clone().try_inverse().unwrap());
        let slack = bound - actual;
        worst_slack = worst_slack.min(slack / actual);
        if bound * (1.0 + 1e-12) < actual {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations, tightest relative slack {worst_slack:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("linear game first-order conditions", c01_linear_foc),
        ("pair Riccati closed form", c02_pair_riccati),
        ("exponential intensity identities", c03_exponential_identities),
        ("bid fixed point closed form", c04_bid_closed_form),
        ("Jacobian agreement", c05_jacobians),
        ("M0 structure of the drift Jacobian", c06_m0_structure),
        ("Riccati: linear system vs direct", c07_radon),
        ("Riccati row sums and 2x2 reduction", c08_row_sums),
        ("theta1 closed form", c09_theta_closed_form),
        ("general game shooting", c10_general_shooting),
        ("truncation independence", c11_xi_independence),
        ("price impact decomposition", c12_price_impact),
        ("quasi-infinite consistency", c13_quasi_infinite),
        ("heterogeneous ordering breakdown", c14_hetero_breakdown),
        ("Varah bound", c15_varah),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let o = match std::panic::catch_unwind(check) {
            Ok(o) => o,
            Err(_) => outcome(false, "panicked"),
        };
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {:<38} {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, name, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
