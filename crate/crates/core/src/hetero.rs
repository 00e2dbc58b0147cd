//! Two-player linear game with agent-specific penalties.
//!
//! With Y the twice-adjoint, the pair of first-order conditions inverts to
//! a fixed linear quote map, and the state [Q; Y] solves
//!
//! ```text
//! Q′ = G + H·Y,   Y′ = D·Q,   Y_T = −A_mat·Q_T
//! H = (γ/3)(a+b)[[1,−1],[−1,1]],  G = ζ(b−a)(1,1),  D = diag(2φ¹, 2φ²)
//! ```
//!
//! decoupled by Y = R·Q + P with R′ = D − RHR and P′ = −(RHP + RG).
//! `A_mat = terminal_factor · diag(A¹, A²)`; factor 1 is the literal form,
//! factor 2 matches the N-player games' convention.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_game::EquilibriumPath;
use crate::ode::{self, At, Dense};
use crate::riccati::{self, MatrixPath, RiccatiSolution};
use crate::scenario::{CoefficientPath, IntensitySpec, MarketScenario, Staged, TimeGrid};

#[derive(Clone, Debug)]
pub struct HeteroSystem {
    pub grid: TimeGrid,
    pub ask_flow: CoefficientPath,
    pub bid_flow: CoefficientPath,
    pub phi: [CoefficientPath; 2],
    /// A¹, A²
    pub terminal: [f64; 2],
    pub terminal_factor: f64,
    pub zeta: f64,
    pub gamma: f64,
    /// ascending
    pub q0: [f64; 2],
}

/// (δ^{1,a}, δ^{1,b}, δ^{2,a}, δ^{2,b}) from the two adjoints.
pub fn quote_transform(y: [f64; 2], zeta: f64, gamma: f64) -> Result<[f64; 4]> {
    if !(gamma > 0.0) {
        return Err(Error::validation("gamma must be positive"));
    }
    let base = zeta / gamma;
    let s1 = (2.0 * y[0] + y[1]) / 3.0;
    let s2 = (y[0] + 2.0 * y[1]) / 3.0;
    Ok([base + s1, base - s1, base + s2, base - s2])
}

impl HeteroSystem {
    pub fn from_scenario(sc: &MarketScenario, terminal_factor: f64) -> Result<Self> {
        if sc.n_agents() != 2 {
            return Err(Error::validation("the heterogeneous solver needs exactly 2 agents"));
        }
        if sc.intensity != IntensitySpec::Linear {
            return Err(Error::validation("the heterogeneous solver needs the linear intensity model"));
        }
        let zeta = sc.zeta_value()?;
        let sys = HeteroSystem {
            grid: sc.grid.clone(),
            ask_flow: sc.ask_flow.clone(),
            bid_flow: sc.bid_flow.clone(),
            phi: [sc.agents[0].phi.clone(), sc.agents[1].phi.clone()],
            terminal: [sc.agents[0].terminal, sc.agents[1].terminal],
            terminal_factor,
            zeta,
            gamma: sc.gamma,
            q0: [sc.agents[0].q0, sc.agents[1].q0],
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terminal_factor != 1.0 && self.terminal_factor != 2.0 {
            return Err(Error::validation("terminal factor must be 1 or 2"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::validation("gamma must be positive"));
        }
        if self.terminal.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::validation("terminal penalty A must be non-negative"));
        }
        self.ask_flow.validate(&self.grid, "ask flow")?;
        self.bid_flow.validate(&self.grid, "bid flow")?;
        for p in &self.phi {
            p.validate(&self.grid, "running penalty phi")?;
            if p.min_value() < 0.0 {
                return Err(Error::validation("running penalty phi must be non-negative"));
            }
        }
        Ok(())
    }

    /// Same system on a new horizon.
    pub fn with_horizon(&self, horizon: f64, steps: usize) -> Result<Self> {
        let sys = HeteroSystem { grid: TimeGrid::new(horizon, steps)?, ..self.clone() };
        sys.validate()?;
        Ok(sys)
    }

    /// γ(a+b)/3 at a stage point: the scale of H.
    fn kappa(&self) -> Staged {
        let g = self.gamma / 3.0;
        self.ask_flow.staged(&self.grid).map2(&self.bid_flow.staged(&self.grid), |a, b| g * (a + b))
    }

    pub fn a_mat(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.terminal.iter().map(|a| self.terminal_factor * a).collect()))
    }
}

/// Everything `solve_hetero` produces. Vectors are indexed [node][agent].
pub struct HeteroSolution {
    pub r: RiccatiSolution,
    pub p: Vec<[f64; 2]>,
    pub q: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
    pub path: EquilibriumPath,
}

impl HeteroSolution {
    /// Y¹ − Y² at every node.
    pub fn delta_y(&self) -> Vec<f64> {
        self.y.iter().map(|y| y[0] - y[1]).collect()
    }
}

struct Coefficients {
    kappa: Staged,
    g: Staged,
    phi: [Staged; 2],
}

impl Coefficients {
    fn h(&self, at: At) -> DMatrix<f64> {
        let k = self.kappa.at(at);
        DMatrix::from_row_slice(2, 2, &[k, -k, -k, k])
    }

    fn d(&self, at: At) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0 * self.phi[0].at(at), 0.0, 0.0, 2.0 * self.phi[1].at(at)])
    }
}

fn to2(v: &DVector<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

pub fn solve_hetero(sys: &HeteroSystem) -> Result<HeteroSolution> {
    sys.validate()?;
    let grid = &sys.grid;
    let m = grid.steps();
    let zeta = sys.zeta;
    let c = std::sync::Arc::new(Coefficients {
        kappa: sys.kappa(),
        g: sys.ask_flow.staged(grid).map2(&sys.bid_flow.staged(grid), |a, b| zeta * (b - a)),
        phi: [sys.phi[0].staged(grid), sys.phi[1].staged(grid)],
    });
    let a_mat = sys.a_mat();

    let (cd, ch) = (c.clone(), c.clone());
    let r = riccati::integrate_riccati_general(
        &MatrixPath::from_fn(2, move |at| cd.d(at)),
        &MatrixPath::from_fn(2, move |at| ch.h(at)),
        -a_mat.clone(),
        grid,
    )?;
    if let Some(b) = &r.blow_up {
        return Err(Error::NonConvergence {
            what: format!("heterogeneous Riccati blew up at t = {}: {}", b.time, b.reason),
            residual: f64::INFINITY,
        });
    }

    // [R | P] together so that the forward pass can interpolate both
    let mut end = DMatrix::<f64>::zeros(2, 3);
    end.view_mut((0, 0), (2, 2)).copy_from(&(-&a_mat));
    let rhs_rp = |at: At, s: &DMatrix<f64>| {
        let rr = s.columns(0, 2).into_owned();
        let pp = s.column(2).into_owned();
        let h = c.h(at);
        let g = DVector::from_element(2, c.g.at(at));
        let mut out = DMatrix::<f64>::zeros(2, 3);
        out.columns_mut(0, 2).copy_from(&(c.d(at) - &rr * &h * &rr));
        out.column_mut(2).copy_from(&(-(&rr * &h * &pp + &rr * g)));
        out
    };
    let rp: Dense<DMatrix<f64>> = ode::rk4_backward_dense(grid, end, rhs_rp);

    let q0 = DVector::from_row_slice(&sys.q0);
    let qs: Vec<DVector<f64>> = ode::rk4_forward(grid, q0, |at, q: &DVector<f64>| {
        let s = rp.at(at);
        let y = s.columns(0, 2) * q + s.column(2);
        DVector::from_element(2, c.g.at(at)) + c.h(at) * y
    });

    let mut p = Vec::with_capacity(m + 1);
    let mut q = Vec::with_capacity(m + 1);
    let mut y = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let s = &rp.y[j];
        let yj = s.columns(0, 2) * &qs[j] + s.column(2);
        p.push(to2(&s.column(2).into_owned()));
        q.push(to2(&qs[j]));
        y.push(to2(&yj));
    }

    let mut residuals = BTreeMap::new();
    let qt = DVector::from_row_slice(&q[m]);
    let yt = DVector::from_row_slice(&y[m]);
    residuals.insert("terminal_gap".into(), (yt + &a_mat * qt).amax());
    let (fwd, bwd) = fbsde_residuals(grid, &c, &q, &y);
    residuals.insert("forward_ode".into(), fwd);
    residuals.insert("backward_ode".into(), bwd);
    let sym = r.x[r.first_valid..].iter().map(|x| (x - x.transpose()).amax()).fold(0.0, f64::max);
    residuals.insert("riccati_symmetry".into(), sym);
    residuals.insert("riccati_step_doubling".into(), r.doubling_error);

    let mut path = EquilibriumPath {
        grid: grid.clone(),
        q: vec![Vec::with_capacity(m + 1); 2],
        y: vec![Vec::with_capacity(m + 1); 2],
        delta_a: vec![Vec::with_capacity(m + 1); 2],
        delta_b: vec![Vec::with_capacity(m + 1); 2],
        residuals,
    };
    for j in 0..=m {
        let d = quote_transform(y[j], sys.zeta, sys.gamma)?;
        for i in 0..2 {
            path.q[i].push(q[j][i]);
            path.y[i].push(y[j][i]);
            path.delta_a[i].push(d[2 * i]);
            path.delta_b[i].push(d[2 * i + 1]);
        }
    }
    path.residuals.insert("ordering_violation".into(), path.ordering_violation());
    Ok(HeteroSolution { r, p, q, y, path })
}

/// Interval-wise Simpson check of Q′ = G + HY and Y′ = DQ, with Hermite
/// midpoints built from the node values and the ODE's own slopes.
fn fbsde_residuals(grid: &TimeGrid, c: &Coefficients, q: &[[f64; 2]], y: &[[f64; 2]]) -> (f64, f64) {
    let m = grid.steps();
    let h = grid.step();
    let qv: Vec<Vec<f64>> = q.iter().map(|x| x.to_vec()).collect();
    let yv: Vec<Vec<f64>> = y.iter().map(|x| x.to_vec()).collect();
    let dq = |at: At, yy: &[f64]| {
        let k = c.kappa.at(at);
        let g = c.g.at(at);
        vec![g + k * (yy[0] - yy[1]), g - k * (yy[0] - yy[1])]
    };
    let dy = |at: At, qq: &[f64]| vec![2.0 * c.phi[0].at(at) * qq[0], 2.0 * c.phi[1].at(at) * qq[1]];
    // Hermite midpoints need each path's own slope, which involves the other path
    let slope_q = |at: At, j: usize| dq(at, &yv[j]);
    let slope_y = |at: At, j: usize| dy(at, &qv[j]);
    let mut fwd: f64 = 0.0;
    let mut bwd: f64 = 0.0;
    for k in 0..m {
        let (lo, hi) = (At::lo(grid, k), At::hi(grid, k));
        let mid = At::mid(grid, k);
        let herm = |v: &[Vec<f64>], s0: Vec<f64>, s1: Vec<f64>| -> Vec<f64> {
            (0..2).map(|i| 0.5 * (v[k][i] + v[k + 1][i]) + h * (s0[i] - s1[i]) / 8.0).collect()
        };
        let q_mid = herm(&qv, slope_q(lo, k), slope_q(hi, k + 1));
        let y_mid = herm(&yv, slope_y(lo, k), slope_y(hi, k + 1));
        let (f0, f1, f2) = (dq(lo, &yv[k]), dq(mid, &y_mid), dq(hi, &yv[k + 1]));
        let (g0, g1, g2) = (dy(lo, &qv[k]), dy(mid, &q_mid), dy(hi, &qv[k + 1]));
        for i in 0..2 {
            let iq = h / 6.0 * (f0[i] + 4.0 * f1[i] + f2[i]);
            let iy = h / 6.0 * (g0[i] + 4.0 * g1[i] + g2[i]);
            fwd = fwd.max((q[k + 1][i] - q[k][i] - iq).abs());
            bwd = bwd.max((y[k + 1][i] - y[k][i] - iy).abs());
        }
    }
    (fwd, bwd)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub horizon: f64,
    pub delta_y0: f64,
    pub min_delta_y: f64,
    /// first time ΔY reaches zero from a positive start
    pub crossing_time: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BreakdownReport {
    pub scan: Vec<ScanPoint>,
    /// smallest scanned horizon with ΔY₀ > 0
    pub t_star: Option<f64>,
    pub delta_y0: Option<f64>,
    pub min_delta_y: Option<f64>,
    pub crossing_time: Option<f64>,
    /// −√(φ/κ)(q0¹ − q0²), κ = γ(a+b)/3
    pub asymptote: f64,
    /// |ΔY₀ − asymptote| / |asymptote| at the longest scanned horizon
    pub asymptote_rel_error: f64,
    /// 0 < q0¹ < q0² < (A¹/A²)·q0¹
    pub example_conditions: bool,
    /// q0¹ = q0²: the asymptote vanishes and there is nothing to order
    pub degenerate: bool,
    pub note: String,
}

/// Solve the system at every horizon in `horizons` (each with
/// `steps_per_unit·T` steps) and locate the first horizon whose initial
/// adjoint gap is positive, i.e. where the inventory ordering of quotes
/// cannot hold throughout.
///
/// Needs constant a = b and a common constant φ for the asymptote.
pub fn ordering_breakdown_experiment(template: &HeteroSystem, horizons: &[f64], steps_per_unit: usize) -> Result<BreakdownReport> {
    if horizons.is_empty() {
        return Err(Error::validation("empty horizon scan"));
    }
    let (a, b, phi) = match (&template.ask_flow, &template.bid_flow, &template.phi) {
        (CoefficientPath::Constant(a), CoefficientPath::Constant(b), [CoefficientPath::Constant(p1), CoefficientPath::Constant(p2)])
            if p1 == p2 =>
        {
            (*a, *b, *p1)
        }
        _ => return Err(Error::validation("the breakdown experiment needs constant flows and a common constant phi")),
    };
    let mut horizons = horizons.to_vec();
    horizons.sort_by(f64::total_cmp);

    let scan: Vec<ScanPoint> = horizons
        .par_iter()
        .map(|&t| {
            let steps = ((t * steps_per_unit as f64).ceil() as usize).max(1);
            let sol = solve_hetero(&template.with_horizon(t, steps)?)?;
            let dy = sol.delta_y();
            let min = dy.iter().copied().fold(f64::INFINITY, f64::min);
            let crossing_time = if dy[0] > 0.0 {
                dy.windows(2).enumerate().find(|(_, w)| w[1] <= 0.0).map(|(k, w)| {
                    let g = &sol.path.grid;
                    g.node(k) + g.step() * w[0] / (w[0] - w[1])
                })
            } else {
                None
            };
            Ok(ScanPoint { horizon: t, delta_y0: dy[0], min_delta_y: min, crossing_time })
        })
        .collect::<Result<_>>()?;

    let [q1, q2] = template.q0;
    let [a1, a2] = template.terminal;
    let kappa = template.gamma * (a + b) / 3.0;
    let asymptote = riccati::projected_asymptotics(phi, kappa)?.w_coeff * (q1 - q2);
    let last = scan.last().unwrap();
    let asymptote_rel_error = (last.delta_y0 - asymptote).abs() / asymptote.abs();
    let hit = scan.iter().find(|p| p.delta_y0 > 0.0);
    Ok(BreakdownReport {
        t_star: hit.map(|p| p.horizon),
        delta_y0: hit.map(|p| p.delta_y0),
        min_delta_y: hit.map(|p| p.min_delta_y),
        crossing_time: hit.and_then(|p| p.crossing_time),
        asymptote,
        asymptote_rel_error,
        example_conditions: 0.0 < q1 && q1 < q2 && a2 > 0.0 && q2 < a1 / a2 * q1,
        degenerate: q1 == q2,
        note: "the full-matrix algebraic Riccati equation is degenerate (H is singular); \
               the asymptote is the projected one on the difference direction"
            .into(),
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_game::build_linear_equilibrium;
    use crate::scenario::{AgentParams, XiSpec};

    fn system(q0: [f64; 2], terminal: [f64; 2], phi: f64, a: f64, b: f64, t: f64, steps: usize, factor: f64) -> HeteroSystem {
        HeteroSystem {
            grid: TimeGrid::new(t, steps).unwrap(),
            ask_flow: CoefficientPath::constant(a),
            bid_flow: CoefficientPath::constant(b),
            phi: [CoefficientPath::constant(phi), CoefficientPath::constant(phi)],
            terminal,
            terminal_factor: factor,
            zeta: 1.0,
            gamma: 1.0,
            q0,
        }
    }

    #[test]
    fn quote_map_examples() {
        let d = quote_transform([1.0, 0.0], 1.0, 1.0).unwrap();
        let want = [5.0 / 3.0, 1.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0];
        for i in 0..4 {
            assert!((d[i] - want[i]).abs() < 1e-15);
        }
        assert_eq!(quote_transform([0.0, 0.0], 2.0, 4.0).unwrap(), [0.5; 4]);
        assert!(quote_transform([0.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn quote_map_solves_the_pair_conditions() {
        let (zeta, gamma) = (0.7, 1.3);
        for &(y1, y2) in &[(0.3, -1.2), (2.0, 0.5), (-0.4, -0.4)] {
            let [a1, b1, a2, b2] = quote_transform([y1, y2], zeta, gamma).unwrap();
            let half = zeta / (2.0 * gamma);
            assert!((a1 - (half + a2 / 2.0 + y1 / 2.0)).abs() < 1e-14);
            assert!((a2 - (half + a1 / 2.0 + y2 / 2.0)).abs() < 1e-14);
            assert!((b1 - (half + b2 / 2.0 - y1 / 2.0)).abs() < 1e-14);
            assert!((b2 - (half + b1 / 2.0 - y2 / 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_data_stay_symmetric() {
        let sol = solve_hetero(&system([0.8, 0.8], [1.0, 1.0], 0.5, 1.0, 1.0, 1.0, 400, 1.0)).unwrap();
        for j in 0..sol.y.len() {
            assert!((sol.y[j][0] - sol.y[j][1]).abs() < 1e-12);
            assert!((sol.q[j][0] - sol.q[j][1]).abs() < 1e-12);
            let x = &sol.r.x[j];
            assert!((x[(0, 0)] - x[(1, 1)]).abs() < 1e-10);
            assert!((x[(0, 1)] - x[(1, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn balanced_flows_have_no_offset() {
        let sol = solve_hetero(&system([-1.0, 2.0], [2.0, 0.5], 1.0, 1.5, 1.5, 2.0, 400, 1.0)).unwrap();
        assert!(sol.p.iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
        // inventory only moves between the two agents
        for q in &sol.q {
            assert!((q[0] + q[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_are_small() {
        for factor in [1.0, 2.0] {
            let mut sys = system([-0.5, 1.0], [2.0, 1.0], 0.7, 1.0, 1.6, 1.5, 600, factor);
            sys.phi[1] = CoefficientPath::constant(0.2);
            let sol = solve_hetero(&sys).unwrap();
            let r = &sol.path.residuals;
            assert!(r["terminal_gap"] < 1e-8, "{r:?}");
            assert!(r["forward_ode"] < 1e-8, "{r:?}");
            assert!(r["backward_ode"] < 1e-8, "{r:?}");
            assert!(r["riccati_symmetry"] < 1e-10, "{r:?}");
            assert!(sol.p.iter().any(|p| p[0] != 0.0));
        }
    }

    #[test]
    fn factor_two_matches_the_linear_game() {
        let sys = system([-0.5, 1.0], [0.7, 0.7], 0.4, 1.0, 1.6, 1.0, 500, 2.0);
        let sol = solve_hetero(&sys).unwrap();
        let agents = sys
            .q0
            .iter()
            .map(|&q0| AgentParams { q0, phi: CoefficientPath::constant(0.4), terminal: 0.7 })
            .collect();
        let sc = MarketScenario::new(
            sys.grid.clone(),
            sys.ask_flow.clone(),
            sys.bid_flow.clone(),
            agents,
            IntensitySpec::Linear,
            Some(sys.zeta),
            sys.gamma,
            XiSpec::Auto,
        )
        .unwrap();
        let lin = build_linear_equilibrium(&sc).unwrap();
        assert!(sol.path.max_quote_diff(&lin) < 1e-9, "{}", sol.path.max_quote_diff(&lin));
    }

    #[test]
    fn scenario_conversion_checks_shape() {
        let sys = system([0.0, 1.0], [1.0, 1.0], 0.1, 1.0, 1.0, 1.0, 10, 1.0);
        let agents: Vec<AgentParams> = (0..3)
            .map(|i| AgentParams { q0: i as f64, phi: CoefficientPath::constant(0.1), terminal: 1.0 })
            .collect();
        let three = MarketScenario::new(
            sys.grid.clone(),
            sys.ask_flow.clone(),
            sys.bid_flow.clone(),
            agents.clone(),
            IntensitySpec::Linear,
            Some(1.0),
            1.0,
            XiSpec::Auto,
        )
        .unwrap();
        assert!(HeteroSystem::from_scenario(&three, 1.0).is_err());
        let two = MarketScenario::new(
            sys.grid.clone(),
            sys.ask_flow.clone(),
            sys.bid_flow.clone(),
            agents[..2].to_vec(),
            IntensitySpec::Linear,
            Some(1.0),
            1.0,
            XiSpec::Auto,
        )
        .unwrap();
        assert!(HeteroSystem::from_scenario(&two, 3.0).is_err());
        assert!(HeteroSystem::from_scenario(&two, 2.0).is_ok());
    }

    #[test]
    fn breakdown_example() {
        let sys = system([1.0, 1.5], [2.0, 1.0], 1.0, 1.5, 1.5, 1.0, 10, 1.0);
        let horizons: Vec<f64> = (1..=20).map(f64::from).collect();
        let rep = ordering_breakdown_experiment(&sys, &horizons, 200).unwrap();
        assert!(rep.example_conditions);
        let t_star = rep.t_star.expect("some horizon breaks the ordering");
        assert!(t_star <= 20.0);
        assert!(rep.delta_y0.unwrap() > 0.0);
        assert!(rep.min_delta_y.unwrap() < 0.0);
        assert!(rep.crossing_time.unwrap() < t_star);
        assert!((rep.asymptote - 0.5).abs() < 1e-15);
        assert!(rep.asymptote_rel_error < 0.05, "{rep:?}");
    }

    #[test]
    fn breakdown_degenerate_when_inventories_coincide() {
        let sys = system([1.0, 1.0], [1.0, 1.0], 1.0, 1.5, 1.5, 1.0, 10, 1.0);
        let rep = ordering_breakdown_experiment(&sys, &[1.0, 2.0], 100).unwrap();
        assert!(rep.degenerate);
        assert!(rep.t_star.is_none());
        assert!(rep.scan.iter().all(|p| p.delta_y0.abs() < 1e-12));
    }
}
