//! Closed-form N-player equilibrium for the linear fill rate ζ − γ(δ − δ̄).
//!
//! Internally agents are ranked by descending inventory (rank 0 holds the
//! most and quotes the best ask); results are returned in the scenario's
//! ascending order. The construction:
//!
//! * neighbouring pairs (0,1), (j,j+1), (N−2,N−1) have quote differences
//!   D = P·X with X the inventory gap and P a scalar Riccati solution;
//! * rank 0's inventory is then driven by known differences, which fixes
//!   its adjoint and hence the best ask and best bid;
//! * interior ranks face known best quotes and decouple affinely, Y = PQ + p;
//! * the last rank follows from the bottom pair.
//!
//! `Y` is the twice-adjoint −2(A·Q_T + ∫ₜᵀ φQ), so δᵃ = ζ/2γ + δ̄ᵃ/2 + Y/2.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{self, At, Dense};
use crate::scenario::{MarketScenario, Staged, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairVariant {
    /// best-ask holder and runner-up
    Top,
    /// two interior ranks
    Mid,
    /// runner-up and best-bid holder
    Bottom,
    /// N = 2: both sides are contested by the same two agents
    Duo,
}

impl PairVariant {
    /// (κ/γ as a function of (a, b), c_φ, c_A) for P′ = c_φ φ − κP², P(T) = −c_A A.
    fn coefficients(self, a: f64, b: f64) -> (f64, f64, f64) {
        match self {
            PairVariant::Top => (2.0 * a + 1.5 * b, 2.0 / 3.0, 2.0 / 3.0),
            PairVariant::Mid => (a + b, 1.0, 1.0),
            PairVariant::Bottom => (a + 4.0 * b / 3.0, 1.0, 1.0),
            PairVariant::Duo => (2.0 * (a + b), 2.0 / 3.0, 2.0 / 3.0),
        }
    }

    /// Bid difference (upper rank minus lower rank) per unit of ask difference D.
    fn bid_factor(self) -> f64 {
        match self {
            PairVariant::Top => -1.5,
            PairVariant::Mid | PairVariant::Duo => -1.0,
            PairVariant::Bottom => -2.0 / 3.0,
        }
    }
}

/// Decoupling coefficient of one neighbouring pair: ask difference = P·(inventory gap).
#[derive(Clone, Debug)]
pub struct PairRiccatiPath {
    pub variant: PairVariant,
    /// κ at the grid nodes
    pub kappa: Vec<f64>,
    /// P(T)
    pub terminal: f64,
    pub p: Vec<f64>,
    kappa_staged: Staged,
    dense: Dense<f64>,
}

impl PairRiccatiPath {
    fn p_at(&self, at: At) -> f64 {
        self.dense.at(at)
    }

    fn growth_at(&self, at: At) -> f64 {
        self.kappa_staged.at(at) * self.dense.at(at)
    }
}

/// Pair Riccati P′ = c_φ φ − κP², P(T) = −c_A A on arbitrary coefficient samples.
pub fn pair_riccati_with(variant: PairVariant, a: &Staged, b: &Staged, phi: &Staged, gamma: f64, terminal_penalty: f64, grid: &TimeGrid) -> PairRiccatiPath {
    let (_, c_phi, c_a) = variant.coefficients(1.0, 1.0);
    let kappa_staged = a.map2(b, |x, y| gamma * variant.coefficients(x, y).0);
    let terminal = -c_a * terminal_penalty;
    let dense = ode::rk4_backward_dense(grid, terminal, |at, p: &f64| c_phi * phi.at(at) - kappa_staged.at(at) * p * p);
    let kappa = (0..=grid.steps()).map(|j| kappa_staged.node(j)).collect();
    PairRiccatiPath { variant, kappa, terminal, p: dense.y.clone(), kappa_staged, dense }
}

/// Pair Riccati for the scenario's flows and (shared) penalties.
pub fn solve_pair_riccati(variant: PairVariant, sc: &MarketScenario) -> Result<PairRiccatiPath> {
    let (phi, a_term) = sc.homogeneous_penalties()?;
    let g = &sc.grid;
    Ok(pair_riccati_with(variant, &sc.ask_flow.staged(g), &sc.bid_flow.staged(g), &phi.staged(g), sc.gamma, a_term, g))
}

/// Per-agent paths in ascending-inventory order, `q[i][j]` = agent i at node j.
#[derive(Clone, Debug)]
pub struct EquilibriumPath {
    pub grid: TimeGrid,
    pub q: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub delta_a: Vec<Vec<f64>>,
    pub delta_b: Vec<Vec<f64>>,
    pub residuals: BTreeMap<String, f64>,
}

impl EquilibriumPath {
    pub fn n_agents(&self) -> usize {
        self.q.len()
    }

    pub fn best_ask(&self, j: usize) -> f64 {
        self.delta_a.iter().map(|d| d[j]).fold(f64::INFINITY, f64::min)
    }

    pub fn best_bid(&self, j: usize) -> f64 {
        self.delta_b.iter().map(|d| d[j]).fold(f64::INFINITY, f64::min)
    }

    /// Largest breach of "higher inventory ⇒ lower ask, higher bid" over all nodes.
    pub fn ordering_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.n_agents() {
            for j in 0..=self.grid.steps() {
                worst = worst.max(self.delta_a[i][j] - self.delta_a[i - 1][j]);
                worst = worst.max(self.delta_b[i - 1][j] - self.delta_b[i][j]);
            }
        }
        worst
    }

    /// max |a − b| over every quote of two paths on the same grid.
    pub fn max_quote_diff(&self, other: &EquilibriumPath) -> f64 {
        let mut d: f64 = 0.0;
        for (x, y) in self.delta_a.iter().chain(&self.delta_b).zip(other.delta_a.iter().chain(&other.delta_b)) {
            for (u, v) in x.iter().zip(y) {
                d = d.max((u - v).abs());
            }
        }
        d
    }
}

/// Builds the linear-game equilibrium. Requires ζ and shared (φ, A).
pub fn build_linear_equilibrium(sc: &MarketScenario) -> Result<EquilibriumPath> {
    let zeta = sc.zeta_value()?;
    let gamma = sc.gamma;
    let (phi_path, a_term) = sc.homogeneous_penalties()?;
    let n = sc.n_agents();
    let grid = &sc.grid;
    let m = grid.steps();
    let a = sc.ask_flow.staged(grid);
    let b = sc.bid_flow.staged(grid);
    let phi = phi_path.staged(grid);
    // descending inventories
    let pq: Vec<f64> = sc.q0().into_iter().rev().collect();
    let zg = zeta / gamma;

    let pair = |v| pair_riccati_with(v, &a, &b, &phi, gamma, a_term, grid);
    // forward state: gaps of the contested pairs, then rank-0 inventory
    let (pairs, x0): (Vec<PairRiccatiPath>, Vec<f64>) = if n == 2 {
        (vec![pair(PairVariant::Duo)], vec![pq[0] - pq[1]])
    } else {
        // the mid pairs share one P, so a unit gap carries them all
        (
            vec![pair(PairVariant::Top), pair(PairVariant::Mid), pair(PairVariant::Bottom)],
            vec![pq[0] - pq[1], 1.0, pq[n - 2] - pq[n - 1]],
        )
    };
    let mid_span = if n >= 4 { pq[1] - pq[n - 2] } else { 0.0 };
    let np = pairs.len();

    // ask differences of the outer pairs and the total bid spread δ^{0,b} − δ^{N−1,b}
    let diffs = |at: At, s: &[f64]| -> (f64, f64) {
        let d_top = pairs[0].p_at(at) * s[0];
        if np == 1 {
            return (d_top, PairVariant::Duo.bid_factor() * d_top);
        }
        let d_mid = pairs[1].p_at(at) * s[1] * mid_span;
        let d_bot = pairs[2].p_at(at) * s[2];
        let s_b = PairVariant::Top.bid_factor() * d_top + PairVariant::Mid.bid_factor() * d_mid + PairVariant::Bottom.bid_factor() * d_bot;
        (d_top, s_b)
    };
    let mut s0 = x0.clone();
    s0.push(pq[0]);
    let fwd = |at: At, s: &Vec<f64>| -> Vec<f64> {
        let mut d: Vec<f64> = (0..np).map(|p| pairs[p].growth_at(at) * s[p]).collect();
        let (d_top, s_b) = diffs(at, s);
        d.push(-a.at(at) * (zeta - gamma * d_top) + b.at(at) * (zeta - gamma * s_b));
        d
    };
    let state: Dense<Vec<f64>> = ode::rk4_forward_dense(grid, s0, fwd);
    let q_top = |at: At| state.at(at)[np];
    let y_top: Dense<f64> = ode::rk4_backward_dense(grid, -2.0 * a_term * state.y[m][np], |at, _| 2.0 * phi.at(at) * q_top(at));

    // best quotes
    let beta_a = |at: At| {
        let s = state.at(at);
        zg - diffs(at, &s).0 + y_top.at(at)
    };
    let beta_b = |at: At| {
        let s = state.at(at);
        zg - 2.0 * diffs(at, &s).1 - y_top.at(at)
    };

    let mut q = vec![vec![0.0; m + 1]; n];
    let mut y = vec![vec![0.0; m + 1]; n];
    let mut da = vec![vec![0.0; m + 1]; n];
    let mut db = vec![vec![0.0; m + 1]; n];
    for j in 0..=m {
        let at = At::node(grid, j);
        let s = &state.y[j];
        let (_, s_b) = diffs(at, s);
        q[0][j] = s[np];
        y[0][j] = y_top.y[j];
        da[0][j] = beta_a(at);
        db[0][j] = beta_b(at) + s_b;
    }

    if n == 2 {
        for j in 0..=m {
            let at = At::node(grid, j);
            let d = pairs[0].p_at(at) * state.y[j][0];
            q[1][j] = q[0][j] - state.y[j][0];
            da[1][j] = da[0][j] - d;
            db[1][j] = beta_b(at);
            y[1][j] = 2.0 * da[1][j] - zg - da[0][j];
        }
    } else {
        // interior ranks: Q′ = g + κ(PQ + p) with Y = PQ + p
        let kap = a.map2(&b, |x, y| 0.5 * gamma * (x + y));
        let pm: Dense<f64> = ode::rk4_backward_dense(grid, -2.0 * a_term, |at, p: &f64| 2.0 * phi.at(at) - kap.at(at) * p * p);
        let g = |at: At| {
            -a.at(at) * (0.5 * zeta + 0.5 * gamma * beta_a(at)) + b.at(at) * (0.5 * zeta + 0.5 * gamma * beta_b(at))
        };
        let off: Dense<f64> =
            ode::rk4_backward_dense(grid, 0.0, |at, p: &f64| -kap.at(at) * pm.at(at) * p - pm.at(at) * g(at));
        for r in 1..n - 1 {
            let qr = ode::rk4_forward(grid, pq[r], |at, x: &f64| g(at) + kap.at(at) * (pm.at(at) * x + off.at(at)));
            for j in 0..=m {
                let at = At::node(grid, j);
                q[r][j] = qr[j];
                y[r][j] = pm.y[j] * qr[j] + off.y[j];
                da[r][j] = 0.5 * zg + 0.5 * beta_a(at) + 0.5 * y[r][j];
                db[r][j] = 0.5 * zg + 0.5 * beta_b(at) - 0.5 * y[r][j];
            }
        }
        let last = n - 1;
        let mut chain_gap: f64 = 0.0;
        for j in 0..=m {
            let at = At::node(grid, j);
            let s = &state.y[j];
            let d_bot = pairs[2].p_at(at) * s[2];
            q[last][j] = q[last - 1][j] - s[2];
            da[last][j] = da[last - 1][j] - d_bot;
            db[last][j] = beta_b(at);
            y[last][j] = 2.0 * da[last][j] - zg - beta_a(at);
            // rank 1 computed two ways
            chain_gap = chain_gap.max((q[1][j] - (q[0][j] - s[0])).abs());
            chain_gap = chain_gap.max((da[1][j] - (da[0][j] - pairs[0].p_at(at) * s[0])).abs());
        }
        return finish(sc, q, y, da, db, Some(chain_gap));
    }
    finish(sc, q, y, da, db, None)
}

fn finish(
    sc: &MarketScenario,
    mut q: Vec<Vec<f64>>,
    mut y: Vec<Vec<f64>>,
    mut da: Vec<Vec<f64>>,
    mut db: Vec<Vec<f64>>,
    chain_gap: Option<f64>,
) -> Result<EquilibriumPath> {
    // back to ascending order
    q.reverse();
    y.reverse();
    da.reverse();
    db.reverse();
    let mut path = EquilibriumPath { grid: sc.grid.clone(), q, y, delta_a: da, delta_b: db, residuals: BTreeMap::new() };
    let foc = check_linear_foc(&path, sc)?;
    path.residuals.insert("foc".into(), foc.max_foc);
    path.residuals.insert("dynamics".into(), foc.max_dynamics);
    path.residuals.insert("ordering_violation".into(), path.ordering_violation());
    if let Some(c) = chain_gap {
        path.residuals.insert("chain_consistency".into(), c);
    }
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearFocReport {
    /// per agent (ascending order): max over t of the ask/bid FOC gaps
    pub foc: Vec<f64>,
    /// per agent: max |Q − (q0 + ∫ drift)| with the drift rebuilt from the quotes
    pub dynamics: Vec<f64>,
    pub max_foc: f64,
    pub max_dynamics: f64,
}

/// Checks every agent's first-order condition against the full quote profile:
/// δ̄ is recomputed as the minimum over the others, and the conditional
/// expectations become tail quadratures of the inventory path.
pub fn check_linear_foc(path: &EquilibriumPath, sc: &MarketScenario) -> Result<LinearFocReport> {
    let zeta = sc.zeta_value()?;
    let gamma = sc.gamma;
    let grid = &path.grid;
    let (m, h, n) = (grid.steps(), grid.step(), path.n_agents());
    if path.q.iter().any(|v| v.len() != m + 1) || n != sc.n_agents() {
        return Err(Error::validation("path does not match the scenario grid"));
    }
    let a = sc.ask_flow.staged(grid);
    let b = sc.bid_flow.staged(grid);
    let others_min = |v: &Vec<Vec<f64>>, i: usize, j: usize| {
        (0..n).filter(|&l| l != i).map(|l| v[l][j]).fold(f64::INFINITY, f64::min)
    };
    let mut foc = vec![0.0; n];
    let mut dynamics = vec![0.0; n];
    for i in 0..n {
        let ag = &sc.agents[i];
        let phi = ag.phi.staged(grid);
        let qm = ode::cubic_midpoints(&path.q[i]);
        let lo: Vec<f64> = (0..m).map(|k| phi.lo[k] * path.q[i][k]).collect();
        let mi: Vec<f64> = (0..m).map(|k| phi.mid[k] * qm[k]).collect();
        let hi: Vec<f64> = (0..m).map(|k| phi.hi[k] * path.q[i][k + 1]).collect();
        let tail = ode::tail_simpson(h, &lo, &mi, &hi);
        let mut worst: f64 = 0.0;
        for j in 0..=m {
            let y = -2.0 * (ag.terminal * path.q[i][m] + tail[j]);
            let bar_a = others_min(&path.delta_a, i, j);
            let bar_b = others_min(&path.delta_b, i, j);
            let ra = path.delta_a[i][j] - (0.5 * zeta / gamma + 0.5 * bar_a + 0.5 * y);
            let rb = path.delta_b[i][j] - (0.5 * zeta / gamma + 0.5 * bar_b - 0.5 * y);
            worst = worst.max(ra.abs()).max(rb.abs());
        }
        foc[i] = worst;
        // inventory drift −a(ζ + γ(δ̄ᵃ − δᵃ)) + b(ζ + γ(δ̄ᵇ − δᵇ)) at nodes and cubic midpoints
        let gap_a: Vec<f64> = (0..=m).map(|j| others_min(&path.delta_a, i, j) - path.delta_a[i][j]).collect();
        let gap_b: Vec<f64> = (0..=m).map(|j| others_min(&path.delta_b, i, j) - path.delta_b[i][j]).collect();
        let (ga_m, gb_m) = (ode::cubic_midpoints(&gap_a), ode::cubic_midpoints(&gap_b));
        let rate = |ak: f64, bk: f64, ga: f64, gb: f64| -ak * (zeta + gamma * ga) + bk * (zeta + gamma * gb);
        let lo: Vec<f64> = (0..m).map(|k| rate(a.lo[k], b.lo[k], gap_a[k], gap_b[k])).collect();
        let mi: Vec<f64> = (0..m).map(|k| rate(a.mid[k], b.mid[k], ga_m[k], gb_m[k])).collect();
        let hi: Vec<f64> = (0..m).map(|k| rate(a.hi[k], b.hi[k], gap_a[k + 1], gap_b[k + 1])).collect();
        let run = ode::running_simpson(h, &lo, &mi, &hi);
        dynamics[i] = (0..=m).map(|j| (path.q[i][j] - ag.q0 - run[j]).abs()).fold(0.0, f64::max);
    }
    let max_foc = foc.iter().cloned().fold(0.0, f64::max);
    let max_dynamics = dynamics.iter().cloned().fold(0.0, f64::max);
    Ok(LinearFocReport { foc, dynamics, max_foc, max_dynamics })
}
