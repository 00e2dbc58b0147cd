//! General-intensity N-player game as a two-point boundary-value problem:
//!
//! ```text
//! Q′ = ρ(t, Y),  Y′ = 2φ Q,  Q(0) = q0,  Y(T) = −2A·Q(T)
//! ```
//!
//! solved by shooting on Y(0), plus the checks that make a solution
//! trustworthy (maximum principle, ordering, ξ-independence), the
//! characteristic Riccati equation along the path, the identical-agent
//! price decomposition, the benchmark inventory, and the quasi-infinite game.

use std::cell::RefCell;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intensity::IntensityFunction;
use crate::isaacs::{self, Side};
use crate::linear_game::{self, EquilibriumPath};
use crate::ode::{self, At, Stage};
use crate::riccati::{self, MatrixPath, RiccatiSolution};
use crate::scenario::{AgentParams, CoefficientPath, MarketScenario, Staged, TimeGrid, XiSpec};

/// Truncation contact closer than this is reported.
pub const XI_WARN_MARGIN: f64 = 1e-6;

/// Iteration cap for attempts that may fall back to more segments.
pub const STALL_ITER_CAP: usize = 15;

/// Segment counts tried in turn when no count is forced.
pub const SEGMENT_LADDER: [usize; 4] = [1, 4, 16, 64];

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// terminal-gap tolerance (sup norm)
    pub tol: f64,
    pub max_iter: usize,
    /// `None`: single shooting, then 4 segments if Newton stalls
    pub segments: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 60, segments: None }
    }
}

/// Deterministic coefficients of one game, sampled for RK4.
#[derive(Clone, Debug)]
pub struct GameModel {
    pub grid: TimeGrid,
    pub f: IntensityFunction,
    pub xi: f64,
    pub a: Staged,
    pub b: Staged,
    pub phi: Staged,
    pub terminal: f64,
    pub q0: Vec<f64>,
}

impl GameModel {
    pub fn new(sc: &MarketScenario) -> Result<Self> {
        let (phi, terminal) = sc.homogeneous_penalties()?;
        let g = &sc.grid;
        Ok(GameModel {
            grid: g.clone(),
            f: sc.intensity_fn()?.clone(),
            xi: sc.xi_value()?,
            a: sc.ask_flow.staged(g),
            b: sc.bid_flow.staged(g),
            phi: phi.staged(g),
            terminal,
            q0: sc.q0(),
        })
    }

    pub fn n(&self) -> usize {
        self.q0.len()
    }

    /// (ψᵃ(y), ψᵇ(y))
    pub fn quotes(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            isaacs::psi_solve(y, Side::Ask, &self.f, self.xi)?.delta,
            isaacs::psi_solve(y, Side::Bid, &self.f, self.xi)?.delta,
        ))
    }

    pub fn rho(&self, at: At, y: &[f64]) -> Result<Vec<f64>> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence { what: "adjoint left the finite range".into(), residual: f64::INFINITY });
        }
        isaacs::rho_with(self.a.at(at), self.b.at(at), y, &self.f, self.xi)
    }

    /// Right-hand side for the stacked state [Q; Y].
    pub fn rhs(&self, at: At, s: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let mut d = self.rho(at, &s[n..])?;
        let p2 = 2.0 * self.phi.at(at);
        d.extend(s[..n].iter().map(|q| p2 * q));
        Ok(d)
    }

    /// Forward RK4 of [Q; Y] over nodes j0..=j1.
    pub fn integrate(&self, j0: usize, j1: usize, s0: Vec<f64>) -> Result<Vec<Vec<f64>>> {
        let err: RefCell<Option<Error>> = RefCell::new(None);
        let out = ode::rk4_forward_range(&self.grid, j0, j1, s0, |at, s: &Vec<f64>| {
            if err.borrow().is_some() {
                return vec![f64::NAN; s.len()];
            }
            self.rhs(at, s).unwrap_or_else(|e| {
                *err.borrow_mut() = Some(e);
                vec![f64::NAN; s.len()]
            })
        });
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// Local step-doubling estimate: from every even node one step of 2h
    /// against two steps of h along `traj`, divided by 15.
    fn doubling_error(&self, traj: &[Vec<f64>]) -> Result<f64> {
        let g = &self.grid;
        let h = g.step();
        let per: Vec<f64> = (0..g.steps() / 2)
            .into_par_iter()
            .map(|p| -> Result<f64> {
                let k = 2 * p;
                let err: RefCell<Option<Error>> = RefCell::new(None);
                let mut f = |at: At, s: &Vec<f64>| {
                    self.rhs(at, s).unwrap_or_else(|e| {
                        *err.borrow_mut() = Some(e);
                        vec![f64::NAN; s.len()]
                    })
                };
                let coarse = ode::rk4_step(&traj[k], 2.0 * h, At::lo(g, k), At::lo(g, k + 1), At::hi(g, k + 1), &mut f);
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
                let d = coarse.iter().zip(&traj[k + 2]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                Ok(d / 15.0)
            })
            .collect::<Result<_>>()?;
        Ok(per.into_iter().fold(0.0, f64::max))
    }
}

/// Groups of agents with equal initial inventory; by symmetry they share a path.
fn classes(q0: &[f64]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &q) in q0.iter().enumerate() {
        match out.iter_mut().find(|c| q0[c[0]] == q) {
            Some(c) => c.push(i),
            None => out.push(vec![i]),
        }
    }
    out
}

fn expand(cls: &[Vec<usize>], n: usize, z: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for (c, members) in cls.iter().enumerate() {
        for &i in members {
            v[i] = z[c];
        }
    }
    v
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

struct NewtonOutcome {
    z: Vec<f64>,
    norm: f64,
    iterations: usize,
    converged: bool,
    jac: DMatrix<f64>,
}

/// Forward-difference Jacobian of `f` at `z` (columns in parallel); `r = f(z)`.
fn fd_jacobian(f: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync), z: &[f64], r: &[f64]) -> Result<DMatrix<f64>> {
    let cols: Vec<Vec<f64>> = (0..z.len())
        .into_par_iter()
        .map(|c| {
            let h = 1e-7 * z[c].abs().max(1.0);
            let mut zp = z.to_vec();
            zp[c] += h;
            let rp = f(&zp)?;
            Ok(rp.iter().zip(r).map(|(a, b)| (a - b) / h).collect())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(r.len(), z.len(), |i, c| cols[c][i]))
}

type Residual<'a> = &'a (dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync);
type Jacobian<'a> = &'a (dyn Fn(&[f64], &[f64]) -> Result<DMatrix<f64>> + Sync);

/// Damped Newton (backtracking on the sup norm). With `stall_exit`, gives
/// up after three iterations that each cut the residual by less than 10%,
/// or after [`STALL_ITER_CAP`] iterations.
fn newton(z0: Vec<f64>, tol: f64, max_iter: usize, stall_exit: bool, f: Residual, jac_fn: Jacobian) -> Result<NewtonOutcome> {
    let mut z = z0;
    let mut r = f(&z)?;
    let mut norm = sup(&r);
    let mut jac = DMatrix::zeros(r.len(), z.len());
    let mut stalls = 0;
    let mut iterations = 0;
    while iterations < max_iter && !(norm <= tol) {
        iterations += 1;
        jac = jac_fn(&z, &r)?;
        let rhs = -DVector::from_column_slice(&r);
        let Some(dz) = jac.clone().lu().solve(&rhs) else { break };
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok(rt) = f(&trial) {
                let nt = sup(&rt);
                if nt < (1.0 - 1e-4 * lambda) * norm {
                    accepted = Some((trial, rt, nt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((zn, rn, nn)) = accepted else { break };
        stalls = if nn > 0.9 * norm { stalls + 1 } else { 0 };
        z = zn;
        r = rn;
        norm = nn;
        if stall_exit && (stalls >= 3 || iterations >= STALL_ITER_CAP) {
            break;
        }
    }
    Ok(NewtonOutcome { converged: norm <= tol, z, norm, iterations, jac })
}

#[derive(Clone, Debug, Serialize)]
pub struct ShootingState {
    #[serde(rename = "Y0")]
    pub y0: Vec<f64>,
    /// Y_T + 2A·Q_T per agent
    pub terminal_gap: Vec<f64>,
    /// last Jacobian of the (class-reduced) shooting map, row-major
    pub jacobian_estimate: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub segments: usize,
}

#[derive(Clone, Debug)]
pub struct GeneralSolution {
    pub path: EquilibriumPath,
    pub shooting: ShootingState,
    pub warnings: Vec<String>,
}

/// Starting point: the linear game's (Q, Y) paths, with the scenario's ζ
/// or, failing that, the tangent of Λ at 0 (ζ = Λ(0), γ = −Λ′(0)).
struct WarmStart {
    y0: Vec<f64>,
    /// node paths `[Q; Y]` when the linear game was available
    path: Option<Vec<Vec<f64>>>,
}

fn warm_start(sc: &MarketScenario, model: &GameModel) -> WarmStart {
    let mut lin = sc.clone();
    if lin.zeta.is_none() {
        lin.zeta = Some(model.f.lambda(0.0));
        lin.gamma = -model.f.d1(0.0);
    }
    if let Ok(p) = linear_game::build_linear_equilibrium(&lin) {
        if p.y.iter().chain(&p.q).flatten().all(|v| v.is_finite()) {
            let states = (0..=model.grid.steps())
                .map(|j| p.q.iter().chain(&p.y).map(|v| v[j]).collect())
                .collect();
            return WarmStart { y0: p.y.iter().map(|v| v[0]).collect(), path: Some(states) };
        }
    }
    let g = &model.grid;
    let phi_int = model.phi.tail_integral(g)[0];
    let imb = model.b.map2(&model.a, |b, a| b - a).tail_integral(g)[0] * model.f.lambda(0.0);
    WarmStart { y0: model.q0.iter().map(|q| -2.0 * (model.terminal + phi_int) * (q + imb)).collect(), path: None }
}

fn boundaries(m: usize, segments: usize) -> Vec<usize> {
    let k = segments.clamp(1, m);
    (0..=k).map(|i| i * m / k).collect()
}

/// Shooting with `segments` pieces; unknowns and residuals are class-reduced.
/// Unknowns: Y(0), then (Q, Y) at each interior boundary. The Jacobian is
/// assembled from per-segment sensitivities, so a column costs one segment.
fn shoot(
    model: &GameModel,
    cls: &[Vec<usize>],
    warm: &WarmStart,
    segments: usize,
    opts: &SolveOptions,
    stall_exit: bool,
) -> Result<(NewtonOutcome, Vec<Vec<f64>>)> {
    let n = model.n();
    let c = cls.len();
    let m = model.grid.steps();
    let bnd = boundaries(m, segments);
    let ns = bnd.len() - 1;
    let rep: Vec<usize> = cls.iter().map(|v| v[0]).collect();
    // offset and width of segment `seg`'s unknowns in z
    let span = |seg: usize| if seg == 0 { (0, c) } else { (c + 2 * c * (seg - 1), 2 * c) };

    let start_state = |z: &[f64], seg: usize| -> Vec<f64> {
        let (off, _) = span(seg);
        if seg == 0 {
            let mut s = model.q0.clone();
            s.extend(expand(cls, n, &z[..c]));
            s
        } else {
            let mut s = expand(cls, n, &z[off..off + c]);
            s.extend(expand(cls, n, &z[off + c..off + 2 * c]));
            s
        }
    };
    let seg_end = |z: &[f64], seg: usize| -> Result<Vec<f64>> {
        Ok(model.integrate(bnd[seg], bnd[seg + 1], start_state(z, seg))?.pop().unwrap())
    };
    // residual block of segment `seg` from its end state
    let block = |z: &[f64], seg: usize, end: &[f64]| -> Vec<f64> {
        if seg + 1 < ns {
            let (off, _) = span(seg + 1);
            let mut r: Vec<f64> = rep.iter().enumerate().map(|(k, &i)| end[i] - z[off + k]).collect();
            r.extend(rep.iter().enumerate().map(|(k, &i)| end[n + i] - z[off + c + k]));
            r
        } else {
            rep.iter().map(|&i| end[n + i] + 2.0 * model.terminal * end[i]).collect()
        }
    };
    let residual = |z: &[f64]| -> Result<Vec<f64>> {
        let ends: Vec<Vec<f64>> = (0..ns).into_par_iter().map(|seg| seg_end(z, seg)).collect::<Result<_>>()?;
        Ok((0..ns).flat_map(|seg| block(z, seg, &ends[seg])).collect())
    };
    let jacobian = |z: &[f64], r: &[f64]| -> Result<DMatrix<f64>> {
        let dim = z.len();
        let mut jac = DMatrix::zeros(dim, dim);
        // residual rows of segment seg start at span(seg + 1).0 (or the tail for the last)
        let row0 = |seg: usize| if seg + 1 < ns { span(seg + 1).0 - c } else { dim - c };
        let cols: Vec<(usize, usize, Vec<f64>)> = (0..ns)
            .into_par_iter()
            .flat_map(|seg| {
                let (off, w) = span(seg);
                (0..w).into_par_iter().map(move |k| (seg, off + k))
            })
            .map(|(seg, col)| -> Result<(usize, usize, Vec<f64>)> {
                let h = 1e-7 * z[col].abs().max(1.0);
                let mut zp = z.to_vec();
                zp[col] += h;
                let rp = block(&zp, seg, &seg_end(&zp, seg)?);
                let r0 = row0(seg);
                Ok((seg, col, rp.iter().zip(&r[r0..r0 + rp.len()]).map(|(a, b)| (a - b) / h).collect()))
            })
            .collect::<Result<_>>()?;
        for (seg, col, v) in cols {
            let r0 = row0(seg);
            for (i, x) in v.into_iter().enumerate() {
                jac[(r0 + i, col)] = x;
            }
        }
        // continuity blocks: −I against the next segment's unknowns
        for seg in 0..ns.saturating_sub(1) {
            let r0 = row0(seg);
            let (off, w) = span(seg + 1);
            for k in 0..w {
                jac[(r0 + k, off + k)] -= 1.0;
            }
        }
        Ok(jac)
    };

    let mut z0: Vec<f64> = rep.iter().map(|&i| warm.y0[i]).collect();
    if ns > 1 {
        let fallback = || {
            let mut s0 = model.q0.clone();
            s0.extend_from_slice(&warm.y0);
            model.integrate(0, m, s0).ok()
        };
        let traj = warm.path.clone().or_else(fallback);
        for seg in 1..ns {
            let j = bnd[seg];
            match &traj {
                Some(t) if t[j].iter().all(|v| v.is_finite() && v.abs() < 1e6) => {
                    z0.extend(rep.iter().map(|&i| t[j][i]));
                    z0.extend(rep.iter().map(|&i| t[j][n + i]));
                }
                _ => {
                    z0.extend(rep.iter().map(|&i| model.q0[i]));
                    z0.extend(rep.iter().map(|&i| warm.y0[i]));
                }
            }
        }
    }
    let out = newton(z0, opts.tol, opts.max_iter, stall_exit, &residual, &jacobian)?;
    let segs: Vec<Vec<Vec<f64>>> =
        (0..ns).into_par_iter().map(|seg| model.integrate(bnd[seg], bnd[seg + 1], start_state(&out.z, seg))).collect::<Result<_>>()?;
    let mut traj: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for (k, s) in segs.into_iter().enumerate() {
        let skip = if k == 0 { 0 } else { 1 };
        traj.extend(s.into_iter().skip(skip));
    }
    Ok((out, traj))
}

pub fn solve_general_game(sc: &MarketScenario) -> Result<GeneralSolution> {
    solve_general_game_with(sc, &SolveOptions::default())
}

pub fn solve_general_game_with(sc: &MarketScenario, opts: &SolveOptions) -> Result<GeneralSolution> {
    let model = GameModel::new(sc)?;
    let n = model.n();
    let cls = classes(&model.q0);
    let guess = warm_start(sc, &model);

    let attempt = |segments: usize, stall_exit: bool| shoot(&model, &cls, &guess, segments, opts, stall_exit);
    let (out, traj, segments) = match opts.segments {
        Some(k) => {
            let (o, t) = attempt(k, false)?;
            (o, t, k)
        }
        None => {
            // single shooting, then progressively finer multiple shooting
            let mut last = None;
            for k in SEGMENT_LADDER {
                let k = k.min(model.grid.steps());
                let res = attempt(k, k < SEGMENT_LADDER[SEGMENT_LADDER.len() - 1]);
                match res {
                    Ok((o, t)) if o.converged => {
                        last = Some(Ok((o, t, k)));
                        break;
                    }
                    Ok((o, t)) => last = Some(Ok((o, t, k))),
                    Err(e) => last = Some(Err(e)),
                }
            }
            last.unwrap()?
        }
    };
    if !out.converged {
        return Err(Error::NonConvergence { what: format!("shooting ({segments} segment(s))"), residual: out.norm });
    }
    let m = model.grid.steps();
    let last = &traj[m];
    let terminal_gap: Vec<f64> = (0..n).map(|i| last[n + i] + 2.0 * model.terminal * last[i]).collect();
    let shooting = ShootingState {
        y0: traj[0][n..].to_vec(),
        terminal_gap: terminal_gap.clone(),
        jacobian_estimate: (0..out.jac.nrows()).map(|i| out.jac.row(i).iter().cloned().collect()).collect(),
        converged: true,
        iterations: out.iterations,
        segments,
    };

    let mut path = EquilibriumPath {
        grid: model.grid.clone(),
        q: vec![vec![0.0; m + 1]; n],
        y: vec![vec![0.0; m + 1]; n],
        delta_a: vec![vec![0.0; m + 1]; n],
        delta_b: vec![vec![0.0; m + 1]; n],
        residuals: BTreeMap::new(),
    };
    let quotes: Vec<(Vec<f64>, Vec<f64>)> =
        traj.par_iter().map(|s| model.quotes(&s[n..])).collect::<Result<Vec<_>>>()?;
    let mut max_psi: f64 = 0.0;
    for (j, s) in traj.iter().enumerate() {
        for i in 0..n {
            path.q[i][j] = s[i];
            path.y[i][j] = s[n + i];
            path.delta_a[i][j] = quotes[j].0[i];
            path.delta_b[i][j] = quotes[j].1[i];
            max_psi = max_psi.max(quotes[j].0[i].abs()).max(quotes[j].1[i].abs());
        }
    }

    let mut warnings = Vec::new();
    let res = &mut path.residuals;
    res.insert("terminal_gap".into(), sup(&terminal_gap));
    let (fwd, bwd) = ode_residuals(&model, &traj)?;
    res.insert("forward_ode".into(), fwd);
    res.insert("backward_ode".into(), bwd);
    res.insert("step_doubling".into(), model.doubling_error(&traj)?);
    let bound = sc.adjoint_bound()?;
    let max_y = path.y.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    res.insert("adjoint_bound_ratio".into(), if bound > 0.0 { max_y / bound } else { 0.0 });
    res.insert("truncation_margin".into(), model.xi - max_psi);
    if model.xi - max_psi < XI_WARN_MARGIN {
        warnings.push(format!("truncation xi = {} is binding; enlarge xi", model.xi));
    }
    let ordering = path.ordering_violation();
    path.residuals.insert("ordering_violation".into(), ordering);
    if ordering > 1e-9 {
        warnings.push(format!("ordering violated by {ordering:.3e}"));
    }
    Ok(GeneralSolution { path, shooting, warnings })
}

/// Cumulative Simpson residuals of Q′ = ρ(Y) and Y′ = 2φQ along a node
/// trajectory; midpoints by cubic Hermite from the node derivatives.
fn ode_residuals(model: &GameModel, traj: &[Vec<f64>]) -> Result<(f64, f64)> {
    let n = model.n();
    let g = &model.grid;
    let (m, h) = (g.steps(), g.step());
    let per_k: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|k| -> Result<(Vec<f64>, Vec<f64>)> {
            let (s0, s1) = (&traj[k], &traj[k + 1]);
            let d0 = model.rhs(At::lo(g, k), s0)?;
            let d1 = model.rhs(At::hi(g, k), s1)?;
            let mid: Vec<f64> = (0..2 * n).map(|i| 0.5 * (s0[i] + s1[i]) + h / 8.0 * (d0[i] - d1[i])).collect();
            let dm = model.rhs(At::mid(g, k), &mid)?;
            let inc = (0..2 * n).map(|i| h / 6.0 * (d0[i] + 4.0 * dm[i] + d1[i])).collect();
            let actual = (0..2 * n).map(|i| s1[i] - s0[i]).collect();
            Ok((inc, actual))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = vec![0.0; 2 * n];
    let (mut fwd, mut bwd): (f64, f64) = (0.0, 0.0);
    for (inc, actual) in per_k {
        for i in 0..2 * n {
            acc[i] += actual[i] - inc[i];
        }
        fwd = fwd.max(sup(&acc[..n]));
        bwd = bwd.max(sup(&acc[n..]));
    }
    Ok((fwd, bwd))
}

/// Max quote change when ξ is doubled.
pub fn xi_sensitivity(sc: &MarketScenario, opts: &SolveOptions) -> Result<f64> {
    let base = solve_general_game_with(sc, opts)?;
    let mut wide = sc.clone();
    wide.xi = XiSpec::Explicit(2.0 * sc.xi_value()?);
    let other = solve_general_game_with(&wide, opts)?;
    Ok(base.path.max_quote_diff(&other.path))
}

// ---------------------------------------------------------------------------
// maximum principle

#[derive(Clone, Debug, Serialize)]
pub struct IsaacsReport {
    pub worst_gap: f64,
    pub worst_relative_gap: f64,
    pub worst_agent: usize,
    pub worst_time: f64,
    pub checked: usize,
}

/// Brute-force check that every agent's quotes maximise its Hamiltonian
///
/// Hⁱ = bΛ(δᵇ − δ̄ᵇ)(δᵇ + y) + aΛ(δᵃ − δ̄ᵃ)(δᵃ − y) − φq²
///
/// against the others' path quotes. H is separable in (δᵃ, δᵇ), so the
/// `points`² control grid on [−ξ, ξ]² is searched one axis at a time; the
/// best grid cell is then refined by golden section.
pub fn verify_maximum_principle(path: &EquilibriumPath, sc: &MarketScenario, points: usize, node_stride: usize) -> Result<IsaacsReport> {
    let model = GameModel::new(sc)?;
    let n = path.n_agents();
    let g = &path.grid;
    let m = g.steps();
    let xi = model.xi;
    let f = &model.f;
    let nodes: Vec<usize> = (0..=m).step_by(node_stride.max(1)).chain(std::iter::once(m)).collect();
    let per_node: Vec<(f64, f64, usize, f64)> = nodes
        .par_iter()
        .map(|&j| {
            let at = At::node(g, j);
            let (a, b) = (model.a.at(at), model.b.at(at));
            let mut worst = (0.0, 0.0, 0, g.node(j));
            for i in 0..n {
                let bar_a = isaacs::best_other(&column(&path.delta_a, j), i).1;
                let bar_b = isaacs::best_other(&column(&path.delta_b, j), i).1;
                let y = path.y[i][j];
                let va = |d: f64| a * f.lambda(d - bar_a) * (d - y);
                let vb = |d: f64| b * f.lambda(d - bar_b) * (d + y);
                let eq = va(path.delta_a[i][j]) + vb(path.delta_b[i][j]);
                let best = grid_max(&va, xi, points) + grid_max(&vb, xi, points);
                let gap = (best - eq).max(0.0);
                let rel = gap / eq.abs().max(1.0);
                if rel > worst.1 {
                    worst = (gap, rel, i, g.node(j));
                }
            }
            worst
        })
        .collect();
    let w = per_node.iter().cloned().fold((0.0, 0.0, 0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok(IsaacsReport { worst_gap: w.0, worst_relative_gap: w.1, worst_agent: w.2, worst_time: w.3, checked: nodes.len() * n })
}

fn column(v: &[Vec<f64>], j: usize) -> Vec<f64> {
    v.iter().map(|r| r[j]).collect()
}

fn grid_max(v: &dyn Fn(f64) -> f64, xi: f64, points: usize) -> f64 {
    let pts = points.max(3);
    let step = 2.0 * xi / (pts - 1) as f64;
    let (mut bi, mut bv) = (0, f64::NEG_INFINITY);
    for k in 0..pts {
        let x = -xi + step * k as f64;
        let fx = v(x);
        if fx > bv {
            bi = k;
            bv = fx;
        }
    }
    let lo = -xi + step * bi.saturating_sub(1) as f64;
    let hi = (-xi + step * (bi + 1) as f64).min(xi);
    bv.max(golden_max(v, lo, hi))
}

fn golden_max(v: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (v(c), v(d));
    for _ in 0..200 {
        if b - a <= 1e-13 * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = v(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = v(d);
        }
    }
    fc.max(fd)
}

// ---------------------------------------------------------------------------
// characteristic Riccati equation

/// B(t) = ∇ρ(t, Y_t) by central differences along the path, then
/// X′ = 2φI − XBX, X(T) = −2A·I. Midpoint adjoints are cubic Hermite.
pub fn characteristic_bsre_along_path(path: &EquilibriumPath, sc: &MarketScenario) -> Result<RiccatiSolution> {
    let model = GameModel::new(sc)?;
    let n = path.n_agents();
    let g = &path.grid;
    let (m, h) = (g.steps(), g.step());
    let fd = 1e-6;
    let y_at = |j: usize| column(&path.y, j);
    let jac = |at: At, y: &[f64]| isaacs::rho_jacobian_fd_with(model.a.at(at), model.b.at(at), y, &model.f, model.xi, fd);
    let rows: Vec<[DMatrix<f64>; 3]> = (0..m)
        .into_par_iter()
        .map(|k| -> Result<[DMatrix<f64>; 3]> {
            let (y0, y1) = (y_at(k), y_at(k + 1));
            let (lo, hi) = (At::lo(g, k), At::hi(g, k));
            let ym: Vec<f64> = (0..n)
                .map(|i| {
                    let d0 = 2.0 * model.phi.at(lo) * path.q[i][k];
                    let d1 = 2.0 * model.phi.at(hi) * path.q[i][k + 1];
                    0.5 * (y0[i] + y1[i]) + h / 8.0 * (d0 - d1)
                })
                .collect();
            Ok([jac(lo, &y0)?, jac(At::mid(g, k), &ym)?, jac(hi, &y1)?])
        })
        .collect::<Result<Vec<_>>>()?;
    let b = MatrixPath::from_fn(n, move |at| {
        let idx = match at.stage {
            Stage::Lo => 0,
            Stage::Mid => 1,
            Stage::Hi => 2,
        };
        rows[at.k][idx].clone()
    });
    riccati::integrate_matrix_riccati(&b, &model.phi, model.terminal, g)
}

// ---------------------------------------------------------------------------
// identical agents: price decomposition and benchmark inventory

#[derive(Clone, Debug, Serialize)]
pub struct ImpactDecomposition {
    pub time: f64,
    /// fundamental price, taken as 0
    pub fundamental: f64,
    pub half_spread: f64,
    pub ex_post: f64,
    pub ex_ante_terminal: f64,
    pub ex_ante_running: f64,
    pub total_ask: f64,
}

/// Ask price of identical zero-inventory agents with constant φ, A and
/// exponential intensity, split into half-spread, ex post and ex ante parts.
pub fn price_impact_path(sc: &MarketScenario) -> Result<Vec<ImpactDecomposition>> {
    let gamma = match sc.intensity_fn()? {
        IntensityFunction::Exponential { gamma } => *gamma,
        _ => return Err(Error::validation("price decomposition needs the exponential intensity")),
    };
    if sc.agents.iter().any(|a| a.q0 != 0.0) {
        return Err(Error::validation("price decomposition needs all q0 = 0"));
    }
    let (phi, big_a) = sc.homogeneous_penalties()?;
    let CoefficientPath::Constant(phi) = phi else {
        return Err(Error::validation("price decomposition needs a constant phi"));
    };
    let g = &sc.grid;
    let (m, h, t_end) = (g.steps(), g.step(), g.horizon());
    let c = sc.ask_flow.staged(g).map2(&sc.bid_flow.staged(g), |a, b| a - b);
    let past = c.running_integral(g);
    let future = c.tail_integral(g);
    let w = |t: f64| t_end - t;
    let lo: Vec<f64> = (0..m).map(|k| w(g.node(k)) * c.lo[k]).collect();
    let mi: Vec<f64> = (0..m).map(|k| w(0.5 * (g.node(k) + g.node(k + 1))) * c.mid[k]).collect();
    let hi: Vec<f64> = (0..m).map(|k| w(g.node(k + 1)) * c.hi[k]).collect();
    let weighted = ode::tail_simpson(h, &lo, &mi, &hi);
    Ok((0..=m)
        .map(|j| {
            let t = g.node(j);
            let ex_post = 2.0 * (big_a + phi * (t_end - t)) * past[j];
            let ex_ante_terminal = 2.0 * big_a * future[j];
            let ex_ante_running = 2.0 * phi * weighted[j];
            let half_spread = 1.0 / gamma;
            ImpactDecomposition {
                time: t,
                fundamental: 0.0,
                half_spread,
                ex_post,
                ex_ante_terminal,
                ex_ante_running,
                total_ask: half_spread + ex_post + ex_ante_terminal + ex_ante_running,
            }
        })
        .collect())
}

pub fn price_impact(sc: &MarketScenario, j: usize) -> Result<ImpactDecomposition> {
    if j > sc.grid.steps() {
        return Err(Error::validation("time index beyond the horizon"));
    }
    Ok(price_impact_path(sc)?.swap_remove(j))
}

/// Penalty-weighted average of future imbalance at node `j`:
/// [AΛ(0)∫ₛᵀ(a−b) + ∫ₛᵀφ_r∫ₛʳΛ(0)(a−b)] / (A + ∫ₛᵀφ).
pub fn benchmark_inventory(sc: &MarketScenario, j: usize) -> Result<f64> {
    let g = &sc.grid;
    let (m, h) = (g.steps(), g.step());
    if j > m {
        return Err(Error::validation("time index beyond the horizon"));
    }
    let (phi, big_a) = sc.homogeneous_penalties()?;
    let phi = phi.staged(g);
    let l0 = sc.intensity_fn()?.lambda(0.0);
    let c = sc.ask_flow.staged(g).map2(&sc.bid_flow.staged(g), |a, b| l0 * (a - b));
    // ∫ₛᵀφ_r∫ₛʳc = ∫ₛᵀ c(u)Φ(u)du with Φ(u) = ∫ᵤᵀφ
    let big_phi = phi.tail_integral(g);
    let lo: Vec<f64> = (j..m).map(|k| c.lo[k] * big_phi[k]).collect();
    let mi: Vec<f64> = (j..m).map(|k| c.mid[k] * (big_phi[k + 1] + 0.25 * h * (phi.mid[k] + phi.hi[k]))).collect();
    let hi: Vec<f64> = (j..m).map(|k| c.hi[k] * big_phi[k + 1]).collect();
    let running = ode::tail_simpson(h, &lo, &mi, &hi)[0];
    let den = big_a + big_phi[j];
    if !(den > 0.0) {
        return Err(Error::validation("benchmark inventory needs A + integral of phi > 0"));
    }
    Ok((big_a * c.tail_integral(g)[j] + running) / den)
}

// ---------------------------------------------------------------------------
// quasi-infinite game

#[derive(Clone, Debug)]
pub struct QuasiInfiniteSolution {
    /// the sample, ascending
    pub inventories: Vec<f64>,
    pub beta_a: Vec<f64>,
    pub beta_b: Vec<f64>,
    /// four-player game on (min, min, max, max)
    pub artificial: EquilibriumPath,
    /// one agent per sample inventory, ascending
    pub path: EquilibriumPath,
    /// max |min over agents of the quote − β|
    pub consistency: f64,
}

/// Best quotes from the artificial four-player game, then every sampled
/// agent's best response to them by scalar shooting.
pub fn solve_quasi_infinite_game(inventories: &[f64], template: &MarketScenario, opts: &SolveOptions) -> Result<QuasiInfiniteSolution> {
    if inventories.is_empty() || inventories.iter().any(|q| !q.is_finite()) {
        return Err(Error::validation("inventory sample must be non-empty and finite"));
    }
    let mut inv = inventories.to_vec();
    inv.sort_by(f64::total_cmp);
    let (lo_q, hi_q) = (inv[0], inv[inv.len() - 1]);
    let proto = &template.agents[0];
    template.homogeneous_penalties()?;
    let art_sc = MarketScenario::new(
        template.grid.clone(),
        template.ask_flow.clone(),
        template.bid_flow.clone(),
        [lo_q, lo_q, hi_q, hi_q].iter().map(|&q| AgentParams { q0: q, ..proto.clone() }).collect(),
        template.intensity.clone(),
        template.zeta,
        template.gamma,
        template.xi,
    )?;
    let art = solve_general_game_with(&art_sc, opts)?;
    let model = GameModel::new(&art_sc)?;
    let g = &model.grid;
    let (m, h) = (g.steps(), g.step());
    let ap = &art.path;

    // β at nodes and Hermite midpoints
    let best = |y: &[f64]| -> Result<(f64, f64)> {
        let (qa, qb) = model.quotes(y)?;
        Ok((qa.iter().cloned().fold(f64::INFINITY, f64::min), qb.iter().cloned().fold(f64::INFINITY, f64::min)))
    };
    let node_beta: Vec<(f64, f64)> = (0..=m).into_par_iter().map(|j| best(&column(&ap.y, j))).collect::<Result<_>>()?;
    let mid_beta: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|k| {
            let ym: Vec<f64> = (0..4)
                .map(|i| {
                    let d0 = 2.0 * model.phi.lo[k] * ap.q[i][k];
                    let d1 = 2.0 * model.phi.hi[k] * ap.q[i][k + 1];
                    0.5 * (ap.y[i][k] + ap.y[i][k + 1]) + h / 8.0 * (d0 - d1)
                })
                .collect();
            best(&ym)
        })
        .collect::<Result<_>>()?;
    let beta_at = |at: At| match at.stage {
        Stage::Lo => node_beta[at.k],
        Stage::Mid => mid_beta[at.k],
        Stage::Hi => node_beta[at.k + 1],
    };

    let f = &model.f;
    let xi = model.xi;
    let respond = |y: f64, ba: f64, bb: f64| -> Result<(f64, f64)> {
        Ok(((ba + f.delta_star(y - ba)?).clamp(-xi, xi), (bb + f.delta_star(-y - bb)?).clamp(-xi, xi)))
    };
    let agent_rhs = |at: At, s: &[f64]| -> Result<Vec<f64>> {
        let (ba, bb) = beta_at(at);
        let (da, db) = respond(s[1], ba, bb)?;
        Ok(vec![model.b.at(at) * f.lambda(db - bb) - model.a.at(at) * f.lambda(da - ba), 2.0 * model.phi.at(at) * s[0]])
    };
    let integrate = |q0: f64, y0: f64| -> Result<Vec<Vec<f64>>> {
        let err: RefCell<Option<Error>> = RefCell::new(None);
        let out = ode::rk4_forward(g, vec![q0, y0], |at, s: &Vec<f64>| {
            if err.borrow().is_some() || !s[1].is_finite() {
                return vec![f64::NAN; 2];
            }
            agent_rhs(at, s).unwrap_or_else(|e| {
                *err.borrow_mut() = Some(e);
                vec![f64::NAN; 2]
            })
        });
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(out),
        }
    };

    let (y_lo, y_hi) = (ap.y[0][0], ap.y[3][0]);
    let k = inv.len();
    let solved: Vec<Vec<Vec<f64>>> = inv
        .par_iter()
        .map(|&q| -> Result<Vec<Vec<f64>>> {
            let guess = if hi_q > lo_q { y_lo + (y_hi - y_lo) * (q - lo_q) / (hi_q - lo_q) } else { y_lo };
            let gap = |z: &[f64]| -> Result<Vec<f64>> {
                let t = integrate(q, z[0])?;
                let e = &t[m];
                Ok(vec![e[1] + 2.0 * model.terminal * e[0]])
            };
            let jac = |z: &[f64], r: &[f64]| fd_jacobian(&gap, z, r);
            let out = newton(vec![guess], opts.tol, opts.max_iter, false, &gap, &jac)?;
            if !out.converged {
                return Err(Error::NonConvergence { what: format!("single-agent shooting at q0 = {q}"), residual: out.norm });
            }
            integrate(q, out.z[0])
        })
        .collect::<Result<_>>()?;

    let mut path = EquilibriumPath {
        grid: g.clone(),
        q: vec![vec![0.0; m + 1]; k],
        y: vec![vec![0.0; m + 1]; k],
        delta_a: vec![vec![0.0; m + 1]; k],
        delta_b: vec![vec![0.0; m + 1]; k],
        residuals: BTreeMap::new(),
    };
    let mut consistency: f64 = 0.0;
    for j in 0..=m {
        let (ba, bb) = node_beta[j];
        let (mut min_a, mut min_b) = (f64::INFINITY, f64::INFINITY);
        for i in 0..k {
            let s = &solved[i][j];
            let (da, db) = respond(s[1], ba, bb)?;
            path.q[i][j] = s[0];
            path.y[i][j] = s[1];
            path.delta_a[i][j] = da;
            path.delta_b[i][j] = db;
            min_a = min_a.min(da);
            min_b = min_b.min(db);
        }
        consistency = consistency.max((min_a - ba).abs()).max((min_b - bb).abs());
    }
    path.residuals.insert("beta_consistency".into(), consistency);
    path.residuals.insert("ordering_violation".into(), path.ordering_violation());
    path.residuals.insert(
        "terminal_gap".into(),
        (0..k).map(|i| (path.y[i][m] + 2.0 * model.terminal * path.q[i][m]).abs()).fold(0.0, f64::max),
    );
    Ok(QuasiInfiniteSolution {
        inventories: inv,
        beta_a: node_beta.iter().map(|b| b.0).collect(),
        beta_b: node_beta.iter().map(|b| b.1).collect(),
        artificial: art.path,
        path,
        consistency,
    })
}
