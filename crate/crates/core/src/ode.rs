//! Fixed-step RK4 on uniform grids, Hermite dense output, and quadrature.
//!
//! Right-hand sides are evaluated at an [`At`]: an interval index plus the
//! stage position inside it. Coefficients that jump at grid nodes are then
//! sampled from the correct side (the left end of interval `k` sees the
//! right limit, the right end sees the left limit).

use nalgebra::{DMatrix, DVector};

use crate::scenario::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Lo,
    Mid,
    Hi,
}

/// Evaluation point: interval `k` = [t_k, t_{k+1}], stage, and absolute time.
#[derive(Clone, Copy, Debug)]
pub struct At {
    pub k: usize,
    pub stage: Stage,
    pub t: f64,
}

impl At {
    /// Node `j` seen from the interval that starts there (the last node is
    /// seen from the final interval).
    pub fn node(grid: &TimeGrid, j: usize) -> At {
        let m = grid.steps();
        if j < m {
            At { k: j, stage: Stage::Lo, t: grid.node(j) }
        } else {
            At { k: m - 1, stage: Stage::Hi, t: grid.node(m) }
        }
    }

    pub fn lo(grid: &TimeGrid, k: usize) -> At {
        At { k, stage: Stage::Lo, t: grid.node(k) }
    }

    pub fn mid(grid: &TimeGrid, k: usize) -> At {
        At { k, stage: Stage::Mid, t: 0.5 * (grid.node(k) + grid.node(k + 1)) }
    }

    pub fn hi(grid: &TimeGrid, k: usize) -> At {
        At { k, stage: Stage::Hi, t: grid.node(k + 1) }
    }
}

/// Vector-space operations needed by RK4.
pub trait OdeState: Clone {
    /// `self + c * other`
    fn axpy(&self, c: f64, other: &Self) -> Self;
    fn norm_inf(&self) -> f64;
}

impl OdeState for f64 {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        self + c * other
    }
    fn norm_inf(&self) -> f64 {
        self.abs()
    }
}

impl OdeState for Vec<f64> {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        self.iter().zip(other).map(|(a, b)| a + c * b).collect()
    }
    fn norm_inf(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl OdeState for DVector<f64> {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        self + other * c
    }
    fn norm_inf(&self) -> f64 {
        self.amax()
    }
}

impl OdeState for DMatrix<f64> {
    fn axpy(&self, c: f64, other: &Self) -> Self {
        self + other * c
    }
    fn norm_inf(&self) -> f64 {
        self.amax()
    }
}

/// One classical RK4 step of signed size `h` with the three stage points.
pub fn rk4_step<S: OdeState>(
    y: &S,
    h: f64,
    a: At,
    m: At,
    b: At,
    f: &mut impl FnMut(At, &S) -> S,
) -> S {
    let k1 = f(a, y);
    let k2 = f(m, &y.axpy(0.5 * h, &k1));
    let k3 = f(m, &y.axpy(0.5 * h, &k2));
    let k4 = f(b, &y.axpy(h, &k3));
    let incr = k1.axpy(2.0, &k2).axpy(2.0, &k3).axpy(1.0, &k4);
    y.axpy(h / 6.0, &incr)
}

/// Forward RK4 from t_0; returns the state at every node.
pub fn rk4_forward<S: OdeState>(
    grid: &TimeGrid,
    y0: S,
    f: impl FnMut(At, &S) -> S,
) -> Vec<S> {
    rk4_forward_range(grid, 0, grid.steps(), y0, f)
}

/// Forward RK4 from node `j0` to node `j1`; returns states at nodes j0..=j1.
pub fn rk4_forward_range<S: OdeState>(
    grid: &TimeGrid,
    j0: usize,
    j1: usize,
    y0: S,
    mut f: impl FnMut(At, &S) -> S,
) -> Vec<S> {
    let h = grid.step();
    let mut out = Vec::with_capacity(j1 - j0 + 1);
    out.push(y0);
    for k in j0..j1 {
        let cur = out.last().unwrap();
        let next = rk4_step(cur, h, At::lo(grid, k), At::mid(grid, k), At::hi(grid, k), &mut f);
        out.push(next);
    }
    out
}

/// Backward RK4 from t_M = T; `f` is dy/dt. Returns states indexed by node.
pub fn rk4_backward<S: OdeState>(
    grid: &TimeGrid,
    y_t: S,
    mut f: impl FnMut(At, &S) -> S,
) -> Vec<S> {
    let m = grid.steps();
    let h = grid.step();
    let mut rev = Vec::with_capacity(m + 1);
    rev.push(y_t);
    for k in (0..m).rev() {
        let cur = rev.last().unwrap();
        let next = rk4_step(cur, -h, At::hi(grid, k), At::mid(grid, k), At::lo(grid, k), &mut f);
        rev.push(next);
    }
    rev.reverse();
    rev
}

/// Why a monitored integration stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct BlowUp {
    pub time: f64,
    pub reason: String,
}

/// Result of [`rk4_backward_monitored`]. `states[j]` is `None` before a blow-up.
pub struct Monitored<S> {
    pub states: Vec<Option<S>>,
    pub blow_up: Option<BlowUp>,
    /// Largest step-doubling error estimate (Richardson, /15).
    pub doubling_error: f64,
}

/// Backward RK4 with blow-up detection: entries beyond `limit`, or a
/// step-doubling error estimate (relative to `max(1, |y|)`) above `err_limit`.
/// The double step over [t_k, t_{k+2}] reuses the staged samples at t_{k+1}.
pub fn rk4_backward_monitored<S: OdeState>(
    grid: &TimeGrid,
    y_t: S,
    limit: f64,
    err_limit: f64,
    mut f: impl FnMut(At, &S) -> S,
) -> Monitored<S> {
    let m = grid.steps();
    let h = grid.step();
    let mut states: Vec<Option<S>> = vec![None; m + 1];
    states[m] = Some(y_t);
    let mut doubling_error: f64 = 0.0;
    let mut blow_up = None;
    for k in (0..m).rev() {
        let cur = states[k + 1].clone().unwrap();
        let next = rk4_step(&cur, -h, At::hi(grid, k), At::mid(grid, k), At::lo(grid, k), &mut f);
        let size = next.norm_inf();
        if !size.is_finite() || size > limit {
            blow_up = Some(BlowUp {
                time: grid.node(k),
                reason: format!("entry magnitude {size:.3e} exceeds {limit:.1e}"),
            });
            break;
        }
        // completed a pair of steps [t_k, t_{k+2}]
        if (m - k) % 2 == 0 {
            let start = states[k + 2].clone().unwrap();
            let coarse = rk4_step(
                &start,
                -2.0 * h,
                At::hi(grid, k + 1),
                At::lo(grid, k + 1),
                At::lo(grid, k),
                &mut f,
            );
            let est = coarse.axpy(-1.0, &next).norm_inf() / 15.0 / size.max(1.0);
            doubling_error = doubling_error.max(est);
            if est > err_limit {
                blow_up = Some(BlowUp {
                    time: grid.node(k),
                    reason: format!("step-doubling error {est:.3e} exceeds {err_limit:.1e}"),
                });
                states[k] = Some(next);
                break;
            }
        }
        states[k] = Some(next);
    }
    Monitored { states, blow_up, doubling_error }
}

/// Node values plus one-sided derivatives for cubic Hermite midpoints.
#[derive(Clone, Debug)]
pub struct Dense<S> {
    pub y: Vec<S>,
    /// derivative at the left end of interval k (right limit)
    pub dl: Vec<S>,
    /// derivative at the right end of interval k (left limit)
    pub dr: Vec<S>,
    pub h: f64,
}

impl<S: OdeState> Dense<S> {
    /// Attach derivatives to node values using the right-hand side `f`.
    pub fn from_nodes(grid: &TimeGrid, y: Vec<S>, mut f: impl FnMut(At, &S) -> S) -> Self {
        let m = grid.steps();
        let mut dl = Vec::with_capacity(m);
        let mut dr = Vec::with_capacity(m);
        for k in 0..m {
            dl.push(f(At::lo(grid, k), &y[k]));
            dr.push(f(At::hi(grid, k), &y[k + 1]));
        }
        Dense { y, dl, dr, h: grid.step() }
    }

    pub fn mid(&self, k: usize) -> S {
        // p(1/2) = (y0 + y1)/2 + h (m0 - m1)/8
        let avg = self.y[k].axpy(1.0, &self.y[k + 1]);
        let slope = self.dl[k].axpy(-1.0, &self.dr[k]);
        let half = avg.axpy(self.h / 4.0, &slope);
        half.axpy(-0.5, &half)
    }

    pub fn at(&self, at: At) -> S {
        match at.stage {
            Stage::Lo => self.y[at.k].clone(),
            Stage::Mid => self.mid(at.k),
            Stage::Hi => self.y[at.k + 1].clone(),
        }
    }
}

/// Forward RK4 with dense output.
pub fn rk4_forward_dense<S: OdeState>(
    grid: &TimeGrid,
    y0: S,
    mut f: impl FnMut(At, &S) -> S,
) -> Dense<S> {
    let y = rk4_forward(grid, y0, &mut f);
    Dense::from_nodes(grid, y, f)
}

/// Backward RK4 with dense output.
pub fn rk4_backward_dense<S: OdeState>(
    grid: &TimeGrid,
    y_t: S,
    mut f: impl FnMut(At, &S) -> S,
) -> Dense<S> {
    let y = rk4_backward(grid, y_t, &mut f);
    Dense::from_nodes(grid, y, f)
}

/// Cubic midpoint interpolation from node values alone (4-point Lagrange).
pub fn cubic_midpoints(v: &[f64]) -> Vec<f64> {
    let m = v.len() - 1;
    if m < 3 {
        return (0..m).map(|k| 0.5 * (v[k] + v[k + 1])).collect();
    }
    (0..m)
        .map(|k| {
            if k == 0 {
                (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0
            } else if k == m - 1 {
                (5.0 * v[m] + 15.0 * v[m - 1] - 5.0 * v[m - 2] + v[m - 3]) / 16.0
            } else {
                (-v[k - 1] + 9.0 * v[k] + 9.0 * v[k + 1] - v[k + 2]) / 16.0
            }
        })
        .collect()
}

/// Tail integrals ∫_{t_j}^T f by per-interval Simpson, given the integrand at
/// the left end, midpoint and right end of every interval.
pub fn tail_simpson(h: f64, lo: &[f64], mid: &[f64], hi: &[f64]) -> Vec<f64> {
    let m = lo.len();
    let mut out = vec![0.0; m + 1];
    for k in (0..m).rev() {
        out[k] = out[k + 1] + h / 6.0 * (lo[k] + 4.0 * mid[k] + hi[k]);
    }
    out
}

/// Running integrals ∫_0^{t_j} f, same inputs as [`tail_simpson`].
pub fn running_simpson(h: f64, lo: &[f64], mid: &[f64], hi: &[f64]) -> Vec<f64> {
    let m = lo.len();
    let mut out = vec![0.0; m + 1];
    for k in 0..m {
        out[k + 1] = out[k] + h / 6.0 * (lo[k] + 4.0 * mid[k] + hi[k]);
    }
    out
}

/// Running trapezoid integrals of node samples.
pub fn running_trapezoid(h: f64, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for k in 1..v.len() {
        out[k] = out[k - 1] + 0.5 * h * (v[k - 1] + v[k]);
    }
    out
}
