//! The Isaacs fixed point ψ(y), its generalized Jacobians, the forward
//! drift ρ, and structural matrix classes (Z, Z₊, M, M₀, Varah bound).
//!
//! Bid side: δⁱ = clamp(δ̄ⁱ + δ*(−yⁱ − δ̄ⁱ), ±ξ); ask side uses +yⁱ.
//! δ̄ⁱ is the best (smallest) competing gap; ties go to the smallest index.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::intensity::IntensityFunction;
use crate::scenario::MarketScenario;

/// Margin below which a point counts as a tie / clamp contact.
pub const SMOOTH_MARGIN: f64 = 1e-7;
/// Absolute eigenvalue tolerance for M-classification.
pub const EIG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Ask,
    Bid,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Ask => 1.0,
            Side::Bid => -1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuoteFixedPoint {
    pub y: Vec<f64>,
    pub delta: Vec<f64>,
    pub side: Side,
    pub xi: f64,
    pub iterations: usize,
    pub residual: f64,
    /// no ties in any best-other choice and no clamp within [`SMOOTH_MARGIN`]
    pub smooth: bool,
}

/// (index, value) of the best competitor of agent `i`; smallest index on ties.
pub fn best_other(delta: &[f64], i: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, &d) in delta.iter().enumerate() {
        if j != i && d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Unclamped best response of every agent against `delta`.
fn raw_response(delta: &[f64], y: &[f64], side: Side, f: &IntensityFunction) -> Result<Vec<f64>> {
    let s = side.sign();
    (0..delta.len())
        .map(|i| {
            let (_, bar) = best_other(delta, i);
            Ok(bar + f.delta_star(s * y[i] - bar)?)
        })
        .collect()
}

fn clamp_all(v: &[f64], xi: f64) -> Vec<f64> {
    v.iter().map(|x| x.clamp(-xi, xi)).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// ‖Ψ(δ, y)‖∞
pub fn psi_residual(delta: &[f64], y: &[f64], side: Side, f: &IntensityFunction, xi: f64) -> Result<f64> {
    let g = clamp_all(&raw_response(delta, y, side, f)?, xi);
    Ok(sup_diff(delta, &g))
}

fn is_smooth(delta: &[f64], raw: &[f64], xi: f64) -> bool {
    let n = delta.len();
    for i in 0..n {
        if (raw[i].abs() - xi).abs() <= SMOOTH_MARGIN {
            return false;
        }
        if n >= 3 {
            let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| delta[j]).collect();
            others.sort_by(f64::total_cmp);
            if others[1] - others[0] <= SMOOTH_MARGIN {
                return false;
            }
        }
    }
    true
}

/// Solves the Isaacs fixed point: damped iteration (ω = 1/2 from δ = 0),
/// then Newton polish with ∇_δΨ = I − C.
pub fn psi_solve(y: &[f64], side: Side, f: &IntensityFunction, xi: f64) -> Result<QuoteFixedPoint> {
    let n = y.len();
    if n < 2 {
        return Err(Error::validation("psi_solve needs at least 2 agents"));
    }
    if !(xi > 0.0) {
        return Err(Error::validation("xi must be positive"));
    }
    let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-14 * scale.max(xi.min(1e3));
    let mut delta = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    let damped = |delta: &mut Vec<f64>, until: f64, max_iter: usize, its: &mut usize| -> Result<f64> {
        let mut r = f64::INFINITY;
        for _ in 0..max_iter {
            let g = clamp_all(&raw_response(delta, y, side, f)?, xi);
            r = sup_diff(delta, &g);
            if r <= until {
                break;
            }
            for (d, gi) in delta.iter_mut().zip(&g) {
                *d = 0.5 * *d + 0.5 * gi;
            }
            *its += 1;
        }
        Ok(r)
    };

    residual = residual.min(damped(&mut delta, 1e-6 * scale, 2_000, &mut iterations)?);

    // Newton polish
    for _ in 0..50 {
        let raw = raw_response(&delta, y, side, f)?;
        let g = clamp_all(&raw, xi);
        let r = sup_diff(&delta, &g);
        residual = r;
        if r <= tol {
            break;
        }
        let s = side.sign();
        let mut jac = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            if raw[i].abs() < xi {
                let (m, bar) = best_other(&delta, i);
                jac[(i, m)] -= 1.0 - f.delta_star_prime(s * y[i] - bar)?;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(n, delta.iter().zip(&g).map(|(d, gi)| gi - d));
        let Some(step) = jac.lu().solve(&rhs) else { break };
        let trial: Vec<f64> = delta.iter().zip(step.iter()).map(|(d, s)| d + s).collect();
        let tr = psi_residual(&trial, y, side, f, xi)?;
        iterations += 1;
        if tr < r {
            delta = trial;
            residual = tr;
        } else {
            break;
        }
    }
    if residual > tol {
        residual = damped(&mut delta, tol, 200_000, &mut iterations)?;
    }
    if residual > 1e-10 * scale {
        return Err(Error::NonConvergence { what: "Isaacs fixed point".into(), residual });
    }
    let raw = raw_response(&delta, y, side, f)?;
    let smooth = is_smooth(&delta, &raw, xi);
    Ok(QuoteFixedPoint { y: y.to_vec(), delta, side, xi, iterations, residual, smooth })
}

/// Assembles the closed-form Jacobian of the bid map for the ordering
/// ψ^{m1} < ψ^{m2} < rest, from the coefficients 𝔞ᵢ = −[1 − (δ*)′(·)].
pub fn bid_jacobian_form(m1: usize, m2: usize, c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    let (a1, a2) = (c[m1], c[m2]);
    let d = 1.0 - a1 * a2;
    let mut j = DMatrix::zeros(n, n);
    j[(m1, m1)] = -(a1 + 1.0) / d;
    j[(m1, m2)] = a1 * (a2 + 1.0) / d;
    j[(m2, m1)] = a2 * (a1 + 1.0) / d;
    j[(m2, m2)] = -(a2 + 1.0) / d;
    for i in 0..n {
        if i != m1 && i != m2 {
            j[(i, m1)] = c[i] * (a1 + 1.0) / d;
            j[(i, m2)] = -a1 * c[i] * (a2 + 1.0) / d;
            j[(i, i)] = -(c[i] + 1.0);
        }
    }
    j
}

fn two_smallest(delta: &[f64]) -> (usize, usize) {
    let (m1, _) = best_other(delta, usize::MAX);
    let (m2, _) = best_other(delta, m1);
    (m1, m2)
}

/// Closed-form ∇ψ(y) at a smooth point.
pub fn psi_jacobian(y: &[f64], side: Side, f: &IntensityFunction, xi: f64) -> Result<DMatrix<f64>> {
    let fp = psi_solve(y, side, f, xi)?;
    if !fp.smooth {
        return Err(Error::NonSmooth("tie or clamp contact; use psi_jacobian_fd".into()));
    }
    let delta = &fp.delta;
    let s = side.sign();
    let c: Vec<f64> = (0..y.len())
        .map(|i| {
            let (_, bar) = best_other(delta, i);
            Ok(-(1.0 - f.delta_star_prime(s * y[i] - bar)?))
        })
        .collect::<Result<_>>()?;
    let (m1, m2) = two_smallest(delta);
    let j = bid_jacobian_form(m1, m2, &c);
    Ok(match side {
        Side::Bid => j,
        Side::Ask => -j,
    })
}

/// Central finite-difference ∇ψ(y).
pub fn psi_jacobian_fd(y: &[f64], side: Side, f: &IntensityFunction, xi: f64, h: f64) -> Result<DMatrix<f64>> {
    let n = y.len();
    let mut j = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    for k in 0..n {
        yp[k] = y[k] + h;
        let up = psi_solve(&yp, side, f, xi)?.delta;
        yp[k] = y[k] - h;
        let dn = psi_solve(&yp, side, f, xi)?.delta;
        yp[k] = y[k];
        for i in 0..n {
            j[(i, k)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Own gap minus best competing gap, Ξᵢ = ψᵢ − ψ̄ᵢ.
pub fn interaction(delta: &[f64]) -> Vec<f64> {
    (0..delta.len()).map(|i| delta[i] - best_other(delta, i).1).collect()
}

/// Jacobian of y ↦ Ξ(ψ(y)); zero row sums.
pub fn interaction_jacobian(y: &[f64], side: Side, f: &IntensityFunction, xi: f64) -> Result<DMatrix<f64>> {
    let fp = psi_solve(y, side, f, xi)?;
    let j = psi_jacobian(y, side, f, xi)?;
    let n = y.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let (m, _) = best_other(&fp.delta, i);
        for k in 0..n {
            out[(i, k)] = j[(i, k)] - j[(m, k)];
        }
    }
    Ok(out)
}

/// ρ(y) = b Λ(Ξᵇ) − a Λ(Ξᵃ) for flows `a`, `b`.
pub fn rho_with(a: f64, b: f64, y: &[f64], f: &IntensityFunction, xi: f64) -> Result<Vec<f64>> {
    let bid = interaction(&psi_solve(y, Side::Bid, f, xi)?.delta);
    let ask = interaction(&psi_solve(y, Side::Ask, f, xi)?.delta);
    Ok(bid.iter().zip(&ask).map(|(xb, xa)| b * f.lambda(*xb) - a * f.lambda(*xa)).collect())
}

/// ρ at grid node `j` of a scenario (ξ from the scenario).
pub fn rho_eval(sc: &MarketScenario, j: usize, y: &[f64]) -> Result<Vec<f64>> {
    let t = sc.grid.node(j);
    let th = sc.grid.horizon();
    rho_with(sc.ask_flow.eval(t, th), sc.bid_flow.eval(t, th), y, sc.intensity_fn()?, sc.xi_value()?)
}

/// Central finite-difference ∇ρ for flows `a`, `b`.
pub fn rho_jacobian_fd_with(a: f64, b: f64, y: &[f64], f: &IntensityFunction, xi: f64, h: f64) -> Result<DMatrix<f64>> {
    let n = y.len();
    let mut j = DMatrix::zeros(n, n);
    let mut yp = y.to_vec();
    for k in 0..n {
        yp[k] = y[k] + h;
        let up = rho_with(a, b, &yp, f, xi)?;
        yp[k] = y[k] - h;
        let dn = rho_with(a, b, &yp, f, xi)?;
        yp[k] = y[k];
        for i in 0..n {
            j[(i, k)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Central finite-difference ∇ρ at grid node `j`.
pub fn rho_jacobian_fd(sc: &MarketScenario, j: usize, y: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let t = sc.grid.node(j);
    let th = sc.grid.horizon();
    rho_jacobian_fd_with(sc.ask_flow.eval(t, th), sc.bid_flow.eval(t, th), y, sc.intensity_fn()?, sc.xi_value()?, h)
}

/// Analytic ∇ρ = diag(bΛ′(Ξᵇ))∇Ξᵇ − diag(aΛ′(Ξᵃ))∇Ξᵃ at a smooth point.
pub fn rho_jacobian(a: f64, b: f64, y: &[f64], f: &IntensityFunction, xi: f64) -> Result<DMatrix<f64>> {
    let n = y.len();
    let xb = interaction(&psi_solve(y, Side::Bid, f, xi)?.delta);
    let xa = interaction(&psi_solve(y, Side::Ask, f, xi)?.delta);
    let jb = interaction_jacobian(y, Side::Bid, f, xi)?;
    let ja = interaction_jacobian(y, Side::Ask, f, xi)?;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let (wb, wa) = (b * f.d1(xb[i]), a * f.d1(xa[i]));
        for k in 0..n {
            out[(i, k)] = wb * jb[(i, k)] - wa * ja[(i, k)];
        }
    }
    Ok(out)
}

/// Lipschitz constant of ψ in the sup norm: 1 / inf (δ*)′ = 2 − inf r.
pub fn lipschitz_constant(f: &IntensityFunction, probe: &[f64]) -> Result<f64> {
    Ok(2.0 - f.validate(probe)?.min_ratio)
}

// ---------------------------------------------------------------------------
// matrix classes

#[derive(Clone, Copy, Debug)]
pub struct ClassTolerance {
    /// off-diagonal / diagonal sign slack
    pub entry: f64,
    pub row_sum: f64,
    pub eig: f64,
}

impl ClassTolerance {
    pub fn uniform(tol: f64) -> Self {
        ClassTolerance { entry: tol, row_sum: tol, eig: EIG_TOL.max(tol) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MatrixClassReport {
    #[serde(rename = "is_Z")]
    pub is_z: bool,
    #[serde(rename = "is_Z_plus")]
    pub is_z_plus: bool,
    #[serde(rename = "is_M")]
    pub is_m: bool,
    #[serde(rename = "is_M0")]
    pub is_m0: bool,
    pub row_diagonally_dominant: bool,
    pub column_entry_dominant: bool,
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    pub min_eig_real: f64,
    pub row_dominance_gap: f64,
    pub varah_bound: Option<f64>,
}

pub fn classify_matrix(a: &DMatrix<f64>, tol: f64) -> Result<MatrixClassReport> {
    classify_matrix_with(a, ClassTolerance::uniform(tol))
}

pub fn classify_matrix_with(a: &DMatrix<f64>, tol: ClassTolerance) -> Result<MatrixClassReport> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::validation("matrix must be square and non-empty"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("matrix entries must be finite"));
    }
    let mut is_z = true;
    let mut diag_ok = true;
    let mut col_dom = true;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if a[(i, j)] > tol.entry {
                    is_z = false;
                }
                if a[(i, j)].abs() > a[(j, j)].abs() + tol.entry {
                    col_dom = false;
                }
            } else if a[(i, i)] < -tol.entry {
                diag_ok = false;
            }
        }
    }
    let row_sums: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let col_sums: Vec<f64> = (0..n).map(|j| a.column(j).sum()).collect();
    let eig = a.complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite()) {
        return Err(Error::validation("eigenvalue computation failed"));
    }
    let min_eig_real = eig.iter().fold(f64::INFINITY, |m, z| m.min(z.re));
    let alpha = row_dominance_gap(a);
    let is_z_plus = is_z && diag_ok;
    let is_m = is_z_plus && min_eig_real >= -tol.eig;
    let is_m0 = is_m && row_sums.iter().all(|s| s.abs() <= tol.row_sum);
    let pos_diag = (0..n).all(|i| a[(i, i)] > 0.0);
    Ok(MatrixClassReport {
        is_z,
        is_z_plus,
        is_m,
        is_m0,
        row_diagonally_dominant: alpha > 0.0 && pos_diag,
        column_entry_dominant: col_dom,
        row_sums,
        col_sums,
        min_eig_real,
        row_dominance_gap: alpha,
        varah_bound: if alpha > 0.0 && pos_diag { Some(1.0 / alpha) } else { None },
    })
}

/// α = min_k (A_kk − Σ_{j≠k} |A_kj|)
pub fn row_dominance_gap(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|k| a[(k, k)] - (0..a.ncols()).filter(|&j| j != k).map(|j| a[(k, j)].abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// ‖A⁻¹‖∞ ≤ 1/α for strictly row-dominant A with positive diagonal.
pub fn varah_bound(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::validation("matrix must be square and non-empty"));
    }
    let alpha = row_dominance_gap(a);
    let pos_diag = (0..a.nrows()).all(|i| a[(i, i)] > 0.0);
    if !(alpha > 0.0) || !pos_diag {
        return Err(Error::validation(format!(
            "matrix is not strictly row diagonally dominant with positive diagonal (alpha = {alpha})"
        )));
    }
    Ok(1.0 / alpha)
}

/// Max absolute row sum.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows()).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
