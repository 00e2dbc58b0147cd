//! Deterministic characteristic Riccati equation
//!
//! ```text
//! X′ = 2φ I − X B X,   X(T) = −2A I
//! ```
//!
//! integrated directly (RK4, blow-up monitored) or through the linear
//! system V′ = B U, U′ = 2φ V with X = U V⁻¹. For N = 2 and M₀-type B the
//! scalar reduction (ϑ, χ) gives an independent construction.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{self, At, BlowUp, Dense, Stage};
use crate::scenario::{Staged, TimeGrid};

const BLOW_UP_LIMIT: f64 = 1e8;
const DOUBLING_LIMIT: f64 = 1e-2;

/// Time-dependent N×N matrix evaluated at RK4 stage points.
pub struct MatrixPath {
    n: usize,
    f: Box<dyn Fn(At) -> DMatrix<f64> + Send + Sync>,
}

impl MatrixPath {
    pub fn constant(m: DMatrix<f64>) -> Self {
        MatrixPath { n: m.nrows(), f: Box::new(move |_| m.clone()) }
    }

    pub fn from_fn(n: usize, f: impl Fn(At) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        MatrixPath { n, f: Box::new(f) }
    }

    /// 𝔟-pattern [[b1, −b1], [−b2, b2]].
    pub fn two_dim(b1: Staged, b2: Staged) -> Self {
        MatrixPath::from_fn(2, move |at| {
            let (x, y) = (b1.at(at), b2.at(at));
            DMatrix::from_row_slice(2, 2, &[x, -x, -y, y])
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn at(&self, at: At) -> DMatrix<f64> {
        (self.f)(at)
    }
}

#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    /// `x[j]` for nodes `j >= first_valid`; earlier entries are NaN after a blow-up
    pub x: Vec<DMatrix<f64>>,
    pub first_valid: usize,
    pub blow_up: Option<BlowUp>,
    /// −2A − 2∫ₜᵀφ at every node; empty for [`integrate_riccati_general`]
    pub row_sum_target: Vec<f64>,
    /// max |rowsum(X(t)) − target(t)| over valid nodes (NaN without a target)
    pub row_sum_residual: f64,
    pub doubling_error: f64,
}

impl RiccatiSolution {
    fn finish(grid: &TimeGrid, x: Vec<DMatrix<f64>>, first_valid: usize, blow_up: Option<BlowUp>, target: Vec<f64>, doubling_error: f64) -> Self {
        let mut res: f64 = 0.0;
        for j in first_valid..x.len() {
            for r in 0..x[j].nrows() {
                res = res.max((x[j].row(r).sum() - target[j]).abs());
            }
        }
        RiccatiSolution {
            grid: grid.clone(),
            x,
            first_valid,
            blow_up,
            row_sum_target: target,
            row_sum_residual: res,
            doubling_error,
        }
    }

    pub fn bounded(&self) -> bool {
        self.blow_up.is_none()
    }

    /// max over valid nodes of max entry |X − other|
    pub fn max_diff(&self, other: &RiccatiSolution) -> f64 {
        let start = self.first_valid.max(other.first_valid);
        (start..self.x.len()).map(|j| (&self.x[j] - &other.x[j]).amax()).fold(0.0, f64::max)
    }
}

fn row_sum_target(phi: &Staged, a: f64, grid: &TimeGrid) -> Vec<f64> {
    phi.tail_integral(grid).iter().map(|i| -2.0 * a - 2.0 * i).collect()
}

/// Backward RK4 of X′ = 2φI − XBX from X(T) = −2A·I.
pub fn integrate_matrix_riccati(b: &MatrixPath, phi: &Staged, a: f64, grid: &TimeGrid) -> Result<RiccatiSolution> {
    if a < 0.0 {
        return Err(Error::validation("terminal penalty A must be non-negative"));
    }
    let n = b.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let mon = ode::rk4_backward_monitored(grid, &id * (-2.0 * a), BLOW_UP_LIMIT, DOUBLING_LIMIT, |at, x: &DMatrix<f64>| {
        &id * (2.0 * phi.at(at)) - x * b.at(at) * x
    });
    let first_valid = mon.states.iter().position(Option::is_some).unwrap_or(grid.steps());
    let x = mon
        .states
        .into_iter()
        .map(|s| s.unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN)))
        .collect();
    Ok(RiccatiSolution::finish(grid, x, first_valid, mon.blow_up, row_sum_target(phi, a, grid), mon.doubling_error))
}

/// Backward RK4 of X′ = D − XBX from an arbitrary terminal value.
pub fn integrate_riccati_general(d: &MatrixPath, b: &MatrixPath, terminal: DMatrix<f64>, grid: &TimeGrid) -> Result<RiccatiSolution> {
    let n = b.dim();
    if d.dim() != n || terminal.nrows() != n || terminal.ncols() != n {
        return Err(Error::validation("Riccati data must share one dimension"));
    }
    let mon = ode::rk4_backward_monitored(grid, terminal, BLOW_UP_LIMIT, DOUBLING_LIMIT, |at, x: &DMatrix<f64>| {
        d.at(at) - x * b.at(at) * x
    });
    let first_valid = mon.states.iter().position(Option::is_some).unwrap_or(grid.steps());
    let x = mon
        .states
        .into_iter()
        .map(|s| s.unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN)))
        .collect();
    Ok(RiccatiSolution {
        grid: grid.clone(),
        x,
        first_valid,
        blow_up: mon.blow_up,
        row_sum_target: Vec::new(),
        row_sum_residual: f64::NAN,
        doubling_error: mon.doubling_error,
    })
}

#[derive(Clone, Debug)]
pub struct RadonPair {
    pub u: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub det_v: Vec<f64>,
}

impl RadonPair {
    /// X = U V⁻¹ at node `j`, if V is invertible there.
    pub fn x(&self, j: usize) -> Option<DMatrix<f64>> {
        self.v[j].clone().try_inverse().map(|vi| &self.u[j] * vi)
    }

    /// Riccati solution recovered from the pair; blow-up where det V → 0.
    pub fn to_solution(&self, grid: &TimeGrid, phi: &Staged, a: f64) -> RiccatiSolution {
        let n = self.u[0].nrows();
        let m = grid.steps();
        let mut xs = vec![DMatrix::from_element(n, n, f64::NAN); m + 1];
        let mut first_valid = 0;
        let mut blow_up = None;
        for j in (0..=m).rev() {
            match self.x(j).filter(|x| x.amax() <= BLOW_UP_LIMIT) {
                Some(x) => xs[j] = x,
                None => {
                    first_valid = j + 1;
                    blow_up = Some(BlowUp { time: grid.node(j), reason: "det V vanishes".into() });
                    break;
                }
            }
        }
        RiccatiSolution::finish(grid, xs, first_valid, blow_up, row_sum_target(phi, a, grid), 0.0)
    }
}

/// Backward RK4 of V′ = BU, U′ = 2φV with V(T) = I, U(T) = −2A·I.
pub fn radon_integrate(b: &MatrixPath, phi: &Staged, a: f64, grid: &TimeGrid) -> Result<RadonPair> {
    if a < 0.0 {
        return Err(Error::validation("terminal penalty A must be non-negative"));
    }
    let n = b.dim();
    // stacked state [U; V]
    let mut end = DMatrix::<f64>::zeros(2 * n, n);
    for i in 0..n {
        end[(i, i)] = -2.0 * a;
        end[(n + i, i)] = 1.0;
    }
    let states = ode::rk4_backward(grid, end, |at, s: &DMatrix<f64>| {
        let u = s.rows(0, n);
        let v = s.rows(n, n);
        let mut d = DMatrix::<f64>::zeros(2 * n, n);
        d.rows_mut(0, n).copy_from(&(v * (2.0 * phi.at(at))));
        d.rows_mut(n, n).copy_from(&(b.at(at) * u));
        d
    });
    let u: Vec<DMatrix<f64>> = states.iter().map(|s| s.rows(0, n).into_owned()).collect();
    let v: Vec<DMatrix<f64>> = states.iter().map(|s| s.rows(n, n).into_owned()).collect();
    let det_v = v.iter().map(|m| m.determinant()).collect();
    Ok(RadonPair { u, v, det_v })
}

/// Scalar pieces of the N = 2 construction.
#[derive(Clone, Debug)]
pub struct TwoDimReduction {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub chi1: Vec<f64>,
    pub chi2: Vec<f64>,
    /// 𝒮_t = −2A − 2∫ₜᵀφ
    pub s: Vec<f64>,
    /// max |ϑ₂ − (χ₁ − 𝒮)|: the two quadratures must agree
    pub consistency: f64,
    pub x: RiccatiSolution,
}

/// ϑ₁ from its scalar Riccati equation, ϑ₂ and χ₁ from their integral
/// representations, χ₂ = ϑ₁ − χ₁ + 𝒮, X = [[χ₁, 𝒮−χ₁], [𝒮−χ₂, χ₂]].
///
/// Quadratures are per-interval Simpson; midpoint values of ϑ₁ and of the
/// running exponent come from cubic Hermite interpolation.
pub fn two_dim_reduction(b1: &Staged, b2: &Staged, phi: &Staged, a: f64, grid: &TimeGrid) -> Result<TwoDimReduction> {
    if a < 0.0 {
        return Err(Error::validation("terminal penalty A must be non-negative"));
    }
    let m = grid.steps();
    let h = grid.step();
    let bsum = b1.map2(b2, |x, y| x + y);
    let rhs = |at: At, th: &f64| -bsum.at(at) * th * th + 2.0 * phi.at(at);
    let theta1: Dense<f64> = ode::rk4_backward_dense(grid, -2.0 * a, rhs);

    // 𝒮 at nodes and midpoints
    let tail_phi = phi.tail_integral(grid);
    let s: Vec<f64> = tail_phi.iter().map(|i| -2.0 * a - 2.0 * i).collect();
    let s_mid: Vec<f64> = (0..m).map(|k| s[k + 1] - 2.0 * 0.25 * h * (phi.mid[k] + phi.hi[k])).collect();

    // c = ϑ₁(𝔟₁+𝔟₂) and its running integral C
    let c_at = |at: At| theta1.at(at) * bsum.at(at);
    let mut cap = vec![0.0; m + 1];
    for k in 0..m {
        let (lo, mi, hi) = (c_at(At::lo(grid, k)), c_at(At::mid(grid, k)), c_at(At::hi(grid, k)));
        cap[k + 1] = cap[k] + h / 6.0 * (lo + 4.0 * mi + hi);
    }
    let cap_mid: Vec<f64> = (0..m)
        .map(|k| 0.5 * (cap[k] + cap[k + 1]) + h / 8.0 * (c_at(At::lo(grid, k)) - c_at(At::hi(grid, k))))
        .collect();
    let c_end = cap[m];

    let s_at = |at: At| match at.stage {
        Stage::Lo => s[at.k],
        Stage::Mid => s_mid[at.k],
        Stage::Hi => s[at.k + 1],
    };
    let cap_at = |at: At| match at.stage {
        Stage::Lo => cap[at.k],
        Stage::Mid => cap_mid[at.k],
        Stage::Hi => cap[at.k + 1],
    };
    // tail ∫ₜᵀ g(u) e^{C(u)} du with Simpson per interval
    let tail = |g: &dyn Fn(At) -> f64| -> Vec<f64> {
        let w = |at: At| g(at) * (cap_at(at) - c_end).exp();
        let lo: Vec<f64> = (0..m).map(|k| w(At::lo(grid, k))).collect();
        let mi: Vec<f64> = (0..m).map(|k| w(At::mid(grid, k))).collect();
        let hi: Vec<f64> = (0..m).map(|k| w(At::hi(grid, k))).collect();
        ode::tail_simpson(h, &lo, &mi, &hi)
    };
    let g2 = |at: At| theta1.at(at) * b1.at(at) * s_at(at);
    let gchi = |at: At| 2.0 * phi.at(at) + b2.at(at) * s_at(at) * theta1.at(at);
    let i2 = tail(&g2);
    let ichi = tail(&gchi);
    let mut theta2 = vec![0.0; m + 1];
    let mut chi1 = vec![0.0; m + 1];
    let mut chi2 = vec![0.0; m + 1];
    let mut xs = Vec::with_capacity(m + 1);
    let mut consistency: f64 = 0.0;
    for j in 0..=m {
        // e^{∫ₜᵘ c} = e^{C(u) − C(t)}; the tails carry e^{C(u) − C(T)}
        let back = (c_end - cap[j]).exp();
        theta2[j] = i2[j] * back;
        chi1[j] = -(2.0 * a * back + ichi[j] * back);
        chi2[j] = theta1.y[j] - chi1[j] + s[j];
        consistency = consistency.max((theta2[j] - (chi1[j] - s[j])).abs());
        xs.push(DMatrix::from_row_slice(2, 2, &[chi1[j], s[j] - chi1[j], s[j] - chi2[j], chi2[j]]));
    }
    let x = RiccatiSolution::finish(grid, xs, 0, None, s.clone(), 0.0);
    Ok(TwoDimReduction { theta1: theta1.y, theta2, chi1, chi2, s, consistency, x })
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoDimProperties {
    pub non_positive: bool,
    pub row_sums_ok: bool,
    pub column_dominant: bool,
    pub max_entry: f64,
    pub row_sum_residual: f64,
    /// min over t of (X₂₁ − X₁₁) ∧ (X₁₂ − X₂₂)
    pub dominance_margin: f64,
}

impl TwoDimProperties {
    pub fn pass(&self) -> bool {
        self.non_positive && self.row_sums_ok && self.column_dominant
    }
}

/// Non-positivity, row sums = 𝒮, and X₁₁ ≤ X₂₁, X₂₂ ≤ X₁₂ at every valid node.
pub fn check_two_dim_properties(x: &RiccatiSolution) -> Result<TwoDimProperties> {
    let tol = 1e-9;
    if x.x.first().map(|m| m.nrows()) != Some(2) {
        return Err(Error::validation("two-dimensional checks need a 2x2 solution"));
    }
    let mut max_entry = f64::NEG_INFINITY;
    let mut margin = f64::INFINITY;
    for m in &x.x[x.first_valid..] {
        max_entry = max_entry.max(m.max());
        margin = margin.min(m[(1, 0)] - m[(0, 0)]).min(m[(0, 1)] - m[(1, 1)]);
    }
    Ok(TwoDimProperties {
        non_positive: max_entry <= tol,
        row_sums_ok: x.row_sum_residual <= 1e-6,
        column_dominant: margin >= -tol,
        max_entry,
        row_sum_residual: x.row_sum_residual,
        dominance_margin: margin,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProjectedAsymptotics {
    /// lim vᵀ R v for v = (1, −1)
    pub s_inf: f64,
    /// R v → w_coeff · v
    pub w_coeff: f64,
}

/// Long-horizon limit of R′ = 2φI − R(κvvᵀ)R projected on v = (1, −1).
/// s = vᵀRv solves s′ = 4φ − κs²; the (1, 1) direction has no limit.
pub fn projected_asymptotics(phi: f64, kappa: f64) -> Result<ProjectedAsymptotics> {
    if !(phi > 0.0 && kappa > 0.0) {
        return Err(Error::validation("projected asymptotics need phi > 0 and kappa > 0"));
    }
    let r = (phi / kappa).sqrt();
    Ok(ProjectedAsymptotics { s_inf: -2.0 * r, w_coeff: -r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_closed_form() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let b = MatrixPath::constant(DMatrix::from_element(1, 1, 1.0));
        let sol = integrate_matrix_riccati(&b, &Staged::constant(0.0, &g), 1.0, &g).unwrap();
        assert!((sol.x[0][(0, 0)] + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_data_zero_solution() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let b = MatrixPath::constant(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -0.5, 0.5]));
        let z = Staged::constant(0.0, &g);
        let sol = integrate_matrix_riccati(&b, &z, 0.0, &g).unwrap();
        assert!(sol.x.iter().all(|m| m.amax() == 0.0));
        let rp = radon_integrate(&b, &z, 0.0, &g).unwrap();
        assert!(rp.det_v.iter().all(|d| (d - 1.0).abs() < 1e-15));
    }

    #[test]
    fn asymptotics_values() {
        assert_eq!(projected_asymptotics(1.0, 1.0).unwrap().s_inf, -2.0);
        assert_eq!(projected_asymptotics(4.0, 1.0).unwrap().s_inf, -4.0);
        assert!(projected_asymptotics(0.0, 1.0).is_err());
    }

    #[test]
    fn blow_up_is_flagged_not_fatal() {
        // positive-definite B with a positive terminal value escapes in finite time
        let g = TimeGrid::new(2.0, 2000).unwrap();
        let b = MatrixPath::constant(DMatrix::from_element(1, 1, -1.0));
        let sol = integrate_matrix_riccati(&b, &Staged::constant(0.0, &g), 1.0, &g).unwrap();
        assert!(sol.blow_up.is_some());
        assert!(sol.first_valid > 0);
    }

    fn crit_case(m: usize) -> (TimeGrid, Staged, RiccatiSolution, RadonPair) {
        let g = TimeGrid::new(1.0, m).unwrap();
        let half = Staged::constant(0.5, &g);
        let phi = Staged::constant(1.0, &g);
        let b = MatrixPath::two_dim(half.clone(), half);
        let x = integrate_matrix_riccati(&b, &phi, 1.0, &g).unwrap();
        let r = radon_integrate(&b, &phi, 1.0, &g).unwrap();
        (g, phi, x, r)
    }

    #[test]
    fn radon_matches_direct_and_converges() {
        let (g, phi, x, r) = crit_case(1000);
        assert!(x.max_diff(&r.to_solution(&g, &phi, 1.0)) < 1e-6);
        let (g1, p1, x1, r1) = crit_case(16);
        let (g2, p2, x2, r2) = crit_case(32);
        let d1 = x1.max_diff(&r1.to_solution(&g1, &p1, 1.0));
        let d2 = x2.max_diff(&r2.to_solution(&g2, &p2, 1.0));
        assert!(d1 / d2 >= 8.0, "{d1} {d2}");
    }

    #[test]
    fn reduction_matches_direct() {
        let (g, phi, x, _) = crit_case(1000);
        assert!(x.row_sum_residual < 1e-6);
        let half = Staged::constant(0.5, &g);
        let red = two_dim_reduction(&half, &half, &phi, 1.0, &g).unwrap();
        assert!(red.x.max_diff(&x) < 1e-6, "{}", red.x.max_diff(&x));
        assert!(red.consistency < 1e-6);
        assert!(check_two_dim_properties(&x).unwrap().pass());
    }

    #[test]
    fn reduction_asymmetric_rates() {
        let g = TimeGrid::new(2.0, 800).unwrap();
        let b1 = Staged::constant(1.3, &g);
        let b2 = Staged::constant(0.4, &g);
        let phi = Staged::constant(0.7, &g);
        let x = integrate_matrix_riccati(&MatrixPath::two_dim(b1.clone(), b2.clone()), &phi, 0.3, &g).unwrap();
        let red = two_dim_reduction(&b1, &b2, &phi, 0.3, &g).unwrap();
        assert!(red.x.max_diff(&x) < 1e-6, "{}", red.x.max_diff(&x));
    }

    #[test]
    fn theta_closed_form() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        let half = Staged::constant(0.5, &g);
        let red = two_dim_reduction(&half, &half, &Staged::constant(1.0, &g), 0.0, &g).unwrap();
        let want = -(2f64.sqrt()) * (2f64.sqrt()).tanh();
        assert!((red.theta1[0] - want).abs() < 1e-6);
    }
}
