//! Intensity functions Λ, the myopic markup δ*, and W(p) = sup_δ Λ(δ)(δ − p).
//!
//! Tabulated intensities are interpolated through ln Λ with a natural cubic
//! spline, extended linearly outside the table. That keeps Λ positive and C²
//! everywhere, and the class ratio becomes ΛΛ″/Λ′² = 1 + s″/s′² for s = ln Λ.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::IntensityDoc;

const ROOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum IntensityFunction {
    /// Λ(x) = e^{−γx}
    Exponential { gamma: f64 },
    Tabulated(LogSpline),
}

/// Natural cubic spline through (x_i, ln Λ_i).
#[derive(Clone, Debug, PartialEq)]
pub struct LogSpline {
    x: Vec<f64>,
    lambda: Vec<f64>,
    s: Vec<f64>,
    /// second derivatives of s at the knots
    m: Vec<f64>,
}

impl LogSpline {
    fn new(x: &[f64], lambda: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 3 || lambda.len() != n {
            return Err(Error::validation("tabulated intensity needs at least 3 (x, lambda) pairs of equal length"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation("tabulated intensity abscissae must be strictly increasing"));
        }
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::validation("tabulated intensity values must be positive"));
        }
        let s: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
        // tridiagonal system for interior second derivatives (natural ends)
        let mut m = vec![0.0; n];
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            upper[i - 1] = h1;
            rhs[i - 1] = 6.0 * ((s[i + 1] - s[i]) / h1 - (s[i] - s[i - 1]) / h0);
        }
        // Thomas algorithm; sub-diagonal entry of row i is h_{i-1} = upper[i-1]
        for i in 1..k {
            let w = upper[i - 1] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        if k > 0 {
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(LogSpline { x: x.to_vec(), lambda: lambda.to_vec(), s, m })
    }

    fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    /// (s, s′, s″) at `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let n = self.x.len();
        let (x, s, m) = (&self.x, &self.s, &self.m);
        let slope_at = |i: usize| -> f64 {
            // derivative at knot i from the adjacent segment
            if i == 0 {
                let h = x[1] - x[0];
                (s[1] - s[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0
            } else {
                let h = x[i] - x[i - 1];
                (s[i] - s[i - 1]) / h + h * (m[i - 1] + 2.0 * m[i]) / 6.0
            }
        };
        if t <= x[0] {
            let d = slope_at(0);
            return (s[0] + d * (t - x[0]), d, 0.0);
        }
        if t >= x[n - 1] {
            let d = slope_at(n - 1);
            return (s[n - 1] + d * (t - x[n - 1]), d, 0.0);
        }
        let i = match x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        let val = a * s[i] + b * s[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
        let d1 = (s[i + 1] - s[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m[i] + (3.0 * b * b - 1.0) / 6.0 * h * m[i + 1];
        let d2 = a * m[i] + b * m[i + 1];
        (val, d1, d2)
    }
}

/// Class diagnostics on a probe set.
#[derive(Clone, Debug, Serialize)]
pub struct IntensityDiagnostics {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// smallest |Λ′| seen (must stay away from 0 for Λ′ < 0)
    pub min_slope: f64,
    pub min_value: f64,
    pub pass: bool,
}

impl IntensityFunction {
    pub fn exponential(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::validation("exponential intensity needs gamma > 0"));
        }
        Ok(IntensityFunction::Exponential { gamma })
    }

    pub fn tabulated(x: &[f64], lambda: &[f64]) -> Result<Self> {
        Ok(IntensityFunction::Tabulated(LogSpline::new(x, lambda)?))
    }

    /// Tabulate `f` on `n` equispaced points of [lo, hi].
    pub fn tabulate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        let x: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let l: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        Self::tabulated(&x, &l)
    }

    pub fn to_doc(&self) -> IntensityDoc {
        match self {
            IntensityFunction::Exponential { gamma } => IntensityDoc::Exponential { gamma: *gamma },
            IntensityFunction::Tabulated(sp) => {
                IntensityDoc::Tabulated { x: sp.x.clone(), lambda: sp.lambda.clone() }
            }
        }
    }

    pub fn lambda(&self, x: f64) -> f64 {
        match self {
            IntensityFunction::Exponential { gamma } => (-gamma * x).exp(),
            IntensityFunction::Tabulated(sp) => sp.eval(x).0.exp(),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match self {
            IntensityFunction::Exponential { gamma } => -gamma * (-gamma * x).exp(),
            IntensityFunction::Tabulated(sp) => {
                let (s, d, _) = sp.eval(x);
                d * s.exp()
            }
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            IntensityFunction::Exponential { gamma } => gamma * gamma * (-gamma * x).exp(),
            IntensityFunction::Tabulated(sp) => {
                let (s, d, dd) = sp.eval(x);
                (dd + d * d) * s.exp()
            }
        }
    }

    /// ΛΛ″/(Λ′)²
    pub fn ratio(&self, x: f64) -> f64 {
        match self {
            IntensityFunction::Exponential { .. } => {
                let d = self.d1(x);
                self.lambda(x) * self.d2(x) / (d * d)
            }
            IntensityFunction::Tabulated(sp) => {
                let (_, d, dd) = sp.eval(x);
                1.0 + dd / (d * d)
            }
        }
    }

    fn log_derivs(&self, x: f64) -> (f64, f64) {
        match self {
            IntensityFunction::Exponential { gamma } => (-gamma, 0.0),
            IntensityFunction::Tabulated(sp) => {
                let (_, d, dd) = sp.eval(x);
                (d, dd)
            }
        }
    }

    /// Right end of a bracket [p, hi] holding the maximiser of Λ(δ)(δ − p).
    fn bracket(&self, p: f64) -> Result<f64> {
        // h(δ) = 1 + s′(δ)(δ − p) is 1 at δ = p and decreasing beyond it
        let h = |d: f64| 1.0 + self.log_derivs(d).0 * (d - p);
        let (s1, _) = self.log_derivs(p);
        let mut width = if s1 < 0.0 { 2.0 / -s1 } else { 1.0 };
        for _ in 0..200 {
            if h(p + width) < 0.0 {
                return Ok(p + width);
            }
            width *= 2.0;
        }
        Err(Error::NonConvergence { what: format!("delta* bracket at p = {p}"), residual: h(p + width) })
    }

    /// Unique maximiser of Λ(δ)(δ − p).
    pub fn delta_star(&self, p: f64) -> Result<f64> {
        if let IntensityFunction::Exponential { gamma } = self {
            return Ok(p + 1.0 / gamma);
        }
        // Newton on h(δ) = 1 + s′(δ)(δ − p) (same root as Λ + Λ′(δ − p)),
        // safeguarded by the bracket.
        let mut lo = p;
        let mut hi = self.bracket(p)?;
        let mut d = 0.5 * (lo + hi);
        let mut last_step = hi - lo;
        for _ in 0..200 {
            let (s1, s2) = self.log_derivs(d);
            let h = 1.0 + s1 * (d - p);
            if h > 0.0 { lo = d } else { hi = d }
            let dh = s2 * (d - p) + s1;
            let mut next = if dh < 0.0 { d - h / dh } else { f64::NAN };
            // bisect when Newton leaves the bracket or stops halving its steps
            if !(next > lo && next < hi) || (next - d).abs() > 0.5 * last_step {
                next = 0.5 * (lo + hi);
            }
            let step = (next - d).abs();
            last_step = step;
            d = next;
            if step <= ROOT_TOL * d.abs().max(1.0) || hi - lo <= ROOT_TOL * d.abs().max(1.0) {
                return Ok(d);
            }
        }
        Err(Error::NonConvergence { what: format!("delta* at p = {p}"), residual: hi - lo })
    }

    /// (δ*)′(p) = 1 / (2 − r(δ*(p)))
    pub fn delta_star_prime(&self, p: f64) -> Result<f64> {
        if let IntensityFunction::Exponential { .. } = self {
            return Ok(1.0);
        }
        let d = self.delta_star(p)?;
        Ok(1.0 / (2.0 - self.ratio(d)))
    }

    /// W(p) = sup_δ Λ(δ)(δ − p).
    pub fn w_value(&self, p: f64) -> Result<f64> {
        if let IntensityFunction::Exponential { gamma } = self {
            return Ok((-gamma * p - 1.0).exp() / gamma);
        }
        let f = |d: f64| self.lambda(d) * (d - p);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (p, self.bracket(p)?);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..300 {
            if (b - a).abs() <= 1e-10 * p.abs().max(1.0) {
                return Ok(fc.max(fd));
            }
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = f(d);
            }
        }
        Err(Error::NonConvergence { what: format!("W({p}) golden-section search"), residual: b - a })
    }

    /// Checks Λ > 0, Λ′ < 0 and sup ΛΛ″/Λ′² ≤ 1 (tolerance 1e-10) on `probe`.
    pub fn validate(&self, probe: &[f64]) -> Result<IntensityDiagnostics> {
        if probe.is_empty() {
            return Err(Error::validation("probe set must be non-empty"));
        }
        if let IntensityFunction::Tabulated(sp) = self {
            let (lo, hi) = sp.range();
            if let Some(x) = probe.iter().find(|&&x| x < lo || x > hi) {
                return Err(Error::validation(format!(
                    "probe point {x} outside tabulated range [{lo}, {hi}]"
                )));
            }
        }
        let mut diag = IntensityDiagnostics {
            min_ratio: f64::INFINITY,
            max_ratio: f64::NEG_INFINITY,
            min_slope: f64::INFINITY,
            min_value: f64::INFINITY,
            pass: true,
        };
        for &x in probe {
            let (l, d) = (self.lambda(x), self.d1(x));
            let r = self.ratio(x);
            diag.min_ratio = diag.min_ratio.min(r);
            diag.max_ratio = diag.max_ratio.max(r);
            diag.min_value = diag.min_value.min(l);
            diag.min_slope = diag.min_slope.min(-d);
            if !(l > 0.0 && d < 0.0 && r.is_finite()) {
                diag.pass = false;
            }
        }
        if diag.max_ratio > 1.0 + 1e-10 {
            diag.pass = false;
        }
        Ok(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe() -> Vec<f64> {
        (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect()
    }

    fn logistic() -> IntensityFunction {
        IntensityFunction::tabulate(|x| 1.0 / (1.0 + x.exp()), -6.0, 6.0, 241).unwrap()
    }

    #[test]
    fn exponential_is_in_class() {
        for g in [1.0, 2.0] {
            let f = IntensityFunction::exponential(g).unwrap();
            let d = f.validate(&probe()).unwrap();
            assert!(d.pass);
            assert!((d.max_ratio - 1.0).abs() < 1e-14 && (d.min_ratio - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_values() {
        let f = IntensityFunction::exponential(1.0).unwrap();
        assert_eq!(f.delta_star(0.0).unwrap(), 1.0);
        assert!((f.w_value(0.0).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!((f.w_value(1.0).unwrap() - (-2f64).exp()).abs() < 1e-15);
        let f2 = IntensityFunction::exponential(2.0).unwrap();
        assert_eq!(f2.delta_star(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn w_matches_grid_maximisation() {
        let f = IntensityFunction::exponential(1.0).unwrap();
        for p in [0.0, 1.0] {
            let best = (0..200_001)
                .map(|i| -5.0 + 1e-4 * i as f64)
                .map(|d| f.lambda(d) * (d - p))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - f.w_value(p).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn spline_reproduces_exponential_table() {
        // ln Λ is linear, so the spline is exact
        let t = IntensityFunction::tabulate(|x| (-1.5 * x).exp(), -4.0, 4.0, 17).unwrap();
        for x in [-3.3, 0.0, 0.7, 3.9, 6.0] {
            assert!((t.lambda(x) - (-1.5 * x).exp()).abs() < 1e-12 * t.lambda(x));
            assert!((t.delta_star(x).unwrap() - (x + 1.0 / 1.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn logistic_table_passes_and_has_sublinear_markup() {
        let f = logistic();
        let d = f.validate(&probe()).unwrap();
        assert!(d.pass, "{d:?}");
        assert!(d.max_ratio < 1.0);
        let dp = f.delta_star_prime(0.3).unwrap();
        assert!(dp > 0.0 && dp < 1.0);
    }

    #[test]
    fn lorentzian_violates_the_ratio_bound() {
        let f = IntensityFunction::tabulate(|x| 1.0 / (1.0 + x * x), 0.1, 5.0, 99).unwrap();
        let probe: Vec<f64> = (0..=40).map(|i| 0.2 + 0.1 * i as f64).collect();
        let d = f.validate(&probe).unwrap();
        assert!(!d.pass);
        assert!(d.max_ratio > 1.0);
    }

    #[test]
    fn probe_outside_table_is_an_error() {
        let f = logistic();
        assert!(f.validate(&[7.0]).is_err());
    }

    #[test]
    fn delta_star_solves_first_order_condition() {
        let f = logistic();
        for p in [-2.0, -0.5, 0.0, 1.0, 2.5] {
            let d = f.delta_star(p).unwrap();
            let foc = f.lambda(d) + f.d1(d) * (d - p);
            assert!(foc.abs() < 1e-11, "p = {p}: {foc}");
        }
    }

    #[test]
    fn delta_star_does_not_ping_pong() {
        // plain safeguarded Newton bounced across the root here for 200 steps
        let f = IntensityFunction::tabulate(|x| 2.0 / (1.0 + x.exp()), -10.0, 12.0, 221).unwrap();
        let p = -4.1325620371111444;
        let d = f.delta_star(p).unwrap();
        assert!((f.lambda(d) + f.d1(d) * (d - p)).abs() < 1e-11);
    }
}
