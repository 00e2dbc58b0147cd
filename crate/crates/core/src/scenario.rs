//! Game instances: time grid, deterministic coefficient paths, agents, and
//! the JSON scenario document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intensity::IntensityFunction;
use crate::ode::{At, Stage};

/// Uniform grid 0 = t_0 < … < t_M = T.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::validation("horizon must be positive"));
        }
        if steps == 0 {
            return Err(Error::validation("steps must be positive"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.steps {
            self.horizon
        } else {
            self.horizon * (j as f64 / self.steps as f64)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.node(j)).collect()
    }

    /// Index of the node closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        ((t / self.step()).round().max(0.0) as usize).min(self.steps)
    }
}

/// A deterministic coefficient t ↦ c(t) on [0, T].
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientPath {
    Constant(f64),
    /// `values[i]` holds on [breaks[i-1], breaks[i]); a breakpoint belongs to
    /// the segment it opens.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    /// One value per grid node, linear in between.
    Sampled(Vec<f64>),
}

fn snap(t: f64, horizon: f64) -> f64 {
    1e-12 * horizon.max(1.0) + t.abs() * 1e-15
}

impl CoefficientPath {
    pub fn constant(v: f64) -> Self {
        CoefficientPath::Constant(v)
    }

    /// Uniform bound max |c|.
    pub fn bound(&self) -> f64 {
        match self {
            CoefficientPath::Constant(v) => v.abs(),
            CoefficientPath::Piecewise { values, .. } | CoefficientPath::Sampled(values) => {
                values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            CoefficientPath::Constant(v) => vec![*v],
            CoefficientPath::Piecewise { values, .. } | CoefficientPath::Sampled(values) => {
                values.clone()
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }

    fn segment(breaks: &[f64], t: f64, horizon: f64, right: bool) -> usize {
        let eps = snap(t, horizon);
        if right {
            breaks.iter().filter(|&&b| b <= t + eps).count()
        } else {
            breaks.iter().filter(|&&b| b < t - eps).count()
        }
    }

    fn sampled_at(values: &[f64], t: f64, horizon: f64) -> f64 {
        let n = values.len() - 1;
        if n == 0 {
            return values[0];
        }
        let x = (t / horizon * n as f64).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let w = x - i as f64;
        values[i] * (1.0 - w) + values[i + 1] * w
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: f64, horizon: f64) -> f64 {
        match self {
            CoefficientPath::Constant(v) => *v,
            CoefficientPath::Piecewise { breaks, values } => {
                values[Self::segment(breaks, t, horizon, true)]
            }
            CoefficientPath::Sampled(values) => Self::sampled_at(values, t, horizon),
        }
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64, horizon: f64) -> f64 {
        match self {
            CoefficientPath::Piecewise { breaks, values } => {
                values[Self::segment(breaks, t, horizon, false)]
            }
            _ => self.eval(t, horizon),
        }
    }

    /// Samples at interval ends (one-sided) and midpoints.
    pub fn staged(&self, grid: &TimeGrid) -> Staged {
        let m = grid.steps();
        let th = grid.horizon();
        let mut s = Staged { lo: Vec::with_capacity(m), mid: Vec::with_capacity(m), hi: Vec::with_capacity(m) };
        for k in 0..m {
            let (a, b) = (grid.node(k), grid.node(k + 1));
            s.lo.push(self.eval(a, th));
            s.mid.push(self.eval(0.5 * (a + b), th));
            s.hi.push(self.eval_left(b, th));
        }
        s
    }

    /// The same coefficient seen from time `offset`, on a horizon `horizon - offset`.
    pub fn shifted(&self, offset: f64, grid: &TimeGrid, first_node: usize) -> CoefficientPath {
        match self {
            CoefficientPath::Constant(v) => CoefficientPath::Constant(*v),
            CoefficientPath::Piecewise { breaks, values } => {
                let eps = snap(offset, grid.horizon());
                let skip = breaks.iter().filter(|&&b| b <= offset + eps).count();
                CoefficientPath::Piecewise {
                    breaks: breaks[skip..].iter().map(|b| b - offset).collect(),
                    values: values[skip..].to_vec(),
                }
            }
            CoefficientPath::Sampled(values) => CoefficientPath::Sampled(values[first_node..].to_vec()),
        }
    }

    pub(crate) fn validate(&self, grid: &TimeGrid, what: &str) -> Result<()> {
        let all_finite = self.values().iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::validation(format!("{what} has non-finite values")));
        }
        match self {
            CoefficientPath::Constant(_) => Ok(()),
            CoefficientPath::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::validation(format!(
                        "{what}: piecewise path needs one more value than interior breaks ({} values, {} breaks)",
                        values.len(),
                        breaks.len()
                    )));
                }
                let mut prev = 0.0;
                for &b in breaks {
                    if !(b > prev && b < grid.horizon()) {
                        return Err(Error::validation(format!(
                            "{what}: breaks must be strictly increasing inside (0, horizon)"
                        )));
                    }
                    prev = b;
                }
                Ok(())
            }
            CoefficientPath::Sampled(values) => {
                if values.len() != grid.steps() + 1 {
                    return Err(Error::validation(format!(
                        "{what}: sampled path has {} values, expected {}",
                        values.len(),
                        grid.steps() + 1
                    )));
                }
                Ok(())
            }
        }
    }
}

/// One value per grid node, right-continuous.
pub fn sample_coefficient(path: &CoefficientPath, grid: &TimeGrid) -> Result<Vec<f64>> {
    path.validate(grid, "coefficient")?;
    let th = grid.horizon();
    Ok((0..=grid.steps())
        .map(|j| path.eval(grid.node(j), th))
        .collect())
}

/// Coefficient samples for RK4 stages.
#[derive(Clone, Debug)]
pub struct Staged {
    pub lo: Vec<f64>,
    pub mid: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Staged {
    pub fn constant(v: f64, grid: &TimeGrid) -> Self {
        let m = grid.steps();
        Staged { lo: vec![v; m], mid: vec![v; m], hi: vec![v; m] }
    }

    pub fn at(&self, at: At) -> f64 {
        match at.stage {
            Stage::Lo => self.lo[at.k],
            Stage::Mid => self.mid[at.k],
            Stage::Hi => self.hi[at.k],
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        if j < self.lo.len() { self.lo[j] } else { self.hi[j - 1] }
    }

    pub fn map2(&self, other: &Staged, f: impl Fn(f64, f64) -> f64) -> Staged {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
        Staged { lo: z(&self.lo, &other.lo), mid: z(&self.mid, &other.mid), hi: z(&self.hi, &other.hi) }
    }

    /// ∫_{t_j}^T c for every node.
    pub fn tail_integral(&self, grid: &TimeGrid) -> Vec<f64> {
        crate::ode::tail_simpson(grid.step(), &self.lo, &self.mid, &self.hi)
    }

    /// ∫_0^{t_j} c for every node.
    pub fn running_integral(&self, grid: &TimeGrid) -> Vec<f64> {
        crate::ode::running_simpson(grid.step(), &self.lo, &self.mid, &self.hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentParams {
    pub q0: f64,
    pub phi: CoefficientPath,
    /// terminal penalty A
    pub terminal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum IntensitySpec {
    /// ζ − γδ fill rates; only the linear game understands this.
    Linear,
    Function(IntensityFunction),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XiSpec {
    Auto,
    Explicit(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketScenario {
    pub grid: TimeGrid,
    pub ask_flow: CoefficientPath,
    pub bid_flow: CoefficientPath,
    /// sorted by ascending q0
    pub agents: Vec<AgentParams>,
    pub intensity: IntensitySpec,
    pub zeta: Option<f64>,
    pub gamma: f64,
    pub xi: XiSpec,
    /// `order[i]` = position of sorted agent `i` in the source document
    pub order: Vec<usize>,
}

impl MarketScenario {
    /// Sorts agents by q0 (stable) and validates every invariant.
    pub fn new(
        grid: TimeGrid,
        ask_flow: CoefficientPath,
        bid_flow: CoefficientPath,
        agents: Vec<AgentParams>,
        intensity: IntensitySpec,
        zeta: Option<f64>,
        gamma: f64,
        xi: XiSpec,
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..agents.len()).collect();
        order.sort_by(|&i, &j| agents[i].q0.total_cmp(&agents[j].q0));
        let sorted = order.iter().map(|&i| agents[i].clone()).collect();
        let sc = MarketScenario { grid, ask_flow, bid_flow, agents: sorted, intensity, zeta, gamma, xi, order };
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<()> {
        if self.agents.len() < 2 {
            return Err(Error::validation("at least 2 agents required"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::validation("gamma must be positive"));
        }
        self.ask_flow.validate(&self.grid, "ask flow")?;
        self.bid_flow.validate(&self.grid, "bid flow")?;
        if self.ask_flow.min_value() <= 0.0 {
            return Err(Error::validation("ask flow must be strictly positive"));
        }
        if self.bid_flow.min_value() <= 0.0 {
            return Err(Error::validation("bid flow must be strictly positive"));
        }
        for (i, ag) in self.agents.iter().enumerate() {
            if !ag.q0.is_finite() {
                return Err(Error::validation(format!("agent {}: q0 must be finite", self.order[i])));
            }
            ag.phi.validate(&self.grid, "running penalty phi")?;
            if ag.phi.min_value() < 0.0 {
                return Err(Error::validation("running penalty phi must be non-negative"));
            }
            if !(ag.terminal >= 0.0 && ag.terminal.is_finite()) {
                return Err(Error::validation("terminal penalty A must be non-negative"));
            }
        }
        if let Some(z) = self.zeta {
            if !z.is_finite() {
                return Err(Error::validation("zeta must be finite"));
            }
        }
        if let (XiSpec::Explicit(x), IntensitySpec::Function(f)) = (self.xi, &self.intensity) {
            let d0 = f.delta_star(0.0)?.abs();
            if !(x >= d0) {
                return Err(Error::validation(format!("xi = {x} must be at least |delta*(0)| = {d0}")));
            }
        }
        if let XiSpec::Explicit(x) = self.xi {
            if !(x > 0.0) {
                return Err(Error::validation("xi must be positive"));
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn q0(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.q0).collect()
    }

    pub fn intensity_fn(&self) -> Result<&IntensityFunction> {
        match &self.intensity {
            IntensitySpec::Function(f) => Ok(f),
            IntensitySpec::Linear => {
                Err(Error::validation("this solver needs an intensity function, not the linear model"))
            }
        }
    }

    pub fn zeta_value(&self) -> Result<f64> {
        self.zeta.ok_or_else(|| Error::validation("zeta is required by the linear model"))
    }

    /// Shared (φ, A) when all agents agree.
    pub fn homogeneous_penalties(&self) -> Result<(CoefficientPath, f64)> {
        let first = &self.agents[0];
        for ag in &self.agents[1..] {
            if ag.phi != first.phi || ag.terminal != first.terminal {
                return Err(Error::validation("agents must share phi and A for this solver"));
            }
        }
        Ok((first.phi.clone(), first.terminal))
    }

    /// a-priori bound on |Y|: 2(Ā + φ̄T)(max|q0| + (ā+b̄)Λ(0)T)
    pub fn adjoint_bound(&self) -> Result<f64> {
        let f = self.intensity_fn()?;
        let t = self.grid.horizon();
        let a_bar = self.agents.iter().fold(0.0, |m, a| f64::max(m, a.terminal));
        let phi_bar = self.agents.iter().fold(0.0, |m, a| f64::max(m, a.phi.bound()));
        let q_bar = self.agents.iter().fold(0.0, |m, a| f64::max(m, a.q0.abs()));
        let flow = self.ask_flow.bound() + self.bid_flow.bound();
        Ok(2.0 * (a_bar + phi_bar * t) * (q_bar + flow * f.lambda(0.0) * t))
    }

    /// Truncation level ξ. `auto` takes max(|δ*(0)|, 10·adjoint bound) and
    /// adds |δ*(0)| so the clamp stays slack even with zero penalties.
    pub fn xi_value(&self) -> Result<f64> {
        match self.xi {
            XiSpec::Explicit(x) => Ok(x),
            XiSpec::Auto => {
                let d0 = self.intensity_fn()?.delta_star(0.0)?.abs();
                Ok(d0.max(10.0 * self.adjoint_bound()?) + d0)
            }
        }
    }

    /// Same game restarted at node `j` with new inventories (sorted order).
    pub fn restart_at(&self, j: usize, q0: &[f64]) -> Result<MarketScenario> {
        if j >= self.grid.steps() {
            return Err(Error::validation("restart node must precede the horizon"));
        }
        if q0.len() != self.n_agents() {
            return Err(Error::validation("restart needs one inventory per agent"));
        }
        let s = self.grid.node(j);
        let grid = TimeGrid::new(self.grid.horizon() - s, self.grid.steps() - j)?;
        let agents = self
            .agents
            .iter()
            .zip(q0)
            .map(|(a, &q)| AgentParams { q0: q, phi: a.phi.shifted(s, &self.grid, j), terminal: a.terminal })
            .collect();
        MarketScenario::new(
            grid,
            self.ask_flow.shifted(s, &self.grid, j),
            self.bid_flow.shifted(s, &self.grid, j),
            agents,
            self.intensity.clone(),
            self.zeta,
            self.gamma,
            self.xi,
        )
    }

    pub fn to_document(&self) -> ScenarioDoc {
        let mut agents = vec![None; self.n_agents()];
        for (i, &pos) in self.order.iter().enumerate() {
            let a = &self.agents[i];
            agents[pos] = Some(AgentDoc {
                q0: a.q0,
                phi: match &a.phi {
                    CoefficientPath::Constant(v) => PhiDoc::Value(*v),
                    p => PhiDoc::Path(PathDoc::from(p)),
                },
                a: a.terminal,
            });
        }
        ScenarioDoc {
            horizon: self.grid.horizon(),
            steps: self.grid.steps(),
            gamma: self.gamma,
            zeta: self.zeta,
            intensity: match &self.intensity {
                IntensitySpec::Linear => IntensityDoc::Linear {},
                IntensitySpec::Function(f) => f.to_doc(),
            },
            ask_flow: PathDoc::from(&self.ask_flow),
            bid_flow: PathDoc::from(&self.bid_flow),
            agents: agents.into_iter().map(Option::unwrap).collect(),
            xi: match self.xi {
                XiSpec::Auto => XiDoc::Auto("auto".into()),
                XiSpec::Explicit(x) => XiDoc::Value(x),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// document format

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathDoc {
    Constant { value: f64 },
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    Sampled { values: Vec<f64> },
}

impl From<&CoefficientPath> for PathDoc {
    fn from(p: &CoefficientPath) -> Self {
        match p {
            CoefficientPath::Constant(v) => PathDoc::Constant { value: *v },
            CoefficientPath::Piecewise { breaks, values } => {
                PathDoc::Piecewise { breaks: breaks.clone(), values: values.clone() }
            }
            CoefficientPath::Sampled(values) => PathDoc::Sampled { values: values.clone() },
        }
    }
}

impl From<PathDoc> for CoefficientPath {
    fn from(d: PathDoc) -> Self {
        match d {
            PathDoc::Constant { value } => CoefficientPath::Constant(value),
            PathDoc::Piecewise { breaks, values } => CoefficientPath::Piecewise { breaks, values },
            PathDoc::Sampled { values } => CoefficientPath::Sampled(values),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PhiDoc {
    Value(f64),
    Path(PathDoc),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    pub q0: f64,
    pub phi: PhiDoc,
    #[serde(rename = "A")]
    pub a: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum IntensityDoc {
    Exponential { gamma: f64 },
    Linear {},
    /// Λ sampled on an increasing abscissa.
    Tabulated { x: Vec<f64>, lambda: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum XiDoc {
    Auto(String),
    Value(f64),
}

impl Default for XiDoc {
    fn default() -> Self {
        XiDoc::Auto("auto".into())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub horizon: f64,
    pub steps: usize,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    pub intensity: IntensityDoc,
    pub ask_flow: PathDoc,
    pub bid_flow: PathDoc,
    pub agents: Vec<AgentDoc>,
    #[serde(default)]
    pub xi: XiDoc,
}

impl ScenarioDoc {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario documents always serialise")
    }

    pub fn into_scenario(self) -> Result<MarketScenario> {
        let grid = TimeGrid::new(self.horizon, self.steps)?;
        let intensity = match self.intensity {
            IntensityDoc::Linear {} => IntensitySpec::Linear,
            IntensityDoc::Exponential { gamma } => {
                IntensitySpec::Function(IntensityFunction::exponential(gamma)?)
            }
            IntensityDoc::Tabulated { x, lambda } => {
                IntensitySpec::Function(IntensityFunction::tabulated(&x, &lambda)?)
            }
        };
        let xi = match self.xi {
            XiDoc::Auto(s) if s == "auto" => XiSpec::Auto,
            XiDoc::Auto(s) => return Err(Error::validation(format!("xi must be \"auto\" or a number, got {s:?}"))),
            XiDoc::Value(x) => XiSpec::Explicit(x),
        };
        let agents = self
            .agents
            .into_iter()
            .map(|a| AgentParams {
                q0: a.q0,
                phi: match a.phi {
                    PhiDoc::Value(v) => CoefficientPath::Constant(v),
                    PhiDoc::Path(p) => p.into(),
                },
                terminal: a.a,
            })
            .collect();
        MarketScenario::new(
            grid,
            self.ask_flow.into(),
            self.bid_flow.into(),
            agents,
            intensity,
            self.zeta,
            self.gamma,
            xi,
        )
    }
}

pub fn parse_scenario(text: &str) -> Result<MarketScenario> {
    ScenarioDoc::parse(text)?.into_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<MarketScenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "horizon": 1.0, "steps": 10, "gamma": 1.0, "zeta": 1.0,
        "intensity": {"kind": "exponential", "gamma": 1.0},
        "ask_flow": {"kind": "constant", "value": 1.0},
        "bid_flow": {"kind": "constant", "value": 1.0},
        "agents": [{"q0": 1.0, "phi": 0.0, "A": 0.5}, {"q0": -1.0, "phi": 0.0, "A": 0.5}],
        "xi": "auto"
    }"#;

    #[test]
    fn minimal_document_loads_and_sorts() {
        let sc = parse_scenario(MINIMAL).unwrap();
        assert_eq!(sc.n_agents(), 2);
        assert_eq!(sc.q0(), vec![-1.0, 1.0]);
        assert_eq!(sc.order, vec![1, 0]);
    }

    #[test]
    fn zero_ask_flow_rejected() {
        let text = MINIMAL.replace(
            r#""ask_flow": {"kind": "constant", "value": 1.0}"#,
            r#""ask_flow": {"kind": "constant", "value": 0.0}"#,
        );
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("ask flow must be strictly positive"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace(r#""steps": 10,"#, r#""steps": 10, "colour": "red","#);
        assert!(matches!(parse_scenario(&text), Err(Error::Parse(_))));
        let text = MINIMAL.replace(r#""A": 0.5}, {"#, r#""A": 0.5, "B": 1}, {"#);
        assert!(matches!(parse_scenario(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn sample_constant_and_piecewise() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        assert_eq!(sample_coefficient(&CoefficientPath::Constant(1.5), &g).unwrap(), vec![1.5; 3]);
        let p = CoefficientPath::Piecewise { breaks: vec![0.5], values: vec![1.0, 2.0] };
        assert_eq!(sample_coefficient(&p, &g).unwrap(), vec![1.0, 2.0, 2.0]);
        let s = CoefficientPath::Sampled(vec![1.0, 2.0]);
        assert!(sample_coefficient(&s, &g).is_err());
    }

    #[test]
    fn staged_piecewise_sees_both_sides() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let p = CoefficientPath::Piecewise { breaks: vec![0.5], values: vec![1.0, 2.0] };
        let s = p.staged(&g);
        assert_eq!(s.hi[0], 1.0);
        assert_eq!(s.lo[1], 2.0);
    }

    #[test]
    fn restart_shifts_breaks() {
        let mut sc = parse_scenario(MINIMAL).unwrap();
        sc.ask_flow = CoefficientPath::Piecewise { breaks: vec![0.25, 0.75], values: vec![1.0, 2.0, 3.0] };
        let r = sc.restart_at(5, &[0.0, 0.0]).unwrap();
        assert_eq!(r.grid.steps(), 5);
        assert!((r.grid.horizon() - 0.5).abs() < 1e-15);
        match r.ask_flow {
            CoefficientPath::Piecewise { breaks, values } => {
                assert!((breaks[0] - 0.25).abs() < 1e-15);
                assert_eq!(values, vec![2.0, 3.0]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn auto_xi_covers_adjoint_bound() {
        let sc = parse_scenario(MINIMAL).unwrap();
        // 2 (0.5 + 0)(1 + 2·1·1) = 3  ->  max(1, 30) + 1
        assert!((sc.xi_value().unwrap() - 31.0).abs() < 1e-12);
    }
}
