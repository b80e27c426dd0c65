//! Coefficient functionals `Q, b, gamma, sigma` and the cost pair `(L, Psi)`.
//!
//! Coefficients form a closed parametric family so their Lipschitz constants
//! (w.r.t. the sup-norm of the delay window) and bounds are known in closed
//! form. Boundedness of coefficients and costs is realised by optional clamps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Path, Segment, TimeGrid};
use crate::rng::{stream, stream_rng};

/// Upper bound on the neutral Lipschitz constant `k0`.
pub const K0_LIMIT: f64 = 0.25;

/// State functional evaluated on a delay window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Base {
    /// `scale * x(0)`
    PointwiseAt0 { scale: f64 },
    /// `scale * int_{t-tau}^t X(s) ds`
    IntegralKernel { scale: f64 },
    /// `scale * x(0) + offset`
    Affine { scale: f64, offset: f64 },
}

impl Base {
    pub fn eval(&self, seg: &Segment<'_>) -> f64 {
        match *self {
            Base::PointwiseAt0 { scale } => scale * seg.at_zero(),
            Base::IntegralKernel { scale } => scale * seg.integral(),
            Base::Affine { scale, offset } => scale * seg.at_zero() + offset,
        }
    }

    /// Lipschitz constant w.r.t. the window sup-norm.
    pub fn lipschitz(&self, tau: f64) -> f64 {
        match *self {
            Base::PointwiseAt0 { scale } | Base::Affine { scale, .. } => scale.abs(),
            Base::IntegralKernel { scale } => scale.abs() * tau,
        }
    }

    /// Derivative with respect to the newest node value `x(0)`.
    pub fn newest_node_weight(&self, h: f64, window_steps: usize) -> f64 {
        match *self {
            Base::PointwiseAt0 { scale } | Base::Affine { scale, .. } => scale,
            Base::IntegralKernel { scale } if window_steps > 0 => 0.5 * scale * h,
            Base::IntegralKernel { .. } => 0.0,
        }
    }

    pub fn zero() -> Self {
        Base::PointwiseAt0 { scale: 0.0 }
    }
}

/// Control enters as `(c0 + c1 u) * base + c2 u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Coupling {
    pub fn apply(&self, base: f64, u: f64) -> f64 {
        (self.c0 + self.c1 * u) * base + self.c2 * u
    }
}

/// One of `Q, b, gamma, sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffFunctional {
    pub base: Base,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<f64>,
}

impl CoeffFunctional {
    pub fn uncontrolled(base: Base) -> Self {
        Self {
            base,
            coupling: None,
            clamp: None,
        }
    }

    pub fn controlled(base: Base, coupling: Coupling) -> Self {
        Self {
            base,
            coupling: Some(coupling),
            clamp: None,
        }
    }

    pub fn zero() -> Self {
        Self::uncontrolled(Base::zero())
    }

    pub fn pointwise(scale: f64) -> Self {
        Self::uncontrolled(Base::PointwiseAt0 { scale })
    }

    pub fn integral(scale: f64) -> Self {
        Self::uncontrolled(Base::IntegralKernel { scale })
    }

    pub fn with_clamp(mut self, bound: f64) -> Self {
        self.clamp = Some(bound);
        self
    }

    pub fn is_controlled(&self) -> bool {
        self.coupling.is_some()
    }

    /// Identically zero (zero scale and offset, no additive control term).
    pub fn is_zero(&self) -> bool {
        let base_zero = match self.base {
            Base::PointwiseAt0 { scale } | Base::IntegralKernel { scale } => scale == 0.0,
            Base::Affine { scale, offset } => scale == 0.0 && offset == 0.0,
        };
        base_zero && self.coupling.is_none_or(|c| c.c2 == 0.0)
    }

    /// Evaluate on a window; `u` must be given exactly when the functional is controlled.
    pub fn eval(&self, seg: &Segment<'_>, u: Option<f64>) -> Result<f64> {
        let base = self.base.eval(seg);
        let v = match (self.coupling, u) {
            (Some(c), Some(u)) => c.apply(base, u),
            (None, None) => base,
            (Some(_), None) => {
                return Err(Error::Usage(
                    "controlled functional evaluated without an action".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(Error::Usage(
                    "uncontrolled functional evaluated with an action".into(),
                ))
            }
        };
        Ok(self.apply_clamp(v))
    }

    /// Average over a relaxed action `sum_j w_j f(x, a_j)`; zero weights are skipped.
    pub fn eval_mix(&self, seg: &Segment<'_>, mix: &[(f64, f64)]) -> Result<f64> {
        if self.coupling.is_none() {
            return self.eval(seg, None);
        }
        let base = self.base.eval(seg);
        let c = self.coupling.expect("checked above");
        Ok(mix
            .iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|&(a, w)| w * self.apply_clamp(c.apply(base, a)))
            .sum())
    }

    fn apply_clamp(&self, v: f64) -> f64 {
        match self.clamp {
            Some(m) => v.clamp(-m, m),
            None => v,
        }
    }

    /// Lipschitz constant in the window sup-norm, uniform over actions in `actions`.
    pub fn lipschitz(&self, tau: f64, actions: (f64, f64)) -> f64 {
        let factor = match self.coupling {
            None => 1.0,
            Some(c) => (c.c0 + c.c1 * actions.0)
                .abs()
                .max((c.c0 + c.c1 * actions.1).abs()),
        };
        self.base.lipschitz(tau) * factor
    }

    /// True when bounded by a clamp or constant in the state.
    pub fn is_bounded(&self) -> bool {
        self.clamp.is_some() || self.base.lipschitz(1.0) == 0.0
    }
}

/// `Q, b, gamma, sigma` with their constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSet {
    pub q: CoeffFunctional,
    pub b: CoeffFunctional,
    pub gamma: CoeffFunctional,
    pub sigma: CoeffFunctional,
    tau: f64,
    actions: (f64, f64),
    k1: f64,
    k0: f64,
    violating: bool,
}

impl CoeffSet {
    /// Rejects `k0 >= 1/4`, a controlled `Q` or a controlled `sigma`.
    pub fn new(
        q: CoeffFunctional,
        b: CoeffFunctional,
        gamma: CoeffFunctional,
        sigma: CoeffFunctional,
        tau: f64,
        actions: (f64, f64),
    ) -> Result<Self> {
        let set = Self::build(q, b, gamma, sigma, tau, actions)?;
        if set.violating {
            return Err(Error::config(
                "coeffs.q",
                format!("neutral Lipschitz constant k0 = {} must be < 1/4", set.k0),
            ));
        }
        Ok(set)
    }

    /// Accepts `k0 >= 1/4` but marks the set as assumption-violating.
    pub fn new_unchecked(
        q: CoeffFunctional,
        b: CoeffFunctional,
        gamma: CoeffFunctional,
        sigma: CoeffFunctional,
        tau: f64,
        actions: (f64, f64),
    ) -> Result<Self> {
        Self::build(q, b, gamma, sigma, tau, actions)
    }

    fn build(
        q: CoeffFunctional,
        b: CoeffFunctional,
        gamma: CoeffFunctional,
        sigma: CoeffFunctional,
        tau: f64,
        actions: (f64, f64),
    ) -> Result<Self> {
        if q.is_controlled() {
            return Err(Error::config(
                "coeffs.q",
                "the neutral term cannot depend on the control",
            ));
        }
        if sigma.is_controlled() {
            return Err(Error::config(
                "coeffs.sigma",
                "the diffusion cannot depend on the control",
            ));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::config("coeffs.tau", "must be finite and >= 0"));
        }
        if !(actions.0 <= actions.1) {
            return Err(Error::config("coeffs.actions", "need a_lo <= a_hi"));
        }
        let k0 = q.lipschitz(tau, actions);
        let k1 = b
            .lipschitz(tau, actions)
            .max(gamma.lipschitz(tau, actions))
            .max(sigma.lipschitz(tau, actions));
        Ok(Self {
            q,
            b,
            gamma,
            sigma,
            tau,
            actions,
            k1,
            k0,
            violating: k0 >= K0_LIMIT,
        })
    }

    /// `Q = 0.3 int`, `b = 10 int`, `gamma = 0.4 int`, `sigma = 5 int`.
    pub fn integral_example(tau: f64) -> Result<Self> {
        Self::new(
            CoeffFunctional::integral(0.3),
            CoeffFunctional::integral(10.0),
            CoeffFunctional::integral(0.4),
            CoeffFunctional::integral(5.0),
            tau,
            (0.0, 0.0),
        )
    }

    /// All four coefficients zero.
    pub fn zero(tau: f64) -> Self {
        Self::new(
            CoeffFunctional::zero(),
            CoeffFunctional::zero(),
            CoeffFunctional::zero(),
            CoeffFunctional::zero(),
            tau,
            (0.0, 0.0),
        )
        .expect("zero coefficients are valid")
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn actions(&self) -> (f64, f64) {
        self.actions
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn is_violating(&self) -> bool {
        self.violating
    }

    pub fn is_controlled(&self) -> bool {
        self.b.is_controlled() || self.gamma.is_controlled()
    }
}

/// Analytic constants for a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub k1: f64,
    pub k0: f64,
    pub k0_below_quarter: bool,
    /// `sqrt(8 k0^2 + 1/2)`.
    pub contraction_constant: f64,
    pub contracts: bool,
}

pub fn contraction_constant(k0: f64) -> f64 {
    (8.0 * k0 * k0 + 0.5).sqrt()
}

pub fn lipschitz_constants(set: &CoeffSet) -> LipschitzReport {
    let c = contraction_constant(set.k0);
    LipschitzReport {
        k1: set.k1,
        k0: set.k0,
        k0_below_quarter: set.k0 < K0_LIMIT,
        contraction_constant: c,
        contracts: c < 1.0,
    }
}

/// Running cost `q * base(X_t)^2 + r * (u - u_ref)^2`, clamped to `[-M, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningCost {
    pub q: f64,
    pub base: Base,
    pub r: f64,
    #[serde(default)]
    pub u_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<f64>,
}

impl RunningCost {
    pub fn zero() -> Self {
        Self {
            q: 0.0,
            base: Base::zero(),
            r: 0.0,
            u_ref: 0.0,
            clamp: None,
        }
    }

    fn clamp(&self, v: f64) -> f64 {
        match self.clamp {
            Some(m) => v.clamp(-m, m),
            None => v,
        }
    }

    /// Cost at a single action (`None` for uncontrolled problems).
    pub fn eval(&self, seg: &Segment<'_>, u: Option<f64>) -> f64 {
        let x = self.base.eval(seg);
        let du = u.map_or(0.0, |u| u - self.u_ref);
        self.clamp(self.q * x * x + self.r * du * du)
    }

    /// `sum_j w_j L(x, a_j)`.
    pub fn eval_mix(&self, seg: &Segment<'_>, mix: &[(f64, f64)]) -> f64 {
        let x = self.base.eval(seg);
        mix.iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|&(a, w)| {
                let du = a - self.u_ref;
                w * self.clamp(self.q * x * x + self.r * du * du)
            })
            .sum()
    }

    pub fn is_bounded(&self) -> bool {
        self.clamp.is_some() || (self.q == 0.0 || self.base.lipschitz(1.0) == 0.0)
    }
}

/// Terminal cost `p * X(T)^2 + offset`, clamped to `[-M, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalCost {
    pub p: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<f64>,
}

impl TerminalCost {
    pub fn eval(&self, x: f64) -> f64 {
        let v = self.p * x * x + self.offset;
        match self.clamp {
            Some(m) => v.clamp(-m, m),
            None => v,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.clamp.is_some() || self.p == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub running: RunningCost,
    pub terminal: TerminalCost,
}

impl CostSpec {
    pub fn zero() -> Self {
        Self {
            running: RunningCost::zero(),
            terminal: TerminalCost {
                p: 0.0,
                offset: 0.0,
                clamp: None,
            },
        }
    }
}

/// Outcome of probing one functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub name: String,
    pub declared: f64,
    /// Largest `|f(x) - f(y)| / |x - y|_sup` seen.
    pub worst_ratio: f64,
    pub pairs_used: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub lipschitz: Vec<ProbeResult>,
    /// Coefficients `b, gamma, sigma` that carry no bound.
    pub unbounded_coefficients: Vec<String>,
    /// Cost terms `L, Psi` that carry no bound.
    pub unbounded_costs: Vec<String>,
    pub k0_below_quarter: bool,
}

impl AssumptionReport {
    pub fn lipschitz_pass(&self) -> bool {
        self.lipschitz.iter().all(|p| p.pass)
    }

    pub fn pass(&self) -> bool {
        self.lipschitz_pass()
            && self.unbounded_coefficients.is_empty()
            && self.unbounded_costs.is_empty()
            && self.k0_below_quarter
    }
}

/// Random probe windows: pairs of paths on a grid covering one delay window.
pub fn random_probe_pairs(
    tau: f64,
    window_steps: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(Path, Path)>> {
    let steps = window_steps.max(1);
    let grid = if tau > 0.0 {
        TimeGrid::new(tau, tau, 2 * steps)?
    } else {
        TimeGrid::new(0.0, 1.0, steps)?
    };
    let mut rng = stream_rng(seed, &[stream::PROBE]);
    let mut draw = |scale: f64| -> Result<Path> {
        let values: Vec<f64> = (0..grid.len())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Path::new(grid, values)
    };
    (0..count)
        .map(|k| {
            let scale = 10f64.powi((k % 5) as i32 - 2);
            Ok((draw(scale)?, draw(scale)?))
        })
        .collect()
}

/// Empirical check of the Lipschitz and boundedness assumptions.
///
/// Every probe pair is evaluated at its last node; pairs with identical
/// windows are skipped. Controlled functionals are probed at both ends of
/// the action interval.
pub fn validate_assumptions(
    set: &CoeffSet,
    cost: &CostSpec,
    probes: &[(Path, Path)],
) -> Result<AssumptionReport> {
    if probes.is_empty() {
        return Err(Error::Usage("probe set must be non-empty".into()));
    }
    let named = [
        ("Q", &set.q),
        ("b", &set.b),
        ("gamma", &set.gamma),
        ("sigma", &set.sigma),
    ];
    let actions = [set.actions.0, set.actions.1];
    let mut lipschitz = Vec::new();
    for (name, f) in named {
        let declared = f.lipschitz(set.tau, set.actions);
        let mut worst = 0.0f64;
        let mut used = 0;
        for (x, y) in probes {
            let (sx, sy) = (last_segment(x)?, last_segment(y)?);
            let dist = sx.sup_distance(&sy);
            if dist == 0.0 {
                continue;
            }
            used += 1;
            let us: Vec<Option<f64>> = if f.is_controlled() {
                actions.iter().map(|&a| Some(a)).collect()
            } else {
                vec![None]
            };
            for u in us {
                let ratio = (f.eval(&sx, u)? - f.eval(&sy, u)?).abs() / dist;
                worst = worst.max(ratio);
            }
        }
        lipschitz.push(ProbeResult {
            name: name.to_string(),
            declared,
            worst_ratio: worst,
            pairs_used: used,
            pass: worst <= declared * (1.0 + 1e-9) + 1e-12,
        });
    }
    let unbounded_coefficients = [("b", &set.b), ("gamma", &set.gamma), ("sigma", &set.sigma)]
        .iter()
        .filter(|(_, f)| !f.is_bounded())
        .map(|(n, _)| n.to_string())
        .collect();
    let mut unbounded_costs = Vec::new();
    if !cost.running.is_bounded() {
        unbounded_costs.push("L".to_string());
    }
    if !cost.terminal.is_bounded() {
        unbounded_costs.push("Psi".to_string());
    }
    Ok(AssumptionReport {
        lipschitz,
        unbounded_coefficients,
        unbounded_costs,
        k0_below_quarter: set.k0 < K0_LIMIT,
    })
}

fn last_segment(p: &Path) -> Result<Segment<'_>> {
    p.segment(p.grid().steps())
}
