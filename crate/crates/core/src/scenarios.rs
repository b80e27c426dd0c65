//! G-Brownian motion under volatility scenarios.
//!
//! Each probability in the representing family is selected by an adapted
//! quadratic-variation rate `c_t` in `[sigma_min^2, sigma_max^2]`. Under that
//! measure, `dB = sqrt(c_t) dW` and `d<B> = c_t dt`. A [`ScenarioFamily`] is a
//! finite set of such rates; the sublinear expectation is estimated as the
//! largest Monte Carlo mean over the family. A finite family only sees part of
//! the representing set, so [`upper_expectation`] is a lower bound for the
//! true value (exact for convex or concave terminal functionals, where the
//! constant extremes are optimal).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gheat::VolBounds;
use crate::grid::TimeGrid;
use crate::rng::{derive_seed, stream, stream_rng};
use crate::stats::{combined_se, MeanEstimate};

/// Share of non-finite samples tolerated by [`upper_expectation`].
pub const MAX_REJECT_FRACTION: f64 = 0.01;

/// Doob L2 constant used for the `p = 2` maximal inequality.
pub const DOOB_L2_CONSTANT: f64 = 4.0;

const LEVEL_TOL: f64 = 1e-12;

/// Quadratic-variation rate scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolPolicy {
    /// `c_t = c`.
    Constant { c: f64 },
    /// `c_t = levels[j]` for `breakpoints[j-1] <= t < breakpoints[j]`.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
    },
    /// Starts on a uniformly drawn level and jumps to another level at the
    /// events of a Poisson clock with intensity `rate`. Randomness comes from
    /// its own stream, so it is independent of the Brownian driver.
    RandomSwitch {
        rate: f64,
        levels: Vec<f64>,
        stream: u64,
    },
}

impl VolPolicy {
    pub fn constant(c: f64) -> Self {
        VolPolicy::Constant { c }
    }

    pub fn validate(&self, bounds: &VolBounds) -> Result<()> {
        let (lo, hi) = (bounds.var_min(), bounds.var_max());
        let check = |c: f64| {
            if c.is_finite() && c >= lo * (1.0 - LEVEL_TOL) && c <= hi * (1.0 + LEVEL_TOL) {
                Ok(())
            } else {
                Err(Error::config(
                    "policy.levels",
                    format!("level {c} outside [{lo}, {hi}]"),
                ))
            }
        };
        match self {
            VolPolicy::Constant { c } => check(*c),
            VolPolicy::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                if levels.len() != breakpoints.len() + 1 {
                    return Err(Error::config(
                        "policy.levels",
                        "need one more level than breakpoints",
                    ));
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::config("policy.breakpoints", "must be increasing"));
                }
                levels.iter().try_for_each(|&c| check(c))
            }
            VolPolicy::RandomSwitch { rate, levels, .. } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::config("policy.rate", "must be finite and >= 0"));
                }
                if levels.is_empty() {
                    return Err(Error::config("policy.levels", "must be non-empty"));
                }
                levels.iter().try_for_each(|&c| check(c))
            }
        }
    }

    /// Short label for tables.
    pub fn label(&self) -> String {
        match self {
            VolPolicy::Constant { c } => format!("const({c})"),
            VolPolicy::PiecewiseConstant { levels, .. } => {
                format!("piecewise({} levels)", levels.len())
            }
            VolPolicy::RandomSwitch { rate, stream, .. } => {
                format!("switch(rate={rate},stream={stream})")
            }
        }
    }

    /// Rate `c_i` on each forward step `[t_i, t_{i+1})`.
    pub fn realize(&self, grid: &TimeGrid, seed: u64) -> Vec<f64> {
        let m = grid.forward_steps();
        let h = grid.h();
        match self {
            VolPolicy::Constant { c } => vec![*c; m],
            VolPolicy::PiecewiseConstant {
                breakpoints,
                levels,
            } => (0..m)
                .map(|k| {
                    let t = k as f64 * h;
                    let j = breakpoints.partition_point(|&b| b <= t + 1e-9 * h);
                    levels[j]
                })
                .collect(),
            VolPolicy::RandomSwitch {
                rate,
                levels,
                stream: id,
            } => {
                let mut rng = stream_rng(seed, &[stream::POLICY, *id]);
                let n = levels.len();
                let mut current = rng.random_range(0..n);
                let p_switch = 1.0 - (-rate * h).exp();
                (0..m)
                    .map(|k| {
                        if k > 0 && n > 1 && rng.random::<f64>() < p_switch {
                            let shift = rng.random_range(1..n);
                            current = (current + shift) % n;
                        }
                        levels[current]
                    })
                    .collect()
            }
        }
    }
}

/// Sampled G-Brownian path on `[0, T]` with its quadratic variation.
///
/// Index `k` refers to the grid node `N0 + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GBMPath {
    grid: TimeGrid,
    b: Vec<f64>,
    qv: Vec<f64>,
    c: Vec<f64>,
}

impl GBMPath {
    /// Assemble from per-step rates and standard normal draws.
    pub fn from_normals(grid: TimeGrid, c: Vec<f64>, xi: &[f64]) -> Result<Self> {
        let m = grid.forward_steps();
        if c.len() != m || xi.len() != m {
            return Err(Error::Usage(format!(
                "expected {m} rates and normals, got {} and {}",
                c.len(),
                xi.len()
            )));
        }
        let h = grid.h();
        let mut b = Vec::with_capacity(m + 1);
        let mut qv = Vec::with_capacity(m + 1);
        b.push(0.0);
        qv.push(0.0);
        for k in 0..m {
            b.push(b[k] + (c[k] * h).sqrt() * xi[k]);
            qv.push(qv[k] + c[k] * h);
        }
        Ok(Self { grid, b, qv, c })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of forward steps.
    pub fn steps(&self) -> usize {
        self.c.len()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn qv(&self) -> &[f64] {
        &self.qv
    }

    pub fn rates(&self) -> &[f64] {
        &self.c
    }

    pub fn db(&self, k: usize) -> f64 {
        self.b[k + 1] - self.b[k]
    }

    pub fn dqv(&self, k: usize) -> f64 {
        self.qv[k + 1] - self.qv[k]
    }

    pub fn terminal(&self) -> f64 {
        self.b[self.b.len() - 1]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(self.grid.zero_index() + k)
    }

    /// Same path observed on a grid `factor` times coarser.
    pub fn coarsen(&self, coarse: &TimeGrid) -> Result<Self> {
        let m = coarse.forward_steps();
        if m == 0 || self.steps() % m != 0 {
            return Err(Error::Usage(format!(
                "cannot coarsen {} steps onto {m}",
                self.steps()
            )));
        }
        let f = self.steps() / m;
        if (coarse.h() - f as f64 * self.grid.h()).abs() > 1e-9 * coarse.h() {
            return Err(Error::Usage(
                "coarse grid step is not a multiple of the fine step".into(),
            ));
        }
        let pick = |v: &[f64]| (0..=m).map(|k| v[k * f]).collect::<Vec<_>>();
        let c = (0..m)
            .map(|k| self.c[k * f..(k + 1) * f].iter().sum::<f64>() / f as f64)
            .collect();
        Ok(Self {
            grid: *coarse,
            b: pick(&self.b),
            qv: pick(&self.qv),
            c,
        })
    }
}

/// Sample one path: `dB_i = sqrt(c_i h) xi_i`, `d<B>_i = c_i h`.
///
/// The normals come from the `(seed, NOISE)` stream, which does not depend on
/// the policy; paths for different policies with the same seed therefore share
/// their Gaussian draws.
pub fn sample_gbm(policy: &VolPolicy, grid: &TimeGrid, seed: u64) -> GBMPath {
    let c = policy.realize(grid, seed);
    let xi = standard_normals(grid.forward_steps(), seed);
    GBMPath::from_normals(*grid, c, &xi).expect("lengths match by construction")
}

fn standard_normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, &[stream::NOISE]);
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Finite surrogate for the representing family of measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFamily {
    bounds: VolBounds,
    policies: Vec<VolPolicy>,
    samples: usize,
    seed: u64,
}

impl ScenarioFamily {
    /// Requires both constant extremes `sigma_min^2` and `sigma_max^2`.
    pub fn new(
        bounds: VolBounds,
        policies: Vec<VolPolicy>,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        bounds.validate()?;
        if samples == 0 {
            return Err(Error::config("family.samples", "must be >= 1"));
        }
        for p in &policies {
            p.validate(&bounds)?;
        }
        let has = |c: f64| {
            policies
                .iter()
                .any(|p| matches!(p, VolPolicy::Constant { c: x } if *x == c))
        };
        if !has(bounds.var_min()) || !has(bounds.var_max()) {
            return Err(Error::config(
                "family.policies",
                "must contain the constant policies sigma_min^2 and sigma_max^2",
            ));
        }
        Ok(Self {
            bounds,
            policies,
            samples,
            seed,
        })
    }

    /// Both extremes only.
    pub fn extremes(bounds: VolBounds, samples: usize, seed: u64) -> Result<Self> {
        Self::new(
            bounds,
            vec![
                VolPolicy::constant(bounds.var_min()),
                VolPolicy::constant(bounds.var_max()),
            ],
            samples,
            seed,
        )
    }

    /// Extremes plus eight random switchers over `{sigma_min^2, mid, sigma_max^2}`
    /// with rates `2, 4, ..., 16` on independent streams.
    pub fn default_family(bounds: VolBounds, samples: usize, seed: u64) -> Result<Self> {
        let levels = vec![
            bounds.var_min(),
            0.5 * (bounds.var_min() + bounds.var_max()),
            bounds.var_max(),
        ];
        let mut policies = vec![
            VolPolicy::constant(bounds.var_min()),
            VolPolicy::constant(bounds.var_max()),
        ];
        policies.extend((0..8u64).map(|k| VolPolicy::RandomSwitch {
            rate: 2.0 * (k + 1) as f64,
            levels: levels.clone(),
            stream: k,
        }));
        Self::new(bounds, policies, samples, seed)
    }

    /// Copy with one more policy.
    pub fn with_policy(&self, policy: VolPolicy) -> Result<Self> {
        let mut policies = self.policies.clone();
        policies.push(policy);
        Self::new(self.bounds, policies, self.samples, self.seed)
    }

    pub fn with_samples(&self, samples: usize) -> Result<Self> {
        Self::new(self.bounds, self.policies.clone(), samples, self.seed)
    }

    pub fn bounds(&self) -> &VolBounds {
        &self.bounds
    }

    pub fn policies(&self) -> &[VolPolicy] {
        &self.policies
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of sample `s`; shared by every policy (common random numbers).
    pub fn sample_seed(&self, s: usize) -> u64 {
        derive_seed(self.seed, &[stream::SAMPLE, s as u64])
    }

    pub fn sample(&self, policy: usize, s: usize, grid: &TimeGrid) -> GBMPath {
        sample_gbm(&self.policies[policy], grid, self.sample_seed(s))
    }

    /// All paths, indexed `[policy][sample]`.
    pub fn sample_all(&self, grid: &TimeGrid) -> Vec<Vec<GBMPath>> {
        (0..self.policies.len())
            .map(|p| {
                (0..self.samples)
                    .into_par_iter()
                    .map(|s| self.sample(p, s, grid))
                    .collect()
            })
            .collect()
    }
}

/// Monte Carlo estimate under one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEstimate {
    pub label: String,
    pub mean: f64,
    pub std_err: f64,
    pub used: usize,
    pub rejected: usize,
}

/// Max over the family together with the per-policy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperEstimate {
    pub value: f64,
    pub std_err: f64,
    pub argmax: usize,
    pub table: Vec<PolicyEstimate>,
}

/// `E^[F] ~ max_P E^P[F]` over the family.
///
/// Samples where `F` is not finite are rejected and counted; more than 1%
/// rejections under any policy is an error. Finite values are clamped to
/// `[-clamp, clamp]` when a clamp is given.
pub fn upper_expectation<F>(
    functional: F,
    family: &ScenarioFamily,
    grid: &TimeGrid,
    clamp: Option<f64>,
) -> Result<UpperEstimate>
where
    F: Fn(&GBMPath) -> f64 + Sync,
{
    let mut table = Vec::with_capacity(family.policies().len());
    for (p, policy) in family.policies().iter().enumerate() {
        let raw: Vec<f64> = (0..family.samples())
            .into_par_iter()
            .map(|s| functional(&family.sample(p, s, grid)))
            .collect();
        let kept: Vec<f64> = raw
            .iter()
            .filter(|v| v.is_finite())
            .map(|&v| match clamp {
                Some(m) => v.clamp(-m, m),
                None => v,
            })
            .collect();
        let rejected = raw.len() - kept.len();
        if rejected as f64 > MAX_REJECT_FRACTION * raw.len() as f64 {
            return Err(Error::Estimation(format!(
                "{rejected} of {} samples non-finite under policy {}",
                raw.len(),
                policy.label()
            )));
        }
        let est = MeanEstimate::from_samples(&kept);
        table.push(PolicyEstimate {
            label: policy.label(),
            mean: est.mean,
            std_err: est.std_err,
            used: kept.len(),
            rejected,
        });
    }
    Ok(summarize(table))
}

pub(crate) fn summarize(table: Vec<PolicyEstimate>) -> UpperEstimate {
    let mut argmax = 0;
    for (i, e) in table.iter().enumerate() {
        if e.mean > table[argmax].mean {
            argmax = i;
        }
    }
    UpperEstimate {
        value: table[argmax].mean,
        std_err: table[argmax].std_err,
        argmax,
        table,
    }
}

/// `<B>_{t_k} - (B_{t_k}^2 - 2 sum_{i<k} B_{t_i} (B_{t_{i+1}} - B_{t_i}))` at every node.
pub fn qv_residuals(path: &GBMPath) -> Vec<f64> {
    let b = path.b();
    let mut ito = 0.0;
    let mut out = Vec::with_capacity(b.len());
    out.push(path.qv()[0] - b[0] * b[0]);
    for k in 0..path.steps() {
        ito += b[k] * (b[k + 1] - b[k]);
        out.push(path.qv()[k + 1] - (b[k + 1] * b[k + 1] - 2.0 * ito));
    }
    out
}

/// Largest absolute quadratic-variation residual over the path.
pub fn check_qv_identity(path: &GBMPath) -> f64 {
    qv_residuals(path).iter().fold(0.0, |m, r| m.max(r.abs()))
}

/// RMS of the terminal residual over `n_paths` for each step count in `steps`
/// (no delay window; horizon `horizon`). Returns `(h, rms)` rows.
pub fn qv_refinement_study(
    policy: &VolPolicy,
    horizon: f64,
    steps: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    steps
        .iter()
        .map(|&n| {
            let grid = TimeGrid::new(0.0, horizon, n)?;
            let sq: Vec<f64> = (0..n_paths)
                .into_par_iter()
                .map(|s| {
                    let path = sample_gbm(policy, &grid, derive_seed(seed, &[n as u64, s as u64]));
                    let r = *qv_residuals(&path).last().expect("non-empty");
                    r * r
                })
                .collect();
            Ok((grid.h(), (sq.iter().sum::<f64>() / n_paths as f64).sqrt()))
        })
        .collect()
}

/// Deterministic step integrand, one value per forward step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepIntegrand {
    pub name: String,
    pub values: Vec<f64>,
}

impl StepIntegrand {
    pub fn constant(grid: &TimeGrid, v: f64) -> Self {
        Self {
            name: format!("const({v})"),
            values: vec![v; grid.forward_steps()],
        }
    }

    /// `1` on `[a, b)`, `0` elsewhere.
    pub fn indicator(grid: &TimeGrid, a: f64, b: f64) -> Self {
        let h = grid.h();
        Self {
            name: format!("1[{a},{b})"),
            values: (0..grid.forward_steps())
                .map(|k| {
                    let t = k as f64 * h;
                    if t >= a - 1e-9 * h && t < b - 1e-9 * h {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    /// Left-endpoint samples of `f`.
    pub fn sampled(grid: &TimeGrid, name: &str, f: impl Fn(f64) -> f64) -> Self {
        Self {
            name: name.to_string(),
            values: (0..grid.forward_steps())
                .map(|k| f(k as f64 * grid.h()))
                .collect(),
        }
    }

    /// `1`, `1[0, T/2)` and the staircase `1 + t`.
    pub fn builtins(grid: &TimeGrid) -> Vec<Self> {
        vec![
            Self::constant(grid, 1.0),
            Self::indicator(grid, 0.0, 0.5 * grid.horizon()),
            Self::sampled(grid, "1+t", |t| 1.0 + t),
        ]
    }
}

/// Both sides of `E[(int eta dB)^2] = E[int eta^2 d<B>]` under one policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryCheck {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub gap: f64,
    pub combined_se: f64,
}

impl IsometryCheck {
    pub fn within(&self, k_se: f64) -> bool {
        self.gap <= k_se * self.combined_se
    }
}

fn check_len(eta: &StepIntegrand, grid: &TimeGrid) -> Result<()> {
    if eta.values.len() != grid.forward_steps() {
        return Err(Error::Usage(format!(
            "integrand has {} values for {} steps",
            eta.values.len(),
            grid.forward_steps()
        )));
    }
    Ok(())
}

/// Itô (left-point) sums of both sides of the isometry on `n_samples` paths.
pub fn check_isometry(
    eta: &StepIntegrand,
    policy: &VolPolicy,
    grid: &TimeGrid,
    n_samples: usize,
    seed: u64,
) -> Result<IsometryCheck> {
    check_len(eta, grid)?;
    let pairs: Vec<(f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let path = sample_gbm(policy, grid, derive_seed(seed, &[stream::SAMPLE, s as u64]));
            let (mut ito, mut qv) = (0.0, 0.0);
            for (k, &e) in eta.values.iter().enumerate() {
                ito += e * path.db(k);
                qv += e * e * path.dqv(k);
            }
            (ito * ito, qv)
        })
        .collect();
    let (l, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (l, r) = (
        MeanEstimate::from_samples(&l),
        MeanEstimate::from_samples(&r),
    );
    Ok(IsometryCheck {
        lhs: l.mean,
        lhs_se: l.std_err,
        rhs: r.mean,
        rhs_se: r.std_err,
        gap: (l.mean - r.mean).abs(),
        combined_se: combined_se(l.std_err, r.std_err),
    })
}

/// `E[sup_{s<=u<=t} |int_s^u eta dB|^2]` against `4 E[int_s^t eta^2 d<B>]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdgCheck {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
}

impl BdgCheck {
    pub fn holds(&self, k_se: f64) -> bool {
        self.lhs <= self.rhs + k_se * combined_se(self.lhs_se, self.rhs_se)
    }
}

/// Maximal inequality at `p = 2` on forward steps `[from, to)`.
pub fn bdg_check(
    eta: &StepIntegrand,
    policy: &VolPolicy,
    grid: &TimeGrid,
    from: usize,
    to: usize,
    n_samples: usize,
    seed: u64,
) -> Result<BdgCheck> {
    check_len(eta, grid)?;
    if from >= to || to > grid.forward_steps() {
        return Err(Error::Usage(format!("invalid step window [{from}, {to})")));
    }
    let pairs: Vec<(f64, f64)> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let path = sample_gbm(policy, grid, derive_seed(seed, &[stream::SAMPLE, s as u64]));
            let (mut ito, mut sup, mut qv) = (0.0f64, 0.0f64, 0.0);
            for k in from..to {
                let e = eta.values[k];
                ito += e * path.db(k);
                sup = sup.max(ito * ito);
                qv += e * e * path.dqv(k);
            }
            (sup, DOOB_L2_CONSTANT * qv)
        })
        .collect();
    let (l, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (l, r) = (
        MeanEstimate::from_samples(&l),
        MeanEstimate::from_samples(&r),
    );
    Ok(BdgCheck {
        lhs: l.mean,
        lhs_se: l.std_err,
        rhs: r.mean,
        rhs_se: r.std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> VolBounds {
        VolBounds::new(0.8, 1.3).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(0.0, 1.0, 50).unwrap()
    }

    #[test]
    fn policy_validation() {
        let b = bounds();
        assert!(VolPolicy::constant(0.64).validate(&b).is_ok());
        assert!(VolPolicy::constant(2.0).validate(&b).is_err());
        assert!(VolPolicy::PiecewiseConstant {
            breakpoints: vec![0.5],
            levels: vec![0.64]
        }
        .validate(&b)
        .is_err());
        assert!(VolPolicy::RandomSwitch {
            rate: 1.0,
            levels: vec![],
            stream: 0
        }
        .validate(&b)
        .is_err());
    }

    #[test]
    fn rates_stay_in_bounds() {
        let b = bounds();
        let fam = ScenarioFamily::default_family(b, 4, 11).unwrap();
        for s in 0..4 {
            for p in 0..fam.policies().len() {
                let path = fam.sample(p, s, &grid());
                assert!(path
                    .rates()
                    .iter()
                    .all(|&c| c >= b.var_min() && c <= b.var_max()));
            }
        }
    }

    #[test]
    fn piecewise_levels_follow_breakpoints() {
        let p = VolPolicy::PiecewiseConstant {
            breakpoints: vec![0.5],
            levels: vec![0.64, 1.69],
        };
        let c = p.realize(&grid(), 0);
        assert_eq!(c[24], 0.64);
        assert_eq!(c[25], 1.69);
    }

    #[test]
    fn path_invariants() {
        let g = grid();
        let path = sample_gbm(&VolPolicy::constant(1.2), &g, 5);
        assert_eq!(path.b()[0], 0.0);
        assert_eq!(path.qv()[0], 0.0);
        assert!(path.qv().windows(2).all(|w| w[1] >= w[0]));
        for k in 0..path.steps() {
            assert!((path.dqv(k) - 1.2 * g.h()).abs() < 1e-15);
        }
        assert!((path.qv()[path.steps()] - 1.2).abs() < 1e-12);
        assert_eq!(path, sample_gbm(&VolPolicy::constant(1.2), &g, 5));
    }

    #[test]
    fn common_random_numbers_across_constant_policies() {
        let g = grid();
        let a = sample_gbm(&VolPolicy::constant(0.64), &g, 9);
        let b = sample_gbm(&VolPolicy::constant(1.69), &g, 9);
        for k in 0..a.steps() {
            assert!((b.db(k) - a.db(k) * 1.3 / 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn qv_single_step_identity() {
        let g = TimeGrid::new(0.0, 0.1, 1).unwrap();
        let path = sample_gbm(&VolPolicy::constant(1.0), &g, 3);
        let db = path.db(0);
        let r = qv_residuals(&path)[1];
        assert!((r - (0.1 - db * db)).abs() < 1e-15);
    }

    #[test]
    fn coarsen_keeps_nodes() {
        let fine = TimeGrid::new(0.0, 1.0, 64).unwrap();
        let coarse = TimeGrid::new(0.0, 1.0, 16).unwrap();
        let p = sample_gbm(&VolPolicy::constant(1.0), &fine, 1);
        let c = p.coarsen(&coarse).unwrap();
        assert_eq!(c.terminal(), p.terminal());
        assert_eq!(c.b()[3], p.b()[12]);
        assert!(p.coarsen(&TimeGrid::new(0.0, 1.0, 10).unwrap()).is_err());
    }

    #[test]
    fn family_requires_extremes() {
        let b = bounds();
        assert!(ScenarioFamily::new(b, vec![VolPolicy::constant(1.0)], 10, 0).is_err());
        assert!(ScenarioFamily::extremes(b, 0, 0).is_err());
        assert_eq!(
            ScenarioFamily::default_family(b, 10, 0)
                .unwrap()
                .policies()
                .len(),
            10
        );
    }

    #[test]
    fn constant_functional_is_exact() {
        let fam = ScenarioFamily::default_family(bounds(), 200, 1).unwrap();
        let e = upper_expectation(|_| 2.5, &fam, &grid(), None).unwrap();
        assert_eq!(e.value, 2.5);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn rejections_counted_and_limited() {
        let fam = ScenarioFamily::extremes(bounds(), 1000, 1).unwrap();
        let few = upper_expectation(
            |p| if p.terminal() > 3.5 { f64::NAN } else { 1.0 },
            &fam,
            &grid(),
            None,
        )
        .unwrap();
        assert!(few.table.iter().all(|e| e.rejected + e.used == 1000));
        let many = upper_expectation(
            |p| if p.terminal() > 0.0 { f64::NAN } else { 1.0 },
            &fam,
            &grid(),
            None,
        );
        assert!(matches!(many, Err(Error::Estimation(_))));
        let clamped =
            upper_expectation(|p| 1e6 * p.terminal().abs(), &fam, &grid(), Some(5.0)).unwrap();
        assert!(clamped.value <= 5.0);
    }

    #[test]
    fn zero_integrand_isometry() {
        let g = grid();
        let chk = check_isometry(
            &StepIntegrand::constant(&g, 0.0),
            &VolPolicy::constant(1.0),
            &g,
            100,
            0,
        )
        .unwrap();
        assert_eq!((chk.lhs, chk.rhs, chk.gap), (0.0, 0.0, 0.0));
    }
}
