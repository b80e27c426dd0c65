//! Run configurations. Each subcommand has a record with defaults; a run
//! merges defaults (or a preset), a JSON config file and flag overrides, in
//! that order, before deserialising.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use gnsfde_core::control::ActionGrid;
use gnsfde_core::functionals::{CoeffFunctional, CoeffSet, CostSpec};
use gnsfde_core::gheat::GNormalConfig;
use gnsfde_core::nsfde::EulerConfig;
use gnsfde_core::scenarios::{ScenarioFamily, VolPolicy};
use gnsfde_core::{Error, Result, TimeGrid, VolBounds};

use crate::history::InitialHistory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Constant `sigma_min^2` and `sigma_max^2` only.
    Extremes,
    /// Extremes plus eight random switchers.
    Default,
}

impl FamilyKind {
    pub fn build(self, bounds: VolBounds, samples: usize, seed: u64) -> Result<ScenarioFamily> {
        match self {
            FamilyKind::Extremes => ScenarioFamily::extremes(bounds, samples, seed),
            FamilyKind::Default => ScenarioFamily::default_family(bounds, samples, seed),
        }
    }
}

/// The four coefficient functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSpec {
    pub q: CoeffFunctional,
    pub b: CoeffFunctional,
    pub gamma: CoeffFunctional,
    pub sigma: CoeffFunctional,
}

impl CoeffSpec {
    /// `Q = 0.3 int`, `b = 10 int`, `gamma = 0.4 int`, `sigma = 5 int`.
    pub fn integral_example() -> Self {
        Self {
            q: CoeffFunctional::integral(0.3),
            b: CoeffFunctional::integral(10.0),
            gamma: CoeffFunctional::integral(0.4),
            sigma: CoeffFunctional::integral(5.0),
        }
    }

    pub fn build(&self, tau: f64, actions: (f64, f64)) -> Result<CoeffSet> {
        CoeffSet::new(self.q, self.b, self.gamma, self.sigma, tau, actions)
    }
}

fn grid(tau: f64, horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(tau, horizon, steps).map_err(|e| match e {
        Error::Config { message, .. } => Error::config("steps", message),
        e => e,
    })
}

fn positive(field: &str, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::config(field, "must be >= 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GNormalRun {
    /// One curve per entry.
    pub curves: Vec<VolBounds>,
    pub t: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub dy: f64,
    pub pde: GNormalConfig,
}

impl Default for GNormalRun {
    fn default() -> Self {
        Self {
            curves: vec![VolBounds {
                sigma_min: 1.0,
                sigma_max: 1.0,
            }],
            t: 1.0,
            y_min: -4.0,
            y_max: 4.0,
            dy: 0.02,
            pde: GNormalConfig::default(),
        }
    }
}

impl GNormalRun {
    pub fn validate(&self) -> Result<()> {
        if self.curves.is_empty() {
            return Err(Error::config("curves", "need at least one pair of bounds"));
        }
        for (i, b) in self.curves.iter().enumerate() {
            b.validate()
                .map_err(|e| Error::config(format!("curves[{i}]"), e.to_string()))?;
        }
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::config("t", "must be > 0"));
        }
        if !(self.y_min < self.y_max) {
            return Err(Error::config("y_max", "must exceed y_min"));
        }
        if !(self.dy > 0.0) {
            return Err(Error::config("dy", "must be > 0"));
        }
        Ok(())
    }

    pub fn ys(&self) -> Vec<f64> {
        let n = ((self.y_max - self.y_min) / self.dy + 1e-9).floor() as usize;
        (0..=n).map(|k| self.y_min + k as f64 * self.dy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePathsRun {
    pub bounds: VolBounds,
    pub family: FamilyKind,
    pub horizon: f64,
    pub steps: usize,
    pub samples: usize,
}

impl Default for SamplePathsRun {
    fn default() -> Self {
        Self {
            bounds: VolBounds {
                sigma_min: 0.65,
                sigma_max: 1.0,
            },
            family: FamilyKind::Default,
            horizon: 1.0,
            steps: 1000,
            samples: 5,
        }
    }
}

impl SamplePathsRun {
    pub fn grid(&self) -> Result<TimeGrid> {
        grid(0.0, self.horizon, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsfdeSimRun {
    pub tau: f64,
    pub horizon: f64,
    pub steps: usize,
    pub bounds: VolBounds,
    pub coeffs: CoeffSpec,
    pub initial: InitialHistory,
    /// Volatility scenario driving every trajectory; its random stream is
    /// keyed by the trajectory's seed.
    pub noise: VolPolicy,
    pub paths: usize,
    pub euler: EulerConfig,
}

impl NsfdeSimRun {
    pub fn section4(sigma_max: f64, initial: InitialHistory) -> Self {
        let bounds = VolBounds {
            sigma_min: 0.65,
            sigma_max,
        };
        Self {
            tau: 0.1,
            horizon: 1.0,
            steps: 1100,
            bounds,
            coeffs: CoeffSpec::integral_example(),
            initial,
            noise: VolPolicy::RandomSwitch {
                rate: 10.0,
                levels: vec![bounds.var_min(), bounds.var_max()],
                stream: 0,
            },
            paths: 20,
            euler: EulerConfig::default(),
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        grid(self.tau, self.horizon, self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.noise.validate(&self.bounds)?;
        positive("paths", self.paths)?;
        self.euler.validate()?;
        self.grid()?;
        self.initial.validate()
    }
}

impl Default for NsfdeSimRun {
    fn default() -> Self {
        Self::section4(1.0, InitialHistory::Exp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QvCheckRun {
    pub bounds: VolBounds,
    pub policy: VolPolicy,
    pub horizon: f64,
    /// Step counts, each four times the previous by default.
    pub steps: Vec<usize>,
    pub paths: usize,
}

impl Default for QvCheckRun {
    fn default() -> Self {
        Self {
            bounds: VolBounds {
                sigma_min: 0.8,
                sigma_max: 1.3,
            },
            policy: VolPolicy::constant(1.69),
            horizon: 1.0,
            steps: vec![64, 256, 1024, 4096],
            paths: 100,
        }
    }
}

impl QvCheckRun {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.policy.validate(&self.bounds)?;
        positive("paths", self.paths)?;
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::config("steps", "need positive step counts"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsometryRun {
    pub bounds: VolBounds,
    pub family: FamilyKind,
    pub horizon: f64,
    pub steps: usize,
    pub samples: usize,
    /// Acceptance band in standard errors.
    pub k_se: f64,
}

impl Default for IsometryRun {
    fn default() -> Self {
        Self {
            bounds: VolBounds {
                sigma_min: 0.8,
                sigma_max: 1.3,
            },
            family: FamilyKind::Default,
            horizon: 1.0,
            steps: 100,
            samples: 10_000,
            k_se: 3.0,
        }
    }
}

impl IsometryRun {
    pub fn grid(&self) -> Result<TimeGrid> {
        grid(0.0, self.horizon, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardRun {
    pub tau: f64,
    pub horizon: f64,
    pub steps: usize,
    pub bounds: VolBounds,
    pub family: FamilyKind,
    pub coeffs: CoeffSpec,
    pub initial: InitialHistory,
    /// Matched pairs per policy for the contraction ratio.
    pub samples: usize,
    /// Weight `C` of the norm; derived from `K1, T, sigma_max` when absent.
    #[serde(default)]
    pub c: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PicardRun {
    fn default() -> Self {
        Self {
            tau: 0.1,
            horizon: 1.0,
            steps: 110,
            bounds: VolBounds {
                sigma_min: 0.65,
                sigma_max: 1.0,
            },
            family: FamilyKind::Extremes,
            coeffs: CoeffSpec::integral_example(),
            initial: InitialHistory::Constant { value: 1.0 },
            samples: 500,
            c: None,
            max_iter: 20,
            tol: 1e-6,
        }
    }
}

impl PicardRun {
    pub fn grid(&self) -> Result<TimeGrid> {
        grid(self.tau, self.horizon, self.steps)
    }
}

/// Controlled problem shared by `chattering` and `control-opt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub tau: f64,
    pub horizon: f64,
    pub steps: usize,
    pub bounds: VolBounds,
    pub family: FamilyKind,
    pub samples: usize,
    pub coeffs: CoeffSpec,
    pub atoms: Vec<f64>,
    pub cost: CostSpec,
    pub initial: InitialHistory,
    pub euler: EulerConfig,
}

impl ProblemSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        grid(self.tau, self.horizon, self.steps)
    }

    pub fn actions(&self) -> Result<ActionGrid> {
        ActionGrid::new(self.atoms.clone()).map_err(|e| Error::config("atoms", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatteringRun {
    pub problem: ProblemSpec,
    /// One probability row per block.
    pub weights: Vec<Vec<f64>>,
    pub ns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlOptRun {
    pub problem: ProblemSpec,
    pub blocks: usize,
    /// Weight resolution `1/r` of the relaxed search.
    pub resolution: usize,
    /// Chattering refinements of the relaxed optimum to evaluate.
    #[serde(default)]
    pub chattering_ns: Vec<usize>,
}

/// Recursively overlay `patch` on `base`.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Set a dotted path such as `problem.samples` to `value`.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(path, "empty path component"));
        }
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Map::new()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(path, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::config(path, format!("index {idx} out of range ({len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::config(
                    path,
                    format!("`{part}` is not inside an object"),
                ))
            }
        };
    }
    Ok(())
}

/// Deserialise with the offending field path in the error.
pub fn parse<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(
            if path == "." { "config".into() } else { path },
            e.into_inner().to_string(),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_and_set() {
        let mut v = json!({"a": {"b": 1, "c": [1, 2]}, "d": 3});
        merge(&mut v, json!({"a": {"b": 5}}));
        set_path(&mut v, "a.c.1", json!(9)).unwrap();
        set_path(&mut v, "e.f", json!(true)).unwrap();
        assert_eq!(
            v,
            json!({"a": {"b": 5, "c": [1, 9]}, "d": 3, "e": {"f": true}})
        );
        assert!(set_path(&mut v, "a.c.7", json!(0)).is_err());
    }

    #[test]
    fn parse_reports_field_path() {
        let mut v = serde_json::to_value(GNormalRun::default()).unwrap();
        set_path(&mut v, "pde.dx", json!("wide")).unwrap();
        match parse::<GNormalRun>(v) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "pde.dx"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_round_trip() {
        let run = NsfdeSimRun::default();
        let back: NsfdeSimRun = parse(serde_json::to_value(&run).unwrap()).unwrap();
        assert_eq!(run, back);
    }
}
