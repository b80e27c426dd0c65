//! The exponentially weighted norm
//! `N_C(X) = (int_0^T exp(-2 C s) E^[|X(s)|^2] ds)^{1/2}`
//! under which the Picard operator contracts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{trapezoid, Path};

/// Constant of the maximal inequality for `dB` integrals in the weight (Doob, `p = 2`).
pub const DOOB_C2: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NCNormConfig {
    pub c: f64,
}

impl NCNormConfig {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::config(
                "nc_norm.c",
                format!("must be finite and >= 0, got {c}"),
            ));
        }
        Ok(Self { c })
    }

    /// `C = 8 K1^2 (T + T sigma_max^2 + C2)` with `C2 = 4`.
    pub fn from_constants(k1: f64, horizon: f64, sigma_max: f64) -> Result<Self> {
        Self::new(8.0 * k1 * k1 * (horizon + horizon * sigma_max * sigma_max + DOOB_C2))
    }
}

/// `N_C(X - Y)` over paired ensembles indexed `[policy][sample]`.
///
/// At each node the sublinear expectation of `|X - Y|^2` is the largest
/// per-policy sample mean; the time integral uses the trapezoidal rule.
pub fn nc_norm_ensemble(xs: &[Vec<Path>], ys: &[Vec<Path>], cfg: &NCNormConfig) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Usage(
            "ensembles must be non-empty with matching policy counts".into(),
        ));
    }
    let grid = *xs[0]
        .first()
        .ok_or_else(|| Error::Usage("empty ensemble".into()))?
        .grid();
    let (n0, n) = (grid.zero_index(), grid.steps());
    let mut upper = vec![f64::NEG_INFINITY; n - n0 + 1];
    for (px, py) in xs.iter().zip(ys) {
        if px.is_empty() || px.len() != py.len() {
            return Err(Error::Usage(
                "sample counts differ between ensembles".into(),
            ));
        }
        let mut mean = vec![0.0; n - n0 + 1];
        for (x, y) in px.iter().zip(py) {
            if !x.grid().same_as(&grid) || !y.grid().same_as(&grid) {
                return Err(Error::Usage("paths live on different grids".into()));
            }
            for (k, m) in mean.iter_mut().enumerate() {
                let d = x.value(n0 + k) - y.value(n0 + k);
                *m += d * d;
            }
        }
        for (u, m) in upper.iter_mut().zip(&mean) {
            *u = u.max(m / px.len() as f64);
        }
    }
    let weighted: Vec<f64> = upper
        .iter()
        .enumerate()
        .map(|(k, e)| (-2.0 * cfg.c * k as f64 * grid.h()).exp() * e)
        .collect();
    Ok(trapezoid(&weighted, grid.h()).sqrt())
}

/// `N_C(X - Y)` for a single pair.
pub fn nc_norm(x: &Path, y: &Path, cfg: &NCNormConfig) -> Result<f64> {
    nc_norm_ensemble(&[vec![x.clone()]], &[vec![y.clone()]], cfg)
}
