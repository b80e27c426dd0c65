//! Chattering approximation of relaxed controls and the stable-convergence
//! gap measured against polynomial test functions `t^p xi^q`.

use serde::{Deserialize, Serialize};

use super::{RelaxedControl, StrictControl};
use crate::error::{Error, Result};

/// Sub-slots shorter than this fraction of the horizon are dropped.
const SLIVER: f64 = 1e-12;

/// Cut every block of `mu` into `n` micro-slots and split each slot among the
/// atoms in ascending order, proportionally to the block's row.
///
/// With `grid_step = Some(h)` a micro-slot shorter than `h` is rejected, since
/// the integrator could not resolve the switching.
pub fn chattering_approx(
    mu: &RelaxedControl,
    n: usize,
    grid_step: Option<f64>,
) -> Result<StrictControl> {
    if n == 0 {
        return Err(Error::config("chattering.n", "must be >= 1"));
    }
    let bps = mu.breakpoints();
    let sliver = SLIVER * mu.horizon().max(1.0);
    let mut breakpoints = vec![0.0];
    let mut choice = Vec::new();
    for (k, row) in mu.weights().iter().enumerate() {
        let (start, end) = (bps[k], bps[k + 1]);
        let slot = (end - start) / n as f64;
        if let Some(h) = grid_step {
            if slot < h * (1.0 - 1e-9) {
                return Err(Error::config(
                    "chattering.n",
                    format!("micro-slot {slot} is shorter than the grid step {h}; use a finer grid or smaller n"),
                ));
            }
        }
        let mut pieces: Vec<(f64, usize)> = Vec::new();
        for i in 0..n {
            let s0 = start + slot * i as f64;
            let mut acc = 0.0;
            for (j, &w) in row.iter().enumerate() {
                acc += w;
                let right = if i + 1 == n && acc >= 1.0 - 1e-12 {
                    end
                } else {
                    s0 + slot * acc.min(1.0)
                };
                let left = pieces.last().map_or(start, |p| p.0);
                if w > 0.0 && right - left > sliver {
                    match pieces.last_mut() {
                        Some(p) if p.1 == j => p.0 = right,
                        _ => pieces.push((right, j)),
                    }
                }
            }
        }
        // the last piece must close the block exactly
        if let Some(p) = pieces.last_mut() {
            p.0 = end;
        }
        for (right, j) in pieces {
            breakpoints.push(right);
            choice.push(j);
        }
    }
    StrictControl::new(mu.actions().clone(), breakpoints, choice)
}

/// Test function `f(t, xi) = t^p xi^q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    pub p: u32,
    pub q: u32,
}

impl Monomial {
    pub fn new(p: u32, q: u32) -> Self {
        Self { p, q }
    }

    /// All `t^p xi^q` with `p, q <= 2`.
    pub fn default_set() -> Vec<Self> {
        (0..=2)
            .flat_map(|p| (0..=2).map(move |q| Self { p, q }))
            .collect()
    }

    pub fn eval(&self, t: f64, xi: f64) -> f64 {
        t.powi(self.p as i32) * xi.powi(self.q as i32)
    }

    /// `int_s^e t^p dt * xi^q`.
    fn integrate(&self, s: f64, e: f64, xi: f64) -> f64 {
        let k = (self.p + 1) as i32;
        (e.powi(k) - s.powi(k)) / k as f64 * xi.powi(self.q as i32)
    }
}

/// `int f dPhi(u)`.
pub fn integrate_strict(u: &StrictControl, f: &Monomial) -> f64 {
    let bps = u.breakpoints();
    u.choice()
        .iter()
        .enumerate()
        .map(|(k, &j)| f.integrate(bps[k], bps[k + 1], u.actions().atom(j)))
        .sum()
}

/// `int f dmu`.
pub fn integrate_relaxed(mu: &RelaxedControl, f: &Monomial) -> f64 {
    let bps = mu.breakpoints();
    mu.weights()
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .zip(mu.actions().atoms())
                .map(|(w, &a)| w * f.integrate(bps[k], bps[k + 1], a))
                .sum::<f64>()
        })
        .sum()
}

/// `max_f |int f dPhi(u) - int f dmu|` over `tests`.
pub fn stable_convergence_gap(
    mu: &RelaxedControl,
    u: &StrictControl,
    tests: &[Monomial],
) -> Result<f64> {
    if (mu.horizon() - u.horizon()).abs() > 1e-9 * mu.horizon().max(1.0) {
        return Err(Error::Usage("controls have different horizons".into()));
    }
    if mu.actions() != u.actions() {
        return Err(Error::Usage("controls use different action grids".into()));
    }
    Ok(tests
        .iter()
        .map(|f| (integrate_strict(u, f) - integrate_relaxed(mu, f)).abs())
        .fold(0.0, f64::max))
}

/// Time spent on each atom inside each block of `mu`'s partition, as a fraction of the block.
pub fn occupancy(mu: &RelaxedControl, u: &StrictControl) -> Vec<Vec<f64>> {
    let (mb, ub) = (mu.breakpoints(), u.breakpoints());
    let m = mu.actions().len();
    (0..mu.blocks())
        .map(|k| {
            let (s, e) = (mb[k], mb[k + 1]);
            let mut occ = vec![0.0; m];
            for (i, &j) in u.choice().iter().enumerate() {
                let overlap = ub[i + 1].min(e) - ub[i].max(s);
                if overlap > 0.0 {
                    occ[j] += overlap;
                }
            }
            occ.iter().map(|o| o / (e - s)).collect()
        })
        .collect()
}
