//! Explicit finite differences for the G-heat equation
//!
//! ```text
//! du/dt = G(d2u/dx2),   u(0, x) = phi(x),   G(a) = (sigma_max^2 a^+ - sigma_min^2 a^-) / 2
//! ```
//!
//! whose viscosity solution gives `u(t, x) = E^[phi(x + sqrt(t) X)]` for a
//! G-normal `X`. The scheme marches `u_i <- u_i + dt * G(D2 u_i)` with the
//! centred second difference and frozen Dirichlet boundaries. Under the
//! stability bound `dt <= dx^2 / (2 sigma_max^2)` every update is a convex
//! combination of neighbours, so the scheme is monotone and converges to the
//! viscosity solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volatility uncertainty interval `[sigma_min, sigma_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolBounds {
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl VolBounds {
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        let b = Self {
            sigma_min,
            sigma_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min.is_finite() && self.sigma_min > 0.0) {
            return Err(Error::config(
                "sigma_min",
                format!("must be finite and > 0, got {}", self.sigma_min),
            ));
        }
        if !(self.sigma_max.is_finite() && self.sigma_max >= self.sigma_min) {
            return Err(Error::config(
                "sigma_max",
                format!(
                    "must be >= sigma_min = {}, got {}",
                    self.sigma_min, self.sigma_max
                ),
            ));
        }
        Ok(())
    }

    pub fn var_min(&self) -> f64 {
        self.sigma_min * self.sigma_min
    }

    pub fn var_max(&self) -> f64 {
        self.sigma_max * self.sigma_max
    }

    /// `G(a)`.
    pub fn g(&self, a: f64) -> f64 {
        g_of(a, self)
    }

    /// True when the interval collapses to a single volatility.
    pub fn is_classical(&self) -> bool {
        self.sigma_min == self.sigma_max
    }
}

/// `G(a) = (sigma_max^2 max(a, 0) - sigma_min^2 max(-a, 0)) / 2`.
pub fn g_of(a: f64, bounds: &VolBounds) -> f64 {
    0.5 * (bounds.var_max() * a.max(0.0) - bounds.var_min() * (-a).max(0.0))
}

/// Uniform spatial grid with `nx` interior points; nodes `0` and `nx + 1`
/// are the Dirichlet boundaries `x_min`, `x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    nx: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < 0.0 && 0.0 < x_max) {
            return Err(Error::config(
                "spatial_grid",
                format!("need x_min < 0 < x_max, got [{x_min}, {x_max}]"),
            ));
        }
        if nx < 3 {
            return Err(Error::config(
                "spatial_grid.nx",
                format!("need >= 3, got {nx}"),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            nx,
            dx: (x_max - x_min) / (nx + 1) as f64,
        })
    }

    /// Smallest grid with spacing `dx` covering `[lo, hi]` that has `0` as a node.
    pub fn covering(lo: f64, hi: f64, dx: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::config(
                "dx",
                format!("must be finite and > 0, got {dx}"),
            ));
        }
        let left = (-lo.min(-dx) / dx - 1e-9).ceil().max(1.0);
        let right = (hi.max(dx) / dx - 1e-9).ceil().max(1.0);
        let nodes = (left + right) as usize;
        Self::new(-left * dx, right * dx, nodes.max(4) - 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Interior point count.
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Node count including both boundaries.
    pub fn len(&self) -> usize {
        self.nx + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn xs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.x(i))
    }

    fn position(&self, x: f64) -> f64 {
        (x - self.x_min) / self.dx
    }
}

/// Which time levels to retain while marching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    All,
    Every(usize),
    Final,
}

/// Space-time field `u(t_j, x_i)`.
#[derive(Debug, Clone)]
pub struct GHeatSolution {
    grid: SpatialGrid,
    dt: f64,
    bounds: VolBounds,
    times: Vec<f64>,
    levels: Vec<Vec<f64>>,
}

impl GHeatSolution {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// Step actually used (`t_end / steps`, never above the requested step).
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bounds(&self) -> &VolBounds {
        &self.bounds
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Retained levels; the first is `phi` on the grid, the last is `t_end`.
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn final_level(&self) -> &[f64] {
        self.levels.last().expect("at least the initial level")
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("at least the initial time")
    }

    /// `u(t_end, x)` by linear interpolation; constant beyond the boundaries.
    pub fn value_at(&self, x: f64) -> f64 {
        let u = self.final_level();
        let pos = self.grid.position(x);
        let last = u.len() - 1;
        if pos <= 0.0 {
            return u[0];
        }
        if pos >= last as f64 {
            return u[last];
        }
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return u[nearest as usize];
        }
        let k = pos.floor() as usize;
        let w = pos - k as f64;
        u[k] + w * (u[k + 1] - u[k])
    }

    /// `u(t_end, 0)`, i.e. `E^[phi(sqrt(t_end) X)]`.
    pub fn at_origin(&self) -> f64 {
        self.value_at(0.0)
    }
}

/// Explicit-scheme step limit `dx^2 / (2 sigma_max^2)`.
pub fn max_stable_dt(grid: &SpatialGrid, bounds: &VolBounds) -> f64 {
    grid.dx() * grid.dx() / (2.0 * bounds.var_max())
}

pub fn solve_g_heat(
    phi: impl Fn(f64) -> f64,
    bounds: &VolBounds,
    t_end: f64,
    grid: &SpatialGrid,
    dt: f64,
) -> Result<GHeatSolution> {
    solve_g_heat_with(phi, bounds, t_end, grid, dt, Keep::All)
}

pub fn solve_g_heat_with(
    phi: impl Fn(f64) -> f64,
    bounds: &VolBounds,
    t_end: f64,
    grid: &SpatialGrid,
    dt: f64,
    keep: Keep,
) -> Result<GHeatSolution> {
    bounds.validate()?;
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::config(
            "t_end",
            format!("must be finite and >= 0, got {t_end}"),
        ));
    }
    let limit = max_stable_dt(grid, bounds);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::config(
            "dt",
            format!("must be finite and > 0, got {dt}"),
        ));
    }
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::config(
            "dt",
            format!("dt = {dt} violates the stability bound dx^2/(2 sigma_max^2) = {limit}"),
        ));
    }

    let mut u: Vec<f64> = grid.xs().map(&phi).collect();
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!(
            "phi is not finite at x = {}",
            grid.x(i)
        )));
    }

    let steps = if t_end == 0.0 {
        0
    } else {
        (t_end / dt - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if steps == 0 { dt } else { t_end / steps as f64 };
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let (half_up, half_down) = (0.5 * bounds.var_max(), 0.5 * bounds.var_min());

    let mut times = vec![0.0];
    let mut levels = vec![u.clone()];
    let mut next = u.clone();
    let n = u.len();
    for j in 1..=steps {
        for i in 1..n - 1 {
            let d2 = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_dx2;
            let g = if d2 >= 0.0 {
                half_up * d2
            } else {
                half_down * d2
            };
            next[i] = u[i] + dt * g;
        }
        std::mem::swap(&mut u, &mut next);
        let retain = match keep {
            Keep::All => true,
            Keep::Every(k) => j % k.max(1) == 0 || j == steps,
            Keep::Final => j == steps,
        };
        if retain {
            times.push(j as f64 * dt);
            levels.push(u.clone());
        }
    }

    Ok(GHeatSolution {
        grid: *grid,
        dt,
        bounds: *bounds,
        times,
        levels,
    })
}

/// Upper distribution `E^[1{X <= y}]` or lower `-E^[-1{X <= y}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Upper,
    Lower,
}

/// Discretisation settings for G-normal distribution tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GNormalConfig {
    pub dx: f64,
    /// Ramp half-width of the smoothed indicator; `2 dx` when absent.
    pub eps: Option<f64>,
    pub side: Side,
    /// Domain half-width beyond the region of interest, in units of `sigma_max sqrt(t)`.
    pub width_sigmas: f64,
}

impl Default for GNormalConfig {
    fn default() -> Self {
        Self {
            dx: 0.02,
            eps: None,
            side: Side::Upper,
            width_sigmas: 8.0,
        }
    }
}

impl GNormalConfig {
    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(2.0 * self.dx)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dx.is_finite() && self.dx > 0.0) {
            return Err(Error::config(
                "dx",
                format!("must be finite and > 0, got {}", self.dx),
            ));
        }
        if !(self.eps().is_finite() && self.eps() > 0.0) {
            return Err(Error::config(
                "eps",
                format!("must be > 0, got {}", self.eps()),
            ));
        }
        if !(self.width_sigmas.is_finite() && self.width_sigmas >= 6.0) {
            return Err(Error::config("width_sigmas", "must be >= 6"));
        }
        Ok(())
    }
}

/// Piecewise-linear step: 1 left of `y - eps`, 0 right of `y + eps`.
pub fn smoothed_step(x: f64, y: f64, eps: f64) -> f64 {
    ((y + eps - x) / (2.0 * eps)).clamp(0.0, 1.0)
}

/// `E^[phi_eps(sqrt(t) X)]` with `phi_eps` the smoothed indicator of `(-inf, y]`.
pub fn g_normal_upper_cdf(y: f64, bounds: &VolBounds, t: f64, eps: f64, dx: f64) -> Result<f64> {
    let cfg = GNormalConfig {
        dx,
        eps: Some(eps),
        ..GNormalConfig::default()
    };
    g_normal_cdf(y, bounds, t, &cfg)
}

/// Distribution value at a single `y`, one PDE solve per call.
pub fn g_normal_cdf(y: f64, bounds: &VolBounds, t: f64, cfg: &GNormalConfig) -> Result<f64> {
    cfg.validate()?;
    check_time(t)?;
    if !y.is_finite() {
        return Err(Error::Domain(format!("y must be finite, got {y}")));
    }
    let eps = cfg.eps();
    let reach = cfg.width_sigmas * bounds.sigma_max * t.sqrt() + 2.0 * eps;
    let grid = SpatialGrid::covering(-reach, reach, cfg.dx)?;
    let dt = max_stable_dt(&grid, bounds);
    let sign = side_sign(cfg.side);
    let sol = solve_g_heat_with(
        |x| sign * smoothed_step(x, y, eps),
        bounds,
        t,
        &grid,
        dt,
        Keep::Final,
    )?;
    Ok((sign * sol.at_origin()).clamp(0.0, 1.0))
}

/// Distribution on a set of `y` values from a single solve.
///
/// By translation invariance `E^[1{x + sqrt(t) X <= 0}] = F(-x)`, so the
/// distribution at `y` is read off the solution for the step at `0` at `x = -y`.
pub fn g_normal_cdf_table(
    bounds: &VolBounds,
    t: f64,
    ys: &[f64],
    cfg: &GNormalConfig,
) -> Result<Vec<(f64, f64)>> {
    let sol = shifted_step_solution(bounds, t, ys, cfg)?;
    let sign = side_sign(cfg.side);
    Ok(ys
        .iter()
        .map(|&y| (y, (sign * sol.value_at(-y)).clamp(0.0, 1.0)))
        .collect())
}

/// Centred difference in `y` of the distribution, negative round-off clipped.
pub fn g_normal_density(
    bounds: &VolBounds,
    t: f64,
    ys: &[f64],
    cfg: &GNormalConfig,
) -> Result<Vec<(f64, f64)>> {
    let sol = shifted_step_solution(bounds, t, ys, cfg)?;
    let sign = side_sign(cfg.side);
    let d = cfg.dx;
    Ok(ys
        .iter()
        .map(|&y| {
            let up = sign * sol.value_at(-(y + d));
            let down = sign * sol.value_at(-(y - d));
            (y, ((up - down) / (2.0 * d)).max(0.0))
        })
        .collect())
}

fn shifted_step_solution(
    bounds: &VolBounds,
    t: f64,
    ys: &[f64],
    cfg: &GNormalConfig,
) -> Result<GHeatSolution> {
    cfg.validate()?;
    check_time(t)?;
    if ys.is_empty() || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("y grid must be non-empty and finite".into()));
    }
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| {
            (l.min(y), h.max(y))
        });
    let eps = cfg.eps();
    let reach = cfg.width_sigmas * bounds.sigma_max * t.sqrt() + 2.0 * eps + cfg.dx;
    let grid = SpatialGrid::covering(-hi - reach, -lo + reach, cfg.dx)?;
    let dt = max_stable_dt(&grid, bounds);
    let sign = side_sign(cfg.side);
    solve_g_heat_with(
        |x| sign * smoothed_step(x, 0.0, eps),
        bounds,
        t,
        &grid,
        dt,
        Keep::Final,
    )
}

fn side_sign(side: Side) -> f64 {
    match side {
        Side::Upper => 1.0,
        Side::Lower => -1.0,
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("t must be finite and > 0, got {t}")));
    }
    Ok(())
}
