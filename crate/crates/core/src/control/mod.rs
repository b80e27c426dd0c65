//! Strict and relaxed controls on a finite action grid.
//!
//! Both kinds live on a partition of `[0, T]` into blocks. A strict control
//! picks one atom per block; a relaxed control carries a probability row over
//! the atoms per block (deterministic, piecewise constant in time). Strict
//! controls embed as Dirac rows, and [`chattering::chattering_approx`] maps a
//! relaxed control back to a fast-switching strict one.

pub mod chattering;
pub mod cost;
pub mod optimize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

pub use chattering::{chattering_approx, stable_convergence_gap, Monomial};
pub use cost::{ControlProblem, CostEstimate, StabilityPoint, WorstCaseCost};
pub use optimize::{RelaxedOptimum, StrictOptimum};

const ROW_TOL: f64 = 1e-12;
const TIME_TOL: f64 = 1e-9;

/// Sorted atoms `a_1 < ... < a_m` discretising `A = [a_lo, a_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    atoms: Vec<f64>,
}

impl ActionGrid {
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::config("actions", "need at least one atom"));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("actions", "atoms must be finite"));
        }
        if atoms.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(
                "actions",
                "atoms must be strictly increasing",
            ));
        }
        Ok(Self { atoms })
    }

    /// `m` equally spaced atoms on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m == 1 {
            return Self::new(vec![lo]);
        }
        Self::new(
            (0..m)
                .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, j: usize) -> f64 {
        self.atoms[j]
    }

    /// `(a_lo, a_hi)`.
    pub fn range(&self) -> (f64, f64) {
        (self.atoms[0], self.atoms[self.atoms.len() - 1])
    }
}

fn validate_breakpoints(breakpoints: &[f64]) -> Result<()> {
    if breakpoints.len() < 2 {
        return Err(Error::config(
            "control.breakpoints",
            "need at least one block",
        ));
    }
    if breakpoints[0] != 0.0 {
        return Err(Error::config(
            "control.breakpoints",
            "partition must start at 0",
        ));
    }
    if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config(
            "control.breakpoints",
            "must be strictly increasing",
        ));
    }
    Ok(())
}

/// `k` equal blocks tiling `[0, horizon]`.
pub fn uniform_partition(horizon: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|j| horizon * j as f64 / k as f64).collect()
}

fn block_of(breakpoints: &[f64], t: f64) -> usize {
    let k = breakpoints.len() - 1;
    let slack = TIME_TOL * breakpoints[k].max(1.0);
    breakpoints[1..k].partition_point(|&b| b <= t + slack)
}

/// Piecewise-constant `A`-valued control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictControl {
    actions: ActionGrid,
    breakpoints: Vec<f64>,
    choice: Vec<usize>,
}

impl StrictControl {
    pub fn new(actions: ActionGrid, breakpoints: Vec<f64>, choice: Vec<usize>) -> Result<Self> {
        validate_breakpoints(&breakpoints)?;
        if choice.len() + 1 != breakpoints.len() {
            return Err(Error::config(
                "control.choice",
                "need one atom index per block",
            ));
        }
        if choice.iter().any(|&j| j >= actions.len()) {
            return Err(Error::config("control.choice", "atom index out of range"));
        }
        Ok(Self {
            actions,
            breakpoints,
            choice,
        })
    }

    /// Equal blocks on `[0, horizon]`.
    pub fn uniform(actions: ActionGrid, horizon: f64, choice: Vec<usize>) -> Result<Self> {
        let k = choice.len();
        Self::new(actions, uniform_partition(horizon, k), choice)
    }

    /// `u(t) = a_j` on all of `[0, horizon]`.
    pub fn constant(actions: ActionGrid, horizon: f64, j: usize) -> Result<Self> {
        Self::uniform(actions, horizon, vec![j])
    }

    pub fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn choice(&self) -> &[usize] {
        &self.choice
    }

    pub fn blocks(&self) -> usize {
        self.choice.len()
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn action_at(&self, t: f64) -> f64 {
        self.actions
            .atom(self.choice[block_of(&self.breakpoints, t)])
    }

    /// Compact encoding such as `0-2-1-1`.
    pub fn encode(&self) -> String {
        self.choice
            .iter()
            .map(|j| j.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Piecewise-constant probability rows over the atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedControl {
    actions: ActionGrid,
    breakpoints: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl RelaxedControl {
    /// Rows must be nonnegative and sum to one within `1e-12`.
    pub fn new(actions: ActionGrid, breakpoints: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        validate_breakpoints(&breakpoints)?;
        if weights.len() + 1 != breakpoints.len() {
            return Err(Error::config("control.weights", "need one row per block"));
        }
        for (k, row) in weights.iter().enumerate() {
            if row.len() != actions.len() {
                return Err(Error::config(
                    format!("control.weights[{k}]"),
                    "row length must equal the atom count",
                ));
            }
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::config(
                    format!("control.weights[{k}]"),
                    "weights must be >= 0",
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::config(
                    format!("control.weights[{k}]"),
                    format!("row sums to {sum}, not 1"),
                ));
            }
        }
        Ok(Self {
            actions,
            breakpoints,
            weights,
        })
    }

    pub fn uniform(actions: ActionGrid, horizon: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        Self::new(actions, uniform_partition(horizon, k), weights)
    }

    pub fn actions(&self) -> &ActionGrid {
        &self.actions
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn blocks(&self) -> usize {
        self.weights.len()
    }

    pub fn horizon(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// `(atom, weight)` pairs of the block containing `t`.
    pub fn mix_at(&self, t: f64) -> Vec<(f64, f64)> {
        let row = &self.weights[block_of(&self.breakpoints, t)];
        self.actions
            .atoms()
            .iter()
            .copied()
            .zip(row.iter().copied())
            .collect()
    }

    /// True when every row is a unit mass.
    pub fn is_dirac(&self) -> bool {
        self.weights
            .iter()
            .all(|row| row.iter().filter(|&&w| w != 0.0).count() == 1)
    }

    pub fn encode(&self) -> String {
        self.weights
            .iter()
            .map(|row| {
                row.iter()
                    .map(|w| format!("{w:.4}"))
                    .collect::<Vec<_>>()
                    .join(":")
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// `Phi(u)(dt, dxi) = delta_{u(t)}(dxi) dt`.
pub fn dirac_embed(u: &StrictControl) -> RelaxedControl {
    let m = u.actions.len();
    let weights = u
        .choice
        .iter()
        .map(|&j| {
            let mut row = vec![0.0; m];
            row[j] = 1.0;
            row
        })
        .collect();
    RelaxedControl {
        actions: u.actions.clone(),
        breakpoints: u.breakpoints.clone(),
        weights,
    }
}

/// Control input to the integrator.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    None,
    Strict(&'a StrictControl),
    Relaxed(&'a RelaxedControl),
}

/// Action mix applied on one step: `(atom, weight)` pairs, empty if uncontrolled.
pub type StepMix = Vec<(f64, f64)>;

impl Control<'_> {
    pub fn is_none(&self) -> bool {
        matches!(self, Control::None)
    }

    fn horizon(&self) -> Option<f64> {
        match self {
            Control::None => None,
            Control::Strict(u) => Some(u.horizon()),
            Control::Relaxed(mu) => Some(mu.horizon()),
        }
    }

    /// Mix used on each forward step, read at the left endpoint `t_i`.
    pub fn schedule(&self, grid: &TimeGrid) -> Result<Vec<StepMix>> {
        if let Some(h) = self.horizon() {
            if (h - grid.horizon()).abs() > TIME_TOL * grid.horizon().max(1.0) {
                return Err(Error::Usage(format!(
                    "control horizon {h} differs from grid horizon {}",
                    grid.horizon()
                )));
            }
        }
        Ok((0..grid.forward_steps())
            .map(|k| {
                let t = k as f64 * grid.h();
                match self {
                    Control::None => Vec::new(),
                    Control::Strict(u) => vec![(u.action_at(t), 1.0)],
                    Control::Relaxed(mu) => mu.mix_at(t),
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms() -> ActionGrid {
        ActionGrid::new(vec![-1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn action_grid_validation() {
        assert!(ActionGrid::new(vec![]).is_err());
        assert!(ActionGrid::new(vec![1.0, 1.0]).is_err());
        let g = ActionGrid::uniform(0.0, 1.0, 3).unwrap();
        assert_eq!(g.atoms(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.range(), (0.0, 1.0));
    }

    #[test]
    fn strict_lookup() {
        let u = StrictControl::uniform(atoms(), 1.0, vec![0, 2, 1, 1]).unwrap();
        assert_eq!(u.action_at(0.0), -1.0);
        assert_eq!(u.action_at(0.2499), -1.0);
        assert_eq!(u.action_at(0.25), 1.0);
        assert_eq!(u.action_at(1.0), 0.0);
        assert_eq!(u.encode(), "0-2-1-1");
        assert!(StrictControl::uniform(atoms(), 1.0, vec![3]).is_err());
    }

    #[test]
    fn relaxed_rows_validated() {
        assert!(RelaxedControl::uniform(atoms(), 1.0, vec![vec![0.5, 0.5, 0.1]]).is_err());
        assert!(RelaxedControl::uniform(atoms(), 1.0, vec![vec![1.5, -0.5, 0.0]]).is_err());
        assert!(RelaxedControl::uniform(atoms(), 1.0, vec![vec![0.5, 0.5]]).is_err());
        assert!(RelaxedControl::uniform(atoms(), 1.0, vec![vec![0.2, 0.3, 0.5]]).is_ok());
    }

    #[test]
    fn dirac_rows() {
        let u = StrictControl::constant(atoms(), 1.0, 1).unwrap();
        let mu = dirac_embed(&u);
        assert_eq!(mu.weights(), &[vec![0.0, 1.0, 0.0]]);
        assert!(mu.is_dirac());
    }

    #[test]
    fn schedule_follows_blocks() {
        let grid = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let u = StrictControl::uniform(atoms(), 1.0, vec![0, 2]).unwrap();
        let s = Control::Strict(&u).schedule(&grid).unwrap();
        assert_eq!(s[3], vec![(-1.0, 1.0)]);
        assert_eq!(s[4], vec![(1.0, 1.0)]);
        let wrong = StrictControl::uniform(atoms(), 2.0, vec![0]).unwrap();
        assert!(Control::Strict(&wrong).schedule(&grid).is_err());
        assert!(Control::None
            .schedule(&grid)
            .unwrap()
            .iter()
            .all(|m| m.is_empty()));
    }
}
