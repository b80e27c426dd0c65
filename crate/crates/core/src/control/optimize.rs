//! Exhaustive minimisation of the worst-case cost over strict controls and over
//! discretised relaxed controls on a fixed block partition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::{ControlProblem, WorstCaseCost};
use super::{uniform_partition, ActionGrid, Control, RelaxedControl, StrictControl};
use crate::error::{Error, Result};

/// Largest number of candidates an exhaustive search will evaluate.
pub const CANDIDATE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub encoding: String,
    pub cost: WorstCaseCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictOptimum {
    pub control: StrictControl,
    pub value: f64,
    pub std_err: f64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedOptimum {
    pub control: RelaxedControl,
    pub value: f64,
    pub std_err: f64,
    /// Best candidate whose rows are all unit masses, i.e. the strict optimum.
    pub dirac_value: f64,
    pub dirac_std_err: f64,
    pub candidates: Vec<Candidate>,
}

impl RelaxedOptimum {
    /// `min strict J - min relaxed J` (nonnegative by inclusion).
    pub fn gap_to_strict(&self) -> f64 {
        self.dirac_value - self.value
    }
}

fn check_budget(per_block: usize, blocks: usize, what: &str) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..blocks {
        total = total.saturating_mul(per_block);
        if total > CANDIDATE_BUDGET {
            return Err(Error::config(
                what,
                format!("{per_block}^{blocks} candidates exceed the budget of {CANDIDATE_BUDGET}; use fewer blocks or atoms"),
            ));
        }
    }
    Ok(total)
}

/// Digits of `index` in base `m`, most significant first (block 0 leads).
fn digits(mut index: usize, m: usize, blocks: usize) -> Vec<usize> {
    let mut d = vec![0; blocks];
    for slot in d.iter_mut().rev() {
        *slot = index % m;
        index /= m;
    }
    d
}

/// First index attaining the minimum value.
fn first_min(costs: &[WorstCaseCost]) -> usize {
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if c.value < costs[best].value {
            best = i;
        }
    }
    best
}

/// All compositions of `r` into `m` nonnegative parts, lexicographically descending
/// in the leading part (so the Dirac row on the first atom comes first).
pub fn simplex_rows(m: usize, r: usize) -> Vec<Vec<f64>> {
    fn rec(m: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == m {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in (0..=left).rev() {
            prefix.push(c);
            rec(m, left - c, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, r, &mut Vec::with_capacity(m), &mut out);
    out.into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / r as f64).collect())
        .collect()
}

impl ControlProblem {
    /// Minimise `J(u)` over every assignment of atoms to `blocks` equal blocks.
    pub fn optimize_strict(&self, actions: &ActionGrid, blocks: usize) -> Result<StrictOptimum> {
        if blocks == 0 {
            return Err(Error::config("optimize.blocks", "must be >= 1"));
        }
        let m = actions.len();
        let total = check_budget(m, blocks, "optimize.blocks")?;
        let horizon = self.grid().horizon();
        let controls: Vec<StrictControl> = (0..total)
            .map(|i| StrictControl::uniform(actions.clone(), horizon, digits(i, m, blocks)))
            .collect::<Result<_>>()?;
        let costs: Vec<WorstCaseCost> = controls
            .par_iter()
            .map(|u| self.cost(Control::Strict(u)))
            .collect::<Result<_>>()?;
        let best = first_min(&costs);
        Ok(StrictOptimum {
            control: controls[best].clone(),
            value: costs[best].value,
            std_err: costs[best].std_err,
            candidates: controls
                .iter()
                .zip(costs)
                .map(|(u, cost)| Candidate {
                    encoding: u.encode(),
                    cost,
                })
                .collect(),
        })
    }

    /// Minimise `J(mu)` over rows with weights in `{0, 1/r, ..., 1}` on each block.
    pub fn optimize_relaxed(
        &self,
        actions: &ActionGrid,
        blocks: usize,
        resolution: usize,
    ) -> Result<RelaxedOptimum> {
        if blocks == 0 {
            return Err(Error::config("optimize.blocks", "must be >= 1"));
        }
        if resolution == 0 {
            return Err(Error::config("optimize.resolution", "must be >= 1"));
        }
        let rows = simplex_rows(actions.len(), resolution);
        let total = check_budget(rows.len(), blocks, "optimize.resolution")?;
        let breakpoints = uniform_partition(self.grid().horizon(), blocks);
        let controls: Vec<RelaxedControl> = (0..total)
            .map(|i| {
                let w = digits(i, rows.len(), blocks)
                    .into_iter()
                    .map(|j| rows[j].clone())
                    .collect();
                RelaxedControl::new(actions.clone(), breakpoints.clone(), w)
            })
            .collect::<Result<_>>()?;
        let costs: Vec<WorstCaseCost> = controls
            .par_iter()
            .map(|mu| self.cost(Control::Relaxed(mu)))
            .collect::<Result<_>>()?;
        let best = first_min(&costs);
        let mut dirac: Option<usize> = None;
        for (i, mu) in controls.iter().enumerate() {
            if mu.is_dirac() && dirac.is_none_or(|d| costs[i].value < costs[d].value) {
                dirac = Some(i);
            }
        }
        let dirac = dirac.expect("the simplex grid contains every unit row");
        Ok(RelaxedOptimum {
            control: controls[best].clone(),
            value: costs[best].value,
            std_err: costs[best].std_err,
            dirac_value: costs[dirac].value,
            dirac_std_err: costs[dirac].std_err,
            candidates: controls
                .iter()
                .zip(costs)
                .map(|(mu, cost)| Candidate {
                    encoding: mu.encode(),
                    cost,
                })
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{
        Base, CoeffFunctional, CoeffSet, CostSpec, RunningCost, TerminalCost,
    };
    use crate::gheat::VolBounds;
    use crate::grid::{Path, TimeGrid};
    use crate::nsfde::EulerConfig;
    use crate::scenarios::ScenarioFamily;

    fn problem(coeffs: CoeffSet, cost: CostSpec) -> ControlProblem {
        let grid = TimeGrid::new(0.0, 1.0, 40).unwrap();
        let family = ScenarioFamily::extremes(VolBounds::new(0.5, 1.0).unwrap(), 20, 3).unwrap();
        ControlProblem::new(
            coeffs,
            cost,
            Path::constant(grid, 0.5).unwrap(),
            family,
            EulerConfig::default(),
        )
        .unwrap()
    }

    fn quadratic(u_ref: f64) -> CostSpec {
        CostSpec {
            running: RunningCost {
                q: 0.0,
                base: Base::zero(),
                r: 1.0,
                u_ref,
                clamp: Some(10.0),
            },
            terminal: TerminalCost {
                p: 0.0,
                offset: 0.0,
                clamp: None,
            },
        }
    }

    #[test]
    fn simplex_enumeration() {
        let rows = simplex_rows(3, 2);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(rows[5], vec![0.0, 0.0, 1.0]);
        assert!(rows
            .iter()
            .all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn budget_guard() {
        let pr = problem(CoeffSet::zero(0.0), quadratic(0.0));
        let g = ActionGrid::uniform(0.0, 1.0, 10).unwrap();
        assert!(matches!(
            pr.optimize_strict(&g, 6),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            pr.optimize_relaxed(&g, 3, 4),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn control_free_cost_ties_to_first() {
        let mut cost = CostSpec::zero();
        cost.terminal.p = 1.0;
        let set = CoeffSet::new(
            CoeffFunctional::zero(),
            CoeffFunctional::zero(),
            CoeffFunctional::zero(),
            CoeffFunctional::pointwise(0.5),
            0.0,
            (0.0, 1.0),
        )
        .unwrap();
        let pr = problem(set, cost);
        let g = ActionGrid::uniform(0.0, 1.0, 3).unwrap();
        let opt = pr.optimize_strict(&g, 2).unwrap();
        assert_eq!(opt.control.encode(), "0-0");
        assert_eq!(opt.value, pr.cost(Control::None).unwrap().value);
        assert!(opt.candidates.iter().all(|c| c.cost.value == opt.value));
    }

    #[test]
    fn pointwise_minimiser_found() {
        let pr = problem(CoeffSet::zero(0.0), quadratic(0.3));
        let g = ActionGrid::new(vec![0.0, 0.3, 0.6]).unwrap();
        let opt = pr.optimize_strict(&g, 2).unwrap();
        assert_eq!(opt.control.encode(), "1-1");
        assert!(opt.value.abs() < 1e-15);
        let rel = pr.optimize_relaxed(&g, 2, 2).unwrap();
        assert!(rel.value <= opt.value + 3.0 * opt.std_err);
        assert_eq!(rel.dirac_value, opt.value);
    }
}
