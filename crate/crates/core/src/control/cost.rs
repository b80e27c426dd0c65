//! Costs `J^P(mu)` under one volatility policy and the worst case
//! `J(mu) = max_P J^P(mu)` over a scenario family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chattering::chattering_approx;
use super::{Control, RelaxedControl, StepMix};
use crate::error::{Error, Result};
use crate::functionals::{CoeffSet, CostSpec};
use crate::grid::{Path, Segment, TimeGrid};
use crate::nsfde::{simulate_nsfde, EulerConfig};
use crate::scenarios::{summarize, GBMPath, PolicyEstimate, ScenarioFamily, UpperEstimate};
use crate::stats::MeanEstimate;

/// Worst case over the family with the per-policy table.
pub type WorstCaseCost = UpperEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// One row of a chattering stability study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub n: usize,
    /// `max_P E^P[sup_t |X^{u_n}(t) - X^mu(t)|^2]`.
    pub path_gap: f64,
    pub path_gap_se: f64,
    /// `|J(u_n) - J(mu)|`.
    pub cost_gap: f64,
    /// Largest per-policy standard error of the paired cost differences.
    pub cost_gap_se: f64,
    pub j_chattering: f64,
    pub j_relaxed: f64,
}

/// Dynamics, cost, initial data and scenario family, with the noise drawn once
/// so every control is evaluated on the same paths.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    coeffs: CoeffSet,
    cost: CostSpec,
    eta: Path,
    family: ScenarioFamily,
    euler: EulerConfig,
    noise: Vec<Vec<GBMPath>>,
}

impl ControlProblem {
    pub fn new(
        coeffs: CoeffSet,
        cost: CostSpec,
        eta: Path,
        family: ScenarioFamily,
        euler: EulerConfig,
    ) -> Result<Self> {
        euler.validate()?;
        if (coeffs.tau() - eta.grid().tau()).abs() > 1e-9 * coeffs.tau().max(1.0) {
            return Err(Error::config(
                "grid.tau",
                "differs from the coefficient delay",
            ));
        }
        let noise = family.sample_all(eta.grid());
        Ok(Self {
            coeffs,
            cost,
            eta,
            family,
            euler,
            noise,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        self.eta.grid()
    }

    pub fn coeffs(&self) -> &CoeffSet {
        &self.coeffs
    }

    pub fn cost_spec(&self) -> &CostSpec {
        &self.cost
    }

    pub fn family(&self) -> &ScenarioFamily {
        &self.family
    }

    pub fn eta(&self) -> &Path {
        &self.eta
    }

    pub fn noise(&self) -> &[Vec<GBMPath>] {
        &self.noise
    }

    /// Trajectory of sample `s` under policy `p`.
    pub fn trajectory(&self, p: usize, s: usize, control: Control<'_>) -> Result<Path> {
        simulate_nsfde(
            &self.coeffs,
            &self.eta,
            &self.noise[p][s],
            control,
            &self.euler,
        )
    }

    /// `int_0^T L dt + Psi(X(T))` along `x` with left-endpoint sums.
    pub fn pathwise_cost(&self, x: &Path, schedule: &[StepMix]) -> f64 {
        let grid = x.grid();
        let (n0, h) = (grid.zero_index(), grid.h());
        let running: f64 = schedule
            .iter()
            .enumerate()
            .map(|(k, mix)| {
                let seg = Segment::from_window(&x.values()[k..=n0 + k], h);
                let l = if mix.is_empty() {
                    self.cost.running.eval(&seg, None)
                } else {
                    self.cost.running.eval_mix(&seg, mix)
                };
                h * l
            })
            .sum();
        running + self.cost.terminal.eval(x.terminal())
    }

    fn sample_costs(&self, p: usize, control: Control<'_>) -> Result<Vec<f64>> {
        let schedule = control.schedule(self.grid())?;
        let costs: Vec<Result<f64>> = (0..self.family.samples())
            .into_par_iter()
            .map(|s| {
                self.trajectory(p, s, control)
                    .map(|x| self.pathwise_cost(&x, &schedule))
                    .map_err(|e| Error::Sample {
                        index: s,
                        source: Box::new(e),
                    })
            })
            .collect();
        costs.into_iter().collect()
    }

    /// `J^P` for the family's policy `p`.
    pub fn cost_under_policy(&self, p: usize, control: Control<'_>) -> Result<CostEstimate> {
        let est = MeanEstimate::from_samples(&self.sample_costs(p, control)?);
        Ok(CostEstimate {
            mean: est.mean,
            std_err: est.std_err,
        })
    }

    /// `J = max_P J^P` with the per-policy table.
    pub fn cost(&self, control: Control<'_>) -> Result<WorstCaseCost> {
        let table = self
            .family
            .policies()
            .iter()
            .enumerate()
            .map(|(p, policy)| {
                let c = self.cost_under_policy(p, control)?;
                Ok(PolicyEstimate {
                    label: policy.label(),
                    mean: c.mean,
                    std_err: c.std_err,
                    used: self.family.samples(),
                    rejected: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(summarize(table))
    }

    /// Compare `mu` with its chattering approximation at refinement `n` on identical noise.
    pub fn stability_gap(&self, mu: &RelaxedControl, n: usize) -> Result<StabilityPoint> {
        let un = chattering_approx(mu, n, Some(self.grid().h()))?;
        let (relaxed, strict) = (Control::Relaxed(mu), Control::Strict(&un));
        let (s_mu, s_un) = (
            relaxed.schedule(self.grid())?,
            strict.schedule(self.grid())?,
        );

        let mut path_gap = MeanEstimate::exact(f64::NEG_INFINITY);
        let mut cost_gap_se: f64 = 0.0;
        for p in 0..self.family.policies().len() {
            let rows: Vec<(f64, f64)> = (0..self.family.samples())
                .into_par_iter()
                .map(|s| {
                    let x_mu = self.trajectory(p, s, relaxed)?;
                    let x_un = self.trajectory(p, s, strict)?;
                    let sup = x_mu.forward_sup_distance(&x_un);
                    let dj = self.pathwise_cost(&x_un, &s_un) - self.pathwise_cost(&x_mu, &s_mu);
                    Ok((sup * sup, dj))
                })
                .collect::<Vec<Result<_>>>()
                .into_iter()
                .enumerate()
                .map(|(s, r)| {
                    r.map_err(|e| Error::Sample {
                        index: s,
                        source: Box::new(e),
                    })
                })
                .collect::<Result<_>>()?;
            let sq: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let dj: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let est = MeanEstimate::from_samples(&sq);
            if est.mean > path_gap.mean {
                path_gap = est;
            }
            cost_gap_se = cost_gap_se.max(MeanEstimate::from_samples(&dj).std_err);
        }
        let j_un = self.cost(strict)?.value;
        let j_mu = self.cost(relaxed)?.value;
        Ok(StabilityPoint {
            n,
            path_gap: path_gap.mean,
            path_gap_se: path_gap.std_err,
            cost_gap: (j_un - j_mu).abs(),
            cost_gap_se,
            j_chattering: j_un,
            j_relaxed: j_mu,
        })
    }
}
