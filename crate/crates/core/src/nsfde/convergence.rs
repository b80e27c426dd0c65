//! Strong convergence of the scheme against a fine reference solution driven
//! by the same Brownian path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_nsfde, EulerConfig};
use crate::control::Control;
use crate::error::{Error, Result};
use crate::functionals::CoeffSet;
use crate::grid::{Path, TimeGrid};
use crate::rng::{derive_seed, stream};
use crate::scenarios::{sample_gbm, VolPolicy};
use crate::stats::MeanEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub h: f64,
    /// `sqrt(mean |X_h(T) - X_ref(T)|^2)`.
    pub rms: f64,
    /// Standard error of the mean squared error.
    pub mse_se: f64,
}

/// RMS terminal error for each grid in `coarse_steps` (total nodes over
/// `[-tau, T]`) against a reference with `ref_factor` times the finest step count.
#[allow(clippy::too_many_arguments)]
pub fn strong_convergence(
    coeffs: &CoeffSet,
    eta: impl Fn(f64) -> f64 + Sync,
    policy: &VolPolicy,
    horizon: f64,
    coarse_steps: &[usize],
    ref_factor: usize,
    n_paths: usize,
    seed: u64,
    cfg: &EulerConfig,
) -> Result<Vec<ConvergenceRow>> {
    let finest = *coarse_steps
        .iter()
        .max()
        .ok_or_else(|| Error::config("convergence.steps", "need at least one grid"))?;
    if ref_factor < 2 || n_paths < 2 {
        return Err(Error::config(
            "convergence",
            "need ref_factor >= 2 and at least two paths",
        ));
    }
    let tau = coeffs.tau();
    let fine = TimeGrid::new(tau, horizon, finest * ref_factor)?;
    let coarse: Vec<TimeGrid> = coarse_steps
        .iter()
        .map(|&n| {
            if fine.steps() % n != 0 {
                return Err(Error::config(
                    "convergence.steps",
                    format!("{n} does not divide the reference count {}", fine.steps()),
                ));
            }
            TimeGrid::new(tau, horizon, n)
        })
        .collect::<Result<_>>()?;

    let errors: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|s| {
            let gbm = sample_gbm(
                policy,
                &fine,
                derive_seed(seed, &[stream::SAMPLE, s as u64]),
            );
            let reference = simulate_nsfde(
                coeffs,
                &Path::from_history(fine, &eta)?,
                &gbm,
                Control::None,
                cfg,
            )?;
            coarse
                .iter()
                .map(|g| {
                    let x = simulate_nsfde(
                        coeffs,
                        &Path::from_history(*g, &eta)?,
                        &gbm.coarsen(g)?,
                        Control::None,
                        cfg,
                    )?;
                    let d = x.terminal() - reference.terminal();
                    Ok(d * d)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(coarse
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let sq: Vec<f64> = errors.iter().map(|e| e[j]).collect();
            let est = MeanEstimate::from_samples(&sq);
            ConvergenceRow {
                steps: g.steps(),
                h: g.h(),
                rms: est.mean.sqrt(),
                mse_se: est.std_err,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{Base, CoeffFunctional};
    use crate::stats::loglog_slope;

    #[test]
    fn deterministic_drift_is_exact_on_every_grid() {
        let z = CoeffFunctional::zero();
        let b = CoeffFunctional::uncontrolled(Base::Affine {
            scale: 0.0,
            offset: 1.0,
        });
        let set = CoeffSet::new(z, b, z, z, 0.25, (0.0, 0.0)).unwrap();
        let rows = strong_convergence(
            &set,
            |_| 1.0,
            &VolPolicy::constant(1.0),
            0.75,
            &[8, 16],
            4,
            4,
            3,
            &EulerConfig::default(),
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.rms < 1e-12));
    }

    #[test]
    fn additive_noise_linear_drift_converges() {
        let z = CoeffFunctional::zero();
        let b = CoeffFunctional::pointwise(-1.0);
        let sigma = CoeffFunctional::uncontrolled(Base::Affine {
            scale: 0.0,
            offset: 1.0,
        });
        let set = CoeffSet::new(z, b, z, sigma, 0.0, (0.0, 0.0)).unwrap();
        let rows = strong_convergence(
            &set,
            |_| 1.0,
            &VolPolicy::constant(1.0),
            1.0,
            &[16, 32, 64],
            16,
            200,
            5,
            &EulerConfig::default(),
        )
        .unwrap();
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.rms)).collect();
        assert!(loglog_slope(&pts) > 0.8, "{rows:?}");
    }

    #[test]
    fn grids_must_nest() {
        let set = CoeffSet::zero(0.0);
        assert!(strong_convergence(
            &set,
            |_| 0.0,
            &VolPolicy::constant(1.0),
            1.0,
            &[3, 4],
            2,
            4,
            1,
            &EulerConfig::default()
        )
        .is_err());
    }
}
