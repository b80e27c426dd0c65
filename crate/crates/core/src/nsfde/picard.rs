//! The Picard map
//!
//! ```text
//! Theta(X)(t) = eta(0) + Q(t, X_t) - Q(0, eta) + int_0^t b ds + int_0^t gamma d<B>_s + int_0^t sigma dB_s
//! ```
//!
//! evaluated on a frozen input path with left-endpoint sums. The history
//! `[-tau, 0]` of the input is replaced by `eta`, so `Theta(X)_0 = eta`.

use rayon::prelude::*;

use super::norm::{nc_norm_ensemble, NCNormConfig};
use super::{check_alignment, step_increment};
use crate::control::Control;
use crate::error::{Error, Result};
use crate::functionals::CoeffSet;
use crate::grid::{Path, Segment};
use crate::scenarios::GBMPath;

/// Smallest denominator accepted by [`contraction_ratio`].
const RATIO_GUARD: f64 = 1e-9;

pub fn picard_apply(
    x: &Path,
    coeffs: &CoeffSet,
    eta: &Path,
    gbm: &GBMPath,
    control: Control<'_>,
) -> Result<Path> {
    let schedule = check_alignment(coeffs, eta, gbm, &control)?;
    let grid = *eta.grid();
    if !x.grid().same_as(&grid) {
        return Err(Error::Usage(
            "input path and initial data live on different grids".into(),
        ));
    }
    let (n0, h) = (grid.zero_index(), grid.h());

    let mut work = x.values().to_vec();
    work[..=n0].copy_from_slice(eta.history());
    let seg = |i: usize| Segment::from_window(&work[i - n0..=i], h);

    let x0 = eta.initial();
    let q0 = coeffs.q.eval(&seg(n0), None)?;
    let mut out = work.clone();
    let mut running = 0.0;
    for (k, mix) in schedule.iter().enumerate() {
        let i = n0 + k;
        running += step_increment(coeffs, &seg(i), mix, h, gbm, k)?;
        out[i + 1] = x0 + coeffs.q.eval(&seg(i + 1), None)? - q0 + running;
    }
    Path::new(grid, out)
}

/// `N_C(Theta X - Theta Y) / N_C(X - Y)` on matched ensembles indexed
/// `[policy][sample]`; every pair shares its noise path.
pub fn contraction_ratio(
    xs: &[Vec<Path>],
    ys: &[Vec<Path>],
    coeffs: &CoeffSet,
    eta: &Path,
    gbms: &[Vec<GBMPath>],
    control: Control<'_>,
    cfg: &NCNormConfig,
) -> Result<f64> {
    if gbms.len() != xs.len() || gbms.iter().zip(xs).any(|(g, x)| g.len() != x.len()) {
        return Err(Error::Usage(
            "noise ensemble does not match the path ensemble".into(),
        ));
    }
    let denom = nc_norm_ensemble(xs, ys, cfg)?;
    if !(denom > RATIO_GUARD) {
        return Err(Error::Usage(format!(
            "N_C(X - Y) = {denom:e} is too small for a ratio"
        )));
    }
    let tx = apply_ensemble(xs, coeffs, eta, gbms, control)?;
    let ty = apply_ensemble(ys, coeffs, eta, gbms, control)?;
    Ok(nc_norm_ensemble(&tx, &ty, cfg)? / denom)
}

fn apply_ensemble(
    xs: &[Vec<Path>],
    coeffs: &CoeffSet,
    eta: &Path,
    gbms: &[Vec<GBMPath>],
    control: Control<'_>,
) -> Result<Vec<Vec<Path>>> {
    xs.iter()
        .zip(gbms)
        .map(|(px, pg)| {
            px.par_iter()
                .zip(pg.par_iter())
                .map(|(x, g)| picard_apply(x, coeffs, eta, g, control))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardTrace {
    /// `N_C(X^{k+1} - X^k)` for `k = 0, 1, ...`.
    pub distances: Vec<f64>,
    /// Number of iterations after which the distance fell below the tolerance.
    pub converged_at: Option<usize>,
    /// Last iterate, `[policy][sample]`.
    pub iterate: Vec<Vec<Path>>,
}

/// Iterate `Theta` from the path that equals `eta` on the history and zero afterwards.
pub fn picard_iterate(
    coeffs: &CoeffSet,
    eta: &Path,
    gbms: &[Vec<GBMPath>],
    control: Control<'_>,
    cfg: &NCNormConfig,
    max_iter: usize,
    tol: f64,
) -> Result<PicardTrace> {
    let grid = *eta.grid();
    let n0 = grid.zero_index();
    let mut start = vec![0.0; grid.len()];
    start[..=n0].copy_from_slice(eta.history());
    let start = Path::new(grid, start)?;
    let mut current: Vec<Vec<Path>> = gbms.iter().map(|p| vec![start.clone(); p.len()]).collect();

    let mut distances = Vec::new();
    let mut converged_at = None;
    for it in 1..=max_iter {
        let next = apply_ensemble(&current, coeffs, eta, gbms, control)?;
        let d = nc_norm_ensemble(&next, &current, cfg)?;
        distances.push(d);
        current = next;
        if d < tol {
            converged_at = Some(it);
            break;
        }
    }
    Ok(PicardTrace {
        distances,
        converged_at,
        iterate: current,
    })
}
