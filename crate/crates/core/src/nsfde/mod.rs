//! Euler-Maruyama for neutral functional SDEs driven by G-Brownian motion
//!
//! ```text
//! d[X(t) - Q(t, X_t)] = b(t, X_t, u) dt + gamma(t, X_t, u) d<B>_t + sigma(t, X_t) dB_t
//! ```
//!
//! One step reads
//!
//! ```text
//! X(t_{i+1}) = X(t_i) + Q(t_{i+1}, X_{t_{i+1}}) - Q(t_i, X_{t_i})
//!            + b h + gamma (<B>_{t_{i+1}} - <B>_{t_i}) + sigma (B_{t_{i+1}} - B_{t_i})
//! ```
//!
//! with `b, gamma, sigma` evaluated on `X_{t_i}`. The window `X_{t_{i+1}}`
//! contains the unknown `X(t_{i+1})` whenever `Q` looks at the newest node, so
//! each step solves a scalar fixed point. For relaxed controls `b` and `gamma`
//! are averaged against the block's probability row.

mod convergence;
mod norm;
mod picard;

use serde::{Deserialize, Serialize};

use crate::control::{Control, StepMix};
use crate::error::{Error, Result};
use crate::functionals::CoeffSet;
use crate::grid::{Path, Segment};
use crate::scenarios::GBMPath;

pub use convergence::{strong_convergence, ConvergenceRow};
pub use norm::{nc_norm, nc_norm_ensemble, NCNormConfig, DOOB_C2};
pub use picard::{contraction_ratio, picard_apply, picard_iterate, PicardTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerConfig {
    /// Relative tolerance of the neutral fixed point.
    pub tol: f64,
    pub max_iter: usize,
    /// `|X| > state_clamp` aborts with a divergence error.
    pub state_clamp: f64,
}

impl Default for EulerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            state_clamp: 1e12,
        }
    }
}

impl EulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("euler.tol", "must be finite and > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("euler.max_iter", "must be >= 1"));
        }
        if !(self.state_clamp > 0.0) {
            return Err(Error::config("euler.state_clamp", "must be > 0"));
        }
        Ok(())
    }
}

pub(crate) fn check_alignment(
    coeffs: &CoeffSet,
    eta: &Path,
    gbm: &GBMPath,
    control: &Control<'_>,
) -> Result<Vec<StepMix>> {
    let grid = eta.grid();
    if !grid.same_as(gbm.grid()) {
        return Err(Error::Usage(
            "initial data and noise live on different grids".into(),
        ));
    }
    if (coeffs.tau() - grid.tau()).abs() > 1e-9 * grid.tau().max(1.0) {
        return Err(Error::Usage(format!(
            "coefficients use tau = {} but the grid has tau = {}",
            coeffs.tau(),
            grid.tau()
        )));
    }
    if coeffs.is_controlled() && control.is_none() {
        return Err(Error::Usage(
            "controlled coefficients need a control".into(),
        ));
    }
    control.schedule(grid)
}

/// Drift, QV and noise contributions of step `k` evaluated on `seg`.
pub(crate) fn step_increment(
    coeffs: &CoeffSet,
    seg: &Segment<'_>,
    mix: &StepMix,
    h: f64,
    gbm: &GBMPath,
    k: usize,
) -> Result<f64> {
    let b = coeffs.b.eval_mix(seg, mix)?;
    let gamma = coeffs.gamma.eval_mix(seg, mix)?;
    let sigma = coeffs.sigma.eval(seg, None)?;
    Ok(b * h + gamma * gbm.dqv(k) + sigma * gbm.db(k))
}

/// Integrate from the history stored in `eta` (nodes `<= 0`) over `[0, T]`.
pub fn simulate_nsfde(
    coeffs: &CoeffSet,
    eta: &Path,
    gbm: &GBMPath,
    control: Control<'_>,
    cfg: &EulerConfig,
) -> Result<Path> {
    cfg.validate()?;
    let schedule = check_alignment(coeffs, eta, gbm, &control)?;
    let grid = *eta.grid();
    let (n0, h) = (grid.zero_index(), grid.h());
    let neutral = !coeffs.q.is_zero();

    let mut x = eta.values().to_vec();
    for (k, mix) in schedule.iter().enumerate() {
        let i = n0 + k;
        let (q_now, incr) = {
            let seg = Segment::from_window(&x[i - n0..=i], h);
            (
                coeffs.q.eval(&seg, None)?,
                step_increment(coeffs, &seg, mix, h, gbm, k)?,
            )
        };
        let known = x[i] - q_now + incr;
        x[i + 1] = if neutral {
            solve_neutral(coeffs, &mut x, i + 1, n0, h, known, cfg)?
        } else {
            known
        };
        if !x[i + 1].is_finite() || x[i + 1].abs() > cfg.state_clamp {
            return Err(Error::Divergence {
                step: i + 1,
                value: x[i + 1],
            });
        }
    }
    Path::new(grid, x)
}

/// Fixed point `x = known + Q(X_{t_j})` for the newest node `j`.
fn solve_neutral(
    coeffs: &CoeffSet,
    x: &mut [f64],
    j: usize,
    n0: usize,
    h: f64,
    known: f64,
    cfg: &EulerConfig,
) -> Result<f64> {
    let mut guess = x[j - 1];
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        x[j] = guess;
        let q = coeffs
            .q
            .eval(&Segment::from_window(&x[j - n0..=j], h), None)?;
        let next = known + q;
        residual = (next - guess).abs();
        guess = next;
        if residual <= cfg.tol * next.abs().max(1.0) {
            return Ok(next);
        }
        if !next.is_finite() {
            break;
        }
    }
    Err(Error::NonConvergence {
        step: j,
        iterations: cfg.max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ActionGrid, RelaxedControl, StrictControl};
    use crate::functionals::{Base, CoeffFunctional, Coupling};
    use crate::gheat::VolBounds;
    use crate::grid::TimeGrid;
    use crate::scenarios::{sample_gbm, VolPolicy};
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.1, 1.0, 110).unwrap()
    }

    fn noise(seed: u64) -> GBMPath {
        sample_gbm(&VolPolicy::constant(1.0), &grid(), seed)
    }

    fn eta(g: TimeGrid) -> Path {
        Path::from_history(g, |t| 1.0 + t).unwrap()
    }

    fn set(
        q: CoeffFunctional,
        b: CoeffFunctional,
        gamma: CoeffFunctional,
        sigma: CoeffFunctional,
    ) -> CoeffSet {
        CoeffSet::new(q, b, gamma, sigma, 0.1, (-1.0, 1.0)).unwrap()
    }

    #[test]
    fn zero_coefficients_freeze_the_state() {
        let x = simulate_nsfde(
            &CoeffSet::zero(0.1),
            &eta(grid()),
            &noise(1),
            Control::None,
            &EulerConfig::default(),
        )
        .unwrap();
        assert!(x.values()[10..].iter().all(|&v| v == 1.0));
        assert_eq!(x.history(), eta(grid()).history());
    }

    #[test]
    fn unit_drift_telescopes() {
        let z = CoeffFunctional::zero();
        let b = CoeffFunctional::uncontrolled(Base::Affine {
            scale: 0.0,
            offset: 1.0,
        });
        let x = simulate_nsfde(
            &set(z, b, z, z),
            &eta(grid()),
            &noise(1),
            Control::None,
            &EulerConfig::default(),
        )
        .unwrap();
        let g = grid();
        for i in 10..=110 {
            assert!((x.value(i) - (1.0 + g.time(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_neutral_term_keeps_state() {
        let z = CoeffFunctional::zero();
        let x = simulate_nsfde(
            &set(CoeffFunctional::pointwise(0.2), z, z, z),
            &eta(grid()),
            &noise(1),
            Control::None,
            &EulerConfig::default(),
        )
        .unwrap();
        assert!(x.values()[10..].iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn neutral_solve_matches_linear_elimination() {
        // Q linear in the newest node: X(t_{i+1}) = (known + Q_rest) / (1 - w)
        let g = grid();
        let coeffs = CoeffSet::integral_example(0.1).unwrap();
        let gbm = noise(3);
        let e = eta(g);
        let x = simulate_nsfde(&coeffs, &e, &gbm, Control::None, &EulerConfig::default()).unwrap();
        let (n0, h) = (g.zero_index(), g.h());
        let w = coeffs.q.base.newest_node_weight(h, n0);
        let mut y = e.values().to_vec();
        for k in 0..g.forward_steps() {
            let i = n0 + k;
            let seg = Segment::from_window(&y[i - n0..=i], h);
            let known = y[i] - coeffs.q.eval(&seg, None).unwrap()
                + step_increment(&coeffs, &seg, &Vec::new(), h, &gbm, k).unwrap();
            y[i + 1] = 0.0;
            let rest = coeffs
                .q
                .eval(&Segment::from_window(&y[i + 1 - n0..=i + 1], h), None)
                .unwrap();
            y[i + 1] = (known + rest) / (1.0 - w);
        }
        for (a, b) in x.values().iter().zip(&y) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn deterministic_output() {
        let coeffs = CoeffSet::integral_example(0.1).unwrap();
        let a = simulate_nsfde(
            &coeffs,
            &eta(grid()),
            &noise(5),
            Control::None,
            &EulerConfig::default(),
        )
        .unwrap();
        let b = simulate_nsfde(
            &coeffs,
            &eta(grid()),
            &noise(5),
            Control::None,
            &EulerConfig::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_and_convergence_errors() {
        let z = CoeffFunctional::zero();
        let coeffs = set(z, CoeffFunctional::pointwise(200.0), z, z);
        let cfg = EulerConfig {
            state_clamp: 1e6,
            ..EulerConfig::default()
        };
        let err =
            simulate_nsfde(&coeffs, &eta(grid()), &noise(1), Control::None, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { step, .. } if step > 10 && step <= 110));

        let coeffs = set(
            CoeffFunctional::pointwise(0.2),
            z,
            z,
            CoeffFunctional::integral(1.0),
        );
        let cfg = EulerConfig {
            max_iter: 2,
            ..EulerConfig::default()
        };
        let err =
            simulate_nsfde(&coeffs, &eta(grid()), &noise(1), Control::None, &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { step: 11, .. }));
    }

    #[test]
    fn controlled_coefficients_require_a_control() {
        let z = CoeffFunctional::zero();
        let b = CoeffFunctional::controlled(
            Base::zero(),
            Coupling {
                c0: 0.0,
                c1: 0.0,
                c2: 1.0,
            },
        );
        let coeffs = set(z, b, z, z);
        assert!(matches!(
            simulate_nsfde(
                &coeffs,
                &eta(grid()),
                &noise(1),
                Control::None,
                &EulerConfig::default()
            ),
            Err(Error::Usage(_))
        ));
        let actions = ActionGrid::new(vec![-1.0, 1.0]).unwrap();
        let u = StrictControl::constant(actions.clone(), 1.0, 1).unwrap();
        let x = simulate_nsfde(
            &coeffs,
            &eta(grid()),
            &noise(1),
            Control::Strict(&u),
            &EulerConfig::default(),
        )
        .unwrap();
        assert!((x.terminal() - 2.0).abs() < 1e-12);
        // 50/50 relaxed row averages the additive drift to zero
        let mu = RelaxedControl::uniform(actions, 1.0, vec![vec![0.5, 0.5]]).unwrap();
        let x = simulate_nsfde(
            &coeffs,
            &eta(grid()),
            &noise(1),
            Control::Relaxed(&mu),
            &EulerConfig::default(),
        )
        .unwrap();
        assert!((x.terminal() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let coeffs = CoeffSet::integral_example(0.1).unwrap();
        let other = sample_gbm(
            &VolPolicy::constant(1.0),
            &TimeGrid::new(0.1, 1.0, 220).unwrap(),
            1,
        );
        assert!(simulate_nsfde(
            &coeffs,
            &eta(grid()),
            &other,
            Control::None,
            &EulerConfig::default()
        )
        .is_err());
        let coeffs = CoeffSet::integral_example(0.2).unwrap();
        assert!(simulate_nsfde(
            &coeffs,
            &eta(grid()),
            &noise(1),
            Control::None,
            &EulerConfig::default()
        )
        .is_err());
    }

    #[test]
    fn bounds_sanity() {
        assert!(VolBounds::new(0.65, 1.0).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn larger_history_gives_larger_path(seed in 0u64..1000, bump in 0.01f64..1.0) {
            // Q = gamma = 0, b nondecreasing in the window, additive noise
            let z = CoeffFunctional::zero();
            let sigma = CoeffFunctional::uncontrolled(Base::Affine { scale: 0.0, offset: 0.5 });
            let coeffs = set(z, CoeffFunctional::integral(2.0), z, sigma);
            let g = grid();
            let lo = Path::from_history(g, |t| (3.0 * t).sin()).unwrap();
            let hi = Path::from_history(g, |t| (3.0 * t).sin() + bump).unwrap();
            let gbm = noise(seed);
            let xl = simulate_nsfde(&coeffs, &lo, &gbm, Control::None, &EulerConfig::default()).unwrap();
            let xh = simulate_nsfde(&coeffs, &hi, &gbm, Control::None, &EulerConfig::default()).unwrap();
            for (a, b) in xl.values().iter().zip(xh.values()) {
                prop_assert!(b >= a);
            }
        }
    }
}
