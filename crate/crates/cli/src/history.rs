//! Initial histories `X_0` on `[-tau, 0]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use gnsfde_core::rng::{stream, stream_rng};
use gnsfde_core::{Error, Path, Result, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialHistory {
    /// `X_0(t) = value`.
    Constant { value: f64 },
    /// `X_0(t) = exp(t)`.
    Exp,
    /// Standard Brownian motion started at `0` at `t = -tau`.
    Brownian,
    /// A constant drawn uniformly from `[lo, hi]` for each trajectory.
    UniformConstant { lo: f64, hi: f64 },
}

impl InitialHistory {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialHistory::Constant { value } if !value.is_finite() => {
                Err(Error::config("initial.value", "must be finite"))
            }
            InitialHistory::UniformConstant { lo, hi }
                if !(lo <= hi && lo.is_finite() && hi.is_finite()) =>
            {
                Err(Error::config("initial.hi", "need finite lo <= hi"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(
            self,
            InitialHistory::Brownian | InitialHistory::UniformConstant { .. }
        )
    }

    /// History on `grid`; random kinds draw from the `(seed, HISTORY)` stream.
    pub fn realize(&self, grid: &TimeGrid, seed: u64) -> Result<Path> {
        match *self {
            InitialHistory::Constant { value } => Path::from_history(*grid, |_| value),
            InitialHistory::Exp => Path::from_history(*grid, f64::exp),
            InitialHistory::UniformConstant { lo, hi } => {
                let v = if lo == hi {
                    lo
                } else {
                    stream_rng(seed, &[stream::HISTORY]).random_range(lo..=hi)
                };
                Path::from_history(*grid, |_| v)
            }
            InitialHistory::Brownian => {
                let n0 = grid.zero_index();
                let mut rng = stream_rng(seed, &[stream::HISTORY]);
                let sd = grid.h().sqrt();
                let mut w = Vec::with_capacity(n0 + 1);
                w.push(0.0);
                for k in 0..n0 {
                    w.push(w[k] + sd * rng.sample::<f64, _>(StandardNormal));
                }
                let x0 = w[n0];
                let mut values = w;
                values.resize(grid.len(), x0);
                Path::new(*grid, values)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(0.1, 1.0, 110).unwrap()
    }

    #[test]
    fn exp_history() {
        let p = InitialHistory::Exp.realize(&grid(), 0).unwrap();
        assert!((p.value(0) - (-0.1f64).exp()).abs() < 1e-15);
        assert_eq!(p.initial(), 1.0);
    }

    #[test]
    fn brownian_history_starts_at_zero() {
        let a = InitialHistory::Brownian.realize(&grid(), 4).unwrap();
        let b = InitialHistory::Brownian.realize(&grid(), 5).unwrap();
        assert_eq!(a.value(0), 0.0);
        assert_ne!(a.initial(), b.initial());
        assert_eq!(a, InitialHistory::Brownian.realize(&grid(), 4).unwrap());
    }

    #[test]
    fn uniform_constant_in_range() {
        let h = InitialHistory::UniformConstant { lo: -0.2, hi: 0.2 };
        for s in 0..50 {
            let p = h.realize(&grid(), s).unwrap();
            assert!(p
                .history()
                .iter()
                .all(|&v| v == p.initial() && v.abs() <= 0.2));
        }
    }
}
