//! Time grids, trajectories and delay segments.
//!
//! A [`TimeGrid`] discretises `[-tau, T]` with a uniform step `h` such that
//! `0` is a grid node. A [`Path`] carries one value per node, and a
//! [`Segment`] is the delay window `X_t = {X(t + theta) : -tau <= theta <= 0}`
//! read off the path by linear interpolation between nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when matching times against grid nodes.
const NODE_TOL: f64 = 1e-9;

/// Uniform grid `t_0 = -tau < ... < t_{n0} = 0 < ... < t_N = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    tau: f64,
    horizon: f64,
    steps: usize,
    h: f64,
    n0: usize,
}

impl TimeGrid {
    /// Build a grid with `steps` intervals over `[-tau, horizon]`.
    ///
    /// `tau` must be an integer multiple of the step so that delay windows
    /// always start on a node.
    pub fn new(tau: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::config(
                "grid.tau",
                format!("must be finite and >= 0, got {tau}"),
            ));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config(
                "grid.horizon",
                format!("must be finite and > 0, got {horizon}"),
            ));
        }
        if steps == 0 {
            return Err(Error::config("grid.steps", "must be >= 1"));
        }
        let h = (horizon + tau) / steps as f64;
        let ratio = tau / h;
        let n0 = ratio.round();
        if (ratio - n0).abs() > NODE_TOL * ratio.max(1.0) {
            return Err(Error::config(
                "grid.steps",
                format!("tau = {tau} is not an integer multiple of h = {h} (tau/h = {ratio})"),
            ));
        }
        let n0 = n0 as usize;
        if n0 >= steps {
            return Err(Error::config("grid.steps", "no forward steps on [0, T]"));
        }
        Ok(Self {
            tau,
            horizon,
            steps,
            h,
            n0,
        })
    }

    /// Grid for `[-tau, horizon]` with a requested step; `h` must divide both
    /// `tau` and `horizon`.
    pub fn with_step(tau: f64, horizon: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config(
                "grid.h",
                format!("must be finite and > 0, got {h}"),
            ));
        }
        let steps = ((horizon + tau) / h).round();
        if steps < 1.0 || ((horizon + tau) / h - steps).abs() > NODE_TOL * steps {
            return Err(Error::config(
                "grid.h",
                format!("h = {h} does not divide T + tau"),
            ));
        }
        Self::new(tau, horizon, steps as usize)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Total number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Index `N0` of the node `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.n0
    }

    /// Number of intervals inside a delay window (`tau / h`).
    pub fn window_steps(&self) -> usize {
        self.n0
    }

    /// Number of intervals on `[0, T]`.
    pub fn forward_steps(&self) -> usize {
        self.steps - self.n0
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of node `i`; `t_{N0}` is exactly zero.
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.n0 as f64) * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    /// Index of the node matching `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = t / self.h + self.n0 as f64;
        let k = pos.round();
        if (pos - k).abs() <= NODE_TOL * pos.abs().max(1.0) && k >= 0.0 && k as usize <= self.steps
        {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Same interval, step divided by `factor`.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::config("grid.refine", "factor must be >= 1"));
        }
        Self::new(self.tau, self.horizon, self.steps * factor)
    }

    /// True when both grids have the same nodes.
    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps
            && self.n0 == other.n0
            && (self.h - other.h).abs() <= NODE_TOL * self.h
    }
}

/// Trajectory sampled on every node of a [`TimeGrid`].
///
/// Values at nodes `<= 0` hold the initial history `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "path has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite path value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    /// History given on nodes `<= 0`; forward nodes are held at `eta(0)`.
    pub fn from_history(grid: TimeGrid, eta: impl Fn(f64) -> f64) -> Result<Self> {
        let x0 = eta(0.0);
        let n0 = grid.zero_index();
        Self::new(
            grid,
            (0..grid.len())
                .map(|i| if i <= n0 { eta(grid.time(i)) } else { x0 })
                .collect(),
        )
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Value at `X(0)`.
    pub fn initial(&self) -> f64 {
        self.values[self.grid.zero_index()]
    }

    /// Value at `X(T)`.
    pub fn terminal(&self) -> f64 {
        self.values[self.grid.steps()]
    }

    /// History part `eta` (nodes `t_0 ..= 0`).
    pub fn history(&self) -> &[f64] {
        &self.values[..=self.grid.zero_index()]
    }

    /// Linear interpolation at an arbitrary time. Times left of `t_0` use the
    /// pad `X(t_0 - h) = X(t_0) = eta(-tau)`; times right of `T` hold `X(T)`.
    pub fn value_at_time(&self, t: f64) -> f64 {
        interpolate(&self.values, (t - self.grid.time(0)) / self.grid.h())
    }

    /// Delay segment anchored at node `anchor` (which must satisfy `t >= 0`).
    pub fn segment(&self, anchor: usize) -> Result<Segment<'_>> {
        let n0 = self.grid.zero_index();
        if anchor < n0 || anchor > self.grid.steps() {
            return Err(Error::Domain(format!(
                "segment anchor {anchor} outside [{n0}, {}]",
                self.grid.steps()
            )));
        }
        Ok(Segment::from_window(
            &self.values[anchor - n0..=anchor],
            self.grid.h(),
        ))
    }

    /// `max |X(t) - Y(t)|` over nodes with `t >= 0`.
    pub fn forward_sup_distance(&self, other: &Path) -> f64 {
        let n0 = self.grid.zero_index();
        self.values[n0..]
            .iter()
            .zip(&other.values[n0..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn interpolate(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    if pos <= 0.0 {
        return values[0];
    }
    if pos >= last as f64 {
        return values[last];
    }
    let nearest = pos.round();
    if (pos - nearest).abs() <= NODE_TOL * pos.max(1.0) {
        return values[nearest as usize];
    }
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    values[k] + frac * (values[k + 1] - values[k])
}

/// Delay window `X_t` over `[t - tau, t]`, stored as the `tau / h + 1` node
/// values ending at the anchor.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    window: &'a [f64],
    h: f64,
}

impl<'a> Segment<'a> {
    /// `window` holds `X(t - tau), ..., X(t)` on consecutive nodes.
    pub fn from_window(window: &'a [f64], h: f64) -> Self {
        assert!(
            !window.is_empty(),
            "segment window must contain the anchor node"
        );
        Self { window, h }
    }

    pub fn tau(&self) -> f64 {
        (self.window.len() - 1) as f64 * self.h
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn window(&self) -> &'a [f64] {
        self.window
    }

    /// `X_t(0) = X(t)`.
    pub fn at_zero(&self) -> f64 {
        self.window[self.window.len() - 1]
    }

    /// `X_t(lambda) = X(t + lambda)` for `lambda` in `[-tau, 0]`, linearly
    /// interpolated; node hits return the stored value.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        let tau = self.tau();
        let slack = NODE_TOL * self.h;
        if !lambda.is_finite() || lambda > slack || lambda < -tau - slack {
            return Err(Error::Domain(format!(
                "segment offset {lambda} outside [-{tau}, 0]"
            )));
        }
        let last = (self.window.len() - 1) as f64;
        Ok(interpolate(self.window, last + lambda / self.h))
    }

    /// Trapezoidal `int_{t-tau}^t X(s) ds` on the window nodes.
    pub fn integral(&self) -> f64 {
        let n = self.window.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.window[1..n - 1].iter().sum();
        self.h * (inner + 0.5 * (self.window[0] + self.window[n - 1]))
    }

    /// Sup-norm distance between two windows of equal length.
    pub fn sup_distance(&self, other: &Segment<'_>) -> f64 {
        self.window
            .iter()
            .zip(other.window)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Trapezoidal rule over equally spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        // tau = 0.1, T = 1, h = 0.01
        TimeGrid::new(0.1, 1.0, 110).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = grid();
        assert_eq!(g.zero_index(), 10);
        assert_eq!(g.time(10), 0.0);
        assert!((g.time(0) + 0.1).abs() < 1e-15);
        assert!((g.time(110) - 1.0).abs() < 1e-12);
        assert_eq!(g.forward_steps(), 100);
        assert_eq!(g.index_of(0.5), Some(60));
        assert_eq!(g.index_of(0.505), None);
        assert!(g.times().zip(g.times().skip(1)).all(|(a, b)| b > a));
    }

    #[test]
    fn grid_rejects_misaligned_tau() {
        // h = 1.1 / 64 does not divide 0.1
        assert!(matches!(
            TimeGrid::new(0.1, 1.0, 64),
            Err(Error::Config { .. })
        ));
        assert!(TimeGrid::new(0.1, 1.0, 0).is_err());
        assert!(TimeGrid::new(-0.1, 1.0, 10).is_err());
        assert!(TimeGrid::new(0.1, 0.0, 10).is_err());
        assert!(TimeGrid::with_step(0.1, 1.0, 0.3).is_err());
        assert_eq!(TimeGrid::with_step(0.1, 1.0, 0.01).unwrap().steps(), 110);
    }

    #[test]
    fn zero_delay_grid() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        assert_eq!(g.zero_index(), 0);
        let p = Path::from_fn(g, |t| t).unwrap();
        let s = p.segment(3).unwrap();
        assert_eq!(s.integral(), 0.0);
        assert_eq!(s.eval(0.0).unwrap(), 3.0 / 8.0);
    }

    #[test]
    fn path_validation() {
        let g = grid();
        assert!(Path::new(g, vec![0.0; 3]).is_err());
        let mut v = vec![0.0; g.len()];
        v[5] = f64::NAN;
        assert!(matches!(Path::new(g, v), Err(Error::Input(_))));
    }

    #[test]
    fn segment_on_constant_path() {
        let p = Path::constant(grid(), 3.0).unwrap();
        let s = p.segment(50).unwrap();
        for lambda in [-0.1, -0.073, -0.05, -0.0001, 0.0] {
            assert_eq!(s.eval(lambda).unwrap(), 3.0);
        }
    }

    #[test]
    fn segment_on_affine_path() {
        let g = grid();
        let h = g.h();
        let p = Path::from_fn(g, |t| t).unwrap();
        let anchor = 40;
        let t = g.time(anchor);
        let s = p.segment(anchor).unwrap();
        assert!((s.eval(-h / 2.0).unwrap() - (t - h / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn segment_interpolation_quarter_step() {
        let g = grid();
        let h = g.h();
        let mut v = vec![0.0; g.len()];
        v[30] = 2.0;
        let p = Path::new(g, v).unwrap();
        let s = p.segment(30).unwrap();
        assert!((s.eval(-h / 4.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn segment_domain_errors() {
        let p = Path::constant(grid(), 1.0).unwrap();
        let s = p.segment(20).unwrap();
        assert!(matches!(s.eval(0.01), Err(Error::Domain(_))));
        assert!(matches!(s.eval(-0.2), Err(Error::Domain(_))));
        assert!(p.segment(3).is_err());
        assert!(p.segment(111).is_err());
    }

    #[test]
    fn integral_examples() {
        let g = grid();
        let c = Path::constant(g, 2.5).unwrap();
        assert!((c.segment(70).unwrap().integral() - 0.25).abs() < 1e-12);
        let z = Path::constant(g, 0.0).unwrap();
        assert_eq!(z.segment(70).unwrap().integral(), 0.0);
        // affine from 0 at t - tau to 1 at t: exact value 0.05
        let anchor = 70;
        let t = g.time(anchor);
        let a = Path::from_fn(g, |s| (s - (t - 0.1)) / 0.1).unwrap();
        assert!((a.segment(anchor).unwrap().integral() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn pad_rule_left_of_grid() {
        let g = grid();
        let p = Path::from_fn(g, |t| 1.0 + t).unwrap();
        assert_eq!(p.value_at_time(-0.5), p.value(0));
        assert_eq!(p.value_at_time(g.time(0) - g.h()), p.value(0));
    }

    proptest! {
        #[test]
        fn interpolation_reproduces_nodes(vals in proptest::collection::vec(-5.0f64..5.0, 111), anchor in 10usize..=110) {
            let g = grid();
            let p = Path::new(g, vals).unwrap();
            let s = p.segment(anchor).unwrap();
            let t = g.time(anchor);
            for k in anchor - 10..=anchor {
                let lambda = g.time(k) - t;
                prop_assert_eq!(s.eval(lambda).unwrap(), p.value(k));
            }
        }

        #[test]
        fn interpolation_exact_on_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, anchor in 10usize..=110, frac in -1.0f64..=0.0) {
            let g = grid();
            let p = Path::from_fn(g, |t| a + b * t).unwrap();
            let s = p.segment(anchor).unwrap();
            let lambda = frac * g.tau();
            let expected = a + b * (g.time(anchor) + lambda);
            prop_assert!((s.eval(lambda).unwrap() - expected).abs() < 1e-12);
        }

        #[test]
        fn integral_linear_and_monotone(
            x in proptest::collection::vec(-5.0f64..5.0, 11),
            bump in proptest::collection::vec(0.0f64..2.0, 11),
            k in -3.0f64..3.0,
        ) {
            let h = 0.01;
            let y: Vec<f64> = x.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let kx: Vec<f64> = x.iter().map(|a| k * a).collect();
            let sx = Segment::from_window(&x, h);
            let sy = Segment::from_window(&y, h);
            let skx = Segment::from_window(&kx, h);
            prop_assert!(sy.integral() >= sx.integral() - 1e-15);
            prop_assert!((skx.integral() - k * sx.integral()).abs() < 1e-12);
        }
    }
}
