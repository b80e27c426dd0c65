//! Named configurations: the figure presets and the shipped control problems.

use serde_json::Value;

use gnsfde_core::functionals::{
    Base, CoeffFunctional, CostSpec, Coupling, RunningCost, TerminalCost,
};
use gnsfde_core::gheat::GNormalConfig;
use gnsfde_core::nsfde::EulerConfig;
use gnsfde_core::VolBounds;

use crate::config::{
    ChatteringRun, CoeffSpec, ControlOptRun, FamilyKind, GNormalRun, NsfdeSimRun, ProblemSpec,
};
use crate::history::InitialHistory;
use crate::Command;

pub const NAMES: [&str; 11] = [
    "paper-fig1",
    "paper-fig2",
    "paper-fig3",
    "paper-fig4",
    "paper-fig5",
    "paper-fig6",
    "paper-fig7",
    "paper-fig8",
    "chattering-half",
    "control-affine",
    "control-zigzag",
];

/// Command and configuration of a preset.
pub fn lookup(name: &str) -> Option<(Command, Value)> {
    Some(match name {
        "paper-fig1" | "paper-fig2" => (Command::Gnormal, to(&sweep_sigma_max())),
        "paper-fig3" | "paper-fig4" => (Command::Gnormal, to(&sweep_sigma_min())),
        "paper-fig5" => (
            Command::NsfdeSim,
            to(&NsfdeSimRun::section4(1.0, InitialHistory::Brownian)),
        ),
        "paper-fig6" => (
            Command::NsfdeSim,
            to(&NsfdeSimRun::section4(3.0, InitialHistory::Brownian)),
        ),
        "paper-fig7" => (
            Command::NsfdeSim,
            to(&NsfdeSimRun::section4(1.0, InitialHistory::Exp)),
        ),
        "paper-fig8" => (
            Command::NsfdeSim,
            to(&NsfdeSimRun::section4(
                1.0,
                InitialHistory::UniformConstant { lo: -0.2, hi: 0.2 },
            )),
        ),
        "chattering-half" => (Command::Chattering, to(&chattering_half())),
        "control-affine" => (Command::ControlOpt, to(&control_affine())),
        "control-zigzag" => (Command::ControlOpt, to(&control_zigzag())),
        _ => return None,
    })
}

fn to<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configs serialise")
}

fn gnormal(curves: Vec<VolBounds>) -> GNormalRun {
    GNormalRun {
        curves,
        t: 1.0,
        y_min: -4.0,
        y_max: 4.0,
        dy: 0.02,
        pde: GNormalConfig::default(),
    }
}

/// `sigma_min = 0.8`, `sigma_max` in `{1.0, 1.1, 1.2, 1.3}`.
pub fn sweep_sigma_max() -> GNormalRun {
    gnormal(
        [1.0, 1.1, 1.2, 1.3]
            .iter()
            .map(|&s| VolBounds {
                sigma_min: 0.8,
                sigma_max: s,
            })
            .collect(),
    )
}

/// `sigma_max = 1.3`, `sigma_min` in `{0.5, 0.65, 0.8, 1.0}`.
pub fn sweep_sigma_min() -> GNormalRun {
    gnormal(
        [0.5, 0.65, 0.8, 1.0]
            .iter()
            .map(|&s| VolBounds {
                sigma_min: s,
                sigma_max: 1.3,
            })
            .collect(),
    )
}

fn controlled(base: Base, c2: f64) -> CoeffFunctional {
    CoeffFunctional::controlled(
        base,
        Coupling {
            c0: 1.0,
            c1: 0.0,
            c2,
        },
    )
}

fn additive(v: f64) -> CoeffFunctional {
    CoeffFunctional::uncontrolled(Base::Affine {
        scale: 0.0,
        offset: v,
    })
}

fn quadratic_cost(r: f64, terminal: f64, clamp: f64) -> CostSpec {
    CostSpec {
        running: RunningCost {
            q: 1.0,
            base: Base::PointwiseAt0 { scale: 1.0 },
            r,
            u_ref: 0.0,
            clamp: Some(clamp),
        },
        terminal: TerminalCost {
            p: terminal,
            offset: 0.0,
            clamp: Some(clamp),
        },
    }
}

/// Delay dynamics with drift `10 int X + u`, two atoms `{-1, 1}` mixed 50/50,
/// started below zero so the chattering excursions push away from the origin.
pub fn chattering_half() -> ChatteringRun {
    ChatteringRun {
        problem: ProblemSpec {
            tau: 0.1,
            horizon: 1.0,
            steps: 352,
            bounds: VolBounds {
                sigma_min: 0.65,
                sigma_max: 1.0,
            },
            family: FamilyKind::Extremes,
            samples: 200,
            coeffs: CoeffSpec {
                b: controlled(Base::IntegralKernel { scale: 10.0 }, 1.0),
                ..CoeffSpec::integral_example()
            },
            atoms: vec![-1.0, 1.0],
            cost: quadratic_cost(0.1, 1.0, 1e6),
            initial: InitialHistory::Constant { value: -0.1 },
            euler: EulerConfig::default(),
        },
        weights: vec![vec![0.5, 0.5]],
        ns: vec![2, 8, 32],
    }
}

/// Drift `u` on atoms `{-1, -1/2, 0}` from `x0 = 1`, cost `int x^2 + x(T)^2`:
/// dynamics affine in the action, running cost free of it.
pub fn control_affine() -> ControlOptRun {
    ControlOptRun {
        problem: ProblemSpec {
            tau: 0.0,
            horizon: 1.0,
            steps: 64,
            bounds: VolBounds {
                sigma_min: 0.65,
                sigma_max: 1.0,
            },
            family: FamilyKind::Extremes,
            samples: 200,
            coeffs: CoeffSpec {
                q: CoeffFunctional::zero(),
                b: CoeffFunctional::controlled(
                    Base::zero(),
                    Coupling {
                        c0: 0.0,
                        c1: 0.0,
                        c2: 1.0,
                    },
                ),
                gamma: CoeffFunctional::zero(),
                sigma: additive(0.1),
            },
            atoms: vec![-1.0, -0.5, 0.0],
            cost: quadratic_cost(0.0, 1.0, 1e6),
            initial: InitialHistory::Constant { value: 1.0 },
            euler: EulerConfig::default(),
        },
        blocks: 4,
        resolution: 2,
        chattering_ns: Vec::new(),
    }
}

/// Drift `u` on atoms `{-1, 1}` from `x0 = 0`, cost `int x^2`: every strict
/// control drifts away from the origin while the 50/50 mixture stays put.
pub fn control_zigzag() -> ControlOptRun {
    ControlOptRun {
        problem: ProblemSpec {
            tau: 0.0,
            horizon: 1.0,
            steps: 512,
            bounds: VolBounds {
                sigma_min: 0.65,
                sigma_max: 1.0,
            },
            family: FamilyKind::Extremes,
            samples: 200,
            coeffs: CoeffSpec {
                q: CoeffFunctional::zero(),
                b: CoeffFunctional::controlled(
                    Base::zero(),
                    Coupling {
                        c0: 0.0,
                        c1: 0.0,
                        c2: 1.0,
                    },
                ),
                gamma: CoeffFunctional::zero(),
                sigma: additive(0.05),
            },
            atoms: vec![-1.0, 1.0],
            cost: quadratic_cost(0.0, 0.0, 1e6),
            initial: InitialHistory::Constant { value: 0.0 },
            euler: EulerConfig::default(),
        },
        blocks: 4,
        resolution: 2,
        chattering_ns: vec![2, 8, 32],
    }
}
