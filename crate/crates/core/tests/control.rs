use gnsfde_core::control::chattering::occupancy;
use gnsfde_core::control::{
    chattering_approx, stable_convergence_gap, ActionGrid, Control, ControlProblem, Monomial,
    RelaxedControl,
};
use gnsfde_core::functionals::{
    Base, CoeffFunctional, CoeffSet, CostSpec, Coupling, RunningCost, TerminalCost,
};
use gnsfde_core::nsfde::EulerConfig;
use gnsfde_core::scenarios::ScenarioFamily;
use gnsfde_core::{Path, TimeGrid, VolBounds};

fn mixture() -> RelaxedControl {
    let actions = ActionGrid::new(vec![-1.0, 0.0, 1.0]).unwrap();
    RelaxedControl::uniform(
        actions,
        1.0,
        vec![
            vec![0.2, 0.3, 0.5],
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
        ],
    )
    .unwrap()
}

#[test]
fn chattering_occupancy_matches_weights() {
    let mu = mixture();
    for n in [1, 4, 16] {
        let u = chattering_approx(&mu, n, None).unwrap();
        for (row, w) in occupancy(&mu, &u).iter().zip(mu.weights()) {
            for (a, b) in row.iter().zip(w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn stable_gap_shrinks_like_one_over_n() {
    let mu = mixture();
    let tests = Monomial::default_set();
    let gaps: Vec<f64> = [2, 8, 32]
        .iter()
        .map(|&n| {
            stable_convergence_gap(&mu, &chattering_approx(&mu, n, None).unwrap(), &tests).unwrap()
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    assert!((gaps[0] / gaps[2] - 16.0).abs() < 1.0, "{gaps:?}");
}

fn zigzag(steps: usize) -> ControlProblem {
    let grid = TimeGrid::new(0.0, 1.0, steps).unwrap();
    let set = CoeffSet::new(
        CoeffFunctional::zero(),
        CoeffFunctional::controlled(
            Base::zero(),
            Coupling {
                c0: 0.0,
                c1: 0.0,
                c2: 1.0,
            },
        ),
        CoeffFunctional::zero(),
        CoeffFunctional::uncontrolled(Base::Affine {
            scale: 0.0,
            offset: 0.05,
        }),
        0.0,
        (-1.0, 1.0),
    )
    .unwrap();
    let cost = CostSpec {
        running: RunningCost {
            q: 1.0,
            base: Base::PointwiseAt0 { scale: 1.0 },
            r: 0.0,
            u_ref: 0.0,
            clamp: None,
        },
        terminal: TerminalCost {
            p: 0.0,
            offset: 0.0,
            clamp: None,
        },
    };
    let family = ScenarioFamily::extremes(VolBounds::new(0.65, 1.0).unwrap(), 100, 4).unwrap();
    ControlProblem::new(
        set,
        cost,
        Path::constant(grid, 0.0).unwrap(),
        family,
        EulerConfig::default(),
    )
    .unwrap()
}

#[test]
fn mixing_beats_every_switching_policy_without_convexity() {
    let problem = zigzag(256);
    let actions = ActionGrid::new(vec![-1.0, 1.0]).unwrap();
    let strict = problem.optimize_strict(&actions, 2).unwrap();
    let relaxed = problem.optimize_relaxed(&actions, 2, 2).unwrap();
    assert_eq!(strict.candidates.len(), 4);
    assert_eq!(relaxed.candidates.len(), 9);
    assert!((relaxed.dirac_value - strict.value).abs() < 1e-12);
    assert!(relaxed.gap_to_strict() > 10.0 * strict.std_err.max(relaxed.std_err));
    let un = chattering_approx(&relaxed.control, 32, Some(problem.grid().h())).unwrap();
    let j = problem.cost(Control::Strict(&un)).unwrap().value;
    assert!(j < strict.value && j - relaxed.value < 0.1 * relaxed.gap_to_strict());
}
