//! Computation behind each subcommand, separated from file output so the
//! results can be inspected directly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use gnsfde_core::control::chattering::Monomial;
use gnsfde_core::control::optimize::{RelaxedOptimum, StrictOptimum};
use gnsfde_core::control::{
    chattering_approx, stable_convergence_gap, Control, ControlProblem, RelaxedControl,
    StabilityPoint, WorstCaseCost,
};
use gnsfde_core::functionals::{
    contraction_constant, random_probe_pairs, validate_assumptions, AssumptionReport, CoeffSet,
    CostSpec,
};
use gnsfde_core::gheat::{g_normal_cdf_table, g_normal_density};
use gnsfde_core::nsfde::{
    contraction_ratio, picard_iterate, simulate_nsfde, NCNormConfig, PicardTrace,
};
use gnsfde_core::rng::{derive_seed, stream, stream_rng};
use gnsfde_core::scenarios::{
    bdg_check, check_isometry, qv_refinement_study, sample_gbm, BdgCheck, GBMPath, IsometryCheck,
    StepIntegrand,
};
use gnsfde_core::{Error, Path, Result, TimeGrid, VolBounds};

use crate::config::{
    ChatteringRun, ControlOptRun, GNormalRun, IsometryRun, NsfdeSimRun, PicardRun, ProblemSpec,
    QvCheckRun, SamplePathsRun,
};
use crate::output::{num, Table};

/// Seed of trajectory `s` in commands that simulate independent paths.
pub fn path_seed(seed: u64, s: usize) -> u64 {
    derive_seed(seed, &[stream::SAMPLE, s as u64])
}

/// Rename core field names to configuration paths: the first rule whose
/// source is a prefix of the field (up to a `.` or `[`) wins.
fn remap<T>(r: Result<T>, rules: &[(&str, &str)]) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { field, message } => {
            let renamed = rules.iter().find_map(|(from, to)| {
                let rest = field.strip_prefix(from)?;
                (rest.is_empty() || rest.starts_with('.') || rest.starts_with('['))
                    .then(|| format!("{to}{rest}"))
            });
            Error::config(renamed.unwrap_or(field), message)
        }
        e => e,
    })
}

const BOUNDS: [(&str, &str); 2] = [
    ("sigma_min", "bounds.sigma_min"),
    ("sigma_max", "bounds.sigma_max"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GNormalCurve {
    pub bounds: VolBounds,
    /// `(y, distribution, density)`.
    pub rows: Vec<(f64, f64, f64)>,
}

pub fn gnormal(run: &GNormalRun) -> Result<Vec<GNormalCurve>> {
    remap(
        gnormal_inner(run),
        &[
            ("dx", "pde.dx"),
            ("eps", "pde.eps"),
            ("width_sigmas", "pde.width_sigmas"),
            ("spatial_grid", "pde.dx"),
            ("dt", "pde.dx"),
            ("t_end", "t"),
            ("sigma_min", "curves"),
            ("sigma_max", "curves"),
        ],
    )
}

fn gnormal_inner(run: &GNormalRun) -> Result<Vec<GNormalCurve>> {
    run.validate()?;
    let ys = run.ys();
    run.curves
        .iter()
        .map(|b| {
            let cdf = g_normal_cdf_table(b, run.t, &ys, &run.pde)?;
            let pdf = g_normal_density(b, run.t, &ys, &run.pde)?;
            Ok(GNormalCurve {
                bounds: *b,
                rows: cdf.iter().zip(&pdf).map(|(c, d)| (c.0, c.1, d.1)).collect(),
            })
        })
        .collect()
}

pub fn gnormal_tables(run: &GNormalRun, curves: &[GNormalCurve]) -> Vec<Table> {
    let side = format!("{:?}", run.pde.side).to_lowercase();
    let mut t = Table::new(
        "gnormal",
        &["sigma_min", "sigma_max", "side", "t", "y", "cdf", "density"],
    );
    for c in curves {
        for &(y, f, p) in &c.rows {
            t.push(vec![
                num(c.bounds.sigma_min),
                num(c.bounds.sigma_max),
                side.clone(),
                num(run.t),
                num(y),
                num(f),
                num(p),
            ]);
        }
    }
    vec![t]
}

pub fn sample_paths(
    run: &SamplePathsRun,
    seed: u64,
) -> Result<(TimeGrid, Vec<String>, Vec<Vec<GBMPath>>)> {
    remap(
        sample_paths_inner(run, seed),
        &[
            BOUNDS[0],
            BOUNDS[1],
            ("family.samples", "samples"),
            ("grid", "steps"),
        ],
    )
}

fn sample_paths_inner(
    run: &SamplePathsRun,
    seed: u64,
) -> Result<(TimeGrid, Vec<String>, Vec<Vec<GBMPath>>)> {
    run.bounds.validate()?;
    let grid = run.grid()?;
    let family = run.family.build(run.bounds, run.samples, seed)?;
    let labels = family.policies().iter().map(|p| p.label()).collect();
    Ok((grid, labels, family.sample_all(&grid)))
}

pub fn sample_path_tables(labels: &[String], paths: &[Vec<GBMPath>]) -> Vec<Table> {
    let mut t = Table::new(
        "sample_paths",
        &["policy", "path", "t", "b", "qv", "qv_residual"],
    );
    for (label, ps) in labels.iter().zip(paths) {
        for (s, p) in ps.iter().enumerate() {
            let res = gnsfde_core::scenarios::qv_residuals(p);
            for k in 0..=p.steps() {
                t.push(vec![
                    label.clone(),
                    s.to_string(),
                    num(p.time(k)),
                    num(p.b()[k]),
                    num(p.qv()[k]),
                    num(res[k]),
                ]);
            }
        }
    }
    vec![t]
}

/// Lipschitz probes on the coefficients; a failing probe is a configuration error.
pub fn check_assumptions(
    set: &CoeffSet,
    cost: &CostSpec,
    window_steps: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let probes = random_probe_pairs(set.tau(), window_steps, 200, seed)?;
    let report = validate_assumptions(set, cost, &probes)?;
    if let Some(p) = report.lipschitz.iter().find(|p| !p.pass) {
        return Err(Error::config(
            format!("coeffs.{}", p.name.to_lowercase()),
            format!(
                "observed Lipschitz ratio {} exceeds the declared {}",
                p.worst_ratio, p.declared
            ),
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub paths: Vec<Path>,
    pub assumptions: AssumptionReport,
}

pub fn nsfde_sim(run: &NsfdeSimRun, seed: u64) -> Result<Trajectories> {
    remap(
        nsfde_sim_inner(run, seed),
        &[BOUNDS[0], BOUNDS[1], ("policy", "noise"), ("grid", "steps")],
    )
}

fn nsfde_sim_inner(run: &NsfdeSimRun, seed: u64) -> Result<Trajectories> {
    run.validate()?;
    let grid = run.grid()?;
    let set = run.coeffs.build(run.tau, (0.0, 0.0))?;
    if set.is_controlled() {
        return Err(Error::config(
            "coeffs",
            "nsfde-sim runs uncontrolled dynamics",
        ));
    }
    let assumptions = check_assumptions(&set, &CostSpec::zero(), grid.window_steps(), seed)?;
    let paths = (0..run.paths)
        .map(|s| {
            let ps = path_seed(seed, s);
            let eta = run.initial.realize(&grid, ps)?;
            let gbm = sample_gbm(&run.noise, &grid, ps);
            simulate_nsfde(&set, &eta, &gbm, Control::None, &run.euler).map_err(|e| Error::Sample {
                index: s,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Trajectories { paths, assumptions })
}

pub fn nsfde_tables(tr: &Trajectories) -> Vec<Table> {
    let mut t = Table::new("nsfde_paths", &["path", "t", "x"]);
    for (s, p) in tr.paths.iter().enumerate() {
        for (i, tt) in p.grid().times().enumerate() {
            t.push(vec![s.to_string(), num(tt), num(p.value(i))]);
        }
    }
    vec![t]
}

/// `(steps, h, rms)` rows.
pub fn qv_check(run: &QvCheckRun, seed: u64) -> Result<Vec<(usize, f64, f64)>> {
    remap(
        qv_check_inner(run, seed),
        &[BOUNDS[0], BOUNDS[1], ("grid", "steps")],
    )
}

fn qv_check_inner(run: &QvCheckRun, seed: u64) -> Result<Vec<(usize, f64, f64)>> {
    run.validate()?;
    let rows = qv_refinement_study(&run.policy, run.horizon, &run.steps, run.paths, seed)?;
    Ok(run
        .steps
        .iter()
        .zip(rows)
        .map(|(&n, (h, r))| (n, h, r))
        .collect())
}

pub fn qv_tables(rows: &[(usize, f64, f64)]) -> Vec<Table> {
    let mut t = Table::new(
        "qv_check",
        &["steps", "h", "rms_terminal_residual", "ratio_to_previous"],
    );
    for (i, &(n, h, r)) in rows.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            num(rows[i - 1].2 / r)
        };
        t.push(vec![n.to_string(), num(h), num(r), ratio]);
    }
    vec![t]
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsometryReport {
    /// `(integrand, policy, check)`.
    pub isometry: Vec<(String, String, IsometryCheck)>,
    pub bdg: Vec<(String, String, BdgCheck)>,
}

pub fn isometry_check(run: &IsometryRun, seed: u64) -> Result<IsometryReport> {
    remap(
        isometry_check_inner(run, seed),
        &[
            BOUNDS[0],
            BOUNDS[1],
            ("family.samples", "samples"),
            ("grid", "steps"),
        ],
    )
}

fn isometry_check_inner(run: &IsometryRun, seed: u64) -> Result<IsometryReport> {
    run.bounds.validate()?;
    let grid = run.grid()?;
    let family = run.family.build(run.bounds, run.samples, seed)?;
    let mut isometry = Vec::new();
    let mut bdg = Vec::new();
    for eta in StepIntegrand::builtins(&grid) {
        for policy in family.policies() {
            isometry.push((
                eta.name.clone(),
                policy.label(),
                check_isometry(&eta, policy, &grid, run.samples, seed)?,
            ));
            bdg.push((
                eta.name.clone(),
                policy.label(),
                bdg_check(
                    &eta,
                    policy,
                    &grid,
                    0,
                    grid.forward_steps(),
                    run.samples,
                    seed,
                )?,
            ));
        }
    }
    Ok(IsometryReport { isometry, bdg })
}

pub fn isometry_tables(run: &IsometryRun, rep: &IsometryReport) -> Vec<Table> {
    let mut t = Table::new(
        "isometry_check",
        &[
            "check",
            "integrand",
            "policy",
            "lhs",
            "lhs_se",
            "rhs",
            "rhs_se",
            "pass",
        ],
    );
    for (eta, policy, c) in &rep.isometry {
        t.push(vec![
            "isometry".into(),
            eta.clone(),
            policy.clone(),
            num(c.lhs),
            num(c.lhs_se),
            num(c.rhs),
            num(c.rhs_se),
            c.within(run.k_se).to_string(),
        ]);
    }
    for (eta, policy, c) in &rep.bdg {
        t.push(vec![
            "bdg".into(),
            eta.clone(),
            policy.clone(),
            num(c.lhs),
            num(c.lhs_se),
            num(c.rhs),
            num(c.rhs_se),
            c.holds(run.k_se).to_string(),
        ]);
    }
    vec![t]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    pub c: f64,
    pub k0: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pairs: usize,
    pub distances: Vec<f64>,
    pub converged_at: Option<usize>,
}

/// Random input path: `eta` on the history, `eta(0)` plus a scaled random walk afterwards.
fn probe_path(eta: &Path, seed: u64, key: &[u64]) -> Result<Path> {
    let grid = *eta.grid();
    let n0 = grid.zero_index();
    let mut rng = stream_rng(seed, key);
    let scale: f64 = rng.random_range(0.1..2.0);
    let mut v = eta.values().to_vec();
    for i in n0 + 1..grid.len() {
        v[i] = v[i - 1] + scale * grid.h().sqrt() * rng.sample::<f64, _>(StandardNormal);
    }
    Path::new(grid, v)
}

pub fn picard_check(run: &PicardRun, seed: u64) -> Result<PicardReport> {
    remap(
        picard_check_inner(run, seed),
        &[
            BOUNDS[0],
            BOUNDS[1],
            ("family.samples", "samples"),
            ("nc_norm.c", "c"),
            ("grid", "steps"),
        ],
    )
}

fn picard_check_inner(run: &PicardRun, seed: u64) -> Result<PicardReport> {
    run.bounds.validate()?;
    let grid = run.grid()?;
    let set = run.coeffs.build(run.tau, (0.0, 0.0))?;
    check_assumptions(&set, &CostSpec::zero(), grid.window_steps(), seed)?;
    let family = run.family.build(run.bounds, run.samples, seed)?;
    let eta = run
        .initial
        .realize(&grid, derive_seed(seed, &[stream::HISTORY]))?;
    let cfg = match run.c {
        Some(c) => NCNormConfig::new(c)?,
        None => NCNormConfig::from_constants(set.k1(), run.horizon, run.bounds.sigma_max)?,
    };
    let gbms = family.sample_all(&grid);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for p in 0..gbms.len() {
        let pair = |j: u64| -> Result<Vec<Path>> {
            (0..run.samples)
                .map(|s| probe_path(&eta, seed, &[stream::PROBE, p as u64, s as u64, j]))
                .collect()
        };
        xs.push(pair(0)?);
        ys.push(pair(1)?);
    }
    let ratio = contraction_ratio(&xs, &ys, &set, &eta, &gbms, Control::None, &cfg)?;
    let PicardTrace {
        distances,
        converged_at,
        ..
    } = picard_iterate(
        &set,
        &eta,
        &gbms,
        Control::None,
        &cfg,
        run.max_iter,
        run.tol,
    )?;
    Ok(PicardReport {
        c: cfg.c,
        k0: set.k0(),
        bound: contraction_constant(set.k0()),
        ratio,
        pairs: run.samples * gbms.len(),
        distances,
        converged_at,
    })
}

pub fn picard_tables(rep: &PicardReport) -> Vec<Table> {
    let mut c = Table::new(
        "picard_contraction",
        &["c", "k0", "pairs", "ratio", "bound"],
    );
    c.push(vec![
        num(rep.c),
        num(rep.k0),
        rep.pairs.to_string(),
        num(rep.ratio),
        num(rep.bound),
    ]);
    let mut it = Table::new("picard_iterates", &["iteration", "distance"]);
    for (k, d) in rep.distances.iter().enumerate() {
        it.push(vec![(k + 1).to_string(), num(*d)]);
    }
    vec![c, it]
}

const PROBLEM: [(&str, &str); 11] = [
    ("sigma_min", "problem.bounds.sigma_min"),
    ("sigma_max", "problem.bounds.sigma_max"),
    ("coeffs", "problem.coeffs"),
    ("euler", "problem.euler"),
    ("initial", "problem.initial"),
    ("family.samples", "problem.samples"),
    ("steps", "problem.steps"),
    ("grid", "problem.steps"),
    ("actions", "problem.atoms"),
    ("atoms", "problem.atoms"),
    ("policy", "problem.bounds"),
];

/// Build the controlled problem after checking the coefficient assumptions.
pub fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<(ControlProblem, AssumptionReport)> {
    remap(build_problem_inner(spec, seed), &PROBLEM)
}

fn build_problem_inner(
    spec: &ProblemSpec,
    seed: u64,
) -> Result<(ControlProblem, AssumptionReport)> {
    spec.bounds.validate()?;
    let grid = spec.grid()?;
    let actions = spec.actions()?;
    let set = spec.coeffs.build(spec.tau, actions.range())?;
    let report = check_assumptions(&set, &spec.cost, grid.window_steps(), seed)?;
    let family = spec.family.build(spec.bounds, spec.samples, seed)?;
    let eta = spec
        .initial
        .realize(&grid, derive_seed(seed, &[stream::HISTORY]))?;
    Ok((
        ControlProblem::new(set, spec.cost, eta, family, spec.euler)?,
        report,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatteringRow {
    pub n: usize,
    pub stable_gap: f64,
    pub point: StabilityPoint,
}

pub fn chattering(
    run: &ChatteringRun,
    seed: u64,
) -> Result<(Vec<ChatteringRow>, AssumptionReport)> {
    remap(
        chattering_inner(run, seed),
        &[("control.weights", "weights"), ("chattering.n", "ns")],
    )
}

fn chattering_inner(
    run: &ChatteringRun,
    seed: u64,
) -> Result<(Vec<ChatteringRow>, AssumptionReport)> {
    let (problem, report) = build_problem(&run.problem, seed)?;
    let actions = run.problem.actions()?;
    let mu = RelaxedControl::uniform(actions, run.problem.horizon, run.weights.clone())?;
    if run.ns.is_empty() {
        return Err(Error::config("ns", "need at least one refinement"));
    }
    let tests = Monomial::default_set();
    let rows = run
        .ns
        .iter()
        .map(|&n| {
            let un = chattering_approx(&mu, n, Some(problem.grid().h()))?;
            Ok(ChatteringRow {
                n,
                stable_gap: stable_convergence_gap(&mu, &un, &tests)?,
                point: problem.stability_gap(&mu, n)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((rows, report))
}

pub fn chattering_tables(rows: &[ChatteringRow]) -> Vec<Table> {
    let mut t = Table::new(
        "chattering",
        &[
            "n",
            "stable_gap",
            "path_gap",
            "path_gap_se",
            "cost_gap",
            "cost_gap_se",
            "j_chattering",
            "j_relaxed",
        ],
    );
    for r in rows {
        let p = &r.point;
        t.push(vec![
            r.n.to_string(),
            num(r.stable_gap),
            num(p.path_gap),
            num(p.path_gap_se),
            num(p.cost_gap),
            num(p.cost_gap_se),
            num(p.j_chattering),
            num(p.j_relaxed),
        ]);
    }
    vec![t]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOptReport {
    pub strict: StrictOptimum,
    pub relaxed: RelaxedOptimum,
    /// Worst-case cost of the chattering approximations of the relaxed optimum.
    pub chattering: Vec<(usize, WorstCaseCost)>,
    pub assumptions: AssumptionReport,
}

pub fn control_opt(run: &ControlOptRun, seed: u64) -> Result<ControlOptReport> {
    remap(
        control_opt_inner(run, seed),
        &[
            ("optimize.blocks", "blocks"),
            ("optimize.resolution", "resolution"),
            ("chattering.n", "chattering_ns"),
        ],
    )
}

fn control_opt_inner(run: &ControlOptRun, seed: u64) -> Result<ControlOptReport> {
    let (problem, assumptions) = build_problem(&run.problem, seed)?;
    let actions = run.problem.actions()?;
    let strict = problem.optimize_strict(&actions, run.blocks)?;
    let relaxed = problem.optimize_relaxed(&actions, run.blocks, run.resolution)?;
    let chattering = run
        .chattering_ns
        .iter()
        .map(|&n| {
            let un = chattering_approx(&relaxed.control, n, Some(problem.grid().h()))?;
            Ok((n, problem.cost(Control::Strict(&un))?))
        })
        .collect::<Result<_>>()?;
    Ok(ControlOptReport {
        strict,
        relaxed,
        chattering,
        assumptions,
    })
}

fn candidate_table(name: &str, cands: &[gnsfde_core::control::optimize::Candidate]) -> Table {
    let labels: Vec<String> = cands
        .first()
        .map(|c| {
            c.cost
                .table
                .iter()
                .map(|e| format!("J[{}]", e.label))
                .collect()
        })
        .unwrap_or_default();
    let mut cols = vec!["encoding".to_string(), "J".to_string(), "J_se".to_string()];
    cols.extend(labels);
    let mut t = Table {
        name: name.to_string(),
        columns: cols,
        rows: Vec::new(),
    };
    for c in cands {
        let mut row = vec![c.encoding.clone(), num(c.cost.value), num(c.cost.std_err)];
        row.extend(c.cost.table.iter().map(|e| num(e.mean)));
        t.push(row);
    }
    t
}

pub fn control_tables(rep: &ControlOptReport) -> Vec<Table> {
    let mut summary = Table::new("control_summary", &["kind", "encoding", "J", "J_se"]);
    summary.push(vec![
        "strict".into(),
        rep.strict.control.encode(),
        num(rep.strict.value),
        num(rep.strict.std_err),
    ]);
    summary.push(vec![
        "relaxed".into(),
        rep.relaxed.control.encode(),
        num(rep.relaxed.value),
        num(rep.relaxed.std_err),
    ]);
    let gap = rep.strict.value - rep.relaxed.value;
    let mut chat = Table::new("control_chattering", &["n", "J", "J_se", "closed_fraction"]);
    for (n, j) in &rep.chattering {
        let closed = if gap > 0.0 {
            (rep.strict.value - j.value) / gap
        } else {
            1.0
        };
        chat.push(vec![
            n.to_string(),
            num(j.value),
            num(j.std_err),
            num(closed),
        ]);
    }
    vec![
        candidate_table("control_strict", &rep.strict.candidates),
        candidate_table("control_relaxed", &rep.relaxed.candidates),
        summary,
        chat,
    ]
}
