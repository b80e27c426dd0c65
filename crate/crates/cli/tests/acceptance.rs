//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::time::Instant;

use clap::Parser;
use statrs::distribution::{ContinuousCDF, Normal};

use gnsfde_cli::commands;
use gnsfde_cli::config::{GNormalRun, IsometryRun, PicardRun, QvCheckRun};
use gnsfde_cli::presets;
use gnsfde_cli::{run, Cli};
use gnsfde_core::functionals::CoeffSet;
use gnsfde_core::gheat::{max_stable_dt, solve_g_heat_with, GNormalConfig, Keep, SpatialGrid};
use gnsfde_core::nsfde::{strong_convergence, EulerConfig};
use gnsfde_core::scenarios::{upper_expectation, ScenarioFamily, VolPolicy};
use gnsfde_core::stats::{combined_se, loglog_slope};
use gnsfde_core::{TimeGrid, VolBounds};

const SEED: u64 = 1;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    format!("error: {e}")
}

fn bounds(lo: f64, hi: f64) -> VolBounds {
    VolBounds {
        sigma_min: lo,
        sigma_max: hi,
    }
}

fn classical_reduction() -> Outcome {
    let run = GNormalRun {
        curves: vec![bounds(1.0, 1.0)],
        t: 1.0,
        y_min: -4.0,
        y_max: 4.0,
        dy: 0.02,
        pde: GNormalConfig::default(),
    };
    let curves = commands::gnormal(&run).map_err(err)?;
    let n = Normal::new(0.0, 1.0).unwrap();
    let worst = curves[0]
        .rows
        .iter()
        .map(|&(y, f, _)| (f - n.cdf(y)).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 2e-3,
        format!("max |F - Phi| = {worst:.2e} (tol 2e-3)"),
    )
}

fn pde_at_origin(phi: fn(f64) -> f64) -> gnsfde_core::Result<f64> {
    let b = bounds(0.8, 1.3);
    let grid = SpatialGrid::covering(-12.0, 12.0, 0.02)?;
    let dt = max_stable_dt(&grid, &b);
    Ok(solve_g_heat_with(phi, &b, 1.0, &grid, dt, Keep::Final)?.at_origin())
}

fn g_normal_moments() -> Outcome {
    let up = pde_at_origin(|x| x * x).map_err(err)?;
    let down = pde_at_origin(|x| -x * x).map_err(err)?;
    check(
        (up - 1.69).abs() <= 1e-2 && (down + 0.64).abs() <= 1e-2,
        format!("u[x^2] = {up:.5} (1.69), u[-x^2] = {down:.5} (-0.64), tol 1e-2"),
    )
}

fn dual_consistency() -> Outcome {
    let pde = pde_at_origin(|x| x * x).map_err(err)?;
    let grid = TimeGrid::new(0.0, 1.0, 100).map_err(err)?;
    let family = ScenarioFamily::default_family(bounds(0.8, 1.3), 10_000, SEED).map_err(err)?;
    let est = upper_expectation(|p| p.terminal().powi(2), &family, &grid, None).map_err(err)?;
    let gap = (est.value - pde).abs();
    check(
        gap <= 3.0 * est.std_err,
        format!(
            "MC {:.4} +- {:.4} [{}] vs PDE {pde:.4}: gap {:.2} SE",
            est.value,
            est.std_err,
            est.table[est.argmax].label,
            gap / est.std_err
        ),
    )
}

fn qv_identity() -> Outcome {
    let rows = commands::qv_check(&QvCheckRun::default(), SEED).map_err(err)?;
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[0].2 / w[1].2).collect();
    let text = ratios
        .iter()
        .map(|r| format!("{r:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        ratios.iter().all(|&r| r >= 1.7),
        format!("RMS ratios per 4x refinement [{text}] (min 1.7, 100 paths)"),
    )
}

fn isometry() -> Outcome {
    let run = IsometryRun::default();
    let rep = commands::isometry_check(&run, SEED).map_err(err)?;
    let iso_fail = rep
        .isometry
        .iter()
        .filter(|(_, _, c)| !c.within(3.0))
        .count();
    let bdg_fail = rep.bdg.iter().filter(|(_, _, c)| !c.holds(3.0)).count();
    let worst = rep
        .isometry
        .iter()
        .map(|(_, _, c)| c.gap / c.combined_se)
        .fold(0.0, f64::max);
    check(
        iso_fail == 0 && bdg_fail == 0,
        format!(
            "{} isometry checks (worst {worst:.2} SE, {iso_fail} outside 3 SE), {} maximal-inequality checks ({bdg_fail} violated)",
            rep.isometry.len(),
            rep.bdg.len()
        ),
    )
}

fn contraction() -> Outcome {
    let rep = commands::picard_check(&PicardRun::default(), SEED).map_err(err)?;
    let iters = rep.converged_at;
    check(
        rep.pairs >= 1000 && rep.ratio <= rep.bound + 0.05 && iters.is_some_and(|k| k <= 20),
        format!(
            "ratio {:.4} over {} pairs (bound {:.4} + 0.05, C = {}), iterate distance < 1e-6 after {:?} iterations",
            rep.ratio, rep.pairs, rep.bound, rep.c, iters
        ),
    )
}

fn euler_convergence() -> Outcome {
    let b = bounds(0.65, 1.0);
    let coeffs = CoeffSet::integral_example(0.1).map_err(err)?;
    let rows = strong_convergence(
        &coeffs,
        |_| 1.0,
        &VolPolicy::constant(b.var_max()),
        1.5,
        &[64, 128, 256],
        16,
        200,
        SEED,
        &EulerConfig::default(),
    )
    .map_err(err)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.rms)).collect();
    let slope = loglog_slope(&pts);
    let text = rows
        .iter()
        .map(|r| format!("{:.3e}", r.rms))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        slope >= 0.4,
        format!("slope {slope:.3} (min 0.4), RMS [{text}]"),
    )
}

fn chattering() -> Outcome {
    let (rows, _) = commands::chattering(&presets::chattering_half(), SEED).map_err(err)?;
    let monotone = |f: &dyn Fn(&commands::ChatteringRow) -> (f64, f64)| {
        rows.windows(2).all(|w| {
            let ((a, sa), (b, sb)) = (f(&w[0]), f(&w[1]));
            b <= a + 3.0 * combined_se(sa, sb)
        })
    };
    let path = |r: &commands::ChatteringRow| (r.point.path_gap, r.point.path_gap_se);
    let cost = |r: &commands::ChatteringRow| (r.point.cost_gap, r.point.cost_gap_se);
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let path_frac = last.point.path_gap / first.point.path_gap;
    let cost_frac = last.point.cost_gap / first.point.cost_gap;
    check(
        monotone(&path) && monotone(&cost) && path_frac <= 0.1 && cost_frac <= 0.1,
        format!(
            "n = {} -> {}: stability gap {:.3e} -> {:.3e} ({:.1}%), cost gap {:.3e} -> {:.3e} ({:.1}%)",
            first.n,
            last.n,
            first.point.path_gap,
            last.point.path_gap,
            100.0 * path_frac,
            first.point.cost_gap,
            last.point.cost_gap,
            100.0 * cost_frac
        ),
    )
}

fn relaxation() -> Outcome {
    let affine = commands::control_opt(&presets::control_affine(), SEED).map_err(err)?;
    let a_gap = (affine.strict.value - affine.relaxed.value).abs();
    let a_se = combined_se(affine.strict.std_err, affine.relaxed.std_err);
    let a_ok = a_gap <= 3.0 * a_se;

    let zz = commands::control_opt(&presets::control_zigzag(), SEED).map_err(err)?;
    let z_gap = zz.strict.value - zz.relaxed.value;
    let z_se = combined_se(zz.strict.std_err, zz.relaxed.std_err);
    let (n, last) = zz.chattering.last().ok_or("no chattering refinements")?;
    let closed = (zz.strict.value - last.value) / z_gap;
    check(
        a_ok && z_gap > 3.0 * z_se && closed >= 0.9,
        format!(
            "affine: |strict - relaxed| = {a_gap:.2e} (3 SE = {:.2e}); nonconvex: strict {:.4e} vs relaxed {:.4e} ({:.1} SE), chattering n = {n} closes {:.1}%",
            3.0 * a_se,
            zz.strict.value,
            zz.relaxed.value,
            z_gap / z_se,
            100.0 * closed
        ),
    )
}

fn read_paths(dir: &Path) -> Result<(usize, bool), String> {
    let text = std::fs::read_to_string(dir.join("nsfde_paths.csv")).map_err(err)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut ids = std::collections::BTreeSet::new();
    let mut finite = true;
    for rec in rdr.records() {
        let rec = rec.map_err(err)?;
        ids.insert(rec[0].to_string());
        finite &= rec[2].parse::<f64>().map_err(err)?.is_finite();
    }
    Ok((ids.len(), finite))
}

fn reproduction() -> Outcome {
    let root = tempfile::tempdir().map_err(err)?;
    let mut notes = Vec::new();
    let mut ok = true;
    for fig in ["paper-fig5", "paper-fig6", "paper-fig7", "paper-fig8"] {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let dir = root.path().join(format!("{fig}-{rep}"));
            let cli = Cli::parse_from([
                "gnsfde",
                "nsfde-sim",
                "--preset",
                fig,
                "--seed",
                &SEED.to_string(),
                "--out-dir",
                dir.to_str().unwrap(),
            ]);
            run(&cli).map_err(err)?;
            let (paths, finite) = read_paths(&dir)?;
            ok &= paths == 20 && finite;
            if rep == 0 {
                notes.push(format!(
                    "{fig}: {paths} paths{}",
                    if finite { "" } else { " (non-finite)" }
                ));
            }
            bytes.push(std::fs::read(dir.join("nsfde_paths.csv")).map_err(err)?);
        }
        if bytes[0] != bytes[1] {
            ok = false;
            notes.push(format!("{fig}: reruns differ"));
        }
    }
    check(
        ok,
        format!("{}, reruns byte-identical: {ok}", notes.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("classical reduction", classical_reduction),
        ("G-normal moments", g_normal_moments),
        ("dual consistency", dual_consistency),
        ("quadratic-variation identity", qv_identity),
        ("isometry and maximal inequality", isometry),
        ("Picard contraction", contraction),
        ("Euler strong convergence", euler_convergence),
        ("chattering stability", chattering),
        ("relaxation gap", relaxation),
        ("trajectory presets", reproduction),
    ];
    let limits = [(1, 30.0), (9, 600.0)];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let k = i + 1;
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let over = limits.iter().find(|(c, limit)| *c == k && secs > *limit);
        let (status, detail) = match (&outcome, over) {
            (Ok(d), None) => ("PASS", d.clone()),
            (Ok(d), Some((_, limit))) => ("FAIL", format!("{d}; runtime over {limit} s")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {k:>2} {status} {name}: {detail} [{secs:.1} s]");
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
