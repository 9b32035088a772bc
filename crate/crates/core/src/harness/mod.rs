//! Experiment drivers and the table-producing commands behind the CLI.

mod config;
mod report;

pub use config::{parse_config, parse_config_str, CellBlock, ExperimentConfig, OutputBlock, PdeBlock};
pub use report::{emit_all, emit_csv, emit_report, format_float, Check, Report, Table, Value};

use std::time::Instant;

use rayon::prelude::*;

use crate::cell_solver::{analytic_effective, effective_from_cell, periodize, solve_cell_problems};
use crate::effective::{estimate, reference_effective, rho_sweep, EffectiveEstimate};
use crate::error::{Error, Result};
use crate::ks_solver::{
    build_micro_coefficients, check_resolution, run, run_macro, space_time_l2_error, Grid, SolverConfig,
    State, Trajectory,
};
use crate::random_fields::{make_realization, sample_path, FieldSpec};

/// Relative mass drift allowed in any PDE run.
pub const MASS_TOL: f64 = 1e-12;
/// Lowest admissible `u` entry.
pub const POSITIVITY_TOL: f64 = -1e-14;
/// Statistical tolerance, in standard errors, for Monte-Carlo comparisons.
pub const SE_FACTOR: f64 = 5.0;
/// Required shrink factor of the cross-seed spread of `D^ρ` over a ρ-sweep.
pub const SPREAD_SHRINK: f64 = 4.0;
/// Micro ≡ macro tolerance for fields without oscillation.
pub const EXACT_TOL: f64 = 1e-10;

pub const RHO_SWEEP_COLUMNS: [&str; 8] = [
    "rho",
    "n_realizations",
    "mean_D",
    "se_D",
    "mean_chi",
    "se_chi",
    "D_star_ref",
    "chi_star_ref",
];

/// `field sample`: columns `y_mid, D, chi`.
pub fn field_sample_table(spec: &FieldSpec, seed: u64, a: f64, b: f64, n: usize) -> Result<Table> {
    let r = make_realization(spec, seed)?;
    let path = sample_path(&r, a, b, n)?;
    let mut t = Table::new("field_sample", &["y_mid", "D", "chi"]);
    for i in 0..n {
        t.push(vec![path.y_mid[i].into(), path.d[i].into(), path.chi[i].into()]);
    }
    Ok(t)
}

/// `cell solve`: one row per seed.
pub fn cell_solve_table(
    spec: &FieldSpec,
    seeds: &[u64],
    rho: f64,
    n_cells: usize,
    allow_misaligned: bool,
) -> Result<Table> {
    let mut t = Table::new(
        "cell_solve",
        &[
            "seed",
            "rho",
            "D_rho_fv",
            "chi_rho_fv",
            "D_rho_analytic",
            "chi_rho_analytic",
            "flux_residual",
        ],
    );
    for &seed in seeds {
        let run = || -> Result<Vec<Value>> {
            let r = make_realization(spec, seed)?;
            let field = periodize(&r, rho, n_cells, allow_misaligned)?;
            let sol = solve_cell_problems(&field)?;
            let (d_fv, chi_fv) = effective_from_cell(&sol);
            let (d_an, chi_an) = analytic_effective(&field);
            Ok(vec![
                seed.into(),
                rho.into(),
                d_fv.into(),
                chi_fv.into(),
                d_an.into(),
                chi_an.into(),
                sol.flux_residual.into(),
            ])
        };
        t.push(run().map_err(|e| e.at_seed(seed))?);
    }
    Ok(t)
}

fn estimate_row(est: &EffectiveEstimate, spec: &FieldSpec) -> Vec<Value> {
    let reference = reference_effective(spec);
    vec![
        est.rho.into(),
        est.n_realizations.into(),
        est.mean_d.into(),
        est.se_d.into(),
        est.mean_chi.into(),
        est.se_chi.into(),
        reference.d_star.into(),
        reference.chi_star.into(),
    ]
}

/// `effective estimate` / `effective rho-sweep` tables share one schema.
pub fn estimates_table(name: &str, spec: &FieldSpec, rows: &[EffectiveEstimate]) -> Table {
    let mut t = Table::new(name, &RHO_SWEEP_COLUMNS);
    for est in rows {
        t.push(estimate_row(est, spec));
    }
    t
}

/// Per-realization samples of a set of estimates: `rho, seed, D_rho, chi_rho`.
pub fn samples_table(name: &str, rows: &[EffectiveEstimate]) -> Table {
    let mut t = Table::new(name, &["rho", "seed", "D_rho", "chi_rho"]);
    for est in rows {
        for s in &est.samples {
            t.push(vec![est.rho.into(), s.seed.into(), s.d_rho.into(), s.chi_rho.into()]);
        }
    }
    t
}

/// Snapshot CSV rows `t, x_mid, u, v`.
pub fn snapshots_table(name: &str, traj: &Trajectory) -> Table {
    let mut t = Table::new(name, &["t", "x_mid", "u", "v"]);
    for s in &traj.snapshots {
        for i in 0..traj.grid.n {
            t.push(vec![s.t.into(), traj.grid.x_mid(i).into(), s.u[i].into(), s.v[i].into()]);
        }
    }
    t
}

/// Diagnostics CSV rows `t, mass_u, mass_v, picard_iters`.
pub fn diagnostics_table(name: &str, traj: &Trajectory) -> Table {
    let mut t = Table::new(name, &["t", "mass_u", "mass_v", "picard_iters"]);
    for d in &traj.diagnostics {
        t.push(vec![d.t.into(), d.mass_u.into(), d.mass_v.into(), d.picard_iters.into()]);
    }
    t
}

fn within(diff: f64, se: f64, scale: f64) -> bool {
    diff <= SE_FACTOR * se + EXACT_TOL * scale.abs().max(1.0)
}

/// Acceptance checks of a ρ-sweep against the reference coefficients.
pub fn rho_sweep_checks(spec: &FieldSpec, rows: &[EffectiveEstimate]) -> Vec<Check> {
    let reference = reference_effective(spec);
    let mut checks = Vec::new();
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return checks;
    };
    let se_d = last.se_d.hypot(reference.se_d_star);
    let se_chi = last.se_chi.hypot(reference.se_chi_star);
    let bias_d = (last.mean_d - reference.d_star).abs();
    let bias_chi = (last.mean_chi - reference.chi_star).abs();
    checks.push(Check::new(
        "final-row D bias within 5 se",
        within(bias_d, se_d, reference.d_star),
        format!("|{} - {}| = {:.3e}, 5 se = {:.3e}", last.mean_d, reference.d_star, bias_d, SE_FACTOR * se_d),
    ));
    checks.push(Check::new(
        "final-row chi bias within 5 se",
        within(bias_chi, se_chi, reference.chi_star),
        format!(
            "|{} - {}| = {:.3e}, 5 se = {:.3e}",
            last.mean_chi,
            reference.chi_star,
            bias_chi,
            SE_FACTOR * se_chi
        ),
    ));
    if rows.len() >= 2 {
        let bias_first = (first.mean_d - reference.d_star).abs();
        checks.push(Check::new(
            "D bias does not grow from first to last rho",
            bias_d <= bias_first + EXACT_TOL * reference.d_star.abs().max(1.0),
            format!("{bias_first:.3e} -> {bias_d:.3e}"),
        ));
        let shrink_ok = if first.sd_d <= EXACT_TOL {
            last.sd_d <= EXACT_TOL
        } else {
            last.sd_d * SPREAD_SHRINK <= first.sd_d
        };
        checks.push(Check::new(
            "cross-seed sd of D shrinks >= 4x",
            shrink_ok,
            format!("rho {} -> {}: sd {:.3e} -> {:.3e}", first.rho, last.rho, first.sd_d, last.sd_d),
        ));
    }
    let in_bounds = rows.iter().flat_map(|r| &r.samples).all(|s| {
        let tol = 1e-12;
        s.d_rho >= spec.d_low * (1.0 - tol)
            && s.d_rho <= spec.d_high * (1.0 + tol)
            && s.chi_rho >= spec.chi_low - tol * spec.chi_high.max(1.0)
            && s.chi_rho <= spec.chi_high + tol * spec.chi_high.max(1.0)
    });
    checks.push(Check::new(
        "per-realization coefficients within field bounds",
        in_bounds,
        format!("[{}, {}] x [{}, {}]", spec.d_low, spec.d_high, spec.chi_low, spec.chi_high),
    ));
    if let Some(c) = spec.constant_chi() {
        let worst = rows
            .iter()
            .flat_map(|r| &r.samples)
            .map(|s| (s.chi_rho - c).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(
            "constant-chi identity",
            worst <= EXACT_TOL * c.abs().max(1.0),
            format!("max |chi_rho - {c}| = {worst:.3e}"),
        ));
    }
    checks
}

/// `experiment rho-sweep`.
pub fn rho_sweep_cmd(config: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new("rho_sweep", config.echo());
    let start = Instant::now();
    let c = &config.cell;
    let rows = rho_sweep(&config.field, &c.rho_list, c.n_cells_per_unit, c.n_realizations, c.base_seed)?;
    report.timings.push(("rho_sweep".into(), start.elapsed()));
    report.checks = rho_sweep_checks(&config.field, &rows);
    report.tables.push(estimates_table("rho_sweep", &config.field, &rows));
    report.tables.push(samples_table("rho_sweep_samples", &rows));
    Ok(report)
}

fn trajectory_checks(label: &str, traj: &Trajectory) -> Vec<Check> {
    vec![
        Check::new(
            format!("{label}: u-mass conserved"),
            traj.max_mass_drift() <= MASS_TOL,
            format!(
                "max relative drift {:.3e} over {} steps",
                traj.max_mass_drift(),
                traj.diagnostics.len() - 1
            ),
        ),
        Check::new(
            format!("{label}: u nonnegative"),
            traj.min_u() >= POSITIVITY_TOL,
            format!("min u = {:.3e}", traj.min_u()),
        ),
    ]
}

/// Which micro-scale run to perform in `pde run`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdeMode {
    Micro { epsilon: f64, seed: u64 },
    Macro { d_star: f64, chi_star: f64 },
}

/// `pde run`: one trajectory with its snapshot and diagnostics tables.
pub fn pde_run(config: &ExperimentConfig, mode: PdeMode) -> Result<(Trajectory, Report)> {
    let grid = config.grid()?;
    let p = &config.pde;
    let mut solver = config.solver_config();
    let initial = State::from_presets(&grid, &p.u0, &p.v0);
    let start = Instant::now();
    let (label, traj) = match mode {
        PdeMode::Micro { epsilon, seed } => {
            check_resolution(&grid, epsilon, config.field.cell_length())?;
            solver.epsilon = Some(epsilon);
            let r = make_realization(&config.field, seed)?;
            let coeffs = build_micro_coefficients(&r, epsilon, grid, &p.d_v, p.gamma, p.alpha)?;
            ("micro", run(&initial, &coeffs, &solver).map_err(|e| e.at_epsilon(epsilon))?)
        }
        PdeMode::Macro { d_star, chi_star } => (
            "macro",
            run_macro(d_star, chi_star, &p.d_v, p.gamma, p.alpha, grid, &initial, &solver)?,
        ),
    };
    let mut report = Report::new("pde_run", config.echo());
    report.timings.push((label.into(), start.elapsed()));
    report.checks = trajectory_checks(label, &traj);
    report.tables.push(snapshots_table("snapshots", &traj));
    report.tables.push(diagnostics_table("diagnostics", &traj));
    Ok((traj, report))
}

/// `experiment epsilon-sweep`.
///
/// 1. estimates `(D*, χ*)` at the largest configured ρ,
/// 2. runs the homogenized problem once,
/// 3. runs the microscopic problem for every ε (one realization shared
///    across ε by default),
/// 4. tabulates the space-time L² distance to the homogenized solution,
/// 5. checks that it decreases.
pub fn epsilon_sweep(config: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new("epsilon_sweep", config.echo());
    let grid: Grid = config.grid()?;
    let p = &config.pde;
    let c = &config.cell;
    let spec = &config.field;
    for &eps in &p.epsilon_list {
        check_resolution(&grid, eps, spec.cell_length())?;
    }

    let start = Instant::now();
    let rho = *c.rho_list.last().ok_or_else(|| Error::Validation("cell.rho_list is empty".into()))?;
    let est = estimate(
        spec,
        rho,
        crate::effective::cells_for_rho(rho, c.n_cells_per_unit),
        c.n_realizations,
        c.base_seed,
        false,
    )?;
    report.timings.push(("estimate".into(), start.elapsed()));
    let mut eff = Table::new(
        "epsilon_sweep_effective",
        &["rho", "n_realizations", "D_star_est", "se_D", "chi_star_est", "se_chi", "D_star_ref", "chi_star_ref"],
    );
    eff.push(estimate_row(&est, spec));
    let (d_star, chi_star) = (est.mean_d, est.mean_chi);

    let solver = config.solver_config();
    let initial = State::from_presets(&grid, &p.u0, &p.v0);
    let start = Instant::now();
    let macro_traj = run_macro(d_star, chi_star, &p.d_v, p.gamma, p.alpha, grid, &initial, &solver)?;
    report.timings.push(("macro".into(), start.elapsed()));

    let start = Instant::now();
    let micro: Vec<(u64, Trajectory)> = p
        .epsilon_list
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let seed = if p.shared_seed { p.seed } else { p.seed.wrapping_add(i as u64) };
            let run_one = || -> Result<Trajectory> {
                let r = make_realization(spec, seed)?;
                let coeffs = build_micro_coefficients(&r, eps, grid, &p.d_v, p.gamma, p.alpha)?;
                let cfg = SolverConfig {
                    epsilon: Some(eps),
                    ..solver
                };
                run(&initial, &coeffs, &cfg)
            };
            run_one().map(|t| (seed, t)).map_err(|e| e.at_epsilon(eps))
        })
        .collect::<Result<_>>()?;
    report.timings.push(("micro".into(), start.elapsed()));

    let mut table = Table::new(
        "epsilon_sweep",
        &["epsilon", "seed", "n", "h", "err_u", "err_v", "max_mass_drift", "min_u"],
    );
    let mut err_u = Vec::with_capacity(micro.len());
    report.checks.extend(trajectory_checks("macro", &macro_traj));
    for (&eps, (seed, traj)) in p.epsilon_list.iter().zip(&micro) {
        let (eu, ev) = space_time_l2_error(traj, &macro_traj)?;
        err_u.push(eu);
        table.push(vec![
            eps.into(),
            (*seed).into(),
            grid.n.into(),
            grid.h().into(),
            eu.into(),
            ev.into(),
            traj.max_mass_drift().into(),
            traj.min_u().into(),
        ]);
        report.checks.extend(trajectory_checks(&format!("micro eps={eps}"), traj));
    }

    let (first, last) = (err_u[0], err_u[err_u.len() - 1]);
    if spec.is_constant() {
        let worst = table
            .column_f64("err_u")
            .into_iter()
            .chain(table.column_f64("err_v"))
            .flatten()
            .fold(0.0, f64::max);
        report.checks.push(Check::new(
            "micro equals macro for a non-oscillating field",
            worst < EXACT_TOL,
            format!("max error {worst:.3e}"),
        ));
    } else {
        let strictly = err_u.windows(2).all(|w| w[1] < w[0]);
        report.checks.push(Check::new(
            "err_u strictly decreasing in epsilon",
            strictly,
            format!("{:?}", err_u.iter().map(|e| format!("{e:.4e}")).collect::<Vec<_>>()),
        ));
        report.checks.push(Check::new(
            "err_u(last) < err_u(first)",
            last < first,
            format!("{last:.4e} vs {first:.4e}"),
        ));
        if p.required_error_ratio > 1.0 {
            report.checks.push(Check::new(
                format!("err_u reduced by factor > {}", p.required_error_ratio),
                last * p.required_error_ratio < first,
                format!("ratio {:.3}", first / last),
            ));
        }
    }
    report.tables.push(table);
    report.tables.push(eff);
    Ok(report)
}
