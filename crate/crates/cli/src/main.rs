use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ks_homog::effective::{cells_for_rho, estimate, reference_effective};
use ks_homog::harness::{
    cell_solve_table, emit_all, epsilon_sweep, estimates_table, field_sample_table, parse_config,
    parse_config_str, pde_run, rho_sweep_cmd, samples_table, Check, ExperimentConfig, PdeMode,
    Report, EXACT_TOL,
};

const DEFAULT_CONFIG: &str = include_str!("../../../configs/benchmark.toml");

/// Flux residual above which `cell solve` reports a failure.
const FLUX_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "kshomog", version, about = "Stochastic homogenization of 1D Keller-Segel")]
struct Cli {
    /// Experiment config (TOML). Defaults to the built-in checkerboard benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `cell.base_seed` and `pde.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coefficient field realizations.
    #[command(subcommand)]
    Field(FieldCmd),
    /// Periodic cell problems.
    #[command(subcommand)]
    Cell(CellCmd),
    /// Monte-Carlo effective coefficients.
    #[command(subcommand)]
    Effective(EffectiveCmd),
    /// Time-dependent Keller-Segel runs.
    #[command(subcommand)]
    Pde(PdeCmd),
    /// Full experiments with acceptance checks.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Subcommand)]
enum FieldCmd {
    /// Sample one realization at the midpoints of a uniform grid.
    Sample {
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 16.0)]
        b: f64,
        #[arg(long, default_value_t = 256)]
        n: usize,
    },
}

#[derive(Args)]
struct RhoArgs {
    /// Period of the RVE.
    #[arg(long)]
    rho: f64,
    /// FV cells on `[0, rho]` (default: `rho * cell.n_cells_per_unit`).
    #[arg(long)]
    n_cells: Option<usize>,
}

#[derive(Subcommand)]
enum CellCmd {
    /// Solve the cell problems for consecutive seeds and compare with the closed forms.
    Solve {
        #[command(flatten)]
        rho: RhoArgs,
        #[arg(long, default_value_t = 1)]
        realizations: usize,
        /// Sample the field at cell midpoints even if cells straddle field jumps.
        #[arg(long)]
        allow_misaligned: bool,
    },
}

#[derive(Subcommand)]
enum EffectiveCmd {
    /// Mean and standard error of `(D^ρ, χ^ρ)` at one period.
    Estimate {
        #[command(flatten)]
        rho: RhoArgs,
        /// Defaults to `cell.n_realizations`.
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Estimates over `cell.rho_list`.
    RhoSweep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Micro,
    Macro,
}

#[derive(Subcommand)]
enum PdeCmd {
    /// One run on the configured domain.
    Run {
        #[arg(long, value_enum, default_value = "micro")]
        mode: Mode,
        /// Scale of the microstructure (micro mode). Defaults to the last `pde.epsilon_list` entry.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Macro-mode coefficients; default to the ensemble reference values.
        #[arg(long)]
        d_star: Option<f64>,
        #[arg(long)]
        chi_star: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Micro runs at every `pde.epsilon_list` entry against the homogenized run.
    EpsilonSweep,
    /// Effective-coefficient convergence over `cell.rho_list`.
    RhoSweep,
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => parse_config_str(DEFAULT_CONFIG)?,
    };
    if let Some(seed) = cli.seed {
        config.cell.base_seed = seed;
        config.pde.seed = seed;
    }
    Ok(config)
}

fn rho_cells(config: &ExperimentConfig, args: &RhoArgs) -> usize {
    args.n_cells
        .unwrap_or_else(|| cells_for_rho(args.rho, config.cell.n_cells_per_unit))
}

fn field_sample(config: &ExperimentConfig, a: f64, b: f64, n: usize) -> anyhow::Result<Report> {
    let mut report = Report::new("field_sample", config.echo());
    let seed = config.pde.seed;
    let table = field_sample_table(&config.field, seed, a, b, n)?;
    let spec = &config.field;
    let in_bounds = ["D", "chi"].iter().zip([(spec.d_low, spec.d_high), (spec.chi_low, spec.chi_high)]).all(
        |(col, (lo, hi))| {
            table
                .column_f64(col)
                .is_some_and(|v| v.iter().all(|x| (lo..=hi).contains(x)))
        },
    );
    report.checks.push(Check::new(
        "samples within field bounds",
        in_bounds,
        format!("seed {seed}, {n} points on [{a}, {b}]"),
    ));
    report.tables.push(table);
    Ok(report)
}

fn cell_solve(
    config: &ExperimentConfig,
    args: &RhoArgs,
    realizations: usize,
    allow_misaligned: bool,
) -> anyhow::Result<Report> {
    if realizations == 0 {
        bail!("--realizations must be >= 1");
    }
    let n_cells = rho_cells(config, args);
    let seeds: Vec<u64> = (0..realizations as u64)
        .map(|k| config.cell.base_seed.wrapping_add(k))
        .collect();
    let table = cell_solve_table(&config.field, &seeds, args.rho, n_cells, allow_misaligned)?;
    let mut report = Report::new("cell_solve", config.echo());
    let col = |name: &str| table.column_f64(name).unwrap_or_default();
    let rel = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
            .fold(0.0, f64::max)
    };
    let err_d = rel(&col("D_rho_fv"), &col("D_rho_analytic"));
    let err_chi = rel(&col("chi_rho_fv"), &col("chi_rho_analytic"));
    let residual = col("flux_residual").into_iter().fold(0.0, f64::max);
    report.checks.push(Check::new(
        "FV coefficients match closed forms",
        err_d <= EXACT_TOL && err_chi <= EXACT_TOL,
        format!("max rel error D {err_d:.3e}, chi {err_chi:.3e}"),
    ));
    report.checks.push(Check::new(
        "flux residual",
        residual <= FLUX_TOL,
        format!("max {residual:.3e}"),
    ));
    report.tables.push(table);
    Ok(report)
}

fn effective_estimate(
    config: &ExperimentConfig,
    args: &RhoArgs,
    realizations: Option<usize>,
) -> anyhow::Result<Report> {
    let n = realizations.unwrap_or(config.cell.n_realizations);
    let est = estimate(
        &config.field,
        args.rho,
        rho_cells(config, args),
        n,
        config.cell.base_seed,
        false,
    )?;
    let reference = reference_effective(&config.field);
    let mut report = Report::new("effective_estimate", config.echo());
    let spec = &config.field;
    report.checks.push(Check::new(
        "means within field bounds",
        (spec.d_low..=spec.d_high).contains(&est.mean_d)
            && (spec.chi_low - EXACT_TOL..=spec.chi_high + EXACT_TOL).contains(&est.mean_chi),
        format!(
            "D {:.6} (ref {:.6}), chi {:.6} (ref {:.6})",
            est.mean_d, reference.d_star, est.mean_chi, reference.chi_star
        ),
    ));
    let rows = [est];
    report.tables.push(estimates_table("effective_estimate", spec, &rows));
    report.tables.push(samples_table("effective_estimate_samples", &rows));
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn pde(
    mut config: ExperimentConfig,
    mode: Mode,
    epsilon: Option<f64>,
    d_star: Option<f64>,
    chi_star: Option<f64>,
    n: Option<usize>,
    dt: Option<f64>,
    tau: Option<f64>,
    stride: Option<usize>,
) -> anyhow::Result<Report> {
    if let Some(n) = n {
        config.pde.n = n;
    }
    if let Some(dt) = dt {
        config.pde.dt = dt;
    }
    if let Some(tau) = tau {
        config.pde.tau = tau;
    }
    if let Some(stride) = stride {
        config.output.snapshot_stride = stride;
    }
    let mode = match mode {
        Mode::Micro => {
            let epsilon = match epsilon.or_else(|| config.pde.epsilon_list.last().copied()) {
                Some(e) => e,
                None => bail!("no epsilon given and pde.epsilon_list is empty"),
            };
            PdeMode::Micro {
                epsilon,
                seed: config.pde.seed,
            }
        }
        Mode::Macro => {
            let reference = reference_effective(&config.field);
            PdeMode::Macro {
                d_star: d_star.unwrap_or(reference.d_star),
                chi_star: chi_star.unwrap_or(reference.chi_star),
            }
        }
    };
    Ok(pde_run(&config, mode)?.1)
}

fn dispatch(cli: &Cli, config: ExperimentConfig) -> anyhow::Result<Report> {
    match &cli.command {
        Command::Field(FieldCmd::Sample { a, b, n }) => field_sample(&config, *a, *b, *n),
        Command::Cell(CellCmd::Solve {
            rho,
            realizations,
            allow_misaligned,
        }) => cell_solve(&config, rho, *realizations, *allow_misaligned),
        Command::Effective(EffectiveCmd::Estimate { rho, realizations }) => {
            effective_estimate(&config, rho, *realizations)
        }
        Command::Effective(EffectiveCmd::RhoSweep) | Command::Experiment(ExperimentCmd::RhoSweep) => {
            Ok(rho_sweep_cmd(&config)?)
        }
        Command::Pde(PdeCmd::Run {
            mode,
            epsilon,
            d_star,
            chi_star,
            n,
            dt,
            tau,
            stride,
        }) => pde(config, *mode, *epsilon, *d_star, *chi_star, *n, *dt, *tau, *stride),
        Command::Experiment(ExperimentCmd::EpsilonSweep) => Ok(epsilon_sweep(&config)?),
    }
}

fn main_inner(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let config = load_config(cli)?;
    let out: PathBuf = cli
        .out
        .clone()
        .unwrap_or_else(|| Path::new(&config.output.dir).to_path_buf());
    let report = dispatch(cli, config)?;
    emit_all(&report, &out)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let passed = report.passed();
    println!(
        "{}: {} ({})",
        report.id,
        if passed { "PASS" } else { "FAIL" },
        out.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
