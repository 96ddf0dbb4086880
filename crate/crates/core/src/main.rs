//! Command-line driver: configuration loading, subcommand dispatch and
//! deterministic CSV/JSON emission.
//!
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 numerical
//! failure (divergence, singular pivot), 3 hypothesis failure. Hypothesis
//! failure gets its own code because a problem violating the structural
//! assumptions is a meaningful scientific outcome, not a bug.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use backpar::assumptions::verify_assumptions;
use backpar::carleman::{verify_inequality, RatioReport};
use backpar::config::{load_config, AlphaChoice, RunConfig};
use backpar::experiments::{
    holder_rate_experiment, log_rate_experiment, semilinear_stability_experiment, write_report_csv,
    RateReport, SemilinearParams, SweepParams,
};
use backpar::model::fmt_g17;
use backpar::recon::{choose_alpha, reconstruct_tikhonov};
use backpar::{
    forward_solve, sample, semilinear_forward_solve, Error, GridFunction, Result, TimeSeriesField,
};

#[derive(Parser)]
#[command(
    name = "backpar",
    version,
    about = "Backward-in-time reconstruction toolkit for 1-D degenerate parabolic equations"
)]
struct Cli {
    /// Path to the JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Suppress progress messages on standard error
    #[arg(long)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the structural hypotheses and print the JSON report
    Check,
    /// March the forward problem from u0 over [0, T]; writes solution.csv
    Solve,
    /// Reconstruct u(., t0) from terminal data; writes estimate.csv and
    /// reconstruction.json
    Reconstruct {
        /// Terminal data as a `x,value` CSV on the configured grid
        #[arg(long)]
        data: PathBuf,
    },
    /// Sweep the weighted-inequality ratio over the configured s grid;
    /// writes carleman.csv
    Carleman,
    /// Holder-rate noise sweep at the configured interior t0
    RateThm1,
    /// Logarithmic-rate noise sweep at t0 = 0
    RateThm2,
    /// Semilinear difference sweep at the configured interior t0
    RateThm3,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.config)?;
    if let Some(dir) = cli.output_dir {
        config.output_dir = dir;
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let progress = |msg: &str| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };

    match cli.command {
        Command::Check => cmd_check(&config),
        Command::Solve => cmd_solve(&config, &progress),
        Command::Reconstruct { data } => cmd_reconstruct(&config, &data, &progress),
        Command::Carleman => cmd_carleman(&config, &progress),
        Command::RateThm1 => cmd_rate_thm1(&config, &progress),
        Command::RateThm2 => cmd_rate_thm2(&config, &progress),
        Command::RateThm3 => cmd_rate_thm3(&config, &progress),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_check(config: &RunConfig) -> Result<()> {
    let report = verify_assumptions(&config.problem, &config.sampling)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    write_json(&config.output_dir.join("check.json"), &report)?;
    if !report.required_ok(config.problem.bc) {
        return Err(Error::Hypothesis(
            "one or more structural hypotheses fail for this problem; see the report".into(),
        ));
    }
    Ok(())
}

fn solve_series(config: &RunConfig) -> Result<TimeSeriesField> {
    let u0 = sample(&config.u0, &config.problem.grid, 0.0)?;
    let result = if config.problem.is_semilinear() {
        semilinear_forward_solve(&config.problem, &u0, 0.0, config.problem.horizon, config.dt)?
    } else {
        forward_solve(
            &config.problem,
            &u0,
            0.0,
            config.problem.horizon,
            config.dt,
            config.scheme,
        )?
    };
    Ok(result.series)
}

fn cmd_solve(config: &RunConfig, progress: &dyn Fn(&str)) -> Result<()> {
    progress(&format!(
        "solving forward on {} cells, {} steps",
        config.problem.grid.n_cells(),
        (config.problem.horizon / config.dt).round() as usize
    ));
    let series = solve_series(config)?;
    let path = config.output_dir.join("solution.csv");
    series.write_csv(BufWriter::new(File::create(&path)?))?;
    progress(&format!("wrote {}", path.display()));
    Ok(())
}

fn cmd_reconstruct(config: &RunConfig, data_path: &Path, progress: &dyn Fn(&str)) -> Result<()> {
    let reader = BufReader::new(File::open(data_path).map_err(|e| {
        Error::Config(format!(
            "cannot open data file {}: {e}",
            data_path.display()
        ))
    })?);
    let data = GridFunction::read_csv(config.problem.grid.clone(), reader)?;
    let alpha = match config.alpha_reg {
        AlphaChoice::Fixed(v) => v,
        // without a known noise level the a priori rule degenerates to its
        // floor; pass an explicit alpha_reg for noisy data
        AlphaChoice::Auto => choose_alpha(0.0, data.l2_norm()),
    };
    progress(&format!(
        "reconstructing at t0 = {} with alpha = {alpha:e}",
        config.t0
    ));
    let result = reconstruct_tikhonov(
        &config.problem,
        &data,
        config.t0,
        config.dt,
        alpha,
        config.cg_tol,
        config.max_iter,
        config.scheme,
    )?;
    let est_path = config.output_dir.join("estimate.csv");
    result
        .estimate
        .write_csv(BufWriter::new(File::create(&est_path)?))?;
    write_json(&config.output_dir.join("reconstruction.json"), &result)?;
    progress(&format!(
        "wrote {} ({} CG iterations, residual {:e})",
        est_path.display(),
        result.cg_iterations,
        result.final_residual
    ));
    Ok(())
}

fn forcing_series(config: &RunConfig, like: &TimeSeriesField) -> Result<TimeSeriesField> {
    let frames: Result<Vec<GridFunction>> = (0..like.n_frames())
        .map(|k| sample(&config.problem.forcing, like.grid(), like.time(k)))
        .collect();
    TimeSeriesField::new(
        like.grid().clone(),
        like.t_start(),
        like.t_end(),
        like.dt(),
        frames?,
    )
}

fn write_carleman_csv(report: &RatioReport, mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "s,lhs_time,lhs_zero,rhs_source,rhs_terminal,rhs_initial,ratio"
    )?;
    for row in &report.rows {
        let sides = &row.sides;
        // the Robin lateral-boundary integral rides in the source column to
        // keep the fixed schema
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_g17(row.s),
            fmt_g17(sides.lhs_time_term),
            fmt_g17(sides.lhs_zero_order),
            fmt_g17(sides.rhs_source + sides.rhs_boundary),
            fmt_g17(sides.rhs_terminal),
            fmt_g17(sides.rhs_initial),
            fmt_g17(sides.ratio)
        )?;
    }
    Ok(())
}

fn cmd_carleman(config: &RunConfig, progress: &dyn Fn(&str)) -> Result<()> {
    progress("solving forward for the inequality sweep");
    let series = solve_series(config)?;
    let f_series = forcing_series(config, &series)?;
    let report = verify_inequality(
        &series,
        &f_series,
        config.lambda,
        &config.s_grid,
        config.problem.bc,
    )?;
    let path = config.output_dir.join("carleman.csv");
    write_carleman_csv(&report, BufWriter::new(File::create(&path)?))?;
    progress(&format!(
        "wrote {} (max ratio over upper half = {:e}, non-increasing past argmax: {})",
        path.display(),
        report.max_ratio_upper_half,
        report.monotone_beyond_argmax
    ));
    Ok(())
}

fn sweep_params(config: &RunConfig) -> SweepParams {
    SweepParams {
        deltas: config.deltas.clone(),
        seeds: config.seeds.clone(),
        dt: config.dt,
        n_cells: config.problem.grid.n_cells(),
        lambda: config.lambda,
        cg_tol: config.cg_tol,
        max_iter: config.max_iter,
        plan: config.sampling,
    }
}

fn emit_rate_report(
    config: &RunConfig,
    report: &RateReport,
    law_value: f64,
    s_name: &str,
    law_name: &str,
    progress: &dyn Fn(&str),
) -> Result<()> {
    let csv_path = config.output_dir.join("report.csv");
    write_report_csv(
        report,
        law_value,
        s_name,
        law_name,
        BufWriter::new(File::create(&csv_path)?),
    )?;
    write_json(&config.output_dir.join("report.json"), report)?;
    progress(&format!(
        "wrote {} ({} points, fitted slope {:.4}, pass: {})",
        csv_path.display(),
        report.points.len(),
        report.fitted_slope,
        report.pass
    ));
    Ok(())
}

fn cmd_rate_thm1(config: &RunConfig, progress: &dyn Fn(&str)) -> Result<()> {
    progress(&format!(
        "Holder-rate sweep over {} noise levels at t0 = {}",
        config.deltas.len(),
        config.t0
    ));
    let report = holder_rate_experiment(
        &config.problem,
        &config.u0,
        config.t0,
        &sweep_params(config),
    )?;
    let theta = report.theta_theory.expect("Holder report carries theta");
    emit_rate_report(config, &report, theta, "s_star", "theta_theory", progress)
}

fn cmd_rate_thm2(config: &RunConfig, progress: &dyn Fn(&str)) -> Result<()> {
    progress(&format!(
        "logarithmic-rate sweep over {} noise levels at t0 = 0",
        config.deltas.len()
    ));
    let report = log_rate_experiment(
        &config.problem,
        &config.u0,
        config.rate_alpha,
        &sweep_params(config),
    )?;
    let alpha = report.alpha.expect("logarithmic report carries alpha");
    emit_rate_report(config, &report, alpha, "s_log", "alpha", progress)
}

fn cmd_rate_thm3(config: &RunConfig, progress: &dyn Fn(&str)) -> Result<()> {
    if !config.problem.is_semilinear() {
        return Err(Error::Config(
            "rate-thm3 requires problem.f (the semilinear term)".into(),
        ));
    }
    progress(&format!(
        "semilinear difference sweep over {} perturbation sizes at t0 = {}",
        config.epsilons.len(),
        config.t0
    ));
    let params = SemilinearParams {
        t0: config.t0,
        epsilons: config.epsilons.clone(),
        dt: config.dt,
        n_cells: config.problem.grid.n_cells(),
        lambda: config.lambda,
        m_bound: config.m_bound,
        bump: config.bump.clone(),
    };
    let report = semilinear_stability_experiment(&config.problem, &config.u0, &params)?;
    let theta = report
        .theta_theory
        .expect("semilinear report carries theta");
    emit_rate_report(config, &report, theta, "s_star", "theta_theory", progress)
}
