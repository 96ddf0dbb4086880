//! Drivers that confront reconstruction error with the predicted stability
//! rates: the Holder rate in the terminal-data norm for 0 < t0 < T, the
//! logarithmic rate at t0 = 0, and the Holder rate for differences of
//! semilinear solutions.
//!
//! The theory gives one-sided bounds, so every pass criterion asserts that
//! the fitted slope is at least the theoretical exponent minus a margin of
//! 0.02 (absorbing fit noise at five-point sweeps); reconstructions
//! routinely beat the worst-case exponent. Constants are never tested: the
//! estimates do not make them computable.

use rayon::prelude::*;
use serde::Serialize;

use crate::assumptions::{verify_assumptions, SamplingPlan};
use crate::carleman::{log_rate_s, optimal_s, theta_exponent};
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::model::{sample, GridFunction, ProblemSpec, TimeSeriesField};
use crate::recon::{add_noise_from_stream, choose_alpha, reconstruct_tikhonov};
use crate::solver::{forward_solve, semilinear_forward_solve, Scheme};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Margin subtracted from the theoretical exponent in pass checks.
pub const SLOPE_MARGIN: f64 = 0.02;

/// One sweep point: noise level (or perturbation size), the measured data
/// quantity `D`, the reconstruction (or difference) error, and the
/// theory's parameter choice for that point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RatePoint {
    pub delta: f64,
    #[serde(rename = "D")]
    pub d_value: f64,
    pub error: f64,
    pub s_value: f64,
}

/// Result of a rate experiment; written as `report.json` and `report.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub fitted_slope: f64,
    pub fitted_intercept: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_theory: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub pass: bool,
    pub runtime_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

/// Ordinary least squares on `(ln x, ln y)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Config(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Config(
            "power-law fit needs strictly positive coordinates".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    Ok(fit_linear(&logs))
}

fn fit_linear(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn check_sweep(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} must be non-empty")));
    }
    if values.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Config(format!("{name} must be strictly positive")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// At most one adjacent inversion of the error against the sweep variable
/// is tolerated (a single seed-induced swap); more means the sweep is
/// noise dominated and the fit meaningless.
fn check_monotone_errors(points: &[RatePoint]) -> Result<()> {
    let inversions = points
        .windows(2)
        .filter(|w| w[1].error < w[0].error)
        .count();
    if inversions > 1 {
        return Err(Error::Numerical(format!(
            "{inversions} adjacent error inversions across the sweep; \
             the run is noise dominated and no rate can be read off"
        )));
    }
    Ok(())
}

fn gate_assumptions(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<()> {
    let report = verify_assumptions(spec, plan)?;
    if !report.required_ok(spec.bc) {
        let details: Vec<String> = report
            .details
            .iter()
            .map(|d| format!("{}: {}", d.location, d.message))
            .collect();
        return Err(Error::Hypothesis(format!(
            "the structural hypotheses fail for this problem; rates are not predicted. {}",
            details.join("; ")
        )));
    }
    Ok(())
}

/// Shared knobs of the reconstruction-based experiments.
#[derive(Debug, Clone)]
pub struct SweepParams {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub dt: f64,
    pub n_cells: usize,
    pub lambda: f64,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub plan: SamplingPlan,
}

impl SweepParams {
    fn seed_for(&self, index: usize) -> u64 {
        self.seeds[index % self.seeds.len()]
    }

    fn validate(&self) -> Result<()> {
        check_sweep("deltas", &self.deltas)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        Ok(())
    }

    /// One regularization weight for the whole sweep: the a priori rule
    /// evaluated at the central (geometric-mean) noise level. Re-tuning
    /// alpha per point folds the regularization path into the measured
    /// curve and makes the error non-monotone for rough noise draws.
    fn sweep_alpha(&self, data_scale: f64) -> f64 {
        let mean_log = self.deltas.iter().map(|d| d.ln()).sum::<f64>() / self.deltas.len() as f64;
        choose_alpha(mean_log.exp(), data_scale)
    }
}

/// Noise sweep against the Holder rate at an interior recovery time
/// `0 < t0 < T`: reconstruct from noisy terminal data, fit the log-log
/// slope of the error against the perturbation size, and compare with the
/// exponent `theta(t0, T, lambda)`.
pub fn holder_rate_experiment(
    spec: &ProblemSpec,
    u0_expr: &Expr,
    t0: f64,
    params: &SweepParams,
) -> Result<RateReport> {
    let start = std::time::Instant::now();
    params.validate()?;
    if spec.is_semilinear() {
        return Err(Error::Config(
            "the Holder-rate sweep addresses the linear problem; use the semilinear driver".into(),
        ));
    }
    let spec = spec.with_resolution(params.n_cells)?;
    if !(t0 > 0.0 && t0 < spec.horizon) {
        return Err(Error::Config(format!(
            "the Holder rate needs 0 < t0 < T, got t0 = {t0}"
        )));
    }
    gate_assumptions(&spec, &params.plan)?;
    let theta = theta_exponent(t0, spec.horizon, params.lambda)?;

    let u0 = sample(u0_expr, &spec.grid, 0.0)?;
    let truth = forward_solve(
        &spec,
        &u0,
        0.0,
        spec.horizon,
        params.dt,
        Scheme::ImplicitEuler,
    )?;
    let clean = truth.series.last();
    let target = truth.series.frame(truth.series.frame_index_at(t0)?);
    let data_scale = clean.l2_norm();
    let m_emp = truth.series.first().h1_norm();

    let alpha_reg = params.sweep_alpha(data_scale);
    let points: Vec<RatePoint> = params
        .deltas
        .par_iter()
        .enumerate()
        .map(|(i, &delta)| -> Result<RatePoint> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed_for(i));
            let noisy = add_noise_from_stream(clean, delta, &mut rng);
            let res = reconstruct_tikhonov(
                &spec,
                &noisy,
                t0,
                params.dt,
                alpha_reg,
                params.cg_tol,
                params.max_iter,
                Scheme::ImplicitEuler,
            )?;
            let error = res.estimate.sub(target)?.l2_norm();
            let d0 = noisy.h1_norm();
            Ok(RatePoint {
                delta,
                d_value: d0,
                error,
                s_value: optimal_s(m_emp, d0, t0, spec.horizon, params.lambda)?,
            })
        })
        .collect::<Result<_>>()?;

    check_monotone_errors(&points)?;
    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.delta * data_scale, p.error))
        .collect();
    let (slope, intercept) = fit_power_law(&fit_points)?;

    Ok(RateReport {
        points,
        fitted_slope: slope,
        fitted_intercept: intercept,
        theta_theory: Some(theta),
        alpha: None,
        pass: slope >= theta - SLOPE_MARGIN,
        runtime_seconds: start.elapsed().as_secs_f64(),
        notes: None,
    })
}

/// Measured terminal-data quantity for the logarithmic rate: the H1 norms
/// of the data and of its first two one-sided time derivatives, taken from
/// the last three stored frames after each has been noised from the same
/// seed stream.
fn terminal_data_quantity(
    series: &TimeSeriesField,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(GridFunction, f64)> {
    let k = series.n_frames() - 1;
    if k < 2 {
        return Err(Error::Config(
            "need at least 3 stored frames to measure the terminal derivatives".into(),
        ));
    }
    let dt = series.dt();
    let f0 = add_noise_from_stream(series.frame(k), delta, rng);
    let f1 = add_noise_from_stream(series.frame(k - 1), delta, rng);
    let f2 = add_noise_from_stream(series.frame(k - 2), delta, rng);
    let n = f0.values().len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        let (a, b, c) = (f0.values()[i], f1.values()[i], f2.values()[i]);
        d1[i] = (3.0 * a - 4.0 * b + c) / (2.0 * dt);
        d2[i] = (a - 2.0 * b + c) / (dt * dt);
    }
    let d1 = GridFunction::new(f0.grid().clone(), d1)?;
    let d2 = GridFunction::new(f0.grid().clone(), d2)?;
    let total = f0.h1_norm() + d1.h1_norm() + d2.h1_norm();
    Ok((f0, total))
}

/// Noise sweep against the logarithmic rate at `t0 = 0`: the data quantity
/// `D` sums the H1 norms of the terminal state and its first two time
/// derivatives, and the error must stay under the calibrated envelope
/// `1.5 C (log 1/D)^(-alpha)` for every point below the calibration one.
pub fn log_rate_experiment(
    spec: &ProblemSpec,
    u0_expr: &Expr,
    alpha: f64,
    params: &SweepParams,
) -> Result<RateReport> {
    let start = std::time::Instant::now();
    params.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in the open interval (0, 1), got {alpha}"
        )));
    }
    if spec.is_semilinear() {
        return Err(Error::Config(
            "the logarithmic-rate sweep addresses the linear problem".into(),
        ));
    }
    let spec = spec.with_resolution(params.n_cells)?;
    gate_assumptions(&spec, &params.plan)?;

    let u0 = sample(u0_expr, &spec.grid, 0.0)?;
    let truth = forward_solve(
        &spec,
        &u0,
        0.0,
        spec.horizon,
        params.dt,
        Scheme::ImplicitEuler,
    )?;
    let clean = truth.series.last();
    let target = truth.series.first();
    let data_scale = clean.l2_norm();

    let alpha_reg = params.sweep_alpha(data_scale);
    let points: Vec<RatePoint> = params
        .deltas
        .par_iter()
        .enumerate()
        .map(|(i, &delta)| -> Result<RatePoint> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed_for(i));
            let (noisy, d_value) = terminal_data_quantity(&truth.series, delta, &mut rng)?;
            if d_value >= 1.0 {
                return Err(Error::Config(format!(
                    "measured data quantity D = {d_value} is not below 1 at delta = {delta}; \
                     rescale the problem (for instance shrink the initial amplitude) so the \
                     logarithmic bound applies"
                )));
            }
            let res = reconstruct_tikhonov(
                &spec,
                &noisy,
                0.0,
                params.dt,
                alpha_reg,
                params.cg_tol,
                params.max_iter,
                Scheme::ImplicitEuler,
            )?;
            let error = res.estimate.sub(target)?.l2_norm();
            Ok(RatePoint {
                delta,
                d_value,
                error,
                s_value: log_rate_s(d_value, alpha)?,
            })
        })
        .collect::<Result<_>>()?;

    check_monotone_errors(&points)?;

    // calibrate the constant on the largest-D point and require the log
    // envelope on every smaller one
    let calib = points
        .iter()
        .max_by(|a, b| a.d_value.total_cmp(&b.d_value))
        .expect("sweep is non-empty");
    let c_fit = calib.error * (1.0 / calib.d_value).ln().powf(alpha);
    let mut pass = true;
    for p in &points {
        if p.d_value >= calib.d_value {
            continue;
        }
        let envelope = 1.5 * c_fit * (1.0 / p.d_value).ln().powf(-alpha);
        if p.error > envelope {
            pass = false;
        }
    }

    let fit_points: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((1.0 / p.d_value).ln().powf(-alpha), p.error))
        .collect();
    let (slope, intercept) = fit_linear(&fit_points);

    Ok(RateReport {
        points,
        fitted_slope: slope,
        fitted_intercept: intercept,
        theta_theory: None,
        alpha: Some(alpha),
        pass,
        runtime_seconds: start.elapsed().as_secs_f64(),
        notes: Some(
            "terminal time derivatives are one-sided differences of the stored frames; \
             the smoothness the logarithmic bound assumes is not checkable from discrete data"
                .into(),
        ),
    })
}

/// Parameters of the semilinear difference sweep.
#[derive(Debug, Clone)]
pub struct SemilinearParams {
    pub t0: f64,
    pub epsilons: Vec<f64>,
    pub dt: f64,
    pub n_cells: usize,
    pub lambda: f64,
    pub m_bound: f64,
    /// Profile of the initial-data perturbation `v0 = u0 + eps * bump`.
    pub bump: Expr,
}

fn check_nonlinearity_regular(spec: &ProblemSpec, m_bound: f64) -> Result<()> {
    let f = spec
        .nonlinearity
        .as_ref()
        .ok_or_else(|| Error::Config("the semilinear sweep requires f(x,t,u)".into()))?;
    let grid = &spec.grid;
    let n_u = 21;
    let n_t = 7;
    for &x in grid
        .nodes()
        .iter()
        .step_by(grid.n_cells().div_euclid(16).max(1))
    {
        for j in 0..n_t {
            let t = spec.horizon * j as f64 / (n_t - 1) as f64;
            for k in 0..n_u {
                let u = -m_bound + 2.0 * m_bound * k as f64 / (n_u - 1) as f64;
                let du = 1e-6 * (1.0 + u.abs());
                let fp = f.eval(Bindings::xtu(x, t, u + du))?;
                let fm = f.eval(Bindings::xtu(x, t, u - du))?;
                let slope = (fp - fm) / (2.0 * du);
                if !slope.is_finite() {
                    return Err(Error::Hypothesis(format!(
                        "df/du is not finite at (x, t, u) = ({x}, {t}, {u}); the difference \
                         bound needs a continuous u-derivative on the working range"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn check_sup_norm(series: &TimeSeriesField, m_bound: f64, label: &str) -> Result<()> {
    let sup = series
        .frames()
        .iter()
        .map(|f| f.max_abs())
        .fold(0.0f64, f64::max);
    if sup > m_bound {
        return Err(Error::Hypothesis(format!(
            "sup-norm hypothesis violated: max |{label}| = {sup} exceeds the bound {m_bound}"
        )));
    }
    Ok(())
}

/// Difference sweep for the semilinear problem: solve for `u0` and for a
/// family of perturbed initial states, record the terminal H1 difference
/// against the L2 difference at `t0`, and fit the slope. The sup-norm
/// hypothesis is verified on every trajectory; violating it is a
/// hypothesis failure, not a rate failure.
pub fn semilinear_stability_experiment(
    spec: &ProblemSpec,
    u0_expr: &Expr,
    params: &SemilinearParams,
) -> Result<RateReport> {
    let start = std::time::Instant::now();
    check_sweep("epsilons", &params.epsilons)?;
    let spec = spec.with_resolution(params.n_cells)?;
    if !(params.t0 > 0.0 && params.t0 < spec.horizon) {
        return Err(Error::Config(format!(
            "the semilinear sweep needs 0 < t0 < T, got t0 = {}",
            params.t0
        )));
    }
    check_nonlinearity_regular(&spec, params.m_bound)?;
    let theta = theta_exponent(params.t0, spec.horizon, params.lambda)?;

    let u0 = sample(u0_expr, &spec.grid, 0.0)?;
    let bump = sample(&params.bump, &spec.grid, 0.0)?;
    let base = semilinear_forward_solve(&spec, &u0, 0.0, spec.horizon, params.dt)?;
    check_sup_norm(&base.series, params.m_bound, "u")?;
    let k0 = base.series.frame_index_at(params.t0)?;

    let points: Vec<RatePoint> = params
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<RatePoint> {
            let v0 = GridFunction::new(
                spec.grid.clone(),
                u0.values()
                    .iter()
                    .zip(bump.values())
                    .map(|(a, g)| a + eps * g)
                    .collect(),
            )?;
            let perturbed = semilinear_forward_solve(&spec, &v0, 0.0, spec.horizon, params.dt)?;
            check_sup_norm(&perturbed.series, params.m_bound, "v")?;
            let d_value = base.series.last().sub(perturbed.series.last())?.h1_norm();
            let error = base
                .series
                .frame(k0)
                .sub(perturbed.series.frame(k0))?
                .l2_norm();
            Ok(RatePoint {
                delta: eps,
                d_value,
                error,
                s_value: optimal_s(
                    params.m_bound,
                    d_value,
                    params.t0,
                    spec.horizon,
                    params.lambda,
                )?,
            })
        })
        .collect::<Result<_>>()?;

    let fit_points: Vec<(f64, f64)> = points.iter().map(|p| (p.d_value, p.error)).collect();
    let (slope, intercept) = fit_power_law(&fit_points)?;

    Ok(RateReport {
        points,
        fitted_slope: slope,
        fitted_intercept: intercept,
        theta_theory: Some(theta),
        alpha: None,
        pass: slope >= theta - SLOPE_MARGIN,
        runtime_seconds: start.elapsed().as_secs_f64(),
        notes: None,
    })
}

/// CSV emission for a rate report: one row per sweep point, floats with 17
/// significant digits. `s_name` and `law_name` select the Holder or the
/// logarithmic column pair.
pub fn write_report_csv(
    report: &RateReport,
    law_value: f64,
    s_name: &str,
    law_name: &str,
    mut w: impl std::io::Write,
) -> Result<()> {
    use crate::model::fmt_g17;
    writeln!(w, "delta,D,error,{s_name},{law_name}")?;
    for p in &report.points {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_g17(p.delta),
            fmt_g17(p.d_value),
            fmt_g17(p.error),
            fmt_g17(p.s_value),
            fmt_g17(law_value)
        )?;
    }
    Ok(())
}
