//! JSON run configuration: a single document describing the problem, the
//! discretization, the weight parameters, the reconstruction options and
//! the experiment sweeps.
//!
//! Defaults: `b = c = F = "0"`, `sigma = "0"`, `u0 = "0"`,
//! `bc = "dirichlet"`, `scheme = "implicit_euler"`, `cg_tol = 1e-10`,
//! `max_iter = 500`, `seeds = [42]`, `lambda = 1`, `s_grid = 1..=20`,
//! `alpha = 0.9`. Every expression is parsed at load time and validation
//! errors name the offending field.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::assumptions::{SamplingPlan, Tolerances};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{BoundaryKind, ProblemSpec, SpatialGrid, STEP_DIVISIBILITY_TOL};
use crate::solver::Scheme;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    discretization: RawDiscretization,
    #[serde(default)]
    carleman: RawCarleman,
    #[serde(default)]
    reconstruction: RawReconstruction,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    assumptions: RawAssumptions,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    x_lo: f64,
    x_hi: f64,
    n_cells: usize,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(default = "default_bc")]
    bc: String,
    a: String,
    #[serde(default = "zero_expr")]
    b: String,
    #[serde(default = "zero_expr")]
    c: String,
    #[serde(rename = "F", default = "zero_expr")]
    forcing: String,
    #[serde(default = "zero_expr")]
    sigma: String,
    r: Option<String>,
    f: Option<String>,
    #[serde(default = "zero_expr")]
    u0: String,
}

fn default_bc() -> String {
    "dirichlet".into()
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscretization {
    dt: f64,
    #[serde(default = "default_scheme")]
    scheme: String,
}

fn default_scheme() -> String {
    "implicit_euler".into()
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawCarleman {
    lambda: Option<f64>,
    s_grid: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawAlpha {
    Number(f64),
    Word(String),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawReconstruction {
    t0: Option<f64>,
    alpha_reg: Option<RawAlpha>,
    cg_tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    deltas: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    alpha: Option<f64>,
    epsilons: Option<Vec<f64>>,
    bump: Option<String>,
    m_bound: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAssumptions {
    n_time_samples: Option<usize>,
    dt_fd: Option<f64>,
    zero_tol: Option<f64>,
    slack: Option<f64>,
}

/// Regularization weight: the a priori noise-squared rule or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Auto,
    Fixed(f64),
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub u0: Expr,
    pub dt: f64,
    pub scheme: Scheme,
    pub lambda: f64,
    pub s_grid: Vec<f64>,
    pub t0: f64,
    pub alpha_reg: AlphaChoice,
    pub cg_tol: f64,
    pub max_iter: usize,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Exponent of the logarithmic rate check.
    pub rate_alpha: f64,
    pub epsilons: Vec<f64>,
    pub bump: Expr,
    pub m_bound: f64,
    pub sampling: SamplingPlan,
    pub output_dir: PathBuf,
}

fn parse_field(field: &str, source: &str) -> Result<Expr> {
    Expr::parse(source).map_err(|e| Error::Config(format!("{field}: {e}")))
}

fn divides(len: f64, dt: f64) -> bool {
    let ratio = len / dt;
    (ratio - ratio.round()).abs() <= STEP_DIVISIBILITY_TOL && ratio.round() >= 1.0
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<RunConfig> {
        let raw: RawConfig = serde_json::from_str(text)?;
        RunConfig::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<RunConfig> {
        let p = raw.problem;
        let bc = match p.bc.as_str() {
            "dirichlet" => BoundaryKind::Dirichlet,
            "robin" => BoundaryKind::Robin,
            other => {
                return Err(Error::Config(format!(
                    "problem.bc: expected \"dirichlet\" or \"robin\", got \"{other}\""
                )));
            }
        };
        if bc == BoundaryKind::Robin && p.r.is_none() {
            return Err(Error::Config(
                "problem.r: required when bc = \"robin\"".into(),
            ));
        }
        let grid = SpatialGrid::shared(p.x_lo, p.x_hi, p.n_cells)
            .map_err(|e| Error::Config(format!("problem grid: {e}")))?;
        let problem = ProblemSpec::new(
            grid,
            p.horizon,
            parse_field("problem.a", &p.a)?,
            parse_field("problem.b", &p.b)?,
            parse_field("problem.c", &p.c)?,
            parse_field("problem.F", &p.forcing)?,
            parse_field("problem.sigma", &p.sigma)?,
            bc,
            p.r.as_deref()
                .map(|s| parse_field("problem.r", s))
                .transpose()?,
            p.f.as_deref()
                .map(|s| parse_field("problem.f", s))
                .transpose()?,
        )?;
        let u0 = parse_field("problem.u0", &p.u0)?;

        let scheme = match raw.discretization.scheme.as_str() {
            "implicit_euler" => Scheme::ImplicitEuler,
            "crank_nicolson" => Scheme::CrankNicolson,
            other => {
                return Err(Error::Config(format!(
                    "discretization.scheme: expected \"implicit_euler\" or \
                     \"crank_nicolson\", got \"{other}\""
                )));
            }
        };
        let dt = raw.discretization.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!(
                "discretization.dt: must be positive, got {dt}"
            )));
        }
        if !divides(p.horizon, dt) {
            return Err(Error::Config(format!(
                "discretization.dt: dt = {dt} must divide T = {} to an integer \
                 number of steps within 1e-9",
                p.horizon
            )));
        }

        let t0 = raw.reconstruction.t0.unwrap_or(0.0);
        if !(0.0..p.horizon).contains(&t0) {
            return Err(Error::Config(format!(
                "reconstruction.t0: must satisfy 0 <= t0 < T, got {t0}"
            )));
        }
        if t0 > 0.0 && !divides(p.horizon - t0, dt) {
            return Err(Error::Config(format!(
                "reconstruction.t0: dt = {dt} must divide T - t0 = {} to an \
                 integer number of steps within 1e-9",
                p.horizon - t0
            )));
        }
        let alpha_reg = match raw.reconstruction.alpha_reg {
            None => AlphaChoice::Auto,
            Some(RawAlpha::Word(w)) if w == "auto" => AlphaChoice::Auto,
            Some(RawAlpha::Word(w)) => {
                return Err(Error::Config(format!(
                    "reconstruction.alpha_reg: expected a number or \"auto\", got \"{w}\""
                )));
            }
            Some(RawAlpha::Number(v)) => {
                if !(v > 0.0) {
                    return Err(Error::Config(format!(
                        "reconstruction.alpha_reg: must be positive, got {v}"
                    )));
                }
                AlphaChoice::Fixed(v)
            }
        };
        let cg_tol = raw.reconstruction.cg_tol.unwrap_or(1e-10);
        if !(cg_tol > 0.0) {
            return Err(Error::Config(format!(
                "reconstruction.cg_tol: must be positive, got {cg_tol}"
            )));
        }
        let max_iter = raw.reconstruction.max_iter.unwrap_or(500);
        if max_iter == 0 {
            return Err(Error::Config(
                "reconstruction.max_iter: must be at least 1".into(),
            ));
        }

        let lambda = raw.carleman.lambda.unwrap_or(1.0);
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "carleman.lambda: must be positive, got {lambda}"
            )));
        }
        let s_grid = raw
            .carleman
            .s_grid
            .unwrap_or_else(|| (1..=20).map(|k| k as f64).collect());

        let deltas = raw
            .experiment
            .deltas
            .unwrap_or_else(|| vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2]);
        let seeds = raw.experiment.seeds.unwrap_or_else(|| vec![42]);
        let rate_alpha = raw.experiment.alpha.unwrap_or(0.9);
        let epsilons = raw.experiment.epsilons.unwrap_or_else(|| deltas.clone());
        let bump = parse_field(
            "experiment.bump",
            raw.experiment.bump.as_deref().unwrap_or("x*(1-x)"),
        )?;
        let m_bound = raw.experiment.m_bound.unwrap_or(2.0);
        if !(m_bound > 0.0) {
            return Err(Error::Config(format!(
                "experiment.m_bound: must be positive, got {m_bound}"
            )));
        }

        let sampling = SamplingPlan {
            n_time_samples: raw.assumptions.n_time_samples.unwrap_or(11),
            dt_fd: raw.assumptions.dt_fd.unwrap_or(1e-4),
            tol: Tolerances {
                zero_tol: raw.assumptions.zero_tol.unwrap_or(1e-12),
                slack: raw.assumptions.slack.unwrap_or(1e-9),
            },
        };

        Ok(RunConfig {
            problem,
            u0,
            dt,
            scheme,
            lambda,
            s_grid,
            t0,
            alpha_reg,
            cg_tol,
            max_iter,
            deltas,
            seeds,
            rate_alpha,
            epsilons,
            bump,
            m_bound,
            sampling,
            output_dir: raw.output_dir,
        })
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1"},
            "discretization": {"dt": 0.25}
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = RunConfig::from_json_str(&minimal()).unwrap();
        assert_eq!(cfg.scheme, Scheme::ImplicitEuler);
        assert_eq!(cfg.cg_tol, 1e-10);
        assert_eq!(cfg.max_iter, 500);
        assert_eq!(cfg.seeds, vec![42]);
        assert_eq!(cfg.lambda, 1.0);
        assert_eq!(cfg.s_grid.len(), 20);
        assert_eq!(cfg.alpha_reg, AlphaChoice::Auto);
        assert_eq!(cfg.problem.bc, BoundaryKind::Dirichlet);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn robin_without_r_names_the_field() {
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1", "bc": "robin"},
            "discretization": {"dt": 0.25}
        }"#;
        match RunConfig::from_json_str(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("problem.r"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn non_dividing_dt_cites_the_rule() {
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1"},
            "discretization": {"dt": 0.3}
        }"#;
        match RunConfig::from_json_str(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("1e-9"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn t0_divisibility_checked() {
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1"},
            "discretization": {"dt": 0.25},
            "reconstruction": {"t0": 0.6}
        }"#;
        assert!(matches!(
            RunConfig::from_json_str(text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn expression_errors_name_the_field() {
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "x +* 2"},
            "discretization": {"dt": 0.25}
        }"#;
        match RunConfig::from_json_str(text) {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("problem.a"), "{msg}");
                assert!(msg.contains("byte"), "{msg}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn alpha_reg_accepts_auto_and_numbers() {
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1"},
            "discretization": {"dt": 0.25},
            "reconstruction": {"alpha_reg": "auto"}
        }"#;
        assert_eq!(
            RunConfig::from_json_str(text).unwrap().alpha_reg,
            AlphaChoice::Auto
        );
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1"},
            "discretization": {"dt": 0.25},
            "reconstruction": {"alpha_reg": 1e-8}
        }"#;
        assert_eq!(
            RunConfig::from_json_str(text).unwrap().alpha_reg,
            AlphaChoice::Fixed(1e-8)
        );
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1"},
            "discretization": {"dt": 0.25},
            "reconstruction": {"alpha_reg": "tiny"}
        }"#;
        assert!(RunConfig::from_json_str(text).is_err());
    }

    #[test]
    fn json_syntax_error_reports_position() {
        let err = RunConfig::from_json_str("{ not json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn semilinear_field_parses() {
        let text = r#"{
            "problem": {"x_lo": 0, "x_hi": 1, "n_cells": 8, "T": 1.0, "a": "1", "f": "-u^3"},
            "discretization": {"dt": 0.25}
        }"#;
        let cfg = RunConfig::from_json_str(text).unwrap();
        assert!(cfg.problem.is_semilinear());
    }
}
