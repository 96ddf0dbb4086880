//! Sampling-based verification of the structural hypotheses a problem
//! instance must satisfy before the stability rates mean anything:
//! ellipticity above the floor sigma, feasibility of the lambda_1 bound on
//! d/dt a, the drift bound |b| <= C sqrt(sigma), and positivity of sigma on
//! the boundary (required for Robin problems).
//!
//! Coefficients arrive as opaque expressions, so every check samples grid
//! nodes times uniform time levels rather than reasoning symbolically; the
//! drift check adds a refinement-stability flag to distinguish a large but
//! finite constant from one that diverges under refinement.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Bindings;
use crate::model::{sample, BoundaryKind, ProblemSpec};

/// Detection thresholds. `zero_tol` decides when a sampled value counts as
/// zero; `slack` is the feasibility allowance at degenerate samples.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub zero_tol: f64,
    pub slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            zero_tol: 1e-12,
            slack: 1e-9,
        }
    }
}

/// Floor value returned for lambda_1 when every ratio is non-positive
/// (time-independent coefficients in particular).
pub const LAMBDA1_FLOOR: f64 = 1e-9;

/// Sampling controls for the checks.
#[derive(Debug, Clone, Copy)]
pub struct SamplingPlan {
    pub n_time_samples: usize,
    /// Step of the centered finite difference estimating d/dt a.
    pub dt_fd: f64,
    pub tol: Tolerances,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            n_time_samples: 11,
            dt_fd: 1e-4,
            tol: Tolerances::default(),
        }
    }
}

impl SamplingPlan {
    fn times(&self, horizon: f64) -> Result<Vec<f64>> {
        if self.n_time_samples < 2 {
            return Err(Error::Config(format!(
                "need at least 2 time samples, got {}",
                self.n_time_samples
            )));
        }
        let m = self.n_time_samples;
        Ok((0..m)
            .map(|k| horizon * k as f64 / (m - 1) as f64)
            .collect())
    }
}

/// Outcome of the ellipticity check, with the first violating sample when
/// the check fails.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityCheck {
    pub ok: bool,
    pub witness: Option<EllipticityViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityViolation {
    pub x: f64,
    pub t: f64,
    pub a: f64,
    pub sigma: f64,
}

/// True iff `a(x_i, t_k) >= sigma(x_i) - zero_tol` and
/// `sigma(x_i) >= -zero_tol` at every grid node and sampled time.
pub fn check_ellipticity(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<EllipticityCheck> {
    let sigma = sample(&spec.sigma, &spec.grid, 0.0)?;
    let tol = plan.tol.zero_tol;
    for t in plan.times(spec.horizon)? {
        let a = sample(&spec.diffusion, &spec.grid, t)?;
        for (i, (&av, &sv)) in a.values().iter().zip(sigma.values()).enumerate() {
            if sv < -tol || av < sv - tol {
                return Ok(EllipticityCheck {
                    ok: false,
                    witness: Some(EllipticityViolation {
                        x: spec.grid.nodes()[i],
                        t,
                        a: av,
                        sigma: sv,
                    }),
                });
            }
        }
    }
    Ok(EllipticityCheck {
        ok: true,
        witness: None,
    })
}

/// Feasible constant for the bound `lambda_1 a - d/dt a >= 0`, estimated by
/// centered finite differences at the sampled points. Where `a` vanishes the
/// bound forces `d/dt a <= 0`, so those samples are required rather than
/// skipped; infeasibility returns `None`.
pub fn find_lambda1(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<Option<f64>> {
    if !(plan.dt_fd > 0.0 && plan.dt_fd.is_finite()) {
        return Err(Error::Config(format!(
            "dt_fd must be positive and finite, got {}",
            plan.dt_fd
        )));
    }
    let tol = plan.tol;
    let mut sup_ratio = f64::NEG_INFINITY;
    for t in plan.times(spec.horizon)? {
        for &x in spec.grid.nodes() {
            let a = spec.diffusion.eval(Bindings::xt(x, t))?;
            let a_plus = spec.diffusion.eval(Bindings::xt(x, t + plan.dt_fd))?;
            let a_minus = spec.diffusion.eval(Bindings::xt(x, t - plan.dt_fd))?;
            let da = (a_plus - a_minus) / (2.0 * plan.dt_fd);
            if a <= tol.zero_tol {
                if da > tol.slack {
                    return Ok(None);
                }
            } else {
                sup_ratio = sup_ratio.max(da / a);
            }
        }
    }
    Ok(Some(sup_ratio.max(LAMBDA1_FLOOR)))
}

/// Result of the drift-bound check. `c_sup` is the supremum of
/// `|b|/sqrt(sigma)` over samples with `sigma` above the zero tolerance;
/// `c_est` equals `c_sup` unless a degenerate sample carries drift beyond
/// the slack, in which case it is infinite. `stable` records whether
/// `c_sup` moves by less than 10% when the grid is refined fourfold.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub c_est: f64,
    pub c_sup: f64,
    pub stable: bool,
}

pub fn check_drift_bound(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<DriftReport> {
    let (c_sup, degenerate_ok) = drift_sup(spec, plan)?;
    let refined = spec.with_resolution(spec.grid.n_cells() * 4)?;
    let (c_sup_refined, refined_degenerate_ok) = drift_sup(&refined, plan)?;
    let both_ok = degenerate_ok && refined_degenerate_ok;
    let stable = if !both_ok {
        false
    } else if c_sup == 0.0 && c_sup_refined == 0.0 {
        true
    } else {
        (c_sup_refined - c_sup).abs() < 0.10 * c_sup.abs().max(f64::MIN_POSITIVE)
    };
    Ok(DriftReport {
        c_est: if degenerate_ok { c_sup } else { f64::INFINITY },
        c_sup,
        stable,
    })
}

fn drift_sup(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<(f64, bool)> {
    let tol = plan.tol;
    let sigma = sample(&spec.sigma, &spec.grid, 0.0)?;
    let mut sup = 0.0f64;
    let mut degenerate_ok = true;
    for t in plan.times(spec.horizon)? {
        let b = sample(&spec.drift, &spec.grid, t)?;
        for (&bv, &sv) in b.values().iter().zip(sigma.values()) {
            if sv > tol.zero_tol {
                sup = sup.max(bv.abs() / sv.sqrt());
            } else if bv.abs() > tol.slack {
                degenerate_ok = false;
            }
        }
    }
    Ok((sup, degenerate_ok))
}

/// Positivity of sigma at both endpoints, required for Robin problems.
pub fn check_boundary_nondegeneracy(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<bool> {
    let lo = spec.sigma.eval(Bindings::xt(spec.grid.x_lo(), 0.0))?;
    let hi = spec.sigma.eval(Bindings::xt(spec.grid.x_hi(), 0.0))?;
    Ok(lo > plan.tol.zero_tol && hi > plan.tol.zero_tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct Detail {
    pub location: String,
    pub message: String,
}

/// Aggregated report over all structural checks, emitted as JSON by the
/// `check` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub ellipticity_ok: bool,
    pub lambda1: Option<f64>,
    #[serde(rename = "drift_C")]
    pub drift_c: Option<f64>,
    pub drift_stable: bool,
    pub boundary_nondegenerate: bool,
    pub details: Vec<Detail>,
}

impl AssumptionReport {
    /// Whether every hypothesis the stability theory needs holds for this
    /// problem. Boundary non-degeneracy is only required with Robin data.
    pub fn required_ok(&self, bc: BoundaryKind) -> bool {
        self.ellipticity_ok
            && self.lambda1.is_some()
            && self.drift_c.is_some()
            && self.drift_stable
            && (bc == BoundaryKind::Dirichlet || self.boundary_nondegenerate)
    }
}

/// Runs every check and assembles the report.
pub fn verify_assumptions(spec: &ProblemSpec, plan: &SamplingPlan) -> Result<AssumptionReport> {
    let mut details = Vec::new();

    let ellipticity = check_ellipticity(spec, plan)?;
    if let Some(w) = &ellipticity.witness {
        details.push(Detail {
            location: format!("(x, t) = ({}, {})", w.x, w.t),
            message: format!(
                "ellipticity violated: a = {} is below sigma = {}",
                w.a, w.sigma
            ),
        });
    }

    let lambda1 = find_lambda1(spec, plan)?;
    if lambda1.is_none() {
        details.push(Detail {
            location: "a(x,t)".into(),
            message: "no feasible lambda_1: d/dt a > 0 at a sample where a vanishes".into(),
        });
    }

    let drift = check_drift_bound(spec, plan)?;
    if drift.c_est.is_infinite() {
        details.push(Detail {
            location: "b(x,t)".into(),
            message: format!(
                "drift does not vanish where sigma does; finite-sample sup |b|/sqrt(sigma) = {}",
                drift.c_sup
            ),
        });
    } else if !drift.stable {
        details.push(Detail {
            location: "b(x,t)".into(),
            message: format!(
                "drift constant is not refinement-stable (sup {} on this grid); \
                 the bound |b| <= C sqrt(sigma) likely fails in the limit",
                drift.c_sup
            ),
        });
    }

    let boundary = check_boundary_nondegeneracy(spec, plan)?;
    if spec.bc == BoundaryKind::Robin && !boundary {
        details.push(Detail {
            location: "sigma on the boundary".into(),
            message: "Robin problems require sigma > 0 at both endpoints".into(),
        });
    }

    Ok(AssumptionReport {
        ellipticity_ok: ellipticity.ok,
        lambda1,
        drift_c: drift.c_est.is_finite().then_some(drift.c_est),
        drift_stable: drift.stable,
        boundary_nondegenerate: boundary,
        details,
    })
}
