//! Forward-in-time solver for the linear equation, a semilinear variant,
//! and the exact discrete adjoint of the linear forward map.
//!
//! The elliptic part is discretized in conservative flux form with
//! arithmetic-mean face coefficients: a vanishing nodal `a` must not zero
//! out both adjacent faces, which a harmonic mean would do. The drift term
//! uses central differences; the structural assumption tying |b| to
//! sqrt(sigma) keeps the cell Peclet number bounded in the regimes this
//! solver targets, so no upwinding is applied.
//!
//! Time marching is the theta scheme
//! `(I - theta dt A(t_{k+1})) u^{k+1} = (I + (1-theta) dt A(t_k)) u^k + dt F`
//! with theta = 1 (implicit Euler, the default wherever rates are measured)
//! or 1/2 (Crank-Nicolson, offered for accuracy studies).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Bindings;
use crate::model::{
    sample, step_count, BoundaryKind, GridFunction, ProblemSpec, SpatialGrid, TimeSeriesField,
};

/// Time-stepping scheme: `theta = 1` or `theta = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

impl Scheme {
    fn theta(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

/// A tridiagonal matrix stored by diagonals: `lower[i]` is entry
/// `(i+1, i)`, `diag[i]` is `(i, i)`, `upper[i]` is `(i, i+1)`.
#[derive(Debug, Clone)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

const PIVOT_FLOOR: f64 = 1e-300;

impl TridiagonalSystem {
    pub fn zeros(m: usize) -> TridiagonalSystem {
        TridiagonalSystem {
            lower: vec![0.0; m.saturating_sub(1)],
            diag: vec![0.0; m],
            upper: vec![0.0; m.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn check_shape(&self, rhs_len: usize) -> Result<()> {
        let m = self.diag.len();
        if self.lower.len() + 1 != m || self.upper.len() + 1 != m {
            return Err(Error::Shape(format!(
                "tridiagonal bands have lengths {}/{}/{}",
                self.lower.len(),
                m,
                self.upper.len()
            )));
        }
        if rhs_len != m {
            return Err(Error::Shape(format!(
                "right-hand side has {rhs_len} entries, matrix is {m} x {m}"
            )));
        }
        Ok(())
    }

    /// Thomas elimination. No pivoting: the implicit-scheme matrices are
    /// diagonally dominant by construction, and a vanishing pivot is
    /// reported as a singular-pivot error.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_shape(rhs.len())?;
        thomas(&self.lower, &self.diag, &self.upper, rhs)
    }

    /// Solves the transposed system (bands swapped).
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_shape(rhs.len())?;
        thomas(&self.upper, &self.diag, &self.lower, rhs)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.diag.len();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.lower[i - 1] * v[i - 1];
            }
            if i + 1 < m {
                acc += self.upper[i] * v[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    /// Transposed matrix-vector product.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let m = self.diag.len();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = self.diag[i] * v[i];
            if i > 0 {
                acc += self.upper[i - 1] * v[i - 1];
            }
            if i + 1 < m {
                acc += self.lower[i] * v[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    /// `I + factor * A` for the theta scheme.
    fn shifted(&self, factor: f64) -> TridiagonalSystem {
        TridiagonalSystem {
            lower: self.lower.iter().map(|v| factor * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 + factor * v).collect(),
            upper: self.upper.iter().map(|v| factor * v).collect(),
        }
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut pivot = diag[0];
    if pivot.abs() < PIVOT_FLOOR {
        return Err(Error::SingularPivot {
            row: 0,
            value: pivot,
        });
    }
    if m > 1 {
        c[0] = upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..m {
        pivot = diag[i] - lower[i - 1] * c[i - 1];
        if pivot.abs() < PIVOT_FLOOR {
            return Err(Error::SingularPivot {
                row: i,
                value: pivot,
            });
        }
        if i + 1 < m {
            c[i] = upper[i] / pivot;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..m - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Exact Thomas solve of `sys x = rhs`.
pub fn solve_tridiagonal(sys: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    sys.solve(rhs)
}

/// Assembles the spatial operator `A(t)`. Row `i` encodes
/// `(a_{i+1/2}(u_{i+1}-u_i) - a_{i-1/2}(u_i-u_{i-1}))/h^2 +
/// b_i (u_{i+1}-u_{i-1})/(2h) + c_i u_i` with `a_{i+1/2}` the arithmetic
/// mean of the nodal values. Dirichlet boundary rows are zero (the
/// marching pins those entries); Robin rows eliminate the ghost node
/// through the boundary condition at second order.
pub fn assemble_spatial_operator(spec: &ProblemSpec, t: f64) -> Result<TridiagonalSystem> {
    let grid = &spec.grid;
    let n = grid.n_cells();
    let m = grid.n_nodes();
    let h = grid.spacing();
    let h2 = h * h;
    let a = sample(&spec.diffusion, grid, t)?;
    let b = sample(&spec.drift, grid, t)?;
    let c = sample(&spec.reaction, grid, t)?;
    let (a, b, c) = (a.values(), b.values(), c.values());

    let mut sys = TridiagonalSystem::zeros(m);
    for i in 1..n {
        let a_west = 0.5 * (a[i - 1] + a[i]);
        let a_east = 0.5 * (a[i] + a[i + 1]);
        sys.lower[i - 1] = a_west / h2 - b[i] / (2.0 * h);
        sys.diag[i] = -(a_west + a_east) / h2 + c[i];
        sys.upper[i] = a_east / h2 + b[i] / (2.0 * h);
    }

    if spec.bc == BoundaryKind::Robin {
        let r_expr = spec
            .robin
            .as_ref()
            .expect("ProblemSpec validation guarantees r for Robin");
        let r_lo = r_expr.eval(Bindings::xt(grid.x_lo(), t))?;
        let r_hi = r_expr.eval(Bindings::xt(grid.x_hi(), t))?;
        for (label, a_bnd) in [("x_lo", a[0]), ("x_hi", a[n])] {
            if a_bnd <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "Robin rows require a > 0 at the boundary, got a({label}) = {a_bnd}; \
                     the diffusion must be non-degenerate on the boundary"
                )));
            }
        }
        // Ghost values sit outside the domain where the coefficient
        // expression may not be evaluable, so the ghost face reuses the
        // boundary nodal value of a.
        let a_east0 = 0.5 * (a[0] + a[1]);
        sys.upper[0] = (a_east0 + a[0]) / h2;
        sys.diag[0] = -(a_east0 + a[0]) / h2 - 2.0 * r_lo / h + b[0] * r_lo / a[0] + c[0];

        let a_west_n = 0.5 * (a[n - 1] + a[n]);
        sys.lower[n - 1] = (a_west_n + a[n]) / h2;
        sys.diag[n] = -(a_west_n + a[n]) / h2 - 2.0 * r_hi / h - b[n] * r_hi / a[n] + c[n];
    }

    Ok(sys)
}

/// Result of a forward or adjoint sweep.
#[derive(Debug, Clone)]
pub struct ForwardSolveResult {
    pub series: TimeSeriesField,
    pub step_count: usize,
    /// Largest Newton iteration count over all steps; 0 for linear solves.
    pub max_newton_iters_used: usize,
}

fn pin_dirichlet(bc: BoundaryKind, v: &mut [f64]) {
    if bc == BoundaryKind::Dirichlet {
        v[0] = 0.0;
        let last = v.len() - 1;
        v[last] = 0.0;
    }
}

fn check_finite(v: &[f64], step: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    Ok(())
}

fn require_linear(spec: &ProblemSpec, op: &str) -> Result<()> {
    if spec.is_semilinear() {
        return Err(Error::Config(format!(
            "{op} handles the linear problem; use the semilinear solver for f(x,t,u)"
        )));
    }
    Ok(())
}

/// Marches the theta scheme from `u0` at `t_start` to `t_end`.
pub fn forward_solve(
    spec: &ProblemSpec,
    u0: &GridFunction,
    t_start: f64,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<ForwardSolveResult> {
    require_linear(spec, "forward_solve")?;
    let steps = step_count(t_start, t_end, dt)?;
    let grid = spec.grid.clone();
    if u0.grid().n_nodes() != grid.n_nodes() {
        return Err(Error::Shape("initial data does not match the grid".into()));
    }
    let theta = scheme.theta();

    let mut u = u0.values().to_vec();
    pin_dirichlet(spec.bc, &mut u);
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(GridFunction::new(grid.clone(), u.clone())?);

    for k in 0..steps {
        let t0 = t_start + k as f64 * dt;
        let t1 = if k + 1 == steps {
            t_end
        } else {
            t_start + (k + 1) as f64 * dt
        };
        let implicit = assemble_spatial_operator(spec, t1)?.shifted(-theta * dt);
        let mut rhs = if theta < 1.0 {
            let explicit = assemble_spatial_operator(spec, t0)?.shifted((1.0 - theta) * dt);
            explicit.apply(&u)
        } else {
            u.clone()
        };
        let force = match scheme {
            Scheme::ImplicitEuler => sample(&spec.forcing, &grid, t1)?.into_values(),
            Scheme::CrankNicolson => {
                let f0 = sample(&spec.forcing, &grid, t0)?;
                let f1 = sample(&spec.forcing, &grid, t1)?;
                f0.values()
                    .iter()
                    .zip(f1.values())
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect()
            }
        };
        for (r, f) in rhs.iter_mut().zip(&force) {
            *r += dt * f;
        }
        pin_dirichlet(spec.bc, &mut rhs);
        u = implicit.solve(&rhs)?;
        pin_dirichlet(spec.bc, &mut u);
        check_finite(&u, k)?;
        frames.push(GridFunction::new(grid.clone(), u.clone())?);
    }

    Ok(ForwardSolveResult {
        series: TimeSeriesField::new(grid, t_start, t_end, dt, frames)?,
        step_count: steps,
        max_newton_iters_used: 0,
    })
}

/// The homogeneous (F = 0) linear forward map and its exact transpose,
/// with the step matrices assembled once and reused. This is the operator
/// pair the normal-equation reconstruction iterates on.
pub struct LinearPropagator {
    grid: Arc<SpatialGrid>,
    bc: BoundaryKind,
    steps: Vec<PropagatorStep>,
}

struct PropagatorStep {
    implicit: TridiagonalSystem,
    explicit: Option<TridiagonalSystem>,
}

impl LinearPropagator {
    pub fn new(
        spec: &ProblemSpec,
        t_start: f64,
        t_end: f64,
        dt: f64,
        scheme: Scheme,
    ) -> Result<LinearPropagator> {
        require_linear(spec, "LinearPropagator")?;
        let steps = step_count(t_start, t_end, dt)?;
        let theta = scheme.theta();
        let mut ops = Vec::with_capacity(steps);
        for k in 0..steps {
            let t0 = t_start + k as f64 * dt;
            let t1 = if k + 1 == steps {
                t_end
            } else {
                t_start + (k + 1) as f64 * dt
            };
            let implicit = assemble_spatial_operator(spec, t1)?.shifted(-theta * dt);
            let explicit = if theta < 1.0 {
                Some(assemble_spatial_operator(spec, t0)?.shifted((1.0 - theta) * dt))
            } else {
                None
            };
            ops.push(PropagatorStep { implicit, explicit });
        }
        Ok(LinearPropagator {
            grid: spec.grid.clone(),
            bc: spec.bc,
            steps: ops,
        })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    /// `A v`: the terminal state reached from initial data `v` with F = 0.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut u = v.to_vec();
        pin_dirichlet(self.bc, &mut u);
        for (k, step) in self.steps.iter().enumerate() {
            let mut rhs = match &step.explicit {
                Some(n) => n.apply(&u),
                None => u,
            };
            pin_dirichlet(self.bc, &mut rhs);
            u = step.implicit.solve(&rhs)?;
            pin_dirichlet(self.bc, &mut u);
            check_finite(&u, k)?;
        }
        Ok(u)
    }

    /// `A^T w`: every forward operation transposed, in reverse order, so
    /// the inner-product identity holds at the discrete level.
    pub fn apply_transpose(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut z = w.to_vec();
        for (k, step) in self.steps.iter().enumerate().rev() {
            pin_dirichlet(self.bc, &mut z);
            z = step.implicit.solve_transpose(&z)?;
            pin_dirichlet(self.bc, &mut z);
            if let Some(n) = &step.explicit {
                z = n.apply_transpose(&z);
            }
            check_finite(&z, k)?;
        }
        pin_dirichlet(self.bc, &mut z);
        Ok(z)
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

/// Transpose map of the paired forward solve, reported as a series on the
/// same time grid: frame `k` holds the adjoint state after the transposed
/// steps `K-1, ..., k` have been applied, so frame 0 is `A^T w_T`.
pub fn adjoint_solve(
    spec: &ProblemSpec,
    w_terminal: &GridFunction,
    t_start: f64,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<ForwardSolveResult> {
    require_linear(spec, "adjoint_solve")?;
    let prop = LinearPropagator::new(spec, t_start, t_end, dt, scheme)?;
    let grid = spec.grid.clone();
    if w_terminal.grid().n_nodes() != grid.n_nodes() {
        return Err(Error::Shape("terminal data does not match the grid".into()));
    }
    let steps = prop.steps.len();
    let mut frames_rev = Vec::with_capacity(steps + 1);
    let mut z = w_terminal.values().to_vec();
    frames_rev.push(GridFunction::new(grid.clone(), z.clone())?);
    for (k, step) in prop.steps.iter().enumerate().rev() {
        pin_dirichlet(prop.bc, &mut z);
        z = step.implicit.solve_transpose(&z)?;
        pin_dirichlet(prop.bc, &mut z);
        if let Some(n) = &step.explicit {
            z = n.apply_transpose(&z);
        }
        if k == 0 {
            pin_dirichlet(prop.bc, &mut z);
        }
        check_finite(&z, k)?;
        frames_rev.push(GridFunction::new(grid.clone(), z.clone())?);
    }
    frames_rev.reverse();
    Ok(ForwardSolveResult {
        series: TimeSeriesField::new(grid, t_start, t_end, dt, frames_rev)?,
        step_count: steps,
        max_newton_iters_used: 0,
    })
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 25;

/// Implicit-Euler marching for the semilinear equation with right-hand side
/// `c u + F + f(x, t, u)`; each step solves the nonlinear system by Newton
/// iteration with the tridiagonal Jacobian `I - dt A - dt diag(df/du)`,
/// `df/du` taken by a centered difference in `u`.
pub fn semilinear_forward_solve(
    spec: &ProblemSpec,
    u0: &GridFunction,
    t_start: f64,
    t_end: f64,
    dt: f64,
) -> Result<ForwardSolveResult> {
    let f_expr = spec.nonlinearity.as_ref().ok_or_else(|| {
        Error::Config("semilinear_forward_solve requires the nonlinearity f(x,t,u)".into())
    })?;
    let steps = step_count(t_start, t_end, dt)?;
    let grid = spec.grid.clone();
    if u0.grid().n_nodes() != grid.n_nodes() {
        return Err(Error::Shape("initial data does not match the grid".into()));
    }
    let m = grid.n_nodes();
    let nodes = grid.nodes();
    let interior_only = spec.bc == BoundaryKind::Dirichlet;

    let mut u = u0.values().to_vec();
    pin_dirichlet(spec.bc, &mut u);
    let mut frames = Vec::with_capacity(steps + 1);
    frames.push(GridFunction::new(grid.clone(), u.clone())?);
    let mut max_newton = 0usize;

    for k in 0..steps {
        let t1 = if k + 1 == steps {
            t_end
        } else {
            t_start + (k + 1) as f64 * dt
        };
        let operator = assemble_spatial_operator(spec, t1)?;
        let mut force = sample(&spec.forcing, &grid, t1)?.into_values();
        pin_dirichlet(spec.bc, &mut force);

        let mut v = u.clone();
        let mut converged = false;
        for iter in 0..NEWTON_MAX_ITERS {
            // residual R(v) = v - u - dt (A v + f(v) + F)
            let av = operator.apply(&v);
            let mut fv = vec![0.0; m];
            let mut fu = vec![0.0; m];
            for i in 0..m {
                if interior_only && (i == 0 || i == m - 1) {
                    continue;
                }
                let x = nodes[i];
                fv[i] = f_expr.eval(Bindings::xtu(x, t1, v[i]))?;
                let du = 1e-6 * (1.0 + v[i].abs());
                let fp = f_expr.eval(Bindings::xtu(x, t1, v[i] + du))?;
                let fm = f_expr.eval(Bindings::xtu(x, t1, v[i] - du))?;
                fu[i] = (fp - fm) / (2.0 * du);
            }
            let mut neg_residual = vec![0.0; m];
            for i in 0..m {
                neg_residual[i] = -(v[i] - u[i] - dt * (av[i] + fv[i] + force[i]));
            }
            pin_dirichlet(spec.bc, &mut neg_residual);
            if interior_only {
                neg_residual[0] = -v[0];
                neg_residual[m - 1] = -v[m - 1];
            }
            let mut jacobian = operator.shifted(-dt);
            for (d, fu_i) in jacobian.diag.iter_mut().zip(&fu) {
                *d -= dt * fu_i;
            }
            let delta = jacobian.solve(&neg_residual)?;
            let mut step_size = 0.0f64;
            for i in 0..m {
                v[i] += delta[i];
                step_size = step_size.max(delta[i].abs());
            }
            if !step_size.is_finite() {
                return Err(Error::NonFinite { step: k });
            }
            if step_size <= NEWTON_TOL {
                max_newton = max_newton.max(iter + 1);
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NewtonDiverged {
                step: k,
                iters: NEWTON_MAX_ITERS,
            });
        }
        u = v;
        pin_dirichlet(spec.bc, &mut u);
        check_finite(&u, k)?;
        frames.push(GridFunction::new(grid.clone(), u.clone())?);
    }

    Ok(ForwardSolveResult {
        series: TimeSeriesField::new(grid, t_start, t_end, dt, frames)?,
        step_count: steps,
        max_newton_iters_used: max_newton,
    })
}
