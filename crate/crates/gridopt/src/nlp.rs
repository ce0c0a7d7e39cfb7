//! Primal-dual interior-point solver for smooth nonlinear programs.
//!
//! Problems arrive in the form
//!
//! ```text
//! min f(x)   s.t.   g(x) = 0,   h(x) ≥ 0,   lo ≤ x ≤ hi
//! ```
//!
//! with callbacks supplying values and first derivatives, and optionally the
//! Lagrangian Hessian (finite differences fill in when it is absent).
//! Internally the solver rewrites everything to `g̃(x) = 0, h̃(x) ≤ 0`:
//! general inequalities are negated, finite bounds become inequality rows,
//! and a variable whose bounds coincide becomes an equality row. Slacks `z >
//! 0` with multipliers `μ > 0` turn the inequalities into a log-barrier term
//! with parameter `γ`, and each iteration solves the condensed Newton system
//!
//! ```text
//! [ H + Jh̃ᵀ Z⁻¹M Jh̃   Jg̃ᵀ ] [Δx]   [ −(∇L + Jh̃ᵀ Z⁻¹(M h̃ + γ1)) ]
//! [ Jg̃                 0  ] [Δλ] = [ −g̃                         ]
//! ```
//!
//! followed by fraction-to-boundary steps that keep `z` and `μ` strictly
//! positive. A loose ℓ1-merit backtracking rule rejects only steps that
//! increase `f + ν‖infeasibility‖₁` egregiously, preserving the plain
//! Newton behavior on well-scaled problems while guarding the nonconvex
//! ones.
//!
//! The objective is scaled internally by the gradient magnitude at the start
//! point so that tolerances mean the same thing for objectives in dollars
//! per hour as for unit-test toys; reported objective values and multipliers
//! are unscaled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Objective callback: value and gradient at `x`.
pub type ObjectiveFn = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send>;
/// Constraint callback: values and Jacobian (one row per constraint) at `x`.
pub type ConstraintFn = Box<dyn Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>) + Send>;
/// Lagrangian Hessian callback: `∇²(w·f + λ_eqᵀ g + λ_ineqᵀ h)` at `x`.
pub type LagHessianFn = Box<dyn Fn(&[f64], f64, &[f64], &[f64]) -> DMatrix<f64> + Send>;

/// A smooth constrained nonlinear program.
///
/// `eq_constraints` returns `g` with `g(x) = 0` required; `ineq_constraints`
/// returns `h` with `h(x) ≥ 0` required. Bounds may be ±∞; equal bounds pin
/// a variable. All callbacks must be defined on the whole box.
pub struct NlpProblem {
    /// Number of variables.
    pub n: usize,
    pub objective: ObjectiveFn,
    /// Number of equality constraint rows.
    pub n_eq: usize,
    pub eq_constraints: Option<ConstraintFn>,
    /// Number of inequality constraint rows.
    pub n_ineq: usize,
    pub ineq_constraints: Option<ConstraintFn>,
    /// Per-variable `(lower, upper)` bounds.
    pub bounds: Vec<(f64, f64)>,
    /// Exact Lagrangian Hessian; finite differences of the gradient are used
    /// when absent.
    pub lagrangian_hessian: Option<LagHessianFn>,
}

/// Solver tolerances and limits.
#[derive(Clone, Copy, Debug)]
pub struct NlpOptions {
    /// Bound on the (scaled) stationarity and complementarity residuals.
    pub kkt_tol: f64,
    /// Bound on constraint violation, in constraint units.
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions { kkt_tol: 1e-6, feas_tol: 1e-6, max_iter: 200 }
    }
}

/// Termination state of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    /// KKT and feasibility tolerances met.
    Optimal,
    /// Iteration budget exhausted; the best iterate seen is returned.
    MaxIter,
    /// The iteration stalled at a stationary point of the infeasibility, or
    /// multipliers diverged: the constraints are likely inconsistent.
    InfeasibleDetected,
}

/// Multiplier estimates at the returned point, in the problem's own units.
///
/// Signs follow the stationarity identity
/// `∇f + Jgᵀ·eq − Jhᵀ·ineq − lower + upper = 0`, with `ineq`, `lower`, and
/// `upper` nonnegative at a KKT point. A pinned variable's multiplier is
/// reported in `lower`.
#[derive(Clone, Debug)]
pub struct NlpMultipliers {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Result of a solve: the iterate, independently recomputed residuals, and
/// diagnostics.
#[derive(Debug)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Max of the scaled stationarity and complementarity residuals,
    /// recomputed from the callbacks at `x`.
    pub kkt_residual: f64,
    /// Max |g| over equality rows (pinned variables included).
    pub eq_violation: f64,
    /// Max violation of inequality rows and bounds.
    pub ineq_violation: f64,
    pub status: NlpStatus,
    pub iterations: usize,
    pub multipliers: NlpMultipliers,
    /// Barrier parameter after each update, strictly decreasing.
    pub barrier_history: Vec<f64>,
}

/// Errors for malformed problems; solver outcomes are statuses, not errors.
#[derive(Debug, Error)]
pub enum NlpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

const XI: f64 = 0.99995; // fraction-to-boundary factor
const SIGMA: f64 = 0.1; // centering parameter
const Z0: f64 = 1.0; // slack/multiplier floor at initialization
const FIXED_EPS: f64 = 1e-12; // bounds closer than this pin the variable

fn inf_norm(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.amax()
    }
}

/// Values and first derivatives of the internal-form problem at one point.
struct Evals {
    f: f64,
    df: DVector<f64>,
    g: DVector<f64>,
    dg: DMatrix<f64>,
    h: DVector<f64>,
    dh: DMatrix<f64>,
}

/// The internal rewrite of an [`NlpProblem`]: scaled objective, equalities
/// including pinned variables, inequalities in ≤ form including bounds.
struct InternalForm<'a> {
    problem: &'a NlpProblem,
    scale: f64,
    /// (variable, value) pairs for pinned variables.
    fixed: Vec<(usize, f64)>,
    /// Variables with an active finite lower bound row.
    lo_rows: Vec<usize>,
    /// Variables with an active finite upper bound row.
    hi_rows: Vec<usize>,
}

impl<'a> InternalForm<'a> {
    fn n_eq(&self) -> usize {
        self.problem.n_eq + self.fixed.len()
    }

    fn n_ineq(&self) -> usize {
        self.problem.n_ineq + self.lo_rows.len() + self.hi_rows.len()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<Evals, NlpError> {
        let n = self.problem.n;
        let xs = x.as_slice();
        let (f_raw, df_raw) = (self.problem.objective)(xs);
        if df_raw.len() != n {
            return Err(NlpError::Dimension(format!(
                "objective gradient has {} entries for {n} variables",
                df_raw.len()
            )));
        }
        let f = f_raw / self.scale;
        let df = DVector::from_vec(df_raw) / self.scale;

        let neq = self.n_eq();
        let mut g = DVector::zeros(neq);
        let mut dg = DMatrix::zeros(neq, n);
        if let Some(eq) = &self.problem.eq_constraints {
            let (gv, gj) = eq(xs);
            if gv.len() != self.problem.n_eq || gj.nrows() != self.problem.n_eq || gj.ncols() != n {
                return Err(NlpError::Dimension(format!(
                    "equality constraints returned {}×{} for {} rows over {n} variables",
                    gj.nrows(),
                    gj.ncols(),
                    self.problem.n_eq
                )));
            }
            for (r, val) in gv.iter().enumerate() {
                g[r] = *val;
                dg.row_mut(r).copy_from(&gj.row(r));
            }
        }
        for (k, &(i, val)) in self.fixed.iter().enumerate() {
            let r = self.problem.n_eq + k;
            g[r] = x[i] - val;
            dg[(r, i)] = 1.0;
        }

        let niq = self.n_ineq();
        let mut h = DVector::zeros(niq);
        let mut dh = DMatrix::zeros(niq, n);
        if let Some(ineq) = &self.problem.ineq_constraints {
            let (hv, hj) = ineq(xs);
            if hv.len() != self.problem.n_ineq
                || hj.nrows() != self.problem.n_ineq
                || hj.ncols() != n
            {
                return Err(NlpError::Dimension(format!(
                    "inequality constraints returned {}×{} for {} rows over {n} variables",
                    hj.nrows(),
                    hj.ncols(),
                    self.problem.n_ineq
                )));
            }
            for (r, val) in hv.iter().enumerate() {
                h[r] = -*val;
                for c in 0..n {
                    dh[(r, c)] = -hj[(r, c)];
                }
            }
        }
        let mut r = self.problem.n_ineq;
        for &i in &self.lo_rows {
            h[r] = self.problem.bounds[i].0 - x[i];
            dh[(r, i)] = -1.0;
            r += 1;
        }
        for &i in &self.hi_rows {
            h[r] = x[i] - self.problem.bounds[i].1;
            dh[(r, i)] = 1.0;
            r += 1;
        }

        Ok(Evals { f, df, g, dg, h, dh })
    }

    /// Gradient of the internal Lagrangian `f + λᵀg + μᵀh`.
    fn lagrangian_gradient(
        &self,
        e: &Evals,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
    ) -> DVector<f64> {
        &e.df + e.dg.transpose() * lam + e.dh.transpose() * mu
    }

    /// Hessian of the internal Lagrangian, exact when the problem provides
    /// one, else by central differences of the Lagrangian gradient.
    fn lagrangian_hessian(
        &self,
        x: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
    ) -> Result<DMatrix<f64>, NlpError> {
        let n = self.problem.n;
        if let Some(hess) = &self.problem.lagrangian_hessian {
            // User convention: ∇²(w·f + λ_eqᵀg + λ_ineqᵀh_user). Internal h
            // rows are the negated user rows, so those multipliers flip sign;
            // pinned-variable and bound rows are linear and contribute
            // nothing.
            let lam_eq: Vec<f64> = lam.iter().take(self.problem.n_eq).copied().collect();
            let lam_ineq: Vec<f64> = mu.iter().take(self.problem.n_ineq).map(|m| -m).collect();
            let m = hess(x.as_slice(), 1.0 / self.scale, &lam_eq, &lam_ineq);
            if m.nrows() != n || m.ncols() != n {
                return Err(NlpError::Dimension(format!(
                    "Lagrangian Hessian is {}×{} for {n} variables",
                    m.nrows(),
                    m.ncols()
                )));
            }
            return Ok(m);
        }
        let mut hess = DMatrix::zeros(n, n);
        for j in 0..n {
            let step = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += step;
            xm[j] -= step;
            let ep = self.eval(&xp)?;
            let em = self.eval(&xm)?;
            let col =
                (self.lagrangian_gradient(&ep, lam, mu) - self.lagrangian_gradient(&em, lam, mu))
                    / (2.0 * step);
            hess.column_mut(j).copy_from(&col);
        }
        // Symmetrize away finite-difference noise.
        let ht = hess.transpose();
        Ok((hess + ht) * 0.5)
    }
}

/// Solves the problem starting from `x0` (projected strictly inside the
/// bounds if it is not already).
pub fn solve(
    problem: &NlpProblem,
    x0: &[f64],
    options: &NlpOptions,
) -> Result<NlpSolution, NlpError> {
    let n = problem.n;
    if x0.len() != n {
        return Err(NlpError::Dimension(format!(
            "start point has {} entries for {n} variables",
            x0.len()
        )));
    }
    if problem.bounds.len() != n {
        return Err(NlpError::Dimension(format!(
            "bounds list has {} entries for {n} variables",
            problem.bounds.len()
        )));
    }
    for (i, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if lo > hi {
            return Err(NlpError::Dimension(format!(
                "variable {i} has lower bound {lo} above upper bound {hi}"
            )));
        }
    }

    let mut fixed = Vec::new();
    let mut lo_rows = Vec::new();
    let mut hi_rows = Vec::new();
    for (i, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if hi - lo <= FIXED_EPS {
            fixed.push((i, 0.5 * (lo + hi)));
        } else {
            if lo.is_finite() {
                lo_rows.push(i);
            }
            if hi.is_finite() {
                hi_rows.push(i);
            }
        }
    }

    // Start strictly inside the box.
    let mut x = DVector::from_column_slice(x0);
    for (i, &(lo, hi)) in problem.bounds.iter().enumerate() {
        if hi - lo <= FIXED_EPS {
            x[i] = 0.5 * (lo + hi);
            continue;
        }
        let margin = if lo.is_finite() && hi.is_finite() {
            1e-4 * (hi - lo)
        } else {
            1e-4 * (1.0 + x[i].abs())
        };
        if lo.is_finite() && x[i] < lo + margin {
            x[i] = lo + margin;
        }
        if hi.is_finite() && x[i] > hi - margin {
            x[i] = hi - margin;
        }
    }

    let (_, df0) = (problem.objective)(x.as_slice());
    if df0.len() != n {
        return Err(NlpError::Dimension(format!(
            "objective gradient has {} entries for {n} variables",
            df0.len()
        )));
    }
    let scale = df0.iter().fold(1.0f64, |acc, d| acc.max(d.abs()));

    let form = InternalForm { problem, scale, fixed, lo_rows, hi_rows };
    let neq = form.n_eq();
    let niq = form.n_ineq();

    let mut evals = form.eval(&x)?;
    let mut lam = DVector::<f64>::zeros(neq);
    let mut gamma = 1.0;
    // Bound rows keep their slack equal to the true distance from the bound,
    // so the barrier acts on x directly and the Newton direction bends away
    // from the box edge; general nonlinear rows get the usual elastic slack
    // that tolerates transient violation.
    let snap_bound_slacks = |x: &DVector<f64>, z: &mut DVector<f64>| {
        let mut r = problem.n_ineq;
        for &i in &form.lo_rows {
            z[r] = (x[i] - problem.bounds[i].0).max(1e-12);
            r += 1;
        }
        for &i in &form.hi_rows {
            z[r] = (problem.bounds[i].1 - x[i]).max(1e-12);
            r += 1;
        }
    };
    let mut z = DVector::from_fn(niq, |i, _| (-evals.h[i]).max(Z0));
    snap_bound_slacks(&x, &mut z);
    let mut mu = DVector::from_fn(niq, |i, _| (gamma / z[i]).max(Z0));

    let mut barrier_history = Vec::new();
    let mut f_prev = evals.f;
    let mut nu_merit = 1.0f64;

    // Best iterate seen, for max_iter returns: feasible ones ranked by
    // objective, infeasible ones by violation.
    let mut best: Option<(f64, f64, DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> = None;
    let mut status = NlpStatus::MaxIter;
    let mut iterations = options.max_iter;

    for iter in 0..=options.max_iter {
        let lx = form.lagrangian_gradient(&evals, &lam, &mu);
        let feas_abs = inf_norm(&evals.g).max(evals.h.iter().fold(0.0f64, |a, &v| a.max(v)));
        let dual_norm = inf_norm(&lam).max(inf_norm(&mu));
        let gradcond = inf_norm(&lx) / (1.0 + dual_norm);
        let compcond = if niq == 0 { 0.0 } else { z.dot(&mu) / (1.0 + inf_norm(&x)) };
        let costcond = (evals.f - f_prev).abs() / (1.0 + f_prev.abs());
        f_prev = evals.f;

        let rank = if feas_abs <= options.feas_tol { (0.0, evals.f) } else { (1.0, feas_abs) };
        if best.as_ref().map_or(true, |b| rank < (b.0, b.1)) {
            best = Some((rank.0, rank.1, x.clone(), lam.clone(), mu.clone(), z.clone()));
        }

        log::trace!(
            "it {iter:3} f {:12.4e} feas {:9.3e} dual {:9.3e} grad {:9.3e} comp {:9.3e} gamma {:9.3e}",
            evals.f,
            feas_abs,
            dual_norm,
            gradcond,
            compcond,
            gamma
        );

        if feas_abs <= options.feas_tol
            && gradcond <= options.kkt_tol
            && compcond <= options.kkt_tol
            && (iter > 0 && costcond <= options.kkt_tol)
        {
            status = NlpStatus::Optimal;
            iterations = iter;
            break;
        }
        let stalled = gradcond <= options.kkt_tol
            && compcond <= options.kkt_tol
            && iter > 0
            && costcond <= options.kkt_tol;
        if feas_abs > 10.0 * options.feas_tol && (stalled || dual_norm > 1e10) {
            status = NlpStatus::InfeasibleDetected;
            iterations = iter;
            break;
        }
        if iter == options.max_iter {
            break;
        }

        // Condensed Newton system.
        let hess = form.lagrangian_hessian(&x, &lam, &mu)?;
        let mut m = hess;
        let mut big_n = lx.clone();
        if niq > 0 {
            let zi_mu = DVector::from_fn(niq, |i, _| mu[i] / z[i]);
            let weighted = DMatrix::from_fn(niq, n, |r, c| evals.dh[(r, c)] * zi_mu[r]);
            m += evals.dh.transpose() * weighted;
            let rhs_h = DVector::from_fn(niq, |i, _| (mu[i] * evals.h[i] + gamma) / z[i]);
            big_n += evals.dh.transpose() * rhs_h;
        }

        let dim = n + neq;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&m);
        if neq > 0 {
            kkt.view_mut((0, n), (n, neq)).copy_from(&evals.dg.transpose());
            kkt.view_mut((n, 0), (neq, n)).copy_from(&evals.dg);
        }
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            rhs[i] = -big_n[i];
        }
        for r in 0..neq {
            rhs[n + r] = -evals.g[r];
        }

        // Regularize if the KKT matrix is singular.
        let mut step = None;
        let mut tau = 0.0;
        for _ in 0..8 {
            let mut sys = kkt.clone();
            if tau > 0.0 {
                for i in 0..n {
                    sys[(i, i)] += tau;
                }
                for r in 0..neq {
                    sys[(n + r, n + r)] -= tau;
                }
            }
            if let Some(sol) = sys.lu().solve(&rhs) {
                if sol.iter().all(|v| v.is_finite()) {
                    step = Some(sol);
                    break;
                }
            }
            tau = if tau == 0.0 { 1e-8 } else { tau * 100.0 };
        }
        let Some(step) = step else {
            // Hopelessly singular; report the best point seen.
            iterations = iter;
            break;
        };

        let dx = DVector::from_fn(n, |i, _| step[i]);
        let dlam = DVector::from_fn(neq, |r, _| step[n + r]);
        let dz = if niq > 0 {
            -&evals.h - &z - &evals.dh * &dx
        } else {
            DVector::zeros(0)
        };
        let dmu = DVector::from_fn(niq, |i, _| -mu[i] + (gamma - mu[i] * dz[i]) / z[i]);

        let mut alpha_p = 1.0f64;
        for i in 0..niq {
            if dz[i] < 0.0 {
                alpha_p = alpha_p.min(XI * (-z[i] / dz[i]));
            }
        }
        // Keep x strictly inside its box: slack rows tolerate transient
        // violation of the nonlinear inequalities, but letting the iterate
        // leave the variable bounds walks it into regions where the model
        // callbacks are meaningless (collapsed voltages and the like) and the
        // Newton system degenerates.
        for &i in &form.lo_rows {
            if dx[i] < 0.0 {
                let room = x[i] - problem.bounds[i].0;
                if room > 0.0 {
                    alpha_p = alpha_p.min(XI * room / -dx[i]);
                }
            }
        }
        for &i in &form.hi_rows {
            if dx[i] > 0.0 {
                let room = problem.bounds[i].1 - x[i];
                if room > 0.0 {
                    alpha_p = alpha_p.min(XI * room / dx[i]);
                }
            }
        }
        let mut alpha_d = 1.0f64;
        for i in 0..niq {
            if dmu[i] < 0.0 {
                alpha_d = alpha_d.min(XI * (-mu[i] / dmu[i]));
            }
        }

        // Loose ℓ1-merit backtracking: reject only egregious increases.
        nu_merit = nu_merit.max(1.1 * dual_norm);
        let merit = |e: &Evals| -> f64 {
            let infeas: f64 = e.g.iter().map(|v| v.abs()).sum::<f64>()
                + e.h.iter().map(|v| v.max(0.0)).sum::<f64>();
            e.f + nu_merit * infeas
        };
        let merit_0 = merit(&evals);
        let threshold = merit_0 + 1e-3 * (1.0 + merit_0.abs());
        let mut trial_x = &x + &dx * alpha_p;
        let mut trial = form.eval(&trial_x)?;
        let mut halvings = 0;
        while merit(&trial) > threshold && halvings < 6 {
            alpha_p *= 0.5;
            halvings += 1;
            trial_x = &x + &dx * alpha_p;
            trial = form.eval(&trial_x)?;
        }

        log::trace!(
            "        ap {alpha_p:7.1e} ad {alpha_d:7.1e} tau {tau:7.1e} halv {halvings} |dx| {:9.3e}",
            inf_norm(&dx)
        );

        x = trial_x;
        evals = trial;
        z += dz * alpha_p;
        snap_bound_slacks(&x, &mut z);
        lam += dlam * alpha_d;
        mu += dmu * alpha_d;

        if niq > 0 {
            gamma = (SIGMA * z.dot(&mu) / niq as f64).min(0.95 * gamma);
            barrier_history.push(gamma);
        }
    }

    // For budget-exhausted runs, fall back to the best iterate recorded.
    if status == NlpStatus::MaxIter {
        if let Some((_, _, bx, blam, bmu, bz)) = best {
            x = bx;
            lam = blam;
            mu = bmu;
            z = bz;
        }
    }

    // Recompute every reported residual from fresh callback evaluations.
    let evals = form.eval(&x)?;
    let lx = form.lagrangian_gradient(&evals, &lam, &mu);
    let dual_norm = inf_norm(&lam).max(inf_norm(&mu));
    let stationarity = inf_norm(&lx) / (1.0 + dual_norm);
    let complementarity = if niq == 0 { 0.0 } else { z.dot(&mu) / (1.0 + inf_norm(&x)) };
    let eq_violation = inf_norm(&evals.g);
    let ineq_violation = evals.h.iter().fold(0.0f64, |a, &v| a.max(v));

    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for (k, &(i, _)) in form.fixed.iter().enumerate() {
        lower[i] = lam[problem.n_eq + k] * scale;
    }
    for (r, &i) in form.lo_rows.iter().enumerate() {
        lower[i] = mu[problem.n_ineq + r] * scale;
    }
    for (r, &i) in form.hi_rows.iter().enumerate() {
        upper[i] = mu[problem.n_ineq + form.lo_rows.len() + r] * scale;
    }

    Ok(NlpSolution {
        objective_value: evals.f * scale,
        x: x.as_slice().to_vec(),
        kkt_residual: stationarity.max(complementarity),
        eq_violation,
        ineq_violation,
        status,
        iterations,
        multipliers: NlpMultipliers {
            eq: lam.iter().take(problem.n_eq).map(|v| v * scale).collect(),
            ineq: mu.iter().take(problem.n_ineq).map(|v| v * scale).collect(),
            lower,
            upper,
        },
        barrier_history,
    })
}

/// Compares the analytic gradient and constraint Jacobians against central
/// finite differences at `x` and returns the worst relative discrepancy.
pub fn check_derivatives(problem: &NlpProblem, x: &[f64]) -> f64 {
    let n = problem.n;
    let mut worst = 0.0f64;
    let rel = |analytic: f64, fd: f64| (analytic - fd).abs() / (1.0 + fd.abs());

    let (_, df) = (problem.objective)(x);
    for i in 0..n {
        let step = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += step;
        xm[i] -= step;
        let (fp, _) = (problem.objective)(&xp);
        let (fm, _) = (problem.objective)(&xm);
        worst = worst.max(rel(df[i], (fp - fm) / (2.0 * step)));
    }

    let mut check_block = |f: &ConstraintFn, rows: usize| {
        let (_, jac) = f(x);
        for i in 0..n {
            let step = 1e-6 * (1.0 + x[i].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let (vp, _) = f(&xp);
            let (vm, _) = f(&xm);
            for r in 0..rows {
                worst = worst.max(rel(jac[(r, i)], (vp[r] - vm[r]) / (2.0 * step)));
            }
        }
    };
    if let Some(eq) = &problem.eq_constraints {
        check_block(eq, problem.n_eq);
    }
    if let Some(ineq) = &problem.ineq_constraints {
        check_block(ineq, problem.n_ineq);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unconstrained(n: usize, objective: ObjectiveFn) -> NlpProblem {
        NlpProblem {
            n,
            objective,
            n_eq: 0,
            eq_constraints: None,
            n_ineq: 0,
            ineq_constraints: None,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            lagrangian_hessian: None,
        }
    }

    #[test]
    fn bound_constrained_quadratic_stops_at_the_bound() {
        let mut problem =
            unconstrained(1, Box::new(|x| (x[0] * x[0], vec![2.0 * x[0]])));
        problem.bounds = vec![(1.0, f64::INFINITY)];
        let sol = solve(&problem, &[3.0], &NlpOptions::default()).unwrap();
        assert_eq!(sol.status, NlpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.objective_value, 1.0, epsilon = 1e-6);
        // The bound is active with multiplier 2 (= d/dx x² at 1).
        assert_abs_diff_eq!(sol.multipliers.lower[0], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn equality_constrained_quadratic_matches_projection() {
        // min (x−2)² + (y−1)² s.t. x + y = 1: the optimum is the Euclidean
        // projection of (2, 1) onto the line, namely (1, 0) with objective 2
        // and equality multiplier 2 in the sign convention of the docs.
        let problem = NlpProblem {
            n: 2,
            objective: Box::new(|x| {
                let f = (x[0] - 2.0).powi(2) + (x[1] - 1.0).powi(2);
                (f, vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 1.0)])
            }),
            n_eq: 1,
            eq_constraints: Some(Box::new(|x| {
                (vec![x[0] + x[1] - 1.0], DMatrix::from_row_slice(1, 2, &[1.0, 1.0]))
            })),
            n_ineq: 0,
            ineq_constraints: None,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); 2],
            lagrangian_hessian: None,
        };
        let sol = solve(&problem, &[0.0, 0.0], &NlpOptions::default()).unwrap();
        assert_eq!(sol.status, NlpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.objective_value, 2.0, epsilon = 1e-8);
        assert!(sol.eq_violation <= 1e-8);
    }

    #[test]
    fn rosenbrock_reaches_the_known_minimizer() {
        let problem = unconstrained(
            2,
            Box::new(|x| {
                let f = (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
                let g = vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ];
                (f, g)
            }),
        );
        let sol = solve(&problem, &[-1.2, 1.0], &NlpOptions::default()).unwrap();
        assert_eq!(sol.status, NlpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-5);
    }

    /// min ½‖x‖² s.t. x₁ + x₂ ≥ 1: analytic solution (½, ½) with an active
    /// inequality whose multiplier is ½.
    fn inequality_qp() -> NlpProblem {
        NlpProblem {
            n: 2,
            objective: Box::new(|x| {
                (0.5 * (x[0] * x[0] + x[1] * x[1]), vec![x[0], x[1]])
            }),
            n_eq: 0,
            eq_constraints: None,
            n_ineq: 1,
            ineq_constraints: Some(Box::new(|x| {
                (vec![x[0] + x[1] - 1.0], DMatrix::from_row_slice(1, 2, &[1.0, 1.0]))
            })),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); 2],
            lagrangian_hessian: None,
        }
    }

    #[test]
    fn inequality_qp_matches_analytic_kkt_point() {
        let sol = solve(&inequality_qp(), &[2.0, -1.0], &NlpOptions::default()).unwrap();
        assert_eq!(sol.status, NlpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.multipliers.ineq[0], 0.5, epsilon = 1e-4);
        assert!(sol.kkt_residual <= 1e-6);
        assert!(sol.ineq_violation <= 1e-6);
    }

    #[test]
    fn reported_residuals_match_an_independent_recomputation() {
        let problem = inequality_qp();
        let sol = solve(&problem, &[2.0, -1.0], &NlpOptions::default()).unwrap();
        // Stationarity in the documented sign convention:
        // ∇f + Jgᵀ·eq − Jhᵀ·ineq − lower + upper.
        let x = &sol.x;
        let grad = [x[0], x[1]];
        let nu = sol.multipliers.ineq[0];
        let st = [(grad[0] - nu).abs(), (grad[1] - nu).abs()];
        let stationarity = st[0].max(st[1]);
        assert!(
            stationarity <= 1e-5,
            "multipliers fail stationarity: residual {stationarity}"
        );
        // And the violations are recomputable from x alone.
        let h = x[0] + x[1] - 1.0;
        assert_abs_diff_eq!(sol.ineq_violation, (-h).max(0.0), epsilon = 1e-12);
    }

    #[test]
    fn barrier_parameter_decreases_strictly() {
        let sol = solve(&inequality_qp(), &[2.0, -1.0], &NlpOptions::default()).unwrap();
        assert!(sol.barrier_history.len() >= 2);
        for w in sol.barrier_history.windows(2) {
            assert!(w[1] < w[0], "barrier went from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn start_point_outside_bounds_is_projected() {
        let mut problem =
            unconstrained(1, Box::new(|x| ((x[0] - 5.0).powi(2), vec![2.0 * (x[0] - 5.0)])));
        problem.bounds = vec![(0.0, 1.0)];
        let sol = solve(&problem, &[42.0], &NlpOptions::default()).unwrap();
        assert_eq!(sol.status, NlpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn pinned_variable_is_held_exactly() {
        let mut problem = unconstrained(2, Box::new(|x| {
            (x[0] * x[0] + x[1] * x[1], vec![2.0 * x[0], 2.0 * x[1]])
        }));
        problem.bounds = vec![(2.0, 2.0), (f64::NEG_INFINITY, f64::INFINITY)];
        let sol = solve(&problem, &[0.5, 0.5], &NlpOptions::default()).unwrap();
        assert_eq!(sol.status, NlpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.objective_value, 4.0, epsilon = 1e-6);
    }

    #[test]
    fn conflicting_constraints_do_not_report_optimal() {
        // x ≥ 1 via the bound, x ≤ 0 via the inequality: empty feasible set.
        let problem = NlpProblem {
            n: 1,
            objective: Box::new(|x| (x[0], vec![1.0])),
            n_eq: 0,
            eq_constraints: None,
            n_ineq: 1,
            ineq_constraints: Some(Box::new(|x| {
                (vec![-x[0]], DMatrix::from_row_slice(1, 1, &[-1.0]))
            })),
            bounds: vec![(1.0, f64::INFINITY)],
            lagrangian_hessian: None,
        };
        let sol = solve(&problem, &[0.5], &NlpOptions::default()).unwrap();
        assert_ne!(sol.status, NlpStatus::Optimal);
        assert!(
            sol.eq_violation.max(sol.ineq_violation) > 1e-3,
            "an infeasible problem cannot end feasible"
        );
    }

    #[test]
    fn iteration_budget_returns_max_iter_with_best_iterate() {
        let problem = unconstrained(
            2,
            Box::new(|x| {
                let f = (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
                let g = vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ];
                (f, g)
            }),
        );
        let options = NlpOptions { max_iter: 2, ..Default::default() };
        let sol = solve(&problem, &[-1.2, 1.0], &options).unwrap();
        assert_eq!(sol.status, NlpStatus::MaxIter);
        assert!(sol.x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn derivative_check_accepts_exact_derivatives() {
        let problem = NlpProblem {
            n: 2,
            objective: Box::new(|x| (3.0 * x[0] - 2.0 * x[1], vec![3.0, -2.0])),
            n_eq: 1,
            eq_constraints: Some(Box::new(|_| {
                (vec![5.0], DMatrix::zeros(1, 2)) // constant row
            })),
            n_ineq: 0,
            ineq_constraints: None,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); 2],
            lagrangian_hessian: None,
        };
        let err = check_derivatives(&problem, &[0.3, -0.7]);
        assert!(err <= 1e-10, "exact derivatives flagged with error {err}");
    }

    #[test]
    fn derivative_check_flags_a_wrong_gradient() {
        let problem = unconstrained(1, Box::new(|x| (x[0] * x[0], vec![3.0 * x[0]])));
        let err = check_derivatives(&problem, &[1.0]);
        assert!(err > 0.1, "wrong gradient slipped through with error {err}");
    }
}
