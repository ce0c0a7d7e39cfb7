//! AC power-flow equations and a Newton-Raphson solver.
//!
//! This module owns the nodal injection functions
//!
//! ```text
//! P_i(V, θ) = V_i Σ_j V_j (G_ij cos θ_ij + B_ij sin θ_ij)
//! Q_i(V, θ) = V_i Σ_j V_j (G_ij sin θ_ij − B_ij cos θ_ij)
//! ```
//!
//! together with their first and second derivatives, which every optimization
//! problem in the crate shares, and [`solve_powerflow`], a conventional
//! Newton-Raphson PQ/PV/slack solver used to replay load scenarios against a
//! fixed dispatch.
//!
//! Derivatives are computed in complex form: with `U_i = V_i e^{jθ_i}` and
//! `S = diag(U) conj(Y U)`, the injection vector is `P + jQ = S`, and the
//! formulas below are entrywise expansions of `∂S/∂V`, `∂S/∂θ`, and the
//! Hessian of `wᵀS` for a fixed weight vector — considerably less error-prone
//! than differentiating the trigonometric form term by term.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{build_admittance, AdmittanceMatrix, NetworkCase};

/// Newton-Raphson mismatch tolerance, p.u.
pub const PF_TOLERANCE: f64 = 1e-8;
/// Newton-Raphson iteration cap.
pub const PF_MAX_ITER: usize = 30;

/// Errors from power-flow evaluation and solving.
#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("power-flow setup: {0}")]
    Setup(String),
    #[error("power flow did not converge in {iterations} iterations (max mismatch {max_mismatch:.3e} p.u.)")]
    Nonconvergence { iterations: usize, max_mismatch: f64 },
    #[error("singular power-flow Jacobian at iteration {0}")]
    SingularJacobian(usize),
}

/// A voltage profile: magnitude and angle per bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Voltage magnitude per bus, p.u. (positive).
    pub v: Vec<f64>,
    /// Voltage angle per bus, radians.
    pub theta: Vec<f64>,
}

/// Result of a converged power-flow solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PfSolution {
    pub point: OperatingPoint,
    /// Active power produced at the slack bus, MW.
    pub slack_p: f64,
    /// Reactive power produced at the slack bus, MVar.
    pub slack_q: f64,
    /// Reactive power produced at each regulated (PV) bus, MVar, by bus id.
    pub gen_q: BTreeMap<usize, f64>,
    pub iterations: usize,
    /// Largest remaining mismatch, p.u.
    pub max_mismatch: f64,
}

/// Regulated quantities at one generator bus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvSetpoint {
    /// Scheduled active injection, MW.
    pub p_mw: f64,
    /// Regulated voltage magnitude, p.u.
    pub v_pu: f64,
}

/// Dispatch data driving a power-flow solve: the slack-bus voltage plus one
/// setpoint per non-slack generator bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfSetpoints {
    /// Slack bus voltage magnitude, p.u.
    pub slack_v: f64,
    /// Setpoints keyed by bus id; must cover every non-slack generator bus.
    pub pv: BTreeMap<usize, PvSetpoint>,
}

/// Nodal injections in MW / MVar at an operating point.
pub fn injections(
    point: &OperatingPoint,
    y: &AdmittanceMatrix,
    base_mva: f64,
) -> Result<(Vec<f64>, Vec<f64>), PowerFlowError> {
    let n = y.n();
    if point.v.len() != n || point.theta.len() != n {
        return Err(PowerFlowError::Dimension(format!(
            "operating point has {}/{} entries for a {n}-bus admittance matrix",
            point.v.len(),
            point.theta.len()
        )));
    }
    let (p, q) = injections_pu(&point.v, &point.theta, y);
    Ok((
        p.iter().map(|x| x * base_mva).collect(),
        q.iter().map(|x| x * base_mva).collect(),
    ))
}

/// Per-unit nodal injections; the shared core of every formulation.
pub fn injections_pu(v: &[f64], theta: &[f64], y: &AdmittanceMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = y.n();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut pi = 0.0;
        let mut qi = 0.0;
        for j in 0..n {
            let g = y.g[(i, j)];
            let b = y.b[(i, j)];
            if g == 0.0 && b == 0.0 {
                continue;
            }
            let th = theta[i] - theta[j];
            let (sin, cos) = th.sin_cos();
            pi += v[j] * (g * cos + b * sin);
            qi += v[j] * (g * sin - b * cos);
        }
        p[i] = v[i] * pi;
        q[i] = v[i] * qi;
    }
    (p, q)
}

/// Dense first derivatives of the per-unit injections.
///
/// Block `(i, k)` holds `∂P_i/∂V_k` etc.; all four blocks are `n×n` with no
/// slack or PV reduction applied.
#[derive(Clone, Debug)]
pub struct InjectionJacobian {
    pub dp_dv: DMatrix<f64>,
    pub dp_dth: DMatrix<f64>,
    pub dq_dv: DMatrix<f64>,
    pub dq_dth: DMatrix<f64>,
}

/// First derivatives of the per-unit injections at `(v, θ)`.
///
/// Entrywise: with `E_k = e^{jθ_k}` and `I = Y U`,
/// `∂S_i/∂V_k = U_i conj(Y_ik E_k) + δ_ik conj(I_i) E_i` and
/// `∂S_i/∂θ_k = j U_i (δ_ik conj(I_i) − conj(Y_ik U_k))`.
pub fn injection_jacobian(v: &[f64], theta: &[f64], y: &AdmittanceMatrix) -> InjectionJacobian {
    let n = y.n();
    let u: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(v[i], theta[i])).collect();
    let e: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, theta[i])).collect();
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        for j in 0..n {
            current[i] += y.y(i, j) * u[j];
        }
    }

    let mut dp_dv = DMatrix::zeros(n, n);
    let mut dp_dth = DMatrix::zeros(n, n);
    let mut dq_dv = DMatrix::zeros(n, n);
    let mut dq_dth = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let mut ds_dv = u[i] * (y.y(i, k) * e[k]).conj();
            let mut ds_dth = -u[i] * (y.y(i, k) * u[k]).conj();
            if i == k {
                ds_dv += current[i].conj() * e[i];
                ds_dth += u[i] * current[i].conj();
            }
            ds_dth *= Complex64::i();
            dp_dv[(i, k)] = ds_dv.re;
            dq_dv[(i, k)] = ds_dv.im;
            dp_dth[(i, k)] = ds_dth.re;
            dq_dth[(i, k)] = ds_dth.im;
        }
    }
    InjectionJacobian { dp_dv, dp_dth, dq_dv, dq_dth }
}

/// Second derivatives of a weighted injection sum.
///
/// Blocks of the Hessian of `Σ_i (wp_i P_i + wq_i Q_i)` with respect to
/// `(V, θ)`: `h_vv[(a, b)] = ∂²/∂V_a∂V_b`, `h_vt[(a, b)] = ∂²/∂V_a∂θ_b`,
/// `h_tt[(a, b)] = ∂²/∂θ_a∂θ_b`. The full matrix `[[h_vv, h_vt], [h_vtᵀ,
/// h_tt]]` is symmetric.
#[derive(Clone, Debug)]
pub struct InjectionHessian {
    pub h_vv: DMatrix<f64>,
    pub h_vt: DMatrix<f64>,
    pub h_tt: DMatrix<f64>,
}

/// Hessian of `wpᵀP + wqᵀQ` at `(v, θ)`.
///
/// Writing `w = wp − j·wq`, the target is `Re(Σ_i w_i S_i)`, a sum of terms
/// `f_ab = w_a conj(Y_ab) U_a conj(U_b)`, each an explicit function of
/// `(V_a, V_b, θ_a − θ_b)`; the blocks below are its exact second partials.
pub fn weighted_injection_hessian(
    v: &[f64],
    theta: &[f64],
    y: &AdmittanceMatrix,
    wp: &[f64],
    wq: &[f64],
) -> InjectionHessian {
    let n = y.n();
    let u: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(v[i], theta[i])).collect();
    let e: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, theta[i])).collect();
    let w: Vec<Complex64> = (0..n).map(|i| Complex64::new(wp[i], -wq[i])).collect();

    // t[a*n+b] = w_a conj(Y_ab); f = t_ab U_a conj(U_b).
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    let mut f = vec![Complex64::new(0.0, 0.0); n * n];
    let mut row_ex = vec![Complex64::new(0.0, 0.0); n]; // Σ_{j≠a} f_aj
    let mut col_ex = vec![Complex64::new(0.0, 0.0); n]; // Σ_{i≠a} f_ia
    for a in 0..n {
        for b in 0..n {
            let tab = w[a] * y.y(a, b).conj();
            let fab = tab * u[a] * u[b].conj();
            t[a * n + b] = tab;
            f[a * n + b] = fab;
            if a != b {
                row_ex[a] += fab;
                col_ex[b] += fab;
            }
        }
    }

    let mut h_vv = DMatrix::zeros(n, n);
    let mut h_vt = DMatrix::zeros(n, n);
    let mut h_tt = DMatrix::zeros(n, n);
    let i_unit = Complex64::i();
    for a in 0..n {
        for b in 0..n {
            if a == b {
                h_vv[(a, a)] = 2.0 * t[a * n + a].re;
                h_tt[(a, a)] = (-row_ex[a] - col_ex[a]).re;
                h_vt[(a, a)] = (i_unit * (row_ex[a] - col_ex[a])).re / v[a];
            } else {
                let fab = f[a * n + b];
                let fba = f[b * n + a];
                h_vv[(a, b)] =
                    (t[a * n + b] * e[a] * e[b].conj() + t[b * n + a] * e[a].conj() * e[b]).re;
                h_tt[(a, b)] = (fab + fba).re;
                h_vt[(a, b)] = (i_unit * (fba - fab)).re / v[a];
            }
        }
    }
    InjectionHessian { h_vv, h_vt, h_tt }
}

/// Solves the conventional power-flow problem by Newton-Raphson.
///
/// Unknowns are the angles at every non-slack bus and the voltage magnitudes
/// at buses without a setpoint; the slack bus and the setpoint buses hold
/// their voltages. Loads are given per bus in dense index order (MW and
/// MVar). Generator reactive limits are deliberately not enforced — no
/// PV→PQ switching — so the solve is deterministic in its inputs and the
/// slack active power is directly comparable across scenarios.
///
/// Starts flat (angles at zero, unregulated magnitudes at 1.0) and iterates
/// to a mismatch of [`PF_TOLERANCE`] p.u. within [`PF_MAX_ITER`] iterations.
pub fn solve_powerflow(
    case: &NetworkCase,
    setpoints: &PfSetpoints,
    p_load_mw: &[f64],
    q_load_mvar: &[f64],
) -> Result<PfSolution, PowerFlowError> {
    let n = case.n_buses();
    if p_load_mw.len() != n || q_load_mvar.len() != n {
        return Err(PowerFlowError::Dimension(format!(
            "load vectors have {}/{} entries for a {n}-bus case",
            p_load_mw.len(),
            q_load_mvar.len()
        )));
    }
    let y = build_admittance(case).map_err(|e| PowerFlowError::Setup(e.to_string()))?;
    let slack = case.slack_index();
    let index = case.bus_index_map();

    let mut pv_at = vec![None; n];
    for (&bus_id, sp) in &setpoints.pv {
        let i = *index.get(&bus_id).ok_or_else(|| {
            PowerFlowError::Setup(format!("setpoint references unknown bus {bus_id}"))
        })?;
        if i == slack {
            return Err(PowerFlowError::Setup(
                "the slack bus is regulated by slack_v, not a PV setpoint".into(),
            ));
        }
        pv_at[i] = Some(*sp);
    }
    for gen in &case.generators {
        let i = index[&gen.bus_id];
        if i != slack && pv_at[i].is_none() {
            return Err(PowerFlowError::Setup(format!(
                "no setpoint for generator bus {}",
                gen.bus_id
            )));
        }
    }

    // Scheduled per-unit injections: generation minus load.
    let base = case.base_mva;
    let p_sched: Vec<f64> = (0..n)
        .map(|i| (pv_at[i].map_or(0.0, |sp| sp.p_mw) - p_load_mw[i]) / base)
        .collect();
    let q_sched: Vec<f64> = (0..n).map(|i| -q_load_mvar[i] / base).collect();

    let th_idx: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let v_idx: Vec<usize> = (0..n).filter(|&i| i != slack && pv_at[i].is_none()).collect();
    let m = th_idx.len() + v_idx.len();

    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            if i == slack {
                setpoints.slack_v
            } else {
                pv_at[i].map_or(1.0, |sp| sp.v_pu)
            }
        })
        .collect();
    let mut theta = vec![0.0; n];

    let mut max_mismatch = f64::INFINITY;
    for iter in 0..=PF_MAX_ITER {
        let (p, q) = injections_pu(&v, &theta, &y);
        let mut residual = DVector::<f64>::zeros(m);
        for (r, &i) in th_idx.iter().enumerate() {
            residual[r] = p[i] - p_sched[i];
        }
        for (r, &i) in v_idx.iter().enumerate() {
            residual[th_idx.len() + r] = q[i] - q_sched[i];
        }
        max_mismatch = residual.amax();

        if max_mismatch <= PF_TOLERANCE {
            let slack_p = p[slack] * base + p_load_mw[slack];
            let slack_q = q[slack] * base + q_load_mvar[slack];
            let mut gen_q = BTreeMap::new();
            for (i, sp) in pv_at.iter().enumerate() {
                if sp.is_some() {
                    gen_q.insert(case.buses[i].id, q[i] * base + q_load_mvar[i]);
                }
            }
            return Ok(PfSolution {
                point: OperatingPoint { v, theta },
                slack_p,
                slack_q,
                gen_q,
                iterations: iter,
                max_mismatch,
            });
        }
        if iter == PF_MAX_ITER {
            break;
        }

        let jac = injection_jacobian(&v, &theta, &y);
        let mut j = DMatrix::<f64>::zeros(m, m);
        for (r, &i) in th_idx.iter().enumerate() {
            for (c, &k) in th_idx.iter().enumerate() {
                j[(r, c)] = jac.dp_dth[(i, k)];
            }
            for (c, &k) in v_idx.iter().enumerate() {
                j[(r, th_idx.len() + c)] = jac.dp_dv[(i, k)];
            }
        }
        for (r, &i) in v_idx.iter().enumerate() {
            for (c, &k) in th_idx.iter().enumerate() {
                j[(th_idx.len() + r, c)] = jac.dq_dth[(i, k)];
            }
            for (c, &k) in v_idx.iter().enumerate() {
                j[(th_idx.len() + r, th_idx.len() + c)] = jac.dq_dv[(i, k)];
            }
        }

        let step = j
            .lu()
            .solve(&residual)
            .ok_or(PowerFlowError::SingularJacobian(iter))?;
        for (r, &i) in th_idx.iter().enumerate() {
            theta[i] -= step[r];
        }
        for (r, &i) in v_idx.iter().enumerate() {
            v[i] -= step[th_idx.len() + r];
        }
    }

    Err(PowerFlowError::Nonconvergence { iterations: PF_MAX_ITER, max_mismatch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;
    use approx::assert_abs_diff_eq;

    const CASE14: &str = include_str!("../data/case14.m");
    const CASE2: &str = include_str!("../data/case2.m");

    fn pure_reactance_y() -> AdmittanceMatrix {
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 0)] = -10.0;
        b[(1, 1)] = -10.0;
        b[(0, 1)] = 10.0;
        b[(1, 0)] = 10.0;
        AdmittanceMatrix { g: DMatrix::zeros(2, 2), b }
    }

    #[test]
    fn hand_checked_two_bus_injection() {
        let y = pure_reactance_y();
        let point = OperatingPoint { v: vec![1.0, 1.0], theta: vec![0.1, 0.0] };
        let (p, q) = injections(&point, &y, 100.0).unwrap();
        assert_abs_diff_eq!(p[0], 100.0 * 10.0 * 0.1f64.sin(), epsilon = 1e-9);
        assert_abs_diff_eq!(p[0], 99.833, epsilon = 1e-3);
        assert_abs_diff_eq!(p[0] + p[1], 0.0, epsilon = 1e-9); // lossless line
        assert!(q[0] > 0.0, "sending end supplies vars, got {}", q[0]);
    }

    #[test]
    fn lossless_network_has_zero_active_injection_at_flat_start() {
        let y = pure_reactance_y();
        let point = OperatingPoint { v: vec![1.0, 1.0], theta: vec![0.0, 0.0] };
        let (p, _) = injections(&point, &y, 100.0).unwrap();
        for pi in p {
            assert_abs_diff_eq!(pi, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_admittance_gives_zero_injections() {
        let y = AdmittanceMatrix { g: DMatrix::zeros(3, 3), b: DMatrix::zeros(3, 3) };
        let point = OperatingPoint { v: vec![1.05, 0.97, 1.0], theta: vec![0.3, -0.2, 0.0] };
        let (p, q) = injections(&point, &y, 100.0).unwrap();
        assert_eq!(p, vec![0.0; 3]);
        assert_eq!(q, vec![0.0; 3]);
    }

    #[test]
    fn injection_dimension_mismatch_is_an_error() {
        let y = pure_reactance_y();
        let point = OperatingPoint { v: vec![1.0], theta: vec![0.0] };
        assert!(matches!(injections(&point, &y, 100.0), Err(PowerFlowError::Dimension(_))));
    }

    /// A deterministic non-flat test point for the 14-bus network.
    fn perturbed_point(n: usize) -> (Vec<f64>, Vec<f64>) {
        let v: Vec<f64> = (0..n).map(|i| 1.0 + 0.05 * ((i as f64 * 0.7).sin())).collect();
        let theta: Vec<f64> = (0..n).map(|i| 0.1 * ((i as f64 * 1.3).cos())).collect();
        (v, theta)
    }

    #[test]
    fn permuting_buses_permutes_injections() {
        let case = parse_case(CASE14).unwrap();
        let y = build_admittance(&case).unwrap();
        let n = case.n_buses();
        let (v, theta) = perturbed_point(n);
        let (p, q) = injections_pu(&v, &theta, &y);

        // Reverse order as the permutation.
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut gp = DMatrix::zeros(n, n);
        let mut bp = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gp[(i, j)] = y.g[(perm[i], perm[j])];
                bp[(i, j)] = y.b[(perm[i], perm[j])];
            }
        }
        let yp = AdmittanceMatrix { g: gp, b: bp };
        let vp: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
        let thp: Vec<f64> = perm.iter().map(|&i| theta[i]).collect();
        let (pp, qp) = injections_pu(&vp, &thp, &yp);
        for i in 0..n {
            assert_abs_diff_eq!(pp[i], p[perm[i]], epsilon = 1e-12);
            assert_abs_diff_eq!(qp[i], q[perm[i]], epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let case = parse_case(CASE14).unwrap();
        let y = build_admittance(&case).unwrap();
        let n = case.n_buses();
        let (v, theta) = perturbed_point(n);
        let jac = injection_jacobian(&v, &theta, &y);

        let h = 1e-6;
        for k in 0..n {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[k] += h;
            vm[k] -= h;
            let (pp, qp) = injections_pu(&vp, &theta, &y);
            let (pm, qm) = injections_pu(&vm, &theta, &y);
            for i in 0..n {
                let fd_p = (pp[i] - pm[i]) / (2.0 * h);
                let fd_q = (qp[i] - qm[i]) / (2.0 * h);
                let scale = 1.0 + fd_p.abs().max(fd_q.abs());
                assert!((jac.dp_dv[(i, k)] - fd_p).abs() / scale < 1e-5, "dp_dv[{i}][{k}]");
                assert!((jac.dq_dv[(i, k)] - fd_q).abs() / scale < 1e-5, "dq_dv[{i}][{k}]");
            }

            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let (pp, qp) = injections_pu(&v, &tp, &y);
            let (pm, qm) = injections_pu(&v, &tm, &y);
            for i in 0..n {
                let fd_p = (pp[i] - pm[i]) / (2.0 * h);
                let fd_q = (qp[i] - qm[i]) / (2.0 * h);
                let scale = 1.0 + fd_p.abs().max(fd_q.abs());
                assert!((jac.dp_dth[(i, k)] - fd_p).abs() / scale < 1e-5, "dp_dth[{i}][{k}]");
                assert!((jac.dq_dth[(i, k)] - fd_q).abs() / scale < 1e-5, "dq_dth[{i}][{k}]");
            }
        }
    }

    #[test]
    fn weighted_hessian_matches_finite_differences_of_gradient() {
        let case = parse_case(CASE14).unwrap();
        let y = build_admittance(&case).unwrap();
        let n = case.n_buses();
        let (v, theta) = perturbed_point(n);
        let wp: Vec<f64> = (0..n).map(|i| 0.5 + (i as f64 * 0.37).sin()).collect();
        let wq: Vec<f64> = (0..n).map(|i| -0.3 + (i as f64 * 0.53).cos()).collect();
        let hess = weighted_injection_hessian(&v, &theta, &y, &wp, &wq);

        // Gradient of wpᵀP + wqᵀQ via the (independently tested) Jacobian.
        let grad = |v: &[f64], theta: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let jac = injection_jacobian(v, theta, &y);
            let gv: Vec<f64> =
                (0..n).map(|k| (0..n).map(|i| wp[i] * jac.dp_dv[(i, k)] + wq[i] * jac.dq_dv[(i, k)]).sum()).collect();
            let gt: Vec<f64> =
                (0..n).map(|k| (0..n).map(|i| wp[i] * jac.dp_dth[(i, k)] + wq[i] * jac.dq_dth[(i, k)]).sum()).collect();
            (gv, gt)
        };

        let h = 1e-6;
        for b in 0..n {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[b] += h;
            vm[b] -= h;
            let (gvp, gtp) = grad(&vp, &theta);
            let (gvm, gtm) = grad(&vm, &theta);
            for a in 0..n {
                let fd_vv = (gvp[a] - gvm[a]) / (2.0 * h);
                let fd_tv = (gtp[a] - gtm[a]) / (2.0 * h);
                let s1 = 1.0 + fd_vv.abs();
                let s2 = 1.0 + fd_tv.abs();
                assert!((hess.h_vv[(a, b)] - fd_vv).abs() / s1 < 1e-5, "h_vv[{a}][{b}]");
                // ∂²/∂θ_a∂V_b is the transpose of the mixed block.
                assert!((hess.h_vt[(b, a)] - fd_tv).abs() / s2 < 1e-5, "h_vt[{b}][{a}]");
            }

            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[b] += h;
            tm[b] -= h;
            let (gvp, gtp) = grad(&v, &tp);
            let (gvm, gtm) = grad(&v, &tm);
            for a in 0..n {
                let fd_vt = (gvp[a] - gvm[a]) / (2.0 * h);
                let fd_tt = (gtp[a] - gtm[a]) / (2.0 * h);
                let s1 = 1.0 + fd_vt.abs();
                let s2 = 1.0 + fd_tt.abs();
                assert!((hess.h_vt[(a, b)] - fd_vt).abs() / s1 < 1e-5, "h_vt[{a}][{b}]");
                assert!((hess.h_tt[(a, b)] - fd_tt).abs() / s2 < 1e-5, "h_tt[{a}][{b}]");
            }
        }
    }

    #[test]
    fn hessian_blocks_are_symmetric() {
        let case = parse_case(CASE14).unwrap();
        let y = build_admittance(&case).unwrap();
        let n = case.n_buses();
        let (v, theta) = perturbed_point(n);
        let wp = vec![1.0; n];
        let wq = vec![0.25; n];
        let hess = weighted_injection_hessian(&v, &theta, &y, &wp, &wq);
        for a in 0..n {
            for b in 0..n {
                assert_abs_diff_eq!(hess.h_vv[(a, b)], hess.h_vv[(b, a)], epsilon = 1e-12);
                assert_abs_diff_eq!(hess.h_tt[(a, b)], hess.h_tt[(b, a)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unloaded_network_solves_flat() {
        let case = parse_case(CASE2).unwrap();
        let setpoints = PfSetpoints { slack_v: 1.0, pv: BTreeMap::new() };
        let sol = solve_powerflow(&case, &setpoints, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(sol.point.v[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.point.v[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.point.theta[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.slack_p, 0.0, epsilon = 1e-9);
        assert_eq!(sol.iterations, 0);
    }

    /// Gauss-Seidel fixed-point iteration on the complex bus equations — an
    /// independent method to cross-check Newton-Raphson.
    fn gauss_seidel_two_bus(case: &NetworkCase, slack_v: f64) -> (f64, f64) {
        let y = build_admittance(case).unwrap();
        let base = case.base_mva;
        let s2 = Complex64::new(-case.buses[1].p_load / base, -case.buses[1].q_load / base);
        let y21 = y.y(1, 0);
        let y22 = y.y(1, 1);
        let v1 = Complex64::new(slack_v, 0.0);
        let mut v2 = Complex64::new(1.0, 0.0);
        for _ in 0..10_000 {
            let next = ((s2 / v2).conj() - y21 * v1) / y22;
            if (next - v2).norm() < 1e-14 {
                v2 = next;
                break;
            }
            v2 = next;
        }
        (v2.norm(), v2.arg())
    }

    #[test]
    fn newton_matches_gauss_seidel_on_two_bus_case() {
        let case = parse_case(CASE2).unwrap();
        let setpoints = PfSetpoints { slack_v: 1.0, pv: BTreeMap::new() };
        let sol = solve_powerflow(&case, &setpoints, &[0.0, 50.0], &[0.0, 10.0]).unwrap();
        let (v2, th2) = gauss_seidel_two_bus(&case, 1.0);
        assert_abs_diff_eq!(sol.point.v[1], v2, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.point.theta[1], th2, epsilon = 1e-8);
        assert!(sol.slack_p > 50.0, "slack must cover load plus losses, got {}", sol.slack_p);
    }

    #[test]
    fn fourteen_bus_flow_converges_with_small_mismatch_and_positive_losses() {
        let case = parse_case(CASE14).unwrap();
        let mut pv = BTreeMap::new();
        for gen in &case.generators {
            if gen.bus_id != 1 {
                pv.insert(gen.bus_id, PvSetpoint { p_mw: if gen.bus_id == 2 { 40.0 } else { 0.0 }, v_pu: 1.02 });
            }
        }
        let setpoints = PfSetpoints { slack_v: 1.05, pv };
        let p: Vec<f64> = case.buses.iter().map(|b| b.p_load).collect();
        let q: Vec<f64> = case.buses.iter().map(|b| b.q_load).collect();
        let sol = solve_powerflow(&case, &setpoints, &p, &q).unwrap();
        assert!(sol.max_mismatch <= PF_TOLERANCE);
        assert!(sol.iterations <= 10, "took {} iterations", sol.iterations);

        // Residual mismatch re-checked through the public injection API.
        let y = build_admittance(&case).unwrap();
        let (pin, _) = injections(&sol.point, &y, case.base_mva).unwrap();
        let total_load: f64 = p.iter().sum();
        let total_gen = sol.slack_p + 40.0;
        let losses: f64 = pin.iter().sum();
        assert!(losses >= 0.0, "network with g ≥ 0 cannot create power, losses {losses}");
        assert_abs_diff_eq!(total_gen - total_load, losses, epsilon = 1e-5);
    }

    #[test]
    fn missing_setpoint_is_a_setup_error() {
        let case = parse_case(CASE14).unwrap();
        let setpoints = PfSetpoints { slack_v: 1.05, pv: BTreeMap::new() };
        let p: Vec<f64> = case.buses.iter().map(|b| b.p_load).collect();
        let q: Vec<f64> = case.buses.iter().map(|b| b.q_load).collect();
        let err = solve_powerflow(&case, &setpoints, &p, &q).unwrap_err();
        assert!(matches!(err, PowerFlowError::Setup(_)), "got {err}");
    }

    #[test]
    fn hopeless_load_reports_nonconvergence() {
        let case = parse_case(CASE2).unwrap();
        let setpoints = PfSetpoints { slack_v: 1.0, pv: BTreeMap::new() };
        // Far beyond the line's transfer capability.
        let err = solve_powerflow(&case, &setpoints, &[0.0, 5000.0], &[0.0, 1000.0]).unwrap_err();
        match err {
            PowerFlowError::Nonconvergence { max_mismatch, .. } => assert!(max_mismatch > 0.0),
            PowerFlowError::SingularJacobian(_) => {} // collapse can also surface here
            other => panic!("expected nonconvergence, got {other}"),
        }
    }
}
