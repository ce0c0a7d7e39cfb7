//! AC optimal power flow problem builders.
//!
//! Three builders produce [`crate::nlp::NlpProblem`] instances over a shared
//! variable layout — voltage magnitudes, voltage angles, generator active
//! and reactive outputs, and (for stochastic problems) per-scenario load
//! shedding:
//!
//! * [`build_standard`] — deterministic ACOPF: quadratic generation cost
//!   subject to active and reactive power balance at every bus and box
//!   bounds on all variables.
//! * [`build_stochastic`] — scenario-based ACOPF: one shared operating
//!   point, reactive balance at base loads, and per-scenario active-power
//!   surplus inequalities in which shedding `ΔP_{i,s}` (priced at `c`
//!   $/MWh, probability-weighted) restores feasibility under high-load
//!   scenarios.
//! * [`build_region_subproblem`] — the per-region problem of the consensus
//!   scheme: the region's slice of either formulation over its own buses
//!   plus the boundary buses, augmented with `λᵀ(x_C − z) + (ρ/2)‖x_C −
//!   z‖²` on its copy of the boundary voltage variables.
//!
//! Internally everything is per-unit on the case MVA base; public inputs
//! and outputs use MW and MVar. Costs are dollars per hour.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{build_admittance, AdmittanceMatrix, CaseError, NetworkCase, RegionPartition};
use crate::nlp::{NlpError, NlpOptions, NlpProblem, NlpSolution};
use crate::powerflow::{
    injection_jacobian, injections, injections_pu, weighted_injection_hessian, OperatingPoint,
};
use crate::scenarios::ScenarioSet;

/// Errors from problem construction and evaluation.
#[derive(Debug, Error)]
pub enum AcopfError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("scenario set: {0}")]
    Scenario(String),
    #[error("shed penalty: {0}")]
    Penalty(String),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("consensus coupling: {0}")]
    Coupling(String),
    #[error(transparent)]
    Solver(#[from] NlpError),
}

/// Price of unserved energy, dollars per MWh shed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShedPenalty {
    pub c: f64,
}

impl ShedPenalty {
    /// A penalty chosen explicitly; must be positive and finite.
    pub fn explicit(c: f64) -> Result<Self, AcopfError> {
        if !c.is_finite() || c <= 0.0 {
            return Err(AcopfError::Penalty(format!("c = {c} must be positive and finite")));
        }
        Ok(Self { c })
    }

    /// Automatic penalty: ten times the steepest linear generation cost, so
    /// shedding is always costlier than running the most expensive unit.
    pub fn auto(case: &NetworkCase) -> Self {
        let steepest = case
            .generators
            .iter()
            .map(|g| g.cost.b)
            .fold(0.0f64, f64::max);
        Self { c: 10.0 * steepest }
    }
}

/// A solved operating point for the full network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpfSolution {
    /// Voltage profile (p.u. magnitudes, radian angles) in dense bus order.
    pub point: OperatingPoint,
    /// Active output per generator, MW, aligned with the case generator list.
    pub gen_p: Vec<f64>,
    /// Reactive output per generator, MVar.
    pub gen_q: Vec<f64>,
    /// Load shed per scenario and bus, MW (`load_shed[s][b]`); empty for a
    /// deterministic solution.
    pub load_shed: Vec<Vec<f64>>,
    /// Objective value, dollars per hour.
    pub objective_value: f64,
}

/// One region's primal state in the consensus scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionState {
    pub region: String,
    /// Full subproblem primal vector.
    pub x: Vec<f64>,
    /// The region's copy of the boundary variables (V then θ at the
    /// consensus buses).
    pub boundary_copy: Vec<f64>,
}

/// Where each variable block of a built problem lives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemLayout {
    /// Bus ids covered by the V and θ blocks, in dense case order.
    pub bus_ids: Vec<usize>,
    /// Indices into the case generator list covered by the P and Q blocks.
    pub gen_indices: Vec<usize>,
    /// Bus ids carrying shed variables (the constraint-owning buses);
    /// empty for deterministic problems.
    pub shed_bus_ids: Vec<usize>,
    /// Number of scenarios (0 for deterministic problems).
    pub n_scenarios: usize,
    /// Consensus bus ids whose V/θ copies the coupling terms act on;
    /// empty for centralized problems.
    pub consensus_bus_ids: Vec<usize>,
}

impl ProblemLayout {
    pub fn n_vars(&self) -> usize {
        2 * self.bus_ids.len()
            + 2 * self.gen_indices.len()
            + self.shed_bus_ids.len() * self.n_scenarios
    }

    /// Index of `V` at dense bus position `pos`.
    pub fn v_index(&self, pos: usize) -> usize {
        pos
    }

    /// Index of `θ` at dense bus position `pos`.
    pub fn theta_index(&self, pos: usize) -> usize {
        self.bus_ids.len() + pos
    }

    /// Index of the active output of the `g`-th covered generator.
    pub fn p_index(&self, g: usize) -> usize {
        2 * self.bus_ids.len() + g
    }

    /// Index of the reactive output of the `g`-th covered generator.
    pub fn q_index(&self, g: usize) -> usize {
        2 * self.bus_ids.len() + self.gen_indices.len() + g
    }

    /// Index of the shed at scenario `s`, `t`-th shed bus.
    pub fn shed_index(&self, s: usize, t: usize) -> usize {
        2 * self.bus_ids.len() + 2 * self.gen_indices.len() + s * self.shed_bus_ids.len() + t
    }

    /// Dense position of `bus_id` in this layout, if covered.
    pub fn bus_pos(&self, bus_id: usize) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == bus_id)
    }

    /// The boundary vector `x_C` (V then θ at the consensus buses) read out
    /// of a primal vector.
    pub fn boundary_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.consensus_bus_ids.len());
        for &bus in &self.consensus_bus_ids {
            let pos = self.bus_pos(bus).expect("consensus buses are covered");
            out.push(x[self.v_index(pos)]);
        }
        for &bus in &self.consensus_bus_ids {
            let pos = self.bus_pos(bus).expect("consensus buses are covered");
            out.push(x[self.theta_index(pos)]);
        }
        out
    }
}

/// A ready-to-solve problem plus the layout to interpret its variables.
pub struct BuiltProblem {
    pub nlp: NlpProblem,
    pub layout: ProblemLayout,
}

impl BuiltProblem {
    /// Standard start: flat voltages (V = 1, θ = 0), generator outputs at
    /// their box midpoints, zero shed.
    pub fn initial_point(&self) -> Vec<f64> {
        let nb = self.layout.bus_ids.len();
        let ng = self.layout.gen_indices.len();
        let mut x0 = vec![0.0; self.layout.n_vars()];
        for pos in 0..nb {
            x0[self.layout.v_index(pos)] = 1.0;
        }
        for g in 0..ng {
            let (plo, phi) = self.nlp.bounds[self.layout.p_index(g)];
            let (qlo, qhi) = self.nlp.bounds[self.layout.q_index(g)];
            x0[self.layout.p_index(g)] = 0.5 * (plo + phi);
            x0[self.layout.q_index(g)] = 0.5 * (qlo + qhi);
        }
        x0
    }

    /// Solves from [`BuiltProblem::initial_point`].
    pub fn solve(&self, options: &NlpOptions) -> Result<NlpSolution, NlpError> {
        crate::nlp::solve(&self.nlp, &self.initial_point(), options)
    }

    /// Solves from a caller-supplied start (warm starts).
    pub fn solve_from(&self, x0: &[f64], options: &NlpOptions) -> Result<NlpSolution, NlpError> {
        crate::nlp::solve(&self.nlp, x0, options)
    }
}

/// Data shared by the problem callbacks.
struct Shared {
    base: f64,
    y: AdmittanceMatrix,
    nb: usize,
    ng: usize,
    /// Base loads per covered bus, p.u.
    pd: Vec<f64>,
    qd: Vec<f64>,
    /// Dense positions (into the covered bus list) of the constraint-owning
    /// buses, one per row bus.
    owned_rows: Vec<usize>,
    /// Generator columns attached to each row bus.
    gens_at_row: Vec<Vec<usize>>,
    /// Cost coefficients (a, b, c) per covered generator, MW basis.
    cost: Vec<(f64, f64, f64)>,
    /// Scenario data: active loads per scenario per row bus (p.u.),
    /// probabilities, shed price.
    stochastic: Option<StochasticParts>,
    /// Consensus coupling: dense bus positions, targets, prices, weight.
    coupling: Option<CouplingParts>,
}

struct StochasticParts {
    loads_pu: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    c: f64,
}

struct CouplingParts {
    positions: Vec<usize>,
    z: Vec<f64>,
    lambda: Vec<f64>,
    rho: f64,
}

impl Shared {
    fn n_owned(&self) -> usize {
        self.owned_rows.len()
    }

    fn n_scenarios(&self) -> usize {
        self.stochastic.as_ref().map_or(0, |s| s.probabilities.len())
    }

    fn n_vars(&self) -> usize {
        2 * self.nb + 2 * self.ng + self.n_owned() * self.n_scenarios()
    }

    fn v_off(&self) -> usize {
        0
    }
    fn th_off(&self) -> usize {
        self.nb
    }
    fn p_off(&self) -> usize {
        2 * self.nb
    }
    fn q_off(&self) -> usize {
        2 * self.nb + self.ng
    }
    fn shed_off(&self) -> usize {
        2 * self.nb + 2 * self.ng
    }

    /// Variable index of the k-th coordinate of `x_C` (V block then θ).
    fn coupling_var(&self, cp: &CouplingParts, k: usize) -> usize {
        let nc = cp.positions.len();
        if k < nc {
            self.v_off() + cp.positions[k]
        } else {
            self.th_off() + cp.positions[k - nc]
        }
    }
}

/// Builds the closures of an assembled problem around shared data.
fn assemble(shared: Shared, bounds: Vec<(f64, f64)>, layout: ProblemLayout) -> BuiltProblem {
    let sp = Arc::new(shared);
    let n = sp.n_vars();
    debug_assert_eq!(n, layout.n_vars());
    debug_assert_eq!(n, bounds.len());

    let objective = {
        let sp = Arc::clone(&sp);
        Box::new(move |x: &[f64]| {
            let base = sp.base;
            let mut f = 0.0;
            let mut grad = vec![0.0; sp.n_vars()];
            for g in 0..sp.ng {
                let (a, b, c) = sp.cost[g];
                let p_mw = x[sp.p_off() + g] * base;
                f += a * p_mw * p_mw + b * p_mw + c;
                grad[sp.p_off() + g] = (2.0 * a * p_mw + b) * base;
            }
            if let Some(st) = &sp.stochastic {
                for s in 0..st.probabilities.len() {
                    let weight = st.c * st.probabilities[s] * base;
                    for t in 0..sp.n_owned() {
                        let idx = sp.shed_off() + s * sp.n_owned() + t;
                        f += weight * x[idx];
                        grad[idx] = weight;
                    }
                }
            }
            if let Some(cp) = &sp.coupling {
                for k in 0..2 * cp.positions.len() {
                    let idx = sp.coupling_var(cp, k);
                    let d = x[idx] - cp.z[k];
                    f += cp.lambda[k] * d + 0.5 * cp.rho * d * d;
                    grad[idx] += cp.lambda[k] + cp.rho * d;
                }
            }
            (f, grad)
        }) as crate::nlp::ObjectiveFn
    };

    let deterministic = sp.stochastic.is_none();
    let n_eq = if deterministic { 2 * sp.n_owned() } else { sp.n_owned() };
    let eq_constraints = {
        let sp = Arc::clone(&sp);
        Box::new(move |x: &[f64]| {
            let v = &x[..sp.nb];
            let th = &x[sp.nb..2 * sp.nb];
            let (pinj, qinj) = injections_pu(v, th, &sp.y);
            let jac = injection_jacobian(v, th, &sp.y);
            let rows = if sp.stochastic.is_none() { 2 * sp.n_owned() } else { sp.n_owned() };
            let mut g = vec![0.0; rows];
            let mut jg = DMatrix::zeros(rows, sp.n_vars());

            let write_row =
                |g: &mut Vec<f64>,
                 jg: &mut DMatrix<f64>,
                 row: usize,
                 t: usize,
                 active: bool| {
                    let i = sp.owned_rows[t];
                    let (inj, d_dv, d_dth, load, gen_off) = if active {
                        (pinj[i], &jac.dp_dv, &jac.dp_dth, sp.pd[i], sp.p_off())
                    } else {
                        (qinj[i], &jac.dq_dv, &jac.dq_dth, sp.qd[i], sp.q_off())
                    };
                    let gen_sum: f64 =
                        sp.gens_at_row[t].iter().map(|&gc| x[gen_off + gc]).sum();
                    g[row] = gen_sum - load - inj;
                    for j in 0..sp.nb {
                        jg[(row, sp.v_off() + j)] = -d_dv[(i, j)];
                        jg[(row, sp.th_off() + j)] = -d_dth[(i, j)];
                    }
                    for &gc in &sp.gens_at_row[t] {
                        jg[(row, gen_off + gc)] = 1.0;
                    }
                };

            if sp.stochastic.is_none() {
                for t in 0..sp.n_owned() {
                    write_row(&mut g, &mut jg, t, t, true);
                    write_row(&mut g, &mut jg, sp.n_owned() + t, t, false);
                }
            } else {
                for t in 0..sp.n_owned() {
                    write_row(&mut g, &mut jg, t, t, false);
                }
            }
            (g, jg)
        }) as crate::nlp::ConstraintFn
    };

    let n_ineq = sp.n_scenarios() * sp.n_owned();
    let ineq_constraints = if n_ineq == 0 {
        None
    } else {
        let sp = Arc::clone(&sp);
        Some(Box::new(move |x: &[f64]| {
            let v = &x[..sp.nb];
            let th = &x[sp.nb..2 * sp.nb];
            let (pinj, _) = injections_pu(v, th, &sp.y);
            let jac = injection_jacobian(v, th, &sp.y);
            let st = sp.stochastic.as_ref().expect("inequalities imply scenarios");
            let rows = st.probabilities.len() * sp.n_owned();
            let mut h = vec![0.0; rows];
            let mut jh = DMatrix::zeros(rows, sp.n_vars());
            for s in 0..st.probabilities.len() {
                for t in 0..sp.n_owned() {
                    let row = s * sp.n_owned() + t;
                    let i = sp.owned_rows[t];
                    let shed_idx = sp.shed_off() + row;
                    let gen_sum: f64 =
                        sp.gens_at_row[t].iter().map(|&gc| x[sp.p_off() + gc]).sum();
                    h[row] = gen_sum - (st.loads_pu[s][t] - x[shed_idx]) - pinj[i];
                    for j in 0..sp.nb {
                        jh[(row, sp.v_off() + j)] = -jac.dp_dv[(i, j)];
                        jh[(row, sp.th_off() + j)] = -jac.dp_dth[(i, j)];
                    }
                    for &gc in &sp.gens_at_row[t] {
                        jh[(row, sp.p_off() + gc)] = 1.0;
                    }
                    jh[(row, shed_idx)] = 1.0;
                }
            }
            (h, jh)
        }) as crate::nlp::ConstraintFn)
    };

    let lagrangian_hessian = {
        let sp = Arc::clone(&sp);
        Box::new(move |x: &[f64], w: f64, lam_eq: &[f64], lam_ineq: &[f64]| {
            let n = sp.n_vars();
            let mut hess = DMatrix::zeros(n, n);
            let base = sp.base;
            for g in 0..sp.ng {
                let (a, _, _) = sp.cost[g];
                let idx = sp.p_off() + g;
                hess[(idx, idx)] += w * 2.0 * a * base * base;
            }
            if let Some(cp) = &sp.coupling {
                for k in 0..2 * cp.positions.len() {
                    let idx = sp.coupling_var(cp, k);
                    hess[(idx, idx)] += w * cp.rho;
                }
            }

            // Injection curvature from the balance rows: each row carries
            // −p_inj or −q_inj, so weights are the negated multipliers.
            let mut wp = vec![0.0; sp.nb];
            let mut wq = vec![0.0; sp.nb];
            if sp.stochastic.is_none() {
                for t in 0..sp.n_owned() {
                    wp[sp.owned_rows[t]] -= lam_eq[t];
                    wq[sp.owned_rows[t]] -= lam_eq[sp.n_owned() + t];
                }
            } else {
                for t in 0..sp.n_owned() {
                    wq[sp.owned_rows[t]] -= lam_eq[t];
                }
                for s in 0..sp.n_scenarios() {
                    for t in 0..sp.n_owned() {
                        wp[sp.owned_rows[t]] -= lam_ineq[s * sp.n_owned() + t];
                    }
                }
            }
            let v = &x[..sp.nb];
            let th = &x[sp.nb..2 * sp.nb];
            let ih = weighted_injection_hessian(v, th, &sp.y, &wp, &wq);
            for a in 0..sp.nb {
                for b in 0..sp.nb {
                    hess[(a, b)] += ih.h_vv[(a, b)];
                    hess[(a, sp.nb + b)] += ih.h_vt[(a, b)];
                    hess[(sp.nb + a, b)] += ih.h_vt[(b, a)];
                    hess[(sp.nb + a, sp.nb + b)] += ih.h_tt[(a, b)];
                }
            }
            hess
        }) as crate::nlp::LagHessianFn
    };

    BuiltProblem {
        nlp: NlpProblem {
            n,
            objective,
            n_eq,
            eq_constraints: Some(eq_constraints),
            n_ineq,
            ineq_constraints,
            bounds,
            lagrangian_hessian: Some(lagrangian_hessian),
        },
        layout,
    }
}

/// Common preparation for a problem over the covered bus ids with constraint
/// rows (and shed variables) at the owned buses.
fn prepare(
    case: &NetworkCase,
    covered: &BTreeSet<usize>,
    owned: &BTreeSet<usize>,
    stochastic: Option<(&ScenarioSet, ShedPenalty)>,
    coupling: Option<(&[usize], &[f64], &[f64], f64)>,
) -> Result<BuiltProblem, AcopfError> {
    let full = covered.len() == case.n_buses();
    let base = case.base_mva;

    // Covered buses in dense case order.
    let buses: Vec<&crate::case::Bus> =
        case.buses.iter().filter(|b| covered.contains(&b.id)).collect();
    let bus_ids: Vec<usize> = buses.iter().map(|b| b.id).collect();
    let pos_of = |bus_id: usize| bus_ids.iter().position(|&b| b == bus_id);

    // Generators at owned buses, keeping case order and original indices.
    let mut gen_indices = Vec::new();
    for (gi, gen) in case.generators.iter().enumerate() {
        if owned.contains(&gen.bus_id) {
            gen_indices.push(gi);
        }
    }

    // Admittance over the covered subnetwork.
    let y = if full {
        build_admittance(case)?
    } else {
        let subcase = NetworkCase {
            base_mva: base,
            buses: buses.iter().map(|b| (*b).clone()).collect(),
            generators: gen_indices.iter().map(|&gi| case.generators[gi].clone()).collect(),
            branches: case
                .branches
                .iter()
                .filter(|br| covered.contains(&br.from_bus) && covered.contains(&br.to_bus))
                .cloned()
                .collect(),
        };
        build_admittance(&subcase)?
    };

    let nb = bus_ids.len();
    let ng = gen_indices.len();
    let pd: Vec<f64> = buses.iter().map(|b| b.p_load / base).collect();
    let qd: Vec<f64> = buses.iter().map(|b| b.q_load / base).collect();

    let owned_rows: Vec<usize> = buses
        .iter()
        .enumerate()
        .filter(|(_, b)| owned.contains(&b.id))
        .map(|(pos, _)| pos)
        .collect();
    let shed_bus_ids: Vec<usize> = owned_rows.iter().map(|&pos| bus_ids[pos]).collect();

    let gens_at_row: Vec<Vec<usize>> = owned_rows
        .iter()
        .map(|&pos| {
            gen_indices
                .iter()
                .enumerate()
                .filter(|(_, &gi)| case.generators[gi].bus_id == bus_ids[pos])
                .map(|(gc, _)| gc)
                .collect()
        })
        .collect();

    let cost: Vec<(f64, f64, f64)> = gen_indices
        .iter()
        .map(|&gi| {
            let c = &case.generators[gi].cost;
            (c.a, c.b, c.c)
        })
        .collect();

    let stochastic_parts = match stochastic {
        None => None,
        Some((set, penalty)) => {
            set.validate().map_err(|e| AcopfError::Scenario(e.to_string()))?;
            if set.n_buses() != case.n_buses() {
                return Err(AcopfError::Scenario(format!(
                    "scenarios cover {} buses, case has {}",
                    set.n_buses(),
                    case.n_buses()
                )));
            }
            if !penalty.c.is_finite() || penalty.c <= 0.0 {
                return Err(AcopfError::Penalty(format!(
                    "c = {} must be positive and finite",
                    penalty.c
                )));
            }
            // Scenario loads at the owned buses, p.u., via the full-case
            // dense index of each owned bus.
            let owned_full_idx: Vec<usize> = shed_bus_ids
                .iter()
                .map(|&bus| case.bus_index(bus).expect("owned buses exist in the case"))
                .collect();
            let loads_pu: Vec<Vec<f64>> = set
                .loads
                .iter()
                .map(|row| owned_full_idx.iter().map(|&i| row[i] / base).collect())
                .collect();
            Some(StochasticParts {
                loads_pu,
                probabilities: set.probabilities.clone(),
                c: penalty.c,
            })
        }
    };

    let coupling_parts = match coupling {
        None => None,
        Some((consensus, z, lambda, rho)) => {
            let expect = 2 * consensus.len();
            if z.len() != expect || lambda.len() != expect {
                return Err(AcopfError::Coupling(format!(
                    "boundary has {} coordinates, got z of {} and λ of {}",
                    expect,
                    z.len(),
                    lambda.len()
                )));
            }
            if !rho.is_finite() || rho < 0.0 {
                return Err(AcopfError::Coupling(format!("ρ = {rho} must be nonnegative")));
            }
            let positions: Vec<usize> = consensus
                .iter()
                .map(|&bus| {
                    pos_of(bus).ok_or_else(|| {
                        AcopfError::Coupling(format!("consensus bus {bus} is not covered"))
                    })
                })
                .collect::<Result<_, _>>()?;
            Some(CouplingParts {
                positions,
                z: z.to_vec(),
                lambda: lambda.to_vec(),
                rho,
            })
        }
    };

    // Bounds: V and θ from the bus records, P and Q per-unit from the
    // generator records, shed within [0, scenario load].
    let n_scen = stochastic_parts.as_ref().map_or(0, |s| s.probabilities.len());
    let mut bounds = Vec::with_capacity(2 * nb + 2 * ng + n_scen * owned_rows.len());
    for b in &buses {
        bounds.push((b.v_min, b.v_max));
    }
    for b in &buses {
        bounds.push((b.theta_min, b.theta_max));
    }
    for &gi in &gen_indices {
        let g = &case.generators[gi];
        bounds.push((g.p_min / base, g.p_max / base));
    }
    for &gi in &gen_indices {
        let g = &case.generators[gi];
        bounds.push((g.q_min / base, g.q_max / base));
    }
    if let Some(st) = &stochastic_parts {
        for s in 0..n_scen {
            for t in 0..owned_rows.len() {
                bounds.push((0.0, st.loads_pu[s][t]));
            }
        }
    }

    let layout = ProblemLayout {
        bus_ids,
        gen_indices,
        shed_bus_ids: if stochastic_parts.is_some() { shed_bus_ids } else { Vec::new() },
        n_scenarios: n_scen,
        consensus_bus_ids: coupling
            .map(|(c, _, _, _)| c.to_vec())
            .unwrap_or_default(),
    };

    let shared = Shared {
        base,
        y,
        nb,
        ng,
        pd,
        qd,
        owned_rows,
        gens_at_row,
        cost,
        stochastic: stochastic_parts,
        coupling: coupling_parts,
    };
    Ok(assemble(shared, bounds, layout))
}

/// Deterministic ACOPF over the whole network.
///
/// Variables `(V, θ, P, Q)`; quadratic generation cost; active and reactive
/// power balance at every bus; box bounds everywhere. The slack bus angle is
/// pinned to zero through its equal bounds.
pub fn build_standard(case: &NetworkCase) -> Result<BuiltProblem, AcopfError> {
    let all: BTreeSet<usize> = case.buses.iter().map(|b| b.id).collect();
    prepare(case, &all, &all, None, None)
}

/// Scenario-based stochastic ACOPF over the whole network.
///
/// One shared `(V, θ, P, Q)` across scenarios plus shed variables
/// `ΔP_{i,s} ∈ [0, P^d_{i,s}]`. Reactive balance holds at the base loads;
/// per scenario and bus, the active surplus inequality
/// `P_i − (P^d_{i,s} − ΔP_{i,s}) − inj_i(V, θ) ≥ 0` replaces the base
/// active balance. The objective adds `c · Σ_s μ_s Σ_i ΔP_{i,s}`.
pub fn build_stochastic(
    case: &NetworkCase,
    scenarios: &ScenarioSet,
    penalty: ShedPenalty,
) -> Result<BuiltProblem, AcopfError> {
    let all: BTreeSet<usize> = case.buses.iter().map(|b| b.id).collect();
    prepare(case, &all, &all, Some((scenarios, penalty)), None)
}

/// One region's augmented subproblem for the consensus scheme.
///
/// Covers the region's own buses plus every consensus bus; constraint rows
/// (and shed variables) exist only at owned buses, which keeps each row
/// exact because every neighbor of an owned bus is covered. Pass
/// `stochastic` to build the scenario form, `None` for the deterministic
/// form. `z` and `lambda` hold consensus targets and prices as `(V then θ)`
/// over `partition.consensus_buses`; the objective gains
/// `λᵀ(x_C − z) + (ρ/2)‖x_C − z‖²`.
pub fn build_region_subproblem(
    case: &NetworkCase,
    partition: &RegionPartition,
    region: &str,
    stochastic: Option<(&ScenarioSet, ShedPenalty)>,
    z: &[f64],
    lambda: &[f64],
    rho: f64,
) -> Result<BuiltProblem, AcopfError> {
    let owned = partition
        .regions
        .get(region)
        .ok_or_else(|| AcopfError::UnknownRegion(region.to_string()))?;
    let mut covered: BTreeSet<usize> = owned.clone();
    covered.extend(partition.consensus_buses.iter().copied());
    prepare(
        case,
        &covered,
        owned,
        stochastic,
        Some((&partition.consensus_buses, z, lambda, rho)),
    )
}

/// Interprets a solved full-network problem as an [`OpfSolution`].
///
/// The layout must cover the entire case (as produced by [`build_standard`]
/// or [`build_stochastic`]).
pub fn extract_solution(
    case: &NetworkCase,
    layout: &ProblemLayout,
    solved: &NlpSolution,
) -> OpfSolution {
    assert_eq!(
        layout.bus_ids.len(),
        case.n_buses(),
        "solution extraction needs a full-network layout"
    );
    let base = case.base_mva;
    let nb = layout.bus_ids.len();
    let x = &solved.x;
    let point = OperatingPoint {
        v: (0..nb).map(|pos| x[layout.v_index(pos)]).collect(),
        theta: (0..nb).map(|pos| x[layout.theta_index(pos)]).collect(),
    };
    let gen_p: Vec<f64> =
        (0..layout.gen_indices.len()).map(|g| x[layout.p_index(g)] * base).collect();
    let gen_q: Vec<f64> =
        (0..layout.gen_indices.len()).map(|g| x[layout.q_index(g)] * base).collect();
    let load_shed: Vec<Vec<f64>> = (0..layout.n_scenarios)
        .map(|s| {
            (0..layout.shed_bus_ids.len()).map(|t| x[layout.shed_index(s, t)] * base).collect()
        })
        .collect();
    OpfSolution {
        point,
        gen_p,
        gen_q,
        load_shed,
        objective_value: solved.objective_value,
    }
}

/// Expected operating cost of a dispatch under a scenario set: generation
/// cost at `solution.gen_p` plus `c ×` the expected shed.
///
/// Shed is derived from the fixed operating point: with `(V, θ, P)` frozen,
/// the cheapest feasible shed at bus `i` under scenario `s` is
/// `clamp(P^d_{i,s} − P_i + inj_i(V, θ), 0, P^d_{i,s})` — the part of the
/// scenario load the dispatch cannot serve. For a solved stochastic problem
/// this reproduces its own shed; for a deterministic dispatch it prices the
/// shortfall the fixed dispatch would incur.
pub fn evaluate_stochastic_cost(
    case: &NetworkCase,
    solution: &OpfSolution,
    scenarios: &ScenarioSet,
    penalty: ShedPenalty,
) -> Result<f64, AcopfError> {
    scenarios.validate().map_err(|e| AcopfError::Scenario(e.to_string()))?;
    if scenarios.n_buses() != case.n_buses() {
        return Err(AcopfError::Scenario(format!(
            "scenarios cover {} buses, case has {}",
            scenarios.n_buses(),
            case.n_buses()
        )));
    }
    if !penalty.c.is_finite() || penalty.c <= 0.0 {
        return Err(AcopfError::Penalty(format!(
            "c = {} must be positive and finite",
            penalty.c
        )));
    }

    let gen_cost: f64 = case
        .generators
        .iter()
        .zip(&solution.gen_p)
        .map(|(g, &p)| g.cost.a * p * p + g.cost.b * p + g.cost.c)
        .sum();

    let y = build_admittance(case)?;
    let (pinj_mw, _) = injections(&solution.point, &y, case.base_mva)
        .map_err(|e| AcopfError::Scenario(format!("operating point: {e}")))?;

    // Active power available at each bus: generation minus what the network
    // carries away at the fixed voltage profile.
    let mut available = vec![0.0; case.n_buses()];
    for (g, &p) in case.generators.iter().zip(&solution.gen_p) {
        let i = case.bus_index(g.bus_id).expect("generator buses exist");
        available[i] += p;
    }
    for i in 0..case.n_buses() {
        available[i] -= pinj_mw[i];
    }

    let mut expected_shed = 0.0;
    for (row, mu) in scenarios.loads.iter().zip(&scenarios.probabilities) {
        for i in 0..case.n_buses() {
            let shed = (row[i] - available[i]).clamp(0.0, row[i]);
            expected_shed += mu * shed;
        }
    }

    Ok(gen_cost + penalty.c * expected_shed)
}
