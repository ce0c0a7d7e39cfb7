//! Consensus ADMM orchestration over network regions.
//!
//! Each iteration solves every region's augmented subproblem in parallel
//! ([`crate::acopf::build_region_subproblem`], warm-started from the
//! previous iterate), gathers one [`BoundaryMessage`] per region, and runs
//! the coordinator: `z ← mean of the regions' boundary copies`, `λ_r ← λ_r
//! + ρ(x_{C,r} − z)`. The loop ends on the first iteration with
//! `‖z^{k+1} − z^k‖₂ < tolerance`.
//!
//! The coordinator's only inputs are the boundary messages — region
//! interiors, loads, costs, and shed schedules never cross the boundary.
//! Per-iteration telemetry (and the raw message log) can be streamed to
//! JSON-lines files for offline analysis of the convergence trajectories.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acopf::{
    build_region_subproblem, AcopfError, BuiltProblem, OpfSolution, RegionState, ShedPenalty,
};
use crate::case::{NetworkCase, RegionPartition};
use crate::nlp::{NlpOptions, NlpStatus};
use crate::powerflow::OperatingPoint;
use crate::scenarios::ScenarioSet;

/// Errors from the consensus loop.
#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("partition: {0}")]
    Partition(String),
    #[error("region `{region}` failed at iteration {iteration}: {source}")]
    RegionSolve {
        region: String,
        iteration: usize,
        source: AcopfError,
    },
    #[error("consensus protocol: {0}")]
    Protocol(String),
    #[error("no consensus after {iterations} iterations (last error {last:e})")]
    Nonconvergence {
        iterations: usize,
        last: f64,
        error_history: Vec<f64>,
    },
    #[error("telemetry log: {0}")]
    Log(#[from] std::io::Error),
    #[error(transparent)]
    Build(#[from] AcopfError),
}

/// The coordinator's view of the scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConsensusState {
    /// Consensus vector: V then θ at the consensus buses (p.u., radians).
    pub z: Vec<f64>,
    /// Multiplier vector per region, same layout as `z`.
    pub lambdas: BTreeMap<String, Vec<f64>>,
    /// Completed iterations.
    pub iteration: usize,
    /// `‖z^{k+1} − z^k‖₂` per iteration; length equals `iteration`.
    pub error_history: Vec<f64>,
    /// Penalty weight ρ.
    pub rho: f64,
}

/// What a region sends the coordinator: nothing but its boundary copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMessage {
    pub region: String,
    pub iteration: usize,
    /// The region's copy of (V then θ) at the consensus buses.
    pub boundary_values: Vec<f64>,
}

/// One region's full iterate, written to the telemetry log so convergence
/// trajectories can be plotted offline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionTrajectory {
    /// Covered bus ids, the order of `v` and `theta`.
    pub bus_ids: Vec<usize>,
    /// Indices into the case's generator list, the order of `p_mw`/`q_mvar`.
    pub gen_indices: Vec<usize>,
    /// Voltage magnitudes, p.u.
    pub v: Vec<f64>,
    /// Voltage angles, radians.
    pub theta: Vec<f64>,
    /// Active dispatch of the region's generators, MW.
    pub p_mw: Vec<f64>,
    /// Reactive dispatch of the region's generators, MVar.
    pub q_mvar: Vec<f64>,
}

/// One line of the iteration telemetry log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖z^{k+1} − z^k‖₂` for this iteration.
    pub error: f64,
    /// Consensus vector after the update.
    pub z: Vec<f64>,
    /// Multipliers after the update, per region.
    pub lambdas: BTreeMap<String, Vec<f64>>,
    /// Boundary copies the regions reported this iteration.
    pub boundaries: BTreeMap<String, Vec<f64>>,
    /// Subproblem objective values (including coupling terms), per region.
    pub objectives: BTreeMap<String, f64>,
    /// Full V/θ/P/Q iterate per region.
    pub regions: BTreeMap<String, RegionTrajectory>,
}

/// Elementwise mean of the regions' boundary copies.
///
/// Requires exactly one message from each expected region, all tagged with
/// the same iteration and of equal length; anything else is a protocol
/// error.
pub fn consensus_update(
    messages: &[BoundaryMessage],
    expected_regions: &[String],
) -> Result<Vec<f64>, AdmmError> {
    if messages.is_empty() {
        return Err(AdmmError::Protocol("no boundary messages".into()));
    }
    let iteration = messages[0].iteration;
    let width = messages[0].boundary_values.len();
    let mut seen: Vec<&str> = Vec::with_capacity(messages.len());
    for msg in messages {
        if msg.iteration != iteration {
            return Err(AdmmError::Protocol(format!(
                "message from `{}` is for iteration {}, expected {iteration}",
                msg.region, msg.iteration
            )));
        }
        if msg.boundary_values.len() != width {
            return Err(AdmmError::Protocol(format!(
                "message from `{}` has {} coordinates, expected {width}",
                msg.region,
                msg.boundary_values.len()
            )));
        }
        if seen.contains(&msg.region.as_str()) {
            return Err(AdmmError::Protocol(format!(
                "two messages from `{}` in one iteration",
                msg.region
            )));
        }
        seen.push(&msg.region);
    }
    for region in expected_regions {
        if !seen.contains(&region.as_str()) {
            return Err(AdmmError::Protocol(format!("no message from `{region}`")));
        }
    }
    if seen.len() != expected_regions.len() {
        return Err(AdmmError::Protocol(format!(
            "{} messages for {} regions",
            seen.len(),
            expected_regions.len()
        )));
    }

    let mut z = vec![0.0; width];
    for msg in messages {
        for (acc, v) in z.iter_mut().zip(&msg.boundary_values) {
            *acc += v;
        }
    }
    let scale = 1.0 / messages.len() as f64;
    for v in z.iter_mut() {
        *v *= scale;
    }
    Ok(z)
}

/// Dual ascent step: `λ + ρ·(boundary − z)`.
pub fn multiplier_update(lambda: &[f64], boundary: &[f64], z: &[f64], rho: f64) -> Vec<f64> {
    debug_assert_eq!(lambda.len(), boundary.len());
    debug_assert_eq!(lambda.len(), z.len());
    lambda
        .iter()
        .zip(boundary.iter().zip(z))
        .map(|(l, (x, zk))| l + rho * (x - zk))
        .collect()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

struct JsonlSink {
    telemetry: BufWriter<File>,
    messages: BufWriter<File>,
}

impl JsonlSink {
    fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            telemetry: BufWriter::new(File::create(dir.join("telemetry.jsonl"))?),
            messages: BufWriter::new(File::create(dir.join("messages.jsonl"))?),
        })
    }

    fn record(&mut self, rec: &IterationRecord, msgs: &[BoundaryMessage]) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.telemetry, rec)?;
        self.telemetry.write_all(b"\n")?;
        self.telemetry.flush()?;
        for m in msgs {
            serde_json::to_writer(&mut self.messages, m)?;
            self.messages.write_all(b"\n")?;
        }
        self.messages.flush()
    }
}

/// Runs the consensus scheme to agreement and stitches the final solution.
///
/// Pass `stochastic` to distribute the scenario formulation (shed variables
/// stay region-local), `None` for the deterministic one. `z` starts flat
/// (V = 1, θ = 0), multipliers start at zero, and each region warm-starts
/// from its previous iterate. When `log_dir` is given, `telemetry.jsonl`
/// (one [`IterationRecord`] per line) and `messages.jsonl` (every
/// [`BoundaryMessage`]) are written there as the run progresses.
///
/// The assembled [`OpfSolution`] takes interior voltages from the owning
/// region, consensus-bus voltages from `z`, and generator outputs and shed
/// from the owning region; its objective re-prices generation and shed
/// centrally.
#[allow(clippy::too_many_arguments)]
pub fn run_consensus(
    case: &NetworkCase,
    partition: &RegionPartition,
    stochastic: Option<(&ScenarioSet, ShedPenalty)>,
    rho: f64,
    tolerance: f64,
    max_iter: usize,
    log_dir: Option<&Path>,
) -> Result<(OpfSolution, ConsensusState), AdmmError> {
    let regions: Vec<String> = partition.regions.keys().cloned().collect();
    if regions.len() < 2 {
        return Err(AdmmError::Partition(format!(
            "consensus needs at least 2 regions, partition has {}",
            regions.len()
        )));
    }
    if !(tolerance > 0.0) || !rho.is_finite() || rho <= 0.0 {
        return Err(AdmmError::Partition(format!(
            "need tolerance > 0 and finite ρ > 0, got {tolerance} and {rho}"
        )));
    }
    let nc = partition.consensus_buses.len();

    let mut sink = match log_dir {
        Some(dir) => Some(JsonlSink::create(dir)?),
        None => None,
    };

    // Flat consensus start; zero prices.
    let mut z: Vec<f64> = std::iter::repeat(1.0)
        .take(nc)
        .chain(std::iter::repeat(0.0).take(nc))
        .collect();
    let mut lambdas: BTreeMap<String, Vec<f64>> =
        regions.iter().map(|r| (r.clone(), vec![0.0; 2 * nc])).collect();
    let mut warm: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut error_history = Vec::new();
    // Region subproblems get a larger iteration budget than a standalone
    // solve: multiplier updates can move the minimizer far from the warm
    // start, and a capped iterate here would poison every later iteration.
    let options = NlpOptions { max_iter: 500, ..NlpOptions::default() };

    for iteration in 0..max_iter {
        // Parallel region solves; results keyed by region name keep the
        // aggregation order (and thus the arithmetic) deterministic.
        type Solved = (RegionState, f64, RegionTrajectory);
        let solves: Vec<(String, Result<Solved, AdmmError>)> = regions
            .par_iter()
            .map(|region| {
                let solve = || -> Result<Solved, AdmmError> {
                    let built: BuiltProblem = build_region_subproblem(
                        case,
                        partition,
                        region,
                        stochastic,
                        &z,
                        &lambdas[region],
                        rho,
                    )
                    .map_err(|source| AdmmError::RegionSolve {
                        region: region.clone(),
                        iteration,
                        source,
                    })?;
                    let warm_start = warm.get(region).cloned();
                    let had_warm_start = warm_start.is_some();
                    let x0 = warm_start.unwrap_or_else(|| built.initial_point());
                    let mut solved = built.solve_from(&x0, &options).map_err(|e| {
                        AdmmError::RegionSolve {
                            region: region.clone(),
                            iteration,
                            source: AcopfError::Solver(e),
                        }
                    })?;
                    if solved.status == NlpStatus::MaxIter && had_warm_start {
                        // A stale warm start can strand the interior-point
                        // iteration off the central path; a cold solve from
                        // the flat start usually recovers.
                        let retry =
                            built.solve_from(&built.initial_point(), &options).map_err(|e| {
                                AdmmError::RegionSolve {
                                    region: region.clone(),
                                    iteration,
                                    source: AcopfError::Solver(e),
                                }
                            })?;
                        if retry.status == NlpStatus::Optimal {
                            solved = retry;
                        }
                    }
                    if solved.status == NlpStatus::InfeasibleDetected {
                        return Err(AdmmError::RegionSolve {
                            region: region.clone(),
                            iteration,
                            source: AcopfError::Scenario(
                                "subproblem reported infeasibility".into(),
                            ),
                        });
                    }
                    if solved.status == NlpStatus::MaxIter {
                        log::warn!(
                            "region `{region}` hit the subproblem iteration cap at \
                             consensus iteration {iteration}; continuing from its best iterate"
                        );
                    }
                    let boundary = built.layout.boundary_values(&solved.x);
                    let layout = &built.layout;
                    let nb = layout.bus_ids.len();
                    let ng = layout.gen_indices.len();
                    let base = case.base_mva;
                    let trajectory = RegionTrajectory {
                        bus_ids: layout.bus_ids.clone(),
                        gen_indices: layout.gen_indices.clone(),
                        v: solved.x[..nb].to_vec(),
                        theta: solved.x[nb..2 * nb].to_vec(),
                        p_mw: (0..ng).map(|g| solved.x[layout.p_index(g)] * base).collect(),
                        q_mvar: (0..ng).map(|g| solved.x[layout.q_index(g)] * base).collect(),
                    };
                    Ok((
                        RegionState {
                            region: region.clone(),
                            x: solved.x,
                            boundary_copy: boundary,
                        },
                        solved.objective_value,
                        trajectory,
                    ))
                };
                (region.clone(), solve())
            })
            .collect();

        let mut states: BTreeMap<String, RegionState> = BTreeMap::new();
        let mut objectives: BTreeMap<String, f64> = BTreeMap::new();
        let mut trajectories: BTreeMap<String, RegionTrajectory> = BTreeMap::new();
        for (region, outcome) in solves {
            let (state, objective, trajectory) = outcome?;
            objectives.insert(region.clone(), objective);
            trajectories.insert(region.clone(), trajectory);
            states.insert(region, state);
        }

        let messages: Vec<BoundaryMessage> = states
            .values()
            .map(|s| BoundaryMessage {
                region: s.region.clone(),
                iteration,
                boundary_values: s.boundary_copy.clone(),
            })
            .collect();

        let z_new = consensus_update(&messages, &regions)?;
        let error = l2(&z_new, &z);
        for (region, lambda) in lambdas.iter_mut() {
            *lambda = multiplier_update(lambda, &states[region].boundary_copy, &z_new, rho);
        }
        error_history.push(error);
        z = z_new;

        if let Some(sink) = sink.as_mut() {
            let record = IterationRecord {
                iteration,
                error,
                z: z.clone(),
                lambdas: lambdas.clone(),
                boundaries: states
                    .iter()
                    .map(|(r, s)| (r.clone(), s.boundary_copy.clone()))
                    .collect(),
                objectives,
                regions: trajectories,
            };
            sink.record(&record, &messages)?;
        }

        for (region, state) in &states {
            warm.insert(region.clone(), state.x.clone());
        }

        if error < tolerance {
            let state = ConsensusState {
                z: z.clone(),
                lambdas,
                iteration: iteration + 1,
                error_history,
                rho,
            };
            let solution = stitch(case, partition, stochastic, &states, &z)?;
            return Ok((solution, state));
        }
    }

    let last = error_history.last().copied().unwrap_or(f64::INFINITY);
    Err(AdmmError::Nonconvergence {
        iterations: max_iter,
        last,
        error_history,
    })
}

/// Assembles the full-network solution from the region interiors and the
/// consensus vector.
fn stitch(
    case: &NetworkCase,
    partition: &RegionPartition,
    stochastic: Option<(&ScenarioSet, ShedPenalty)>,
    states: &BTreeMap<String, RegionState>,
    z: &[f64],
) -> Result<OpfSolution, AdmmError> {
    let nb = case.n_buses();
    let nc = partition.consensus_buses.len();
    let mut v = vec![0.0; nb];
    let mut theta = vec![0.0; nb];

    // Rebuild each region's layout to address its primal vector.
    let mut layouts = BTreeMap::new();
    for region in states.keys() {
        let lambda = vec![0.0; 2 * nc];
        let built =
            build_region_subproblem(case, partition, region, stochastic, z, &lambda, 1.0)?;
        layouts.insert(region.clone(), built.layout);
    }

    for (i, bus) in case.buses.iter().enumerate() {
        if let Some(k) = partition.consensus_buses.iter().position(|&b| b == bus.id) {
            v[i] = z[k];
            theta[i] = z[nc + k];
            continue;
        }
        let region = partition
            .region_of(bus.id)
            .ok_or_else(|| AdmmError::Partition(format!("bus {} has no region", bus.id)))?;
        let layout = &layouts[region];
        let state = &states[region];
        let pos = layout.bus_pos(bus.id).expect("regions cover their buses");
        v[i] = state.x[layout.v_index(pos)];
        theta[i] = state.x[layout.theta_index(pos)];
    }

    let base = case.base_mva;
    let mut gen_p = vec![0.0; case.generators.len()];
    let mut gen_q = vec![0.0; case.generators.len()];
    for (region, layout) in &layouts {
        let state = &states[region];
        for (g, &gi) in layout.gen_indices.iter().enumerate() {
            gen_p[gi] = state.x[layout.p_index(g)] * base;
            gen_q[gi] = state.x[layout.q_index(g)] * base;
        }
    }

    let mut load_shed: Vec<Vec<f64>> = Vec::new();
    let mut expected_shed_mw = 0.0;
    if let Some((scenarios, _)) = stochastic {
        load_shed = vec![vec![0.0; nb]; scenarios.len()];
        for (region, layout) in &layouts {
            let state = &states[region];
            for (t, &bus) in layout.shed_bus_ids.iter().enumerate() {
                let i = case.bus_index(bus).expect("shed buses exist");
                for (s, row) in load_shed.iter_mut().enumerate() {
                    row[i] = state.x[layout.shed_index(s, t)] * base;
                }
            }
        }
        for (s, row) in load_shed.iter().enumerate() {
            let mu = scenarios.probabilities[s];
            expected_shed_mw += mu * row.iter().sum::<f64>();
        }
    }

    let gen_cost: f64 = case
        .generators
        .iter()
        .zip(&gen_p)
        .map(|(g, &p)| g.cost.a * p * p + g.cost.b * p + g.cost.c)
        .sum();
    let objective_value = match stochastic {
        Some((_, penalty)) => gen_cost + penalty.c * expected_shed_mw,
        None => gen_cost,
    };

    Ok(OpfSolution {
        point: OperatingPoint { v, theta },
        gen_p,
        gen_q,
        load_shed,
        objective_value,
    })
}
