//! Loss-of-supply probability (LOSP) evaluation of a dispatch.
//!
//! A dispatch fixes each generator's active output and regulated voltage
//! ahead of time; when the actual loads differ from the forecast, the slack
//! unit absorbs the imbalance. The LOSP of a dispatch under a scenario set is
//! the probability mass of the scenarios whose required slack output exceeds
//! what the dispatch scheduled for it — the system would have to shed load or
//! lean on reserves it never priced.
//!
//! Each scenario is replayed as an ordinary power flow: generator setpoints
//! and voltage targets come from the dispatch under test, active loads from
//! the scenario, reactive loads from the case (load uncertainty here is in
//! active power only). A scenario whose power flow does not converge is
//! counted as a loss of supply outright: a dispatch that leaves no solvable
//! operating point has certainly lost the load.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acopf::OpfSolution;
use crate::case::NetworkCase;
use crate::powerflow::{solve_powerflow, PfSetpoints, PvSetpoint};
use crate::scenarios::ScenarioSet;

/// Errors from reliability evaluation.
#[derive(Debug, Error)]
pub enum ReliabilityError {
    #[error("scenario set: {0}")]
    Scenario(String),
    #[error("dispatch does not fit the case: {0}")]
    Dispatch(String),
}

/// Loss-of-supply probability of one dispatch under one scenario set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LospReport {
    /// Probability mass of the scenarios that lose supply.
    pub losp: f64,
    /// Slack-bus active power scheduled by the dispatch, MW.
    pub slack_opf: f64,
    /// Slack-bus active power required by each scenario, MW; `None` when the
    /// scenario's power flow did not converge.
    pub slack_per_scenario: Vec<Option<f64>>,
    /// Indices of the scenarios counted as losing supply.
    pub shortfall_scenarios: Vec<usize>,
}

/// The power-flow setpoints a dispatch implies: slack voltage from the
/// operating point, and scheduled output plus voltage target at every other
/// generator bus.
pub fn dispatch_setpoints(
    case: &NetworkCase,
    solution: &OpfSolution,
) -> Result<(PfSetpoints, f64), ReliabilityError> {
    let n = case.n_buses();
    if solution.point.v.len() != n || solution.point.theta.len() != n {
        return Err(ReliabilityError::Dispatch(format!(
            "operating point covers {} buses, case has {n}",
            solution.point.v.len()
        )));
    }
    if solution.gen_p.len() != case.generators.len() {
        return Err(ReliabilityError::Dispatch(format!(
            "dispatch lists {} generators, case has {}",
            solution.gen_p.len(),
            case.generators.len()
        )));
    }
    let slack_idx = case.slack_index();
    let slack_id = case.buses[slack_idx].id;

    let mut pv = std::collections::BTreeMap::new();
    let mut slack_opf = 0.0;
    for (gen, &p_mw) in case.generators.iter().zip(&solution.gen_p) {
        if gen.bus_id == slack_id {
            slack_opf += p_mw;
            continue;
        }
        let pos = case
            .bus_index(gen.bus_id)
            .ok_or_else(|| ReliabilityError::Dispatch(format!("unknown bus {}", gen.bus_id)))?;
        let entry = pv.entry(gen.bus_id).or_insert(PvSetpoint {
            p_mw: 0.0,
            v_pu: solution.point.v[pos],
        });
        entry.p_mw += p_mw;
    }
    let setpoints = PfSetpoints { slack_v: solution.point.v[slack_idx], pv };
    Ok((setpoints, slack_opf))
}

/// Replays every scenario against the dispatch and tallies the loss-of-supply
/// probability.
pub fn evaluate_losp(
    case: &NetworkCase,
    solution: &OpfSolution,
    scenarios: &ScenarioSet,
) -> Result<LospReport, ReliabilityError> {
    scenarios
        .validate()
        .map_err(|e| ReliabilityError::Scenario(e.to_string()))?;
    if scenarios.n_buses() != case.n_buses() {
        return Err(ReliabilityError::Scenario(format!(
            "scenarios cover {} buses, case has {}",
            scenarios.n_buses(),
            case.n_buses()
        )));
    }
    let (setpoints, slack_opf) = dispatch_setpoints(case, solution)?;
    let q_loads: Vec<f64> = case.buses.iter().map(|b| b.q_load).collect();

    let slack_per_scenario: Vec<Option<f64>> = scenarios
        .loads
        .par_iter()
        .enumerate()
        .map(|(s, loads)| match solve_powerflow(case, &setpoints, loads, &q_loads) {
            Ok(pf) => Some(pf.slack_p),
            Err(err) => {
                log::warn!("scenario {s} power flow failed ({err}); counted as lost supply");
                None
            }
        })
        .collect();

    let shortfall_scenarios: Vec<usize> = slack_per_scenario
        .iter()
        .enumerate()
        .filter(|(_, slack)| match slack {
            Some(required) => slack_opf < *required,
            None => true,
        })
        .map(|(s, _)| s)
        .collect();
    let losp = shortfall_scenarios
        .iter()
        .fold(0.0, |acc, &s| acc + scenarios.probabilities[s]);

    Ok(LospReport { losp, slack_opf, slack_per_scenario, shortfall_scenarios })
}
