//! Network case model: MATPOWER-subset parsing, admittance construction, and
//! region partitioning.
//!
//! A [`NetworkCase`] is the immutable description of a transmission grid: buses
//! with loads and voltage limits, generators with capability bounds and
//! quadratic cost curves, and branches with series impedance, line charging,
//! and transformer taps. Cases are read from the common `.m` case format
//! (only the `baseMVA`, `bus`, `gen`, `branch`, and `gencost` tables are
//! interpreted) and can be written back out with [`case_to_text`].
//!
//! [`build_admittance`] produces the dense bus-admittance matrix split into
//! conductance and susceptance parts, and [`build_partition`] slices a case
//! into named regions connected by tie-lines for distributed solves.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while parsing or validating cases and partitions.
#[derive(Debug, Error)]
pub enum CaseError {
    /// The case text could not be interpreted.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    /// The data is structurally inconsistent.
    #[error("invalid case: {0}")]
    Validation(String),
    /// A branch with zero series impedance has no finite admittance.
    #[error("branch {from_bus}-{to_bus} has zero series impedance")]
    SingularBranch { from_bus: usize, to_bus: usize },
}

/// Role a bus plays in the power-flow equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    /// Reference bus: fixed angle, absorbs the system power imbalance.
    Slack,
    /// Generator bus: regulated voltage magnitude in conventional power flow.
    Pv,
    /// Load bus: fixed active and reactive demand.
    Pq,
}

/// A network bus with its demand and voltage limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number (positive, unique within a case).
    pub id: usize,
    pub kind: BusKind,
    /// Active load, MW.
    pub p_load: f64,
    /// Reactive load, MVar.
    pub q_load: f64,
    /// Shunt conductance as MW consumed at V = 1.0 p.u.
    pub gs_shunt: f64,
    /// Shunt susceptance as MVar injected at V = 1.0 p.u.
    pub bs_shunt: f64,
    /// Lower voltage magnitude bound, p.u.
    pub v_min: f64,
    /// Upper voltage magnitude bound, p.u.
    pub v_max: f64,
    /// Lower voltage angle bound, radians.
    pub theta_min: f64,
    /// Upper voltage angle bound, radians.
    pub theta_max: f64,
}

/// Quadratic generation cost `a·P² + b·P + c` with `P` in MW.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCost {
    /// Quadratic coefficient, $/MW²h.
    pub a: f64,
    /// Linear coefficient, $/MWh.
    pub b: f64,
    /// Constant term, $/h.
    pub c: f64,
}

/// A dispatchable generator attached to a bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Bus the unit is connected to.
    pub bus_id: usize,
    /// Active power bounds, MW.
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive power bounds, MVar.
    pub q_min: f64,
    pub q_max: f64,
    pub cost: GeneratorCost,
}

/// A transmission branch (line or transformer) in per-unit on the system base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u.
    pub x: f64,
    /// Total line-charging susceptance, p.u.
    pub b_shunt: f64,
    /// Off-nominal tap ratio on the from side (1.0 for none).
    pub tap: f64,
    /// Phase-shift angle, radians.
    pub shift: f64,
    /// Apparent-power rating in MVA, if the source data gives one.
    pub rate_mva: Option<f64>,
}

/// An immutable transmission network: buses, generators, branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    /// System MVA base for per-unit conversion.
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl NetworkCase {
    /// Number of buses.
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to dense index into `buses`.
    pub fn bus_index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Dense index of the bus with the given external id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Dense index of the slack bus. Panics on a case that failed validation.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    /// Total active load, MW.
    pub fn total_p_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    /// Checks the structural invariants and returns a description of the
    /// first violation found.
    pub fn validate(&self) -> Result<(), CaseError> {
        if self.base_mva <= 0.0 {
            return Err(CaseError::Validation(format!(
                "base MVA must be positive, got {}",
                self.base_mva
            )));
        }
        if self.buses.is_empty() {
            return Err(CaseError::Validation("case has no buses".into()));
        }
        let mut seen = BTreeSet::new();
        for bus in &self.buses {
            if bus.id == 0 {
                return Err(CaseError::Validation("bus ids must be positive".into()));
            }
            if !seen.insert(bus.id) {
                return Err(CaseError::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if bus.v_min > bus.v_max {
                return Err(CaseError::Validation(format!(
                    "bus {}: v_min {} exceeds v_max {}",
                    bus.id, bus.v_min, bus.v_max
                )));
            }
            if bus.theta_min > bus.theta_max {
                return Err(CaseError::Validation(format!(
                    "bus {}: theta_min exceeds theta_max",
                    bus.id
                )));
            }
        }
        let n_slack = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if n_slack == 0 {
            return Err(CaseError::Validation("case has no slack bus".into()));
        }
        if n_slack > 1 {
            return Err(CaseError::Validation(format!("case has {n_slack} slack buses")));
        }
        for gen in &self.generators {
            if !seen.contains(&gen.bus_id) {
                return Err(CaseError::Validation(format!(
                    "generator references unknown bus {}",
                    gen.bus_id
                )));
            }
            if gen.p_min > gen.p_max {
                return Err(CaseError::Validation(format!(
                    "generator at bus {}: p_min {} exceeds p_max {}",
                    gen.bus_id, gen.p_min, gen.p_max
                )));
            }
            if gen.q_min > gen.q_max {
                return Err(CaseError::Validation(format!(
                    "generator at bus {}: q_min {} exceeds q_max {}",
                    gen.bus_id, gen.q_min, gen.q_max
                )));
            }
            if gen.cost.a < 0.0 {
                return Err(CaseError::Validation(format!(
                    "generator at bus {}: negative quadratic cost coefficient",
                    gen.bus_id
                )));
            }
        }
        for branch in &self.branches {
            if branch.from_bus == branch.to_bus {
                return Err(CaseError::Validation(format!(
                    "branch connects bus {} to itself",
                    branch.from_bus
                )));
            }
            for end in [branch.from_bus, branch.to_bus] {
                if !seen.contains(&end) {
                    return Err(CaseError::Validation(format!(
                        "branch {}-{} references unknown bus {end}",
                        branch.from_bus, branch.to_bus
                    )));
                }
            }
            if branch.r == 0.0 && branch.x == 0.0 {
                return Err(CaseError::Validation(format!(
                    "branch {}-{} has zero series impedance",
                    branch.from_bus, branch.to_bus
                )));
            }
            if branch.tap <= 0.0 {
                return Err(CaseError::Validation(format!(
                    "branch {}-{} has non-positive tap ratio {}",
                    branch.from_bus, branch.to_bus, branch.tap
                )));
            }
        }
        Ok(())
    }
}

/// Dense bus-admittance matrix split into real and imaginary parts.
///
/// Entry `(i, j)` corresponds to the buses at dense indices `i` and `j` in the
/// originating case. Dense storage is deliberate: target systems are a few
/// hundred buses at most.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    /// Conductance G, p.u.
    pub g: DMatrix<f64>,
    /// Susceptance B, p.u.
    pub b: DMatrix<f64>,
}

impl AdmittanceMatrix {
    /// Matrix dimension (number of buses).
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Complex admittance entry `G + jB` at `(i, j)`.
    pub fn y(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.g[(i, j)], self.b[(i, j)])
    }
}

/// A branch crossing the region boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieLine {
    /// Index into [`NetworkCase::branches`].
    pub branch_index: usize,
    pub from_bus: usize,
    pub to_bus: usize,
}

/// A split of a case into named regions plus the shared boundary.
///
/// `consensus_buses` are the endpoints of every tie-line, sorted by id: the
/// buses whose voltage state is common knowledge between regions. Everything
/// else about a region stays private to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    /// Region name → set of member bus ids. Disjoint, covering all buses.
    pub regions: BTreeMap<String, BTreeSet<usize>>,
    /// Bus ids on the boundary, ascending.
    pub consensus_buses: Vec<usize>,
    /// Branches whose endpoints lie in different regions.
    pub tie_lines: Vec<TieLine>,
}

impl RegionPartition {
    /// Name of the region owning the given bus.
    pub fn region_of(&self, bus_id: usize) -> Option<&str> {
        self.regions
            .iter()
            .find(|(_, buses)| buses.contains(&bus_id))
            .map(|(name, _)| name.as_str())
    }

    /// Region names in deterministic (lexicographic) order.
    pub fn region_names(&self) -> Vec<&str> {
        self.regions.keys().map(String::as_str).collect()
    }
}

/// Parses a case from the `.m` case format.
///
/// Only the `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch`, and
/// `mpc.gencost` assignments are interpreted; comments and any other fields
/// are skipped. Out-of-service generators and branches (status 0) are
/// dropped. Cost tables must use the polynomial model with degree ≤ 2.
/// Angle bounds, which the format does not carry, default to [−π, π] with
/// the slack angle pinned at 0.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let mut tables: HashMap<String, Vec<(usize, Vec<f64>)>> = HashMap::new();
    let mut base_mva: Option<f64> = None;
    // Name of the matrix currently being collected, if any.
    let mut open: Option<String> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('%') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }

        if let Some(name) = open.clone() {
            let (content, closes) = match line.find(']') {
                Some(pos) => (&line[..pos], true),
                None => (line, false),
            };
            for chunk in content.split(';') {
                let chunk = chunk.trim();
                if chunk.is_empty() {
                    continue;
                }
                let row = parse_row(chunk, lineno)?;
                tables.entry(name.clone()).or_default().push((lineno, row));
            }
            if closes {
                open = None;
            }
            continue;
        }

        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some(eq) = rest.find('=') else {
            continue;
        };
        let field = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim();

        if let Some(after) = value.strip_prefix('[') {
            // Matrix assignment; the opening line may already carry rows.
            open = Some(field.clone());
            let (content, closes) = match after.find(']') {
                Some(pos) => (&after[..pos], true),
                None => (after, false),
            };
            for chunk in content.split(';') {
                let chunk = chunk.trim();
                if chunk.is_empty() {
                    continue;
                }
                let row = parse_row(chunk, lineno)?;
                tables.entry(field.clone()).or_default().push((lineno, row));
            }
            if closes {
                open = None;
            }
        } else if field == "baseMVA" {
            let token = value.trim_end_matches(';').trim();
            base_mva = Some(token.parse::<f64>().map_err(|_| CaseError::Parse {
                line: lineno,
                message: format!("cannot read base MVA from {token:?}"),
            })?);
        }
        // Scalar assignments other than baseMVA (version strings etc.) are
        // ignored.
    }

    if let Some(name) = open {
        return Err(CaseError::Validation(format!("unterminated matrix mpc.{name}")));
    }
    let base_mva = base_mva.ok_or_else(|| CaseError::Validation("missing mpc.baseMVA".into()))?;

    let bus_rows = tables.remove("bus").ok_or_else(|| CaseError::Validation("missing mpc.bus".into()))?;
    let gen_rows = tables.remove("gen").ok_or_else(|| CaseError::Validation("missing mpc.gen".into()))?;
    let branch_rows =
        tables.remove("branch").ok_or_else(|| CaseError::Validation("missing mpc.branch".into()))?;
    let cost_rows =
        tables.remove("gencost").ok_or_else(|| CaseError::Validation("missing mpc.gencost".into()))?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    for (line, row) in &bus_rows {
        buses.push(parse_bus(row, *line)?);
    }

    if cost_rows.len() != gen_rows.len() {
        return Err(CaseError::Validation(format!(
            "gencost has {} rows but gen has {}",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut generators = Vec::new();
    for ((line, row), (cost_line, cost_row)) in gen_rows.iter().zip(&cost_rows) {
        if let Some(gen) = parse_gen(row, *line, cost_row, *cost_line)? {
            generators.push(gen);
        }
    }

    let mut branches = Vec::new();
    for (line, row) in &branch_rows {
        if let Some(branch) = parse_branch(row, *line)? {
            branches.push(branch);
        }
    }

    let case = NetworkCase { base_mva, buses, generators, branches };
    case.validate()?;
    Ok(case)
}

fn parse_row(chunk: &str, line: usize) -> Result<Vec<f64>, CaseError> {
    chunk
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| CaseError::Parse {
                line,
                message: format!("cannot read number from {tok:?}"),
            })
        })
        .collect()
}

fn require(row: &[f64], cols: usize, table: &str, line: usize) -> Result<(), CaseError> {
    if row.len() < cols {
        return Err(CaseError::Parse {
            line,
            message: format!("{table} row has {} columns, expected at least {cols}", row.len()),
        });
    }
    Ok(())
}

fn parse_bus(row: &[f64], line: usize) -> Result<Bus, CaseError> {
    require(row, 13, "bus", line)?;
    let id = row[0] as usize;
    let kind = match row[1] as i64 {
        1 => BusKind::Pq,
        2 => BusKind::Pv,
        3 => BusKind::Slack,
        other => {
            return Err(CaseError::Parse { line, message: format!("unknown bus type {other}") });
        }
    };
    let (theta_min, theta_max) = if kind == BusKind::Slack {
        (0.0, 0.0)
    } else {
        (-std::f64::consts::PI, std::f64::consts::PI)
    };
    Ok(Bus {
        id,
        kind,
        p_load: row[2],
        q_load: row[3],
        gs_shunt: row[4],
        bs_shunt: row[5],
        v_min: row[12],
        v_max: row[11],
        theta_min,
        theta_max,
    })
}

fn parse_gen(
    row: &[f64],
    line: usize,
    cost_row: &[f64],
    cost_line: usize,
) -> Result<Option<Generator>, CaseError> {
    require(row, 10, "gen", line)?;
    if row[7] <= 0.0 {
        return Ok(None); // out of service
    }
    require(cost_row, 4, "gencost", cost_line)?;
    let model = cost_row[0] as i64;
    if model != 2 {
        return Err(CaseError::Parse {
            line: cost_line,
            message: format!("unsupported cost model {model}; only polynomial costs are handled"),
        });
    }
    let n = cost_row[3] as usize;
    require(cost_row, 4 + n, "gencost", cost_line)?;
    let coeffs = &cost_row[4..4 + n];
    let cost = match n {
        1 => GeneratorCost { a: 0.0, b: 0.0, c: coeffs[0] },
        2 => GeneratorCost { a: 0.0, b: coeffs[0], c: coeffs[1] },
        3 => GeneratorCost { a: coeffs[0], b: coeffs[1], c: coeffs[2] },
        _ => {
            return Err(CaseError::Parse {
                line: cost_line,
                message: format!("cost polynomial of degree {} not supported (max 2)", n - 1),
            });
        }
    };
    Ok(Some(Generator {
        bus_id: row[0] as usize,
        p_min: row[9],
        p_max: row[8],
        q_min: row[4],
        q_max: row[3],
        cost,
    }))
}

fn parse_branch(row: &[f64], line: usize) -> Result<Option<Branch>, CaseError> {
    require(row, 11, "branch", line)?;
    if row[10] <= 0.0 {
        return Ok(None); // out of service
    }
    let ratio = row[8];
    Ok(Some(Branch {
        from_bus: row[0] as usize,
        to_bus: row[1] as usize,
        r: row[2],
        x: row[3],
        b_shunt: row[4],
        tap: if ratio == 0.0 { 1.0 } else { ratio },
        shift: row[9].to_radians(),
        rate_mva: if row[5] > 0.0 { Some(row[5]) } else { None },
    }))
}

/// Serializes a case back to the `.m` format accepted by [`parse_case`].
///
/// Fields the format cannot carry (angle bounds) are regenerated by the
/// parser's defaults, so `parse(case_to_text(parse(text)))` equals
/// `parse(text)` for any accepted input.
pub fn case_to_text(case: &NetworkCase) -> String {
    let mut out = String::new();
    out.push_str("function mpc = case\n");
    out.push_str("mpc.version = '2';\n");
    let _ = writeln!(out, "mpc.baseMVA = {};", case.base_mva);

    out.push_str("mpc.bus = [\n");
    for bus in &case.buses {
        let kind = match bus.kind {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        };
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1\t0\t0\t1\t{}\t{};",
            bus.id, kind, bus.p_load, bus.q_load, bus.gs_shunt, bus.bs_shunt, bus.v_max, bus.v_min
        );
    }
    out.push_str("];\n");

    out.push_str("mpc.gen = [\n");
    for gen in &case.generators {
        let _ = writeln!(
            out,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t1\t{}\t{}\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0\t0;",
            gen.bus_id, gen.q_max, gen.q_min, case.base_mva, gen.p_max, gen.p_min
        );
    }
    out.push_str("];\n");

    out.push_str("mpc.branch = [\n");
    for branch in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t1\t-360\t360;",
            branch.from_bus,
            branch.to_bus,
            branch.r,
            branch.x,
            branch.b_shunt,
            branch.rate_mva.unwrap_or(0.0),
            branch.tap,
            branch.shift.to_degrees()
        );
    }
    out.push_str("];\n");

    out.push_str("mpc.gencost = [\n");
    for gen in &case.generators {
        let _ = writeln!(out, "\t2\t0\t0\t3\t{}\t{}\t{};", gen.cost.a, gen.cost.b, gen.cost.c);
    }
    out.push_str("];\n");
    out
}

/// Builds the dense bus admittance matrix.
///
/// Standard construction: each branch contributes its series admittance
/// `y = 1/(r + jx)` and half its line charging to the diagonal, with
/// off-diagonals scaled by the (possibly complex) tap ratio; bus shunts are
/// converted to per-unit on the system base and added to the diagonal.
pub fn build_admittance(case: &NetworkCase) -> Result<AdmittanceMatrix, CaseError> {
    let n = case.n_buses();
    let index = case.bus_index_map();
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, n);

    for branch in &case.branches {
        if branch.r == 0.0 && branch.x == 0.0 {
            return Err(CaseError::SingularBranch {
                from_bus: branch.from_bus,
                to_bus: branch.to_bus,
            });
        }
        let f = index[&branch.from_bus];
        let t = index[&branch.to_bus];
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(branch.r, branch.x);
        let charge = Complex64::new(0.0, branch.b_shunt / 2.0);
        let tap = Complex64::from_polar(branch.tap, branch.shift);

        let ytt = ys + charge;
        let yff = ytt / (branch.tap * branch.tap);
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;

        g[(f, f)] += yff.re;
        b[(f, f)] += yff.im;
        g[(t, t)] += ytt.re;
        b[(t, t)] += ytt.im;
        g[(f, t)] += yft.re;
        b[(f, t)] += yft.im;
        g[(t, f)] += ytf.re;
        b[(t, f)] += ytf.im;
    }

    for (i, bus) in case.buses.iter().enumerate() {
        g[(i, i)] += bus.gs_shunt / case.base_mva;
        b[(i, i)] += bus.bs_shunt / case.base_mva;
    }

    Ok(AdmittanceMatrix { g, b })
}

/// Reads a region assignment from JSON text: an object mapping region names
/// to arrays of bus ids.
pub fn load_partition_spec(text: &str) -> Result<BTreeMap<String, Vec<usize>>, CaseError> {
    serde_json::from_str(text).map_err(|e| CaseError::Parse {
        line: e.line(),
        message: format!("invalid region spec: {e}"),
    })
}

/// Splits a case into regions and derives the tie-lines and consensus buses.
///
/// Every bus must be assigned to exactly one region. A region without a
/// generator is accepted with a warning, since its subproblem can only shed
/// or import power.
pub fn build_partition(
    case: &NetworkCase,
    assignment: &BTreeMap<String, Vec<usize>>,
) -> Result<RegionPartition, CaseError> {
    let mut owner: HashMap<usize, &str> = HashMap::new();
    let mut regions: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for (name, bus_ids) in assignment {
        let set: &mut BTreeSet<usize> = regions.entry(name.clone()).or_default();
        for &bus_id in bus_ids {
            if case.bus_index(bus_id).is_none() {
                return Err(CaseError::Validation(format!(
                    "region {name} lists bus {bus_id}, which is not in the case"
                )));
            }
            if let Some(other) = owner.insert(bus_id, name) {
                return Err(CaseError::Validation(format!(
                    "bus {bus_id} assigned to both {other} and {name}"
                )));
            }
            set.insert(bus_id);
        }
    }
    for bus in &case.buses {
        if !owner.contains_key(&bus.id) {
            return Err(CaseError::Validation(format!(
                "bus {} is not assigned to any region",
                bus.id
            )));
        }
    }

    let mut tie_lines = Vec::new();
    let mut consensus: BTreeSet<usize> = BTreeSet::new();
    for (idx, branch) in case.branches.iter().enumerate() {
        if owner[&branch.from_bus] != owner[&branch.to_bus] {
            tie_lines.push(TieLine {
                branch_index: idx,
                from_bus: branch.from_bus,
                to_bus: branch.to_bus,
            });
            consensus.insert(branch.from_bus);
            consensus.insert(branch.to_bus);
        }
    }

    for (name, buses) in &regions {
        let has_gen = case.generators.iter().any(|gen| buses.contains(&gen.bus_id));
        if !has_gen {
            log::warn!("region {name} has no generator; its subproblem may be infeasible");
        }
    }

    Ok(RegionPartition {
        regions,
        consensus_buses: consensus.into_iter().collect(),
        tie_lines,
    })
}
