//! Monte Carlo load scenarios: Gaussian sampling, K-means clustering with
//! density seeding, and Simultaneous Backward Reduction (SBR).
//!
//! A [`ScenarioSet`] is a discrete distribution over active-load vectors:
//! `M` rows of per-bus demand with probabilities summing to one. Sampling
//! draws each bus load independently from `N(base, (σ_frac·base)²)`,
//! truncated at zero. Reduction first clusters the sample ([`improved_kmeans`],
//! seeded by the densest scenario and farthest-point spreading), then prunes
//! each cluster with [`sbr_reduce`], which greedily removes the scenario
//! cheapest to absorb — smallest probability × distance to its nearest
//! neighbor — handing its probability to that neighbor. The quality measure
//! throughout is the Kantorovich distance between the original set and the
//! reduced one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::NetworkCase;

/// Errors from scenario construction and reduction.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario set: {0}")]
    Validation(String),
    #[error("scenario file: {0}")]
    Format(String),
}

/// A discrete distribution over load scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    /// M × n_buses active demands, MW, in the case's dense bus order.
    pub loads: Vec<Vec<f64>>,
    /// Per-scenario probabilities, summing to 1.
    pub probabilities: Vec<f64>,
    /// Seed the set was sampled from, when it came from [`sample_gaussian`].
    #[serde(rename = "seed", default, skip_serializing_if = "Option::is_none")]
    pub source_seed: Option<u64>,
}

impl ScenarioSet {
    /// Number of scenarios.
    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    /// Number of buses each scenario covers.
    pub fn n_buses(&self) -> usize {
        self.loads.first().map_or(0, Vec::len)
    }

    /// Checks the set's invariants: consistent row widths, nonnegative
    /// loads, probabilities matching and summing to one.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.loads.is_empty() {
            return Err(ScenarioError::Validation("no scenarios".into()));
        }
        let width = self.loads[0].len();
        for (s, row) in self.loads.iter().enumerate() {
            if row.len() != width {
                return Err(ScenarioError::Validation(format!(
                    "scenario {s} has {} buses, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(ScenarioError::Validation(format!(
                    "scenario {s} contains a negative or non-finite load"
                )));
            }
        }
        if self.probabilities.len() != self.loads.len() {
            return Err(ScenarioError::Validation(format!(
                "{} probabilities for {} scenarios",
                self.probabilities.len(),
                self.loads.len()
            )));
        }
        if self.probabilities.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(ScenarioError::Validation("negative probability".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::Validation(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Parses and validates a set from its JSON form.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let set: ScenarioSet =
            serde_json::from_str(text).map_err(|e| ScenarioError::Format(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    /// Serializes the set to JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario sets serialize infallibly")
    }

    /// CSV export (one scenario per row) for external plotting.
    pub fn to_csv(&self) -> String {
        let n = self.n_buses();
        let mut out = String::from("probability");
        for i in 1..=n {
            out.push_str(&format!(",load_{i}"));
        }
        out.push('\n');
        for (row, p) in self.loads.iter().zip(&self.probabilities) {
            out.push_str(&p.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// K-means clustering result over a scenario set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index per scenario, each in `[0, k)`.
    pub labels: Vec<usize>,
    /// k cluster centers (coordinate-wise means of their members).
    pub centers: Vec<Vec<f64>>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Full pairwise distance matrix, row-major.
fn distance_matrix(loads: &[Vec<f64>]) -> Vec<f64> {
    let m = loads.len();
    let mut d = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let dist = euclid(&loads[i], &loads[j]);
            d[i * m + j] = dist;
            d[j * m + i] = dist;
        }
    }
    d
}

/// Samples `m` load scenarios, each bus drawn independently from
/// `N(base, (sigma_frac·base)²)` truncated at zero by rejection, with
/// uniform probabilities `1/m`. Deterministic for a given seed.
pub fn sample_gaussian(case: &NetworkCase, m: usize, sigma_frac: f64, seed: u64) -> ScenarioSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loads = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = Vec::with_capacity(case.n_buses());
        for bus in &case.buses {
            let base = bus.p_load;
            let sd = sigma_frac * base;
            if base <= 0.0 || sd == 0.0 {
                row.push(base.max(0.0));
                continue;
            }
            let normal = Normal::new(base, sd).expect("finite mean and positive deviation");
            let value = loop {
                let draw = normal.sample(&mut rng);
                if draw >= 0.0 {
                    break draw;
                }
            };
            row.push(value);
        }
        loads.push(row);
    }
    ScenarioSet {
        loads,
        probabilities: vec![1.0 / m as f64; m],
        source_seed: Some(seed),
    }
}

/// K-means with density-based seeding.
///
/// The first center is the scenario with the most neighbors within radius
/// `r` = mean pairwise distance; each subsequent center is the scenario
/// farthest from all chosen centers (max-min distance). Lloyd iterations
/// then run to a fixed assignment or 100 rounds, re-seeding any emptied
/// cluster with the point farthest from its own center. Every stage is
/// deterministic; `_seed` is part of the signature for interface stability
/// but currently unused.
pub fn improved_kmeans(
    s: &ScenarioSet,
    k: usize,
    _seed: u64,
) -> Result<ClusterAssignment, ScenarioError> {
    s.validate()?;
    let m = s.len();
    if k == 0 || k > m {
        return Err(ScenarioError::Validation(format!(
            "cannot form {k} clusters from {m} scenarios"
        )));
    }
    let dist = distance_matrix(&s.loads);

    // Density seeding: count neighbors within the mean pairwise distance.
    let radius = if m > 1 {
        dist.iter().sum::<f64>() / (m * (m - 1)) as f64
    } else {
        0.0
    };
    let mut first = 0;
    let mut best_density = usize::MIN;
    for i in 0..m {
        let density = (0..m).filter(|&j| j != i && dist[i * m + j] <= radius).count();
        if density > best_density {
            best_density = density;
            first = i;
        }
    }

    let mut seeds = vec![first];
    while seeds.len() < k {
        let mut next = None;
        let mut best = -1.0f64;
        for i in 0..m {
            if seeds.contains(&i) {
                continue;
            }
            let nearest = seeds.iter().map(|&c| dist[i * m + c]).fold(f64::INFINITY, f64::min);
            if nearest > best {
                best = nearest;
                next = Some(i);
            }
        }
        seeds.push(next.expect("k ≤ m leaves an unchosen scenario"));
    }

    let mut centers: Vec<Vec<f64>> = seeds.iter().map(|&i| s.loads[i].clone()).collect();
    let mut labels = vec![0usize; m];
    for _round in 0..100 {
        // Assignment step.
        let mut changed = false;
        for i in 0..m {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = euclid(&s.loads[i], center);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
        }

        // Repair empty clusters by stealing the globally worst-fitting point.
        for c in 0..k {
            if labels.iter().any(|&l| l == c) {
                continue;
            }
            let stray = (0..m)
                .max_by(|&a, &b| {
                    let da = euclid(&s.loads[a], &centers[labels[a]]);
                    let db = euclid(&s.loads[b], &centers[labels[b]]);
                    da.partial_cmp(&db).expect("finite distances")
                })
                .expect("nonempty scenario set");
            labels[stray] = c;
            changed = true;
        }

        // Update step: plain coordinate-wise means.
        let width = s.n_buses();
        let mut sums = vec![vec![0.0; width]; k];
        let mut counts = vec![0usize; k];
        for i in 0..m {
            counts[labels[i]] += 1;
            for (acc, v) in sums[labels[i]].iter_mut().zip(&s.loads[i]) {
                *acc += v;
            }
        }
        for c in 0..k {
            for v in sums[c].iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        centers = sums;

        if !changed {
            break;
        }
    }

    Ok(ClusterAssignment { labels, centers })
}

/// Simultaneous Backward Reduction to `target` scenarios.
///
/// Repeatedly removes the kept scenario with the smallest removal cost —
/// current probability times distance to its nearest kept neighbor — and
/// transfers its probability to that neighbor. Cost ties resolve to the
/// later scenario. Survivors keep their original order.
pub fn sbr_reduce(s: &ScenarioSet, target: usize) -> Result<ScenarioSet, ScenarioError> {
    s.validate()?;
    let m = s.len();
    if target == 0 || target > m {
        return Err(ScenarioError::Validation(format!(
            "cannot reduce {m} scenarios to {target}"
        )));
    }
    let dist = distance_matrix(&s.loads);
    let mut kept: Vec<usize> = (0..m).collect();
    let mut prob = s.probabilities.clone();

    while kept.len() > target {
        // Removal cost of each kept scenario; d(s*, nearest other kept).
        let mut victim_pos = 0;
        let mut victim_cost = f64::INFINITY;
        for (pos, &i) in kept.iter().enumerate() {
            let nearest = kept
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist[i * m + j])
                .fold(f64::INFINITY, f64::min);
            let cost = prob[i] * nearest;
            if cost <= victim_cost {
                victim_cost = cost;
                victim_pos = pos;
            }
        }
        let victim = kept.remove(victim_pos);

        // Probability transfers to the nearest survivor.
        let heir = *kept
            .iter()
            .min_by(|&&a, &&b| {
                dist[victim * m + a]
                    .partial_cmp(&dist[victim * m + b])
                    .expect("finite distances")
            })
            .expect("target ≥ 1 keeps a survivor");
        prob[heir] += prob[victim];
    }

    Ok(ScenarioSet {
        loads: kept.iter().map(|&i| s.loads[i].clone()).collect(),
        probabilities: kept.iter().map(|&i| prob[i]).collect(),
        source_seed: s.source_seed,
    })
}

/// Combined reduction: cluster with [`improved_kmeans`], then SBR within
/// each cluster to `per_cluster_target` survivors (or the cluster size if
/// smaller). A survivor's final probability is its cluster's total mass
/// times its share of the within-cluster reduced distribution; survivors
/// come out in their original sampling order.
pub fn reduce(
    s: &ScenarioSet,
    k: usize,
    per_cluster_target: usize,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    s.validate()?;
    if per_cluster_target == 0 {
        return Err(ScenarioError::Validation("per-cluster target must be ≥ 1".into()));
    }
    if k * per_cluster_target > s.len() {
        return Err(ScenarioError::Validation(format!(
            "{k} clusters × {per_cluster_target} survivors exceeds {} scenarios",
            s.len()
        )));
    }
    let clusters = improved_kmeans(s, k, seed)?;

    let mut survivors: Vec<(usize, f64)> = Vec::new();
    for c in 0..k {
        let members: Vec<usize> = (0..s.len()).filter(|&i| clusters.labels[i] == c).collect();
        let mass: f64 = members.iter().map(|&i| s.probabilities[i]).sum();
        if mass <= 0.0 {
            continue; // zero-probability cluster contributes nothing
        }
        let sub = ScenarioSet {
            loads: members.iter().map(|&i| s.loads[i].clone()).collect(),
            probabilities: members.iter().map(|&i| s.probabilities[i] / mass).collect(),
            source_seed: None,
        };
        let reduced = sbr_reduce(&sub, per_cluster_target.min(members.len()))?;
        // Map survivors back to their original indices.
        let mut cursor = 0;
        for (row, p) in reduced.loads.iter().zip(&reduced.probabilities) {
            while sub.loads[cursor] != *row {
                cursor += 1;
            }
            survivors.push((members[cursor], mass * p));
        }
    }
    survivors.sort_by_key(|&(i, _)| i);

    Ok(ScenarioSet {
        loads: survivors.iter().map(|&(i, _)| s.loads[i].clone()).collect(),
        probabilities: survivors.iter().map(|&(_, p)| p).collect(),
        source_seed: s.source_seed,
    })
}

/// Kantorovich distance from `original` to `reduced`:
/// `Σ_s μ_s · min_{s' ∈ reduced} d(s, s')`. Zero exactly when every original
/// scenario appears in the reduced support.
pub fn kantorovich_distance(
    original: &ScenarioSet,
    reduced: &ScenarioSet,
) -> Result<f64, ScenarioError> {
    if reduced.is_empty() {
        return Err(ScenarioError::Validation(
            "Kantorovich distance to an empty set is undefined".into(),
        ));
    }
    let mut total = 0.0;
    for (row, p) in original.loads.iter().zip(&original.probabilities) {
        let nearest = reduced
            .loads
            .iter()
            .map(|r| euclid(row, r))
            .fold(f64::INFINITY, f64::min);
        total += p * nearest;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::case::parse_case;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const CASE14: &str = include_str!("../data/case14.m");

    fn one_dim(values: &[f64]) -> ScenarioSet {
        let m = values.len();
        ScenarioSet {
            loads: values.iter().map(|&v| vec![v]).collect(),
            probabilities: vec![1.0 / m as f64; m],
            source_seed: None,
        }
    }

    #[test]
    fn zero_sigma_reproduces_base_loads_exactly() {
        let case = parse_case(CASE14).unwrap();
        let set = sample_gaussian(&case, 7, 0.0, 3);
        assert_eq!(set.len(), 7);
        let base: Vec<f64> = case.buses.iter().map(|b| b.p_load).collect();
        for row in &set.loads {
            assert_eq!(row, &base);
        }
        set.validate().unwrap();
    }

    #[test]
    fn sample_means_track_base_loads() {
        let case = parse_case(CASE14).unwrap();
        let m = 100;
        let set = sample_gaussian(&case, m, 0.1, 42);
        for (b, bus) in case.buses.iter().enumerate() {
            let mean: f64 = set.loads.iter().map(|row| row[b]).sum::<f64>() / m as f64;
            let sigma = 0.1 * bus.p_load;
            let band = 3.0 * sigma / (m as f64).sqrt();
            assert!(
                (mean - bus.p_load).abs() <= band.max(1e-12),
                "bus {}: sample mean {mean} vs base {} (band {band})",
                bus.id,
                bus.p_load
            );
        }
    }

    #[test]
    fn zero_load_buses_stay_at_zero() {
        let case = parse_case(CASE14).unwrap();
        let set = sample_gaussian(&case, 50, 0.1, 9);
        for (b, bus) in case.buses.iter().enumerate() {
            if bus.p_load == 0.0 {
                assert!(set.loads.iter().all(|row| row[b] == 0.0));
            }
        }
    }

    #[test]
    fn identical_seeds_sample_identically() {
        let case = parse_case(CASE14).unwrap();
        let a = sample_gaussian(&case, 40, 0.1, 1234);
        let b = sample_gaussian(&case, 40, 0.1, 1234);
        assert_eq!(a, b);
        let c = sample_gaussian(&case, 40, 0.1, 1235);
        assert_ne!(a.loads, c.loads);
    }

    #[test]
    fn single_cluster_center_is_the_mean() {
        let set = one_dim(&[1.0, 2.0, 6.0]);
        let clusters = improved_kmeans(&set, 1, 0).unwrap();
        assert_eq!(clusters.labels, vec![0, 0, 0]);
        assert_abs_diff_eq!(clusters.centers[0][0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn as_many_clusters_as_scenarios_isolates_each() {
        let set = one_dim(&[0.0, 5.0, 11.0, 20.0]);
        let clusters = improved_kmeans(&set, 4, 0).unwrap();
        let mut labels = clusters.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn separated_clouds_split_cleanly() {
        // Two clouds of diameter ≤ 2 separated by 100.
        let mut values = vec![0.0, 1.0, 2.0, 0.5, 1.5];
        values.extend([100.0, 101.0, 102.0, 100.5, 101.5]);
        let set = one_dim(&values);
        let clusters = improved_kmeans(&set, 2, 0).unwrap();
        let low = clusters.labels[0];
        for i in 0..5 {
            assert_eq!(clusters.labels[i], low, "scenario {i} left its cloud");
        }
        for i in 5..10 {
            assert_ne!(clusters.labels[i], low, "scenario {i} crossed clouds");
        }
    }

    #[test]
    fn cluster_count_above_population_is_rejected() {
        let set = one_dim(&[1.0, 2.0]);
        assert!(improved_kmeans(&set, 3, 0).is_err());
    }

    #[test]
    fn sbr_keeps_everything_when_target_is_full() {
        let set = one_dim(&[0.0, 1.0, 10.0]);
        let reduced = sbr_reduce(&set, 3).unwrap();
        assert_eq!(reduced, set);
    }

    #[test]
    fn sbr_on_three_point_line_drops_the_middle() {
        let set = one_dim(&[0.0, 1.0, 10.0]);
        let reduced = sbr_reduce(&set, 2).unwrap();
        assert_eq!(reduced.loads, vec![vec![0.0], vec![10.0]]);
        assert_abs_diff_eq!(reduced.probabilities[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(reduced.probabilities[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn sbr_collapses_identical_scenarios_to_probability_one() {
        let set = one_dim(&[4.0, 4.0, 4.0, 4.0]);
        let reduced = sbr_reduce(&set, 1).unwrap();
        assert_eq!(reduced.len(), 1);
        assert_abs_diff_eq!(reduced.probabilities[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn first_sbr_removal_is_single_step_optimal() {
        // Deterministic pseudo-random sets small enough to brute-force.
        for trial in 0..8 {
            let mut state = 0x9e3779b97f4a7c15u64.wrapping_mul(trial + 1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f64) / (u32::MAX as f64) * 50.0
            };
            let m = 5 + (trial as usize % 8); // 5..=12
            let values: Vec<f64> = (0..m).map(|_| next()).collect();
            let set = one_dim(&values);

            let reduced = sbr_reduce(&set, m - 1).unwrap();
            let removed = (0..m)
                .find(|&i| !reduced.loads.contains(&set.loads[i]) || {
                    // duplicates: removed index is the one whose count dropped
                    let orig = set.loads.iter().filter(|r| **r == set.loads[i]).count();
                    let kept = reduced.loads.iter().filter(|r| **r == set.loads[i]).count();
                    orig > kept
                })
                .expect("one scenario was removed");

            let removal_cost = |i: usize| -> f64 {
                let d = (0..m)
                    .filter(|&j| j != i)
                    .map(|j| (values[i] - values[j]).abs())
                    .fold(f64::INFINITY, f64::min);
                set.probabilities[i] * d
            };
            let best = (0..m).map(removal_cost).fold(f64::INFINITY, f64::min);
            assert!(
                removal_cost(removed) <= best + 1e-12,
                "trial {trial}: removed {removed} at cost {} vs best {best}",
                removal_cost(removed)
            );
        }
    }

    #[test]
    fn combined_reduction_conserves_probability_and_support() {
        let case = parse_case(CASE14).unwrap();
        let set = sample_gaussian(&case, 100, 0.1, 7);
        let reduced = reduce(&set, 5, 2, 7).unwrap();
        assert_eq!(reduced.len(), 10);
        let total: f64 = reduced.probabilities.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        for row in &reduced.loads {
            assert!(set.loads.contains(row), "reduction invented a scenario");
        }
    }

    #[test]
    fn identity_reduction_with_one_full_cluster() {
        let set = one_dim(&[3.0, 8.0, 1.0]);
        let reduced = reduce(&set, 1, 3, 0).unwrap();
        assert_eq!(reduced.loads, set.loads);
        for (a, b) in reduced.probabilities.iter().zip(&set.probabilities) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reduction_beats_random_subsets_on_kantorovich_distance() {
        let case = parse_case(CASE14).unwrap();
        let set = sample_gaussian(&case, 100, 0.1, 21);
        let reduced = reduce(&set, 5, 2, 21).unwrap();
        let ours = kantorovich_distance(&set, &reduced).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let mut picks: Vec<usize> = Vec::new();
            while picks.len() < reduced.len() {
                let i = rng.gen_range(0..set.len());
                if !picks.contains(&i) {
                    picks.push(i);
                }
            }
            let subset = ScenarioSet {
                loads: picks.iter().map(|&i| set.loads[i].clone()).collect(),
                probabilities: vec![1.0 / picks.len() as f64; picks.len()],
                source_seed: None,
            };
            let theirs = kantorovich_distance(&set, &subset).unwrap();
            assert!(
                ours <= theirs,
                "trial {trial}: reduction ({ours}) lost to a random subset ({theirs})"
            );
        }
    }

    #[test]
    fn kantorovich_hand_values() {
        let set = one_dim(&[0.0, 1.0, 10.0]);
        assert_abs_diff_eq!(kantorovich_distance(&set, &set).unwrap(), 0.0, epsilon = 1e-15);

        let reduced = one_dim(&[0.0, 10.0]);
        assert_abs_diff_eq!(
            kantorovich_distance(&set, &reduced).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-12
        );

        let single = ScenarioSet {
            loads: vec![vec![1.0]],
            probabilities: vec![1.0],
            source_seed: None,
        };
        let expected: f64 = set
            .probabilities
            .iter()
            .zip(&set.loads)
            .map(|(p, row)| p * (row[0] - 1.0).abs())
            .sum();
        assert_abs_diff_eq!(
            kantorovich_distance(&set, &single).unwrap(),
            expected,
            epsilon = 1e-12
        );

        assert!(kantorovich_distance(
            &set,
            &ScenarioSet { loads: vec![], probabilities: vec![], source_seed: None }
        )
        .is_err());
    }

    #[test]
    fn json_round_trip_preserves_the_set() {
        let case = parse_case(CASE14).unwrap();
        let set = sample_gaussian(&case, 5, 0.1, 11);
        let text = set.to_json();
        assert!(text.contains("\"seed\": 11"));
        let back = ScenarioSet::from_json(&text).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn csv_export_has_one_row_per_scenario() {
        let set = one_dim(&[1.5, 2.5]);
        let csv = set.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "probability,load_1");
        assert!(lines[1].starts_with("0.5,1.5"));
    }

    proptest! {
        #[test]
        fn sampling_conserves_probability_and_nonnegativity(
            m in 1usize..40,
            sigma in 0.0f64..1.5,
            seed in 0u64..1000,
        ) {
            let case = parse_case(CASE14).unwrap();
            let set = sample_gaussian(&case, m, sigma, seed);
            prop_assert!(set.validate().is_ok());
            let total: f64 = set.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn sbr_conserves_probability(target in 1usize..12, seed in 0u64..200) {
            let case = parse_case(CASE14).unwrap();
            let set = sample_gaussian(&case, 12, 0.2, seed);
            let reduced = sbr_reduce(&set, target).unwrap();
            prop_assert_eq!(reduced.len(), target);
            let total: f64 = reduced.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }
}
