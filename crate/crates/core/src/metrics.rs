//! Per-plan measures: two-party shares, seats, ranked shares, county splits,
//! perimeter, vote-band competitiveness and uniform-swing variants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DualGraph, VoteCount};
use crate::partition::Plan;

/// Schema version of [`MetricRecord`] lines.
pub const RECORD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("two-party share undefined: zero major-party votes")]
    ZeroVotes,
    #[error("district {district} has no major-party votes in election \"{election}\"")]
    EmptyDistrict { district: usize, election: String },
    #[error("unknown election \"{0}\"")]
    UnknownElection(String),
    #[error("statewide share {0} must lie strictly between 0 and 1")]
    StatewideShare(f64),
}

/// Democratic share of the two-party vote.
pub fn two_party_share(dem: u64, rep: u64) -> Result<f64, MetricsError> {
    let total = dem + rep;
    if total == 0 {
        return Err(MetricsError::ZeroVotes);
    }
    Ok(dem as f64 / total as f64)
}

pub fn district_votes(graph: &DualGraph, plan: &Plan, election: usize) -> Vec<VoteCount> {
    let mut votes = vec![VoteCount::default(); plan.k()];
    for (node, &d) in graph.nodes().iter().zip(plan.assignment()) {
        votes[d as usize] += node.votes[election];
    }
    votes
}

/// Two-party share per district, in district-index order.
pub fn district_shares(graph: &DualGraph, plan: &Plan, election: usize) -> Result<Vec<f64>, MetricsError> {
    district_votes(graph, plan, election)
        .iter()
        .enumerate()
        .map(|(d, v)| {
            two_party_share(v.dem, v.rep).map_err(|_| MetricsError::EmptyDistrict {
                district: d,
                election: graph.elections()[election].clone(),
            })
        })
        .collect()
}

/// Districts with share strictly above one half; exact ties are not seats.
pub fn seats(shares: &[f64]) -> usize {
    shares.iter().filter(|&&s| s > 0.5).count()
}

pub fn sorted_shares(shares: &[f64]) -> Vec<f64> {
    let mut v = shares.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Closed vote-share interval counted as competitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveBand {
    pub lo: f64,
    pub hi: f64,
}

impl Default for CompetitiveBand {
    fn default() -> Self {
        CompetitiveBand { lo: 0.45, hi: 0.55 }
    }
}

pub fn competitive_count(shares: &[f64], band: CompetitiveBand) -> usize {
    shares.iter().filter(|&&s| band.lo <= s && s <= band.hi).count()
}

/// Shift that moves the statewide share to exactly one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwingSpec {
    pub statewide_share: f64,
    pub delta: f64,
}

impl SwingSpec {
    pub fn new(statewide_share: f64) -> Result<Self, MetricsError> {
        if !(statewide_share > 0.0 && statewide_share < 1.0) {
            return Err(MetricsError::StatewideShare(statewide_share));
        }
        Ok(SwingSpec {
            statewide_share,
            delta: statewide_share - 0.5,
        })
    }

    pub fn from_votes(total: VoteCount) -> Result<Self, MetricsError> {
        SwingSpec::new(two_party_share(total.dem, total.rep)?)
    }
}

/// Subtracts `delta` from every share, clamped to [0, 1].
pub fn uniform_swing(shares: &[f64], swing: &SwingSpec) -> Vec<f64> {
    shares.iter().map(|&s| (s - swing.delta).clamp(0.0, 1.0)).collect()
}

/// `(counties touching ≥ 2 districts, Σ (districts touched − 1))`.
pub fn county_splits(graph: &DualGraph, plan: &Plan) -> (usize, usize) {
    let k = plan.k();
    let mut touched = vec![false; graph.counties().len() * k];
    for (node, &d) in graph.nodes().iter().zip(plan.assignment()) {
        touched[node.county * k + d as usize] = true;
    }
    let mut split = 0;
    let mut total = 0;
    for county in touched.chunks(k) {
        let n = county.iter().filter(|&&t| t).count();
        if n >= 2 {
            split += 1;
            total += n - 1;
        }
    }
    (split, total)
}

/// Perimeter of each district: its nodes' exterior boundary plus the shared
/// boundary along every cut edge it touches.
pub fn district_perimeters(graph: &DualGraph, plan: &Plan) -> Vec<f64> {
    let mut per = vec![0.0; plan.k()];
    for (node, &d) in graph.nodes().iter().zip(plan.assignment()) {
        per[d as usize] += node.exterior_perimeter;
    }
    for e in graph.edges() {
        let (da, db) = (plan.district_of(e.a), plan.district_of(e.b));
        if da != db {
            per[da as usize] += e.shared_perimeter;
            per[db as usize] += e.shared_perimeter;
        }
    }
    per
}

pub fn plan_perimeter(graph: &DualGraph, plan: &Plan) -> f64 {
    district_perimeters(graph, plan).iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionMetrics {
    pub sorted_shares: Vec<f64>,
    pub seats: usize,
    pub competitive: usize,
    pub competitive_shifted: usize,
}

/// All measures for one plan; one JSONL line of a chain's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub format_version: u32,
    pub step: u64,
    pub per_election: BTreeMap<String, ElectionMetrics>,
    pub counties_split: usize,
    pub total_splits: usize,
    pub perimeter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectionSpec {
    pub name: String,
    pub index: usize,
    pub swing: SwingSpec,
}

/// Which elections to score and how.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSpec {
    pub elections: Vec<ElectionSpec>,
    pub band: CompetitiveBand,
}

impl MetricsSpec {
    /// Scores the named elections (all of the graph's when `None`), swinging
    /// each by its statewide two-party share.
    pub fn for_graph(graph: &DualGraph, names: Option<&[String]>) -> Result<Self, MetricsError> {
        let names: Vec<String> = match names {
            Some(n) => n.to_vec(),
            None => graph.elections().to_vec(),
        };
        let elections = names
            .into_iter()
            .map(|name| {
                let index = graph
                    .election_index(&name)
                    .ok_or_else(|| MetricsError::UnknownElection(name.clone()))?;
                let swing = SwingSpec::from_votes(graph.total_votes(index))?;
                Ok(ElectionSpec { name, index, swing })
            })
            .collect::<Result<_, MetricsError>>()?;
        Ok(MetricsSpec {
            elections,
            band: CompetitiveBand::default(),
        })
    }
}

/// Per-election metrics from a district share vector.
pub fn election_metrics(shares: &[f64], swing: &SwingSpec, band: CompetitiveBand) -> ElectionMetrics {
    ElectionMetrics {
        sorted_shares: sorted_shares(shares),
        seats: seats(shares),
        competitive: competitive_count(shares, band),
        competitive_shifted: competitive_count(&uniform_swing(shares, swing), band),
    }
}

pub fn compute_record(
    graph: &DualGraph,
    plan: &Plan,
    spec: &MetricsSpec,
    step: u64,
) -> Result<MetricRecord, MetricsError> {
    let mut per_election = BTreeMap::new();
    for e in &spec.elections {
        let shares = district_shares(graph, plan, e.index)?;
        per_election.insert(e.name.clone(), election_metrics(&shares, &e.swing, spec.band));
    }
    let (counties_split, total_splits) = county_splits(graph, plan);
    Ok(MetricRecord {
        format_version: RECORD_FORMAT_VERSION,
        step,
        per_election,
        counties_split,
        total_splits,
        perimeter: plan_perimeter(graph, plan),
    })
}
