//! County-weighted ReCom proposal and the chain driver.
//!
//! Each step picks a pair of adjacent districts uniformly at random, merges
//! them, and re-splits the merged region along a population-balanced edge of
//! a random maximal-weight spanning tree. Edge weights are redrawn for every
//! tree: intra-county edges from U[0, w] and inter-county edges from U[0, 1],
//! so w > 1 biases trees (and therefore cuts) toward county lines without
//! changing which plans are reachable.

pub mod tree;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::graph::DualGraph;
use crate::metrics::{compute_record, MetricRecord, MetricsError, MetricsSpec};
use crate::partition::{is_contiguous, max_deviation, BalanceSpec, Plan};

use tree::{balanced_cut, draw_edge_weights, max_weight_spanning_tree, RootedTree, Subgraph};

/// Spanning trees drawn for one district pair before giving up on it.
pub const TREE_REDRAW_CAP: usize = 100;
/// District pairs tried for one step before the run is aborted.
pub const PAIR_RESAMPLE_CAP: usize = 100;

pub type ChainRng = ChaCha12Rng;

/// Independent generator stream for chain `chain_index` under `seed`.
pub fn chain_rng(seed: u64, chain_index: u64) -> ChainRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chain_index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Intra-county edge weight multiplier, at least 1.
    pub weight: f64,
    pub tolerance: f64,
    pub steps: u64,
    pub rng_seed: u64,
    pub k: usize,
    pub chain_index: u64,
}

impl ChainConfig {
    pub fn new(k: usize, weight: f64, tolerance: f64, steps: u64, rng_seed: u64) -> Self {
        ChainConfig {
            weight,
            tolerance,
            steps,
            rng_seed,
            k,
            chain_index: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |msg: String| Err(ChainError::InvalidConfig(msg));
        if !(self.weight >= 1.0 && self.weight.is_finite()) {
            return bad(format!("weight {} must be a finite value >= 1", self.weight));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("tolerance {} must lie in (0, 1)", self.tolerance));
        }
        if self.steps < 1 {
            return bad("steps must be at least 1".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("plan has no adjacent district pairs")]
    NoAdjacentPairs,
    #[error("no balanced cut for districts {0:?} after {1} spanning trees")]
    NoBalancedCut((u32, u32), usize),
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("seed plan rejected: {0}")]
    InvalidSeed(String),
    #[error("step {step} failed after {attempts} district-pair samples: {last}")]
    Stuck {
        step: u64,
        attempts: usize,
        last: StepError,
    },
    #[error("step {step} produced an invalid plan: {detail}")]
    InvariantViolated { step: u64, detail: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// The result of one accepted ReCom move.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub plan: Plan,
    pub merged_pair: (u32, u32),
    pub tree_redraws: usize,
}

/// Unordered district pairs joined by at least one graph edge, ascending.
pub fn adjacent_district_pairs(graph: &DualGraph, plan: &Plan) -> Vec<(u32, u32)> {
    let mut pairs = BTreeSet::new();
    for e in graph.edges() {
        let (a, b) = (plan.district_of(e.a), plan.district_of(e.b));
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    pairs.into_iter().collect()
}

/// Re-splits the merged pair `(d1, d2)`. Tries up to [`TREE_REDRAW_CAP`]
/// trees with fresh weights.
pub fn recombine_pair<R: Rng + ?Sized>(
    graph: &DualGraph,
    plan: &Plan,
    pair: (u32, u32),
    weight: f64,
    balance: &BalanceSpec,
    rng: &mut R,
) -> Result<StepOutcome, StepError> {
    let (d1, d2) = (pair.0.min(pair.1), pair.0.max(pair.1));
    let region: Vec<usize> = plan
        .assignment()
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == d1 || d == d2)
        .map(|(i, _)| i)
        .collect();
    let sub = Subgraph::induced(graph, &region);
    let pops: Vec<u64> = graph.nodes().iter().map(|n| n.population).collect();

    for attempt in 0..TREE_REDRAW_CAP {
        let weights = draw_edge_weights(graph, &sub, weight, rng);
        let tree_edges =
            max_weight_spanning_tree(&sub, &weights).expect("union of two adjacent connected districts is connected");
        let tree = RootedTree::new(&sub, &tree_edges, &pops);
        let Some(cut) = balanced_cut(&tree, balance.ideal, balance.tolerance, rng) else {
            continue;
        };
        let side = tree.child_side(&cut);
        let smallest = (0..sub.node_count())
            .min_by(|&x, &y| graph.nodes()[sub.nodes[x]].id.cmp(&graph.nodes()[sub.nodes[y]].id))
            .expect("region is nonempty");
        let (child_label, rest_label) = if side[smallest] { (d1, d2) } else { (d2, d1) };
        let mut child = Vec::new();
        let mut rest = Vec::new();
        for (local, &node) in sub.nodes.iter().enumerate() {
            if side[local] {
                child.push(node);
            } else {
                rest.push(node);
            }
        }
        let mut next = plan.clone();
        next.reassign(graph, &child, child_label);
        next.reassign(graph, &rest, rest_label);
        return Ok(StepOutcome {
            plan: next,
            merged_pair: (d1, d2),
            tree_redraws: attempt,
        });
    }
    Err(StepError::NoBalancedCut((d1, d2), TREE_REDRAW_CAP))
}

/// One ReCom proposal on a uniformly chosen adjacent district pair.
pub fn recom_step<R: Rng + ?Sized>(
    graph: &DualGraph,
    plan: &Plan,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<StepOutcome, StepError> {
    let balance = BalanceSpec {
        ideal: crate::partition::ideal_population(graph, plan.k()),
        tolerance: cfg.tolerance,
    };
    let pairs = adjacent_district_pairs(graph, plan);
    if pairs.is_empty() {
        return Err(StepError::NoAdjacentPairs);
    }
    let pair = pairs[rng.gen_range(0..pairs.len())];
    recombine_pair(graph, plan, pair, cfg.weight, &balance, rng)
}

/// A running chain. Each call to [`Chain::advance`] performs one accepted
/// step and checks the resulting plan.
pub struct Chain<'g> {
    graph: &'g DualGraph,
    plan: Plan,
    cfg: ChainConfig,
    balance: BalanceSpec,
    metrics: MetricsSpec,
    rng: ChainRng,
    step: u64,
}

impl<'g> Chain<'g> {
    pub fn new(graph: &'g DualGraph, seed: Plan, cfg: ChainConfig, metrics: MetricsSpec) -> Result<Self, ChainError> {
        cfg.validate()?;
        if seed.k() != cfg.k {
            return Err(ChainError::InvalidSeed(format!(
                "seed has {} districts, configuration asks for {}",
                seed.k(),
                cfg.k
            )));
        }
        let balance = BalanceSpec::for_graph(graph, cfg.k, cfg.tolerance)
            .map_err(|e| ChainError::InvalidConfig(e.to_string()))?;
        if let Some(detail) = violation(graph, &seed, &balance) {
            return Err(ChainError::InvalidSeed(detail));
        }
        let rng = chain_rng(cfg.rng_seed, cfg.chain_index);
        Ok(Chain {
            graph,
            plan: seed,
            cfg,
            balance,
            metrics,
            rng,
            step: 0,
        })
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    /// Performs one step, resampling the district pair on failure.
    pub fn advance(&mut self) -> Result<StepOutcome, ChainError> {
        let step = self.step + 1;
        let mut last = StepError::NoAdjacentPairs;
        for _ in 0..PAIR_RESAMPLE_CAP {
            match recom_step(self.graph, &self.plan, &self.cfg, &mut self.rng) {
                Ok(outcome) => {
                    if let Some(detail) = violation(self.graph, &outcome.plan, &self.balance) {
                        return Err(ChainError::InvariantViolated { step, detail });
                    }
                    self.plan = outcome.plan.clone();
                    self.step = step;
                    return Ok(outcome);
                }
                Err(StepError::NoAdjacentPairs) => {
                    return Err(ChainError::Stuck {
                        step,
                        attempts: 1,
                        last: StepError::NoAdjacentPairs,
                    })
                }
                Err(e) => last = e,
            }
        }
        Err(ChainError::Stuck {
            step,
            attempts: PAIR_RESAMPLE_CAP,
            last,
        })
    }

    /// Advances one step and scores the new plan.
    pub fn next_record(&mut self) -> Result<MetricRecord, ChainError> {
        self.advance()?;
        Ok(compute_record(self.graph, &self.plan, &self.metrics, self.step)?)
    }
}

fn violation(graph: &DualGraph, plan: &Plan, balance: &BalanceSpec) -> Option<String> {
    if !is_contiguous(graph, plan) {
        return Some("a district is empty or disconnected".into());
    }
    if !plan.district_populations().iter().all(|&p| balance.accepts(p)) {
        return Some(format!(
            "population deviation {:.6} exceeds tolerance {}",
            max_deviation(plan, balance),
            balance.tolerance
        ));
    }
    None
}

/// Iterator over exactly `cfg.steps` records.
pub struct ChainRun<'g> {
    chain: Chain<'g>,
    remaining: u64,
}

impl Iterator for ChainRun<'_> {
    type Item = Result<MetricRecord, ChainError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let item = self.chain.next_record();
        self.remaining = if item.is_err() { 0 } else { self.remaining - 1 };
        Some(item)
    }
}

/// Streams one record per step; deterministic in (graph, seed, cfg).
pub fn run_chain<'g>(
    graph: &'g DualGraph,
    seed: Plan,
    cfg: ChainConfig,
    metrics: MetricsSpec,
) -> Result<ChainRun<'g>, ChainError> {
    let remaining = cfg.steps;
    Ok(ChainRun {
        chain: Chain::new(graph, seed, cfg, metrics)?,
        remaining,
    })
}

/// Runs independent chains (one per config) and collects their records.
pub fn run_chains(
    graph: &DualGraph,
    seeds: &[Plan],
    cfgs: &[ChainConfig],
    metrics: &MetricsSpec,
    exec: Execution,
) -> Vec<Result<Vec<MetricRecord>, ChainError>> {
    assert_eq!(seeds.len(), cfgs.len(), "one seed plan per chain");
    map_indexed(exec, cfgs.len(), |i| {
        run_chain(graph, seeds[i].clone(), cfgs[i].clone(), metrics.clone())?.collect()
    })
}
