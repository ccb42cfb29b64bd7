//! Districting plans, validity checks, and recursive spanning-tree seeds.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::chain::tree::{draw_edge_weights, max_weight_spanning_tree, within, RootedTree, Subgraph};
use crate::graph::DualGraph;

/// Tree draws allowed per split level when seeding.
pub const SEED_RETRY_CAP: usize = 1000;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("assignment has {got} entries but the graph has {expected} nodes")]
    WrongLength { expected: usize, got: usize },
    #[error("node \"{node}\" assigned to district {district}, outside 0..{k}")]
    DistrictOutOfRange { node: String, district: u32, k: usize },
    #[error("node \"{0}\" is not assigned to any district")]
    Unassigned(String),
    #[error("plan file names unknown node \"{0}\"")]
    UnknownNode(String),
    #[error("node \"{0}\" assigned more than once")]
    DuplicateAssignment(String),
    #[error("plan needs at least one district")]
    NoDistricts,
    #[error("plan csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("tolerance {0} must lie strictly between 0 and 1")]
    Tolerance(f64),
    #[error("need at least one district")]
    NoDistricts,
}

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("infeasible seed: no balanced split found after {attempts} tree draws: region of {region_nodes} nodes (population {region_population}) into {parts} districts of ideal {ideal:.3}")]
    Infeasible {
        region_nodes: usize,
        region_population: u64,
        parts: usize,
        ideal: f64,
        attempts: usize,
    },
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// An assignment of every graph node to one of `k` districts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    k: usize,
    assignment: Vec<u32>,
    district_populations: Vec<u64>,
}

impl Plan {
    /// `assignment[i]` is the district of graph node `i`.
    pub fn new(graph: &DualGraph, k: usize, assignment: Vec<u32>) -> Result<Self, PlanError> {
        if k == 0 {
            return Err(PlanError::NoDistricts);
        }
        if assignment.len() != graph.node_count() {
            return Err(PlanError::WrongLength {
                expected: graph.node_count(),
                got: assignment.len(),
            });
        }
        let mut pops = vec![0u64; k];
        for (i, &d) in assignment.iter().enumerate() {
            if d as usize >= k {
                return Err(PlanError::DistrictOutOfRange {
                    node: graph.nodes()[i].id.clone(),
                    district: d,
                    k,
                });
            }
            pops[d as usize] += graph.nodes()[i].population;
        }
        Ok(Plan {
            k,
            assignment,
            district_populations: pops,
        })
    }

    /// Every node in district 0.
    pub fn single(graph: &DualGraph) -> Self {
        Plan {
            k: 1,
            assignment: vec![0; graph.node_count()],
            district_populations: vec![graph.total_population()],
        }
    }

    /// Builds a plan from `(node id, district)` pairs. `k` defaults to one
    /// more than the largest district label.
    pub fn from_pairs<I, S>(graph: &DualGraph, pairs: I, k: Option<usize>) -> Result<Self, PlanError>
    where
        I: IntoIterator<Item = (S, u32)>,
        S: AsRef<str>,
    {
        let mut assignment = vec![u32::MAX; graph.node_count()];
        for (id, d) in pairs {
            let id = id.as_ref();
            let idx = graph
                .node_index(id)
                .ok_or_else(|| PlanError::UnknownNode(id.to_string()))?;
            if assignment[idx] != u32::MAX {
                return Err(PlanError::DuplicateAssignment(id.to_string()));
            }
            assignment[idx] = d;
        }
        if let Some(i) = assignment.iter().position(|&d| d == u32::MAX) {
            return Err(PlanError::Unassigned(graph.nodes()[i].id.clone()));
        }
        let k = k.unwrap_or_else(|| assignment.iter().max().map_or(0, |&m| m as usize + 1));
        Plan::new(graph, k, assignment)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn district_of(&self, node: usize) -> u32 {
        self.assignment[node]
    }

    pub fn district_populations(&self) -> &[u64] {
        &self.district_populations
    }

    /// Node indices per district.
    pub fn district_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (i, &d) in self.assignment.iter().enumerate() {
            members[d as usize].push(i);
        }
        members
    }

    /// Moves `nodes` into `district`, keeping the population cache in step.
    pub(crate) fn reassign(&mut self, graph: &DualGraph, nodes: &[usize], district: u32) {
        for &n in nodes {
            let pop = graph.nodes()[n].population;
            let old = self.assignment[n] as usize;
            self.district_populations[old] -= pop;
            self.district_populations[district as usize] += pop;
            self.assignment[n] = district;
        }
    }

    /// Recomputes district populations from scratch.
    pub fn recount_populations(&self, graph: &DualGraph) -> Vec<u64> {
        let mut pops = vec![0u64; self.k];
        for (n, &d) in graph.nodes().iter().zip(&self.assignment) {
            pops[d as usize] += n.population;
        }
        pops
    }
}

/// Ideal district population and allowed relative deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceSpec {
    pub ideal: f64,
    pub tolerance: f64,
}

impl BalanceSpec {
    pub fn new(ideal: f64, tolerance: f64) -> Result<Self, BalanceError> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(BalanceError::Tolerance(tolerance));
        }
        Ok(BalanceSpec { ideal, tolerance })
    }

    pub fn for_graph(graph: &DualGraph, k: usize, tolerance: f64) -> Result<Self, BalanceError> {
        if k == 0 {
            return Err(BalanceError::NoDistricts);
        }
        BalanceSpec::new(ideal_population(graph, k), tolerance)
    }

    /// Whether a single district population is acceptable.
    pub fn accepts(&self, population: u64) -> bool {
        within(population, self.ideal, self.ideal, self.tolerance)
    }
}

/// Total population divided by `k`.
pub fn ideal_population(graph: &DualGraph, k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    graph.total_population() as f64 / k as f64
}

/// True iff every district is nonempty and induces a connected subgraph.
pub fn is_contiguous(graph: &DualGraph, plan: &Plan) -> bool {
    plan.district_members()
        .iter()
        .all(|m| !m.is_empty() && graph.induced_components(m) == 1)
}

/// Largest relative deviation of a district population from the ideal.
pub fn max_deviation(plan: &Plan, spec: &BalanceSpec) -> f64 {
    plan.district_populations()
        .iter()
        .map(|&p| {
            let diff = (p as f64 - spec.ideal).abs();
            if spec.ideal > 0.0 {
                diff / spec.ideal
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Contiguity plus every district accepted by `spec`.
pub fn is_valid(graph: &DualGraph, plan: &Plan, spec: &BalanceSpec) -> bool {
    plan.district_populations().iter().all(|&p| spec.accepts(p)) && is_contiguous(graph, plan)
}

/// Recursive spanning-tree seed: split off one district at a time from a
/// random spanning tree, preferring single-district pieces.
pub fn seed_plan<R: Rng + ?Sized>(
    graph: &DualGraph,
    k: usize,
    spec: &BalanceSpec,
    rng: &mut R,
) -> Result<Plan, SeedError> {
    if k == 0 {
        return Err(BalanceError::NoDistricts.into());
    }
    let mut assignment = vec![0u32; graph.node_count()];
    let mut next_label = 0u32;
    let all: Vec<usize> = (0..graph.node_count()).collect();
    split_region(graph, all, k, spec, rng, &mut assignment, &mut next_label)?;
    let plan = Plan::new(graph, k, assignment).expect("seed labels lie in 0..k");
    debug_assert!(is_valid(graph, &plan, spec));
    Ok(plan)
}

fn split_region<R: Rng + ?Sized>(
    graph: &DualGraph,
    region: Vec<usize>,
    parts: usize,
    spec: &BalanceSpec,
    rng: &mut R,
    assignment: &mut [u32],
    next_label: &mut u32,
) -> Result<(), SeedError> {
    if parts == 1 {
        for &n in &region {
            assignment[n] = *next_label;
        }
        *next_label += 1;
        return Ok(());
    }
    let pops: Vec<u64> = graph.nodes().iter().map(|n| n.population).collect();
    let sub = Subgraph::induced(graph, &region);
    for _ in 0..SEED_RETRY_CAP {
        let weights = draw_edge_weights(graph, &sub, 1.0, rng);
        let tree_edges = max_weight_spanning_tree(&sub, &weights).expect("seed regions are connected");
        let tree = RootedTree::new(&sub, &tree_edges, &pops);

        // (cut, child side takes `j` districts, j)
        let mut chosen = None;
        for j in 1..=parts / 2 {
            let lo = (j as f64) * spec.ideal;
            let hi = ((parts - j) as f64) * spec.ideal;
            let fits = |p: u64, target: f64| within(p, target, spec.ideal, spec.tolerance);
            let mut candidates = Vec::new();
            for c in tree.cuts() {
                if fits(c.child_population, lo) && fits(c.rest_population, hi) {
                    candidates.push((c, true));
                }
                if j != parts - j && fits(c.rest_population, lo) && fits(c.child_population, hi) {
                    candidates.push((c, false));
                }
            }
            if !candidates.is_empty() {
                let pick = candidates[rng.gen_range(0..candidates.len())];
                chosen = Some((pick, j));
                break;
            }
        }
        let Some(((cut, child_is_small), j)) = chosen else {
            continue;
        };
        let side = tree.child_side(&cut);
        let (mut small, mut large) = (Vec::new(), Vec::new());
        for (local, &node) in sub.nodes.iter().enumerate() {
            if side[local] == child_is_small {
                small.push(node);
            } else {
                large.push(node);
            }
        }
        split_region(graph, small, j, spec, rng, assignment, next_label)?;
        return split_region(graph, large, parts - j, spec, rng, assignment, next_label);
    }
    Err(SeedError::Infeasible {
        region_nodes: region.len(),
        region_population: region.iter().map(|&n| pops[n]).sum(),
        parts,
        ideal: spec.ideal,
        attempts: SEED_RETRY_CAP,
    })
}

/// Reads a `node_id,district` plan CSV.
pub fn read_plan_csv<R: Read>(graph: &DualGraph, reader: R, k: Option<usize>) -> Result<Plan, PlanError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut pairs = Vec::with_capacity(graph.node_count());
    for row in rdr.deserialize::<(String, u32)>() {
        pairs.push(row?);
    }
    Plan::from_pairs(graph, pairs, k)
}

pub fn load_plan<P: AsRef<Path>>(graph: &DualGraph, path: P, k: Option<usize>) -> Result<Plan, PlanError> {
    read_plan_csv(graph, std::fs::File::open(path)?, k)
}

/// Writes a `node_id,district` plan CSV in graph node order.
pub fn write_plan_csv<W: Write>(graph: &DualGraph, plan: &Plan, writer: W) -> Result<(), PlanError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node_id", "district"])?;
    for (node, d) in graph.nodes().iter().zip(plan.assignment()) {
        w.write_record([node.id.as_str(), &d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_plan<P: AsRef<Path>>(graph: &DualGraph, plan: &Plan, path: P) -> Result<(), PlanError> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_plan_csv(graph, plan, f)
}

/// Relabels districts by first appearance in node order, so two plans with
/// the same partition compare equal.
pub fn canonical_labels(assignment: &[u32]) -> Vec<u32> {
    let mut map: HashMap<u32, u32> = HashMap::new();
    assignment
        .iter()
        .map(|d| {
            let next = map.len() as u32;
            *map.entry(*d).or_insert(next)
        })
        .collect()
}
