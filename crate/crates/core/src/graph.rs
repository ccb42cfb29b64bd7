//! Precinct dual graph: loading, validation, and node contraction.
//!
//! Nodes carry population, county, exterior boundary length and two-party
//! vote counts per election. Edges carry the length of the shared boundary.
//! A [`DualGraph`] is immutable once built and can be shared across chain
//! workers freely.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema version written into graph files.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("graph has no nodes")]
    Empty,
    #[error("duplicate node id \"{0}\"")]
    DuplicateNode(String),
    #[error("edge {edge} references unknown node \"{node}\"")]
    DanglingEndpoint { edge: usize, node: String },
    #[error("edge {edge} is a self-loop on \"{node}\"")]
    SelfLoop { edge: usize, node: String },
    #[error("duplicate edge between \"{a}\" and \"{b}\"")]
    DuplicateEdge { a: String, b: String },
    #[error("edge {edge} (\"{a}\"-\"{b}\") has invalid shared_perimeter {value}")]
    BadSharedPerimeter {
        edge: usize,
        a: String,
        b: String,
        value: f64,
    },
    #[error("node \"{node}\" has invalid exterior_perimeter {value}")]
    BadExteriorPerimeter { node: String, value: f64 },
    #[error("node \"{node}\" is missing votes for election \"{election}\"")]
    MissingElection { node: String, election: String },
    #[error("graph is disconnected: {components} components, \"{unreachable}\" unreachable from \"{root}\"")]
    Disconnected {
        components: usize,
        root: String,
        unreachable: String,
    },
}

impl GraphError {
    /// Short machine-readable tag for violation reports.
    pub fn kind(&self) -> &'static str {
        match self {
            GraphError::Io(_) => "io",
            GraphError::Parse(_) => "parse",
            GraphError::Empty => "empty",
            GraphError::DuplicateNode(_) => "duplicate_node",
            GraphError::DanglingEndpoint { .. } => "dangling_endpoint",
            GraphError::SelfLoop { .. } => "self_loop",
            GraphError::DuplicateEdge { .. } => "duplicate_edge",
            GraphError::BadSharedPerimeter { .. } => "bad_shared_perimeter",
            GraphError::BadExteriorPerimeter { .. } => "bad_exterior_perimeter",
            GraphError::MissingElection { .. } => "missing_election",
            GraphError::Disconnected { .. } => "disconnected",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("unknown node \"{0}\"")]
    UnknownNode(String),
    #[error("nodes to merge do not induce a connected subgraph")]
    NotConnected,
    #[error("nodes to merge span several counties: {0:?}")]
    MultipleCounties(Vec<String>),
}

/// Two-party vote count. Minor-party votes are never stored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCount {
    pub dem: u64,
    pub rep: u64,
}

impl VoteCount {
    pub fn total(&self) -> u64 {
        self.dem + self.rep
    }
}

impl std::ops::AddAssign for VoteCount {
    fn add_assign(&mut self, rhs: Self) {
        self.dem += rhs.dem;
        self.rep += rhs.rep;
    }
}

/// On-disk node record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub population: u64,
    pub county: String,
    pub exterior_perimeter: f64,
    pub votes: BTreeMap<String, VoteCount>,
}

/// On-disk edge record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: String,
    pub b: String,
    pub shared_perimeter: f64,
}

/// The graph JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<u32>,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub population: u64,
    pub county: usize,
    pub exterior_perimeter: f64,
    /// Indexed like [`DualGraph::elections`].
    pub votes: Vec<VoteCount>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub shared_perimeter: f64,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }
}

/// Validated precinct adjacency graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    elections: Vec<String>,
    counties: Vec<String>,
    index: HashMap<String, usize>,
    /// `(neighbor, edge index)` per node.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl DualGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Election ids in sorted order.
    pub fn elections(&self) -> &[String] {
        &self.elections
    }

    pub fn election_index(&self, id: &str) -> Option<usize> {
        self.elections.iter().position(|e| e == id)
    }

    /// Distinct county names; `Node::county` indexes into this.
    pub fn counties(&self) -> &[String] {
        &self.counties
    }

    pub fn county_name(&self, node: usize) -> &str {
        &self.counties[self.nodes[node].county]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn total_population(&self) -> u64 {
        self.nodes.iter().map(|n| n.population).sum()
    }

    pub fn total_exterior_perimeter(&self) -> f64 {
        self.nodes.iter().map(|n| n.exterior_perimeter).sum()
    }

    /// Statewide two-party totals for one election.
    pub fn total_votes(&self, election: usize) -> VoteCount {
        let mut total = VoteCount::default();
        for n in &self.nodes {
            total += n.votes[election];
        }
        total
    }

    /// True when the edge joins two nodes of the same county.
    pub fn is_intra_county(&self, edge: usize) -> bool {
        let e = &self.edges[edge];
        self.nodes[e.a].county == self.nodes[e.b].county
    }

    /// Builds a graph, returning the first invariant violation found.
    pub fn from_file_data(file: GraphFile) -> Result<Self, GraphError> {
        match check(&file).into_iter().next() {
            Some(err) => Err(err),
            None => Ok(Self::build_unchecked(file)),
        }
    }

    fn build_unchecked(file: GraphFile) -> Self {
        let elections: Vec<String> = file
            .nodes
            .first()
            .map(|n| n.votes.keys().cloned().collect())
            .unwrap_or_default();
        let mut counties = Vec::new();
        let mut county_ids: HashMap<String, usize> = HashMap::new();
        let mut index = HashMap::with_capacity(file.nodes.len());
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for (i, rec) in file.nodes.into_iter().enumerate() {
            let county = *county_ids.entry(rec.county.clone()).or_insert_with(|| {
                counties.push(rec.county.clone());
                counties.len() - 1
            });
            let votes = elections.iter().map(|e| rec.votes[e]).collect();
            index.insert(rec.id.clone(), i);
            nodes.push(Node {
                id: rec.id,
                population: rec.population,
                county,
                exterior_perimeter: rec.exterior_perimeter,
                votes,
            });
        }
        let edges: Vec<Edge> = file
            .edges
            .iter()
            .map(|e| Edge {
                a: index[&e.a],
                b: index[&e.b],
                shared_perimeter: e.shared_perimeter,
            })
            .collect();
        let adjacency = build_adjacency(nodes.len(), &edges);
        DualGraph {
            nodes,
            edges,
            elections,
            counties,
            index,
            adjacency,
        }
    }

    pub fn to_file_data(&self) -> GraphFile {
        GraphFile {
            format_version: Some(GRAPH_FORMAT_VERSION),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    population: n.population,
                    county: self.counties[n.county].clone(),
                    exterior_perimeter: n.exterior_perimeter,
                    votes: self.elections.iter().cloned().zip(n.votes.iter().copied()).collect(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    a: self.nodes[e.a].id.clone(),
                    b: self.nodes[e.b].id.clone(),
                    shared_perimeter: e.shared_perimeter,
                })
                .collect(),
        }
    }

    /// Number of connected components among `members` using only edges
    /// with both endpoints in `members`.
    pub fn induced_components(&self, members: &[usize]) -> usize {
        let mut inside = vec![false; self.nodes.len()];
        for &m in members {
            inside[m] = true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for &start in members {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if inside[v] && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    /// Contracts every county with total population below `threshold` into
    /// a single node. Threshold 0 is the identity.
    pub fn merge_small_counties(&self, threshold: u64) -> DualGraph {
        let mut county_pop = vec![0u64; self.counties.len()];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.counties.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            county_pop[n.county] += n.population;
            members[n.county].push(i);
        }
        let groups: Vec<Vec<usize>> = members
            .into_iter()
            .zip(county_pop)
            .filter(|(m, pop)| *pop < threshold && m.len() > 1)
            .map(|(m, _)| m)
            .collect();
        self.contract(&groups)
    }

    /// Contracts the given nodes into one. The set must be connected and lie
    /// within a single county.
    pub fn merge_nodes<S: AsRef<str>>(&self, ids: &[S]) -> Result<DualGraph, MergeError> {
        let mut group = BTreeSet::new();
        for id in ids {
            let id = id.as_ref();
            let idx = self
                .node_index(id)
                .ok_or_else(|| MergeError::UnknownNode(id.to_string()))?;
            group.insert(idx);
        }
        let group: Vec<usize> = group.into_iter().collect();
        if group.len() <= 1 {
            return Ok(self.clone());
        }
        let counties: BTreeSet<&str> = group.iter().map(|&i| self.county_name(i)).collect();
        if counties.len() > 1 {
            return Err(MergeError::MultipleCounties(
                counties.into_iter().map(String::from).collect(),
            ));
        }
        if self.induced_components(&group) != 1 {
            return Err(MergeError::NotConnected);
        }
        Ok(self.contract(&[group]))
    }

    /// Contracts each (disjoint) group of nodes to one node. The merged node
    /// keeps the smallest constituent id and sits at the position of the
    /// group's earliest node; parallel edges collapse with summed lengths.
    fn contract(&self, groups: &[Vec<usize>]) -> DualGraph {
        if groups.is_empty() {
            return self.clone();
        }
        let mut group_of: Vec<Option<usize>> = vec![None; self.nodes.len()];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                group_of[m] = Some(g);
            }
        }

        let mut new_index = vec![usize::MAX; self.nodes.len()];
        let mut group_slot: Vec<Option<usize>> = vec![None; groups.len()];
        let mut nodes: Vec<Node> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match group_of[i] {
                None => {
                    new_index[i] = nodes.len();
                    nodes.push(node.clone());
                }
                Some(g) => match group_slot[g] {
                    Some(slot) => {
                        new_index[i] = slot;
                        let merged = &mut nodes[slot];
                        merged.population += node.population;
                        merged.exterior_perimeter += node.exterior_perimeter;
                        for (acc, v) in merged.votes.iter_mut().zip(&node.votes) {
                            *acc += *v;
                        }
                        if node.id < merged.id {
                            merged.id = node.id.clone();
                        }
                    }
                    None => {
                        group_slot[g] = Some(nodes.len());
                        new_index[i] = nodes.len();
                        nodes.push(node.clone());
                    }
                },
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for e in &self.edges {
            let (a, b) = (new_index[e.a], new_index[e.b]);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            match seen.get(&key) {
                Some(&k) => edges[k].shared_perimeter += e.shared_perimeter,
                None => {
                    seen.insert(key, edges.len());
                    edges.push(Edge {
                        a,
                        b,
                        shared_perimeter: e.shared_perimeter,
                    });
                }
            }
        }

        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let adjacency = build_adjacency(nodes.len(), &edges);
        DualGraph {
            nodes,
            edges,
            elections: self.elections.clone(),
            counties: self.counties.clone(),
            index,
            adjacency,
        }
    }
}

fn build_adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, usize)>> {
    let mut adjacency = vec![Vec::new(); n];
    for (i, e) in edges.iter().enumerate() {
        adjacency[e.a].push((e.b, i));
        adjacency[e.b].push((e.a, i));
    }
    adjacency
}

/// Runs every invariant check and returns all violations found.
pub fn check(file: &GraphFile) -> Vec<GraphError> {
    let mut errors = Vec::new();
    if file.nodes.is_empty() {
        errors.push(GraphError::Empty);
        return errors;
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in file.nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            errors.push(GraphError::DuplicateNode(n.id.clone()));
        }
        if !(n.exterior_perimeter >= 0.0 && n.exterior_perimeter.is_finite()) {
            errors.push(GraphError::BadExteriorPerimeter {
                node: n.id.clone(),
                value: n.exterior_perimeter,
            });
        }
    }

    let elections: BTreeSet<&str> = file
        .nodes
        .iter()
        .flat_map(|n| n.votes.keys().map(String::as_str))
        .collect();
    for n in &file.nodes {
        for e in &elections {
            if !n.votes.contains_key(*e) {
                errors.push(GraphError::MissingElection {
                    node: n.id.clone(),
                    election: e.to_string(),
                });
            }
        }
    }

    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); file.nodes.len()];
    for (i, e) in file.edges.iter().enumerate() {
        let mut endpoints = [0usize; 2];
        let mut dangling = false;
        for (slot, id) in [&e.a, &e.b].into_iter().enumerate() {
            match index.get(id.as_str()) {
                Some(&k) => endpoints[slot] = k,
                None => {
                    dangling = true;
                    errors.push(GraphError::DanglingEndpoint {
                        edge: i,
                        node: id.clone(),
                    });
                }
            }
        }
        if !(e.shared_perimeter > 0.0 && e.shared_perimeter.is_finite()) {
            errors.push(GraphError::BadSharedPerimeter {
                edge: i,
                a: e.a.clone(),
                b: e.b.clone(),
                value: e.shared_perimeter,
            });
        }
        if dangling {
            continue;
        }
        let [a, b] = endpoints;
        if a == b {
            errors.push(GraphError::SelfLoop {
                edge: i,
                node: e.a.clone(),
            });
            continue;
        }
        if !pairs.insert((a.min(b), a.max(b))) {
            errors.push(GraphError::DuplicateEdge {
                a: e.a.clone(),
                b: e.b.clone(),
            });
        }
        adjacency[a].push(b);
        adjacency[b].push(a);
    }

    // Connectivity over the edges that resolved.
    let mut component = vec![usize::MAX; file.nodes.len()];
    let mut count = 0;
    let mut first_unreachable = None;
    for start in 0..file.nodes.len() {
        if component[start] != usize::MAX {
            continue;
        }
        if count == 1 {
            first_unreachable = Some(start);
        }
        let mut queue = VecDeque::from([start]);
        component[start] = count;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if component[v] == usize::MAX {
                    component[v] = count;
                    queue.push_back(v);
                }
            }
        }
        count += 1;
    }
    if let Some(u) = first_unreachable {
        errors.push(GraphError::Disconnected {
            components: count,
            root: file.nodes[0].id.clone(),
            unreachable: file.nodes[u].id.clone(),
        });
    }
    errors
}

pub fn parse_graph<R: Read>(reader: R) -> Result<DualGraph, GraphError> {
    let file: GraphFile = serde_json::from_reader(reader)?;
    DualGraph::from_file_data(file)
}

pub fn load_graph<P: AsRef<Path>>(path: P) -> Result<DualGraph, GraphError> {
    parse_graph(BufReader::new(File::open(path)?))
}

pub fn write_graph<W: Write>(graph: &DualGraph, mut writer: W) -> Result<(), GraphError> {
    serde_json::to_writer(&mut writer, &graph.to_file_data())?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn save_graph<P: AsRef<Path>>(graph: &DualGraph, path: P) -> Result<(), GraphError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph(graph, &mut w)?;
    w.flush()?;
    Ok(())
}
