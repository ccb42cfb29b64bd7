//! Small synthetic graphs: grids, paths and stars with unit-square geometry.
//! Used by the test suites, the benches and the `synth` CLI command.

use std::collections::BTreeMap;

use crate::graph::{DualGraph, EdgeRecord, GraphFile, NodeRecord, VoteCount};

/// Election id carried by every synthetic graph.
pub const SYNTHETIC_ELECTION: &str = "synthetic";

pub fn unit_pops(n: usize) -> Vec<u64> {
    vec![1; n]
}

/// Deterministic, spatially varying vote pattern.
fn votes_for(i: usize) -> VoteCount {
    let dem = 20 + ((i * 37 + 11) % 61) as u64;
    let rep = 20 + ((i * 53 + 5) % 59) as u64;
    VoteCount { dem, rep }
}

fn node(id: String, population: u64, county: String, exterior: f64, votes: VoteCount) -> NodeRecord {
    NodeRecord {
        id,
        population,
        county,
        exterior_perimeter: exterior,
        votes: BTreeMap::from([(SYNTHETIC_ELECTION.to_string(), votes)]),
    }
}

fn build(file: GraphFile) -> DualGraph {
    DualGraph::from_file_data(file).expect("synthetic graph is valid")
}

/// Zero-padded so lexicographic order matches index order.
pub fn node_id(i: usize) -> String {
    format!("n{i:04}")
}

/// Grid of unit squares, row-major; node `r * cols + c`. Each square's
/// exterior perimeter counts its sides on the grid boundary.
pub fn grid_graph<F>(rows: usize, cols: usize, pops: &[u64], county: F) -> DualGraph
where
    F: Fn(usize, usize) -> String,
{
    assert_eq!(pops.len(), rows * cols);
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let exterior = [r == 0, r + 1 == rows, c == 0, c + 1 == cols]
                .iter()
                .filter(|&&b| b)
                .count() as f64;
            nodes.push(node(node_id(i), pops[i], county(r, c), exterior, votes_for(i)));
        }
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push(EdgeRecord {
                    a: node_id(i),
                    b: node_id(i + 1),
                    shared_perimeter: 1.0,
                });
            }
            if r + 1 < rows {
                edges.push(EdgeRecord {
                    a: node_id(i),
                    b: node_id(i + cols),
                    shared_perimeter: 1.0,
                });
            }
        }
    }
    build(GraphFile {
        format_version: None,
        nodes,
        edges,
    })
}

/// Grid split into `blocks × blocks` equal rectangular counties.
pub fn county_grid(rows: usize, cols: usize, blocks: usize) -> DualGraph {
    grid_graph(rows, cols, &unit_pops(rows * cols), |r, c| {
        format!("c{}{}", r * blocks / rows, c * blocks / cols)
    })
}

/// Path `0 - 1 - ... - n-1`, one county.
pub fn path_graph(n: usize, pops: &[u64]) -> DualGraph {
    let counties = vec!["A"; n];
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    let mut g = graph_from_edges(n, &edges, &counties).to_file_data();
    for (rec, &p) in g.nodes.iter_mut().zip(pops) {
        rec.population = p;
    }
    build(g)
}

/// Center node 0 joined to `leaves` leaf nodes.
pub fn star_graph(leaves: usize, center_pop: u64, leaf_pop: u64) -> DualGraph {
    let edges: Vec<(usize, usize)> = (1..=leaves).map(|i| (0, i)).collect();
    let mut g = graph_from_edges(leaves + 1, &edges, &vec!["A"; leaves + 1]).to_file_data();
    for (i, rec) in g.nodes.iter_mut().enumerate() {
        rec.population = if i == 0 { center_pop } else { leaf_pop };
    }
    build(g)
}

/// Unit-population graph from an explicit edge list with unit boundary
/// lengths and no exterior boundary.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)], counties: &[&str]) -> DualGraph {
    let nodes = (0..n)
        .map(|i| node(node_id(i), 1, counties[i].to_string(), 0.0, votes_for(i)))
        .collect();
    let edges = edges
        .iter()
        .map(|&(a, b)| EdgeRecord {
            a: node_id(a),
            b: node_id(b),
            shared_perimeter: 1.0,
        })
        .collect();
    build(GraphFile {
        format_version: None,
        nodes,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = county_grid(10, 10, 2);
        assert_eq!(g.node_count(), 100);
        assert_eq!(g.edge_count(), 180);
        assert_eq!(g.counties().len(), 4);
        assert_eq!(g.total_exterior_perimeter(), 40.0);
    }
}
