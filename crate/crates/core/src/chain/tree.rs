//! Random maximal-weight spanning trees and population-balanced tree cuts.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::graph::DualGraph;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("subgraph is disconnected; no spanning tree exists")]
    Disconnected,
}

/// An edge of a [`Subgraph`], in local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubEdge {
    pub a: usize,
    pub b: usize,
    /// Index of the edge in the parent graph.
    pub edge: usize,
}

/// Induced subgraph on a set of graph nodes. Edges are ordered by their
/// parent-graph edge index.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<SubEdge>,
}

impl Subgraph {
    pub fn induced(graph: &DualGraph, members: &[usize]) -> Self {
        let mut local = vec![usize::MAX; graph.node_count()];
        for (i, &m) in members.iter().enumerate() {
            local[m] = i;
        }
        let mut edges = Vec::new();
        for (i, &m) in members.iter().enumerate() {
            for &(v, e) in graph.neighbors(m) {
                let j = local[v];
                if j != usize::MAX && j > i {
                    let edge = graph.edges()[e];
                    let (a, b) = if edge.a == m { (i, j) } else { (j, i) };
                    edges.push(SubEdge { a, b, edge: e });
                }
            }
        }
        edges.sort_unstable_by_key(|e| e.edge);
        Subgraph {
            nodes: members.to_vec(),
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Draws one weight per subgraph edge: intra-county edges from U[0, w],
/// inter-county edges from U[0, 1].
pub fn draw_edge_weights<R: Rng + ?Sized>(graph: &DualGraph, sub: &Subgraph, weight: f64, rng: &mut R) -> Vec<f64> {
    sub.edges
        .iter()
        .map(|e| {
            let u: f64 = rng.gen();
            if graph.is_intra_county(e.edge) {
                u * weight
            } else {
                u
            }
        })
        .collect()
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Kruskal's algorithm on descending weights. Returns local edge indices of
/// the tree; equal weights are broken by edge order.
pub fn max_weight_spanning_tree(sub: &Subgraph, weights: &[f64]) -> Result<Vec<usize>, TreeError> {
    debug_assert_eq!(weights.len(), sub.edges.len());
    let n = sub.node_count();
    let mut order: Vec<usize> = (0..sub.edges.len()).collect();
    // Stable sort keeps edge order among ties.
    order.sort_by(|&x, &y| weights[y].total_cmp(&weights[x]));
    let mut uf = UnionFind::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for i in order {
        let e = sub.edges[i];
        if uf.union(e.a, e.b) {
            tree.push(i);
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    if tree.len() + 1 != n && n > 0 {
        return Err(TreeError::Disconnected);
    }
    Ok(tree)
}

/// A spanning tree rooted at local node 0 with subtree populations.
#[derive(Debug, Clone)]
pub struct RootedTree {
    children: Vec<Vec<(usize, usize)>>,
    parent_edge: Vec<usize>,
    /// BFS order from the root.
    order: Vec<usize>,
    subtree_population: Vec<u64>,
}

/// Removing `edge` separates the subtree under `child` from the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cut {
    pub edge: usize,
    pub child: usize,
    pub child_population: u64,
    pub rest_population: u64,
}

impl RootedTree {
    /// `populations` is indexed by parent-graph node.
    pub fn new(sub: &Subgraph, tree_edges: &[usize], populations: &[u64]) -> Self {
        let n = sub.node_count();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &i in tree_edges {
            let e = sub.edges[i];
            adj[e.a].push((e.b, i));
            adj[e.b].push((e.a, i));
        }
        let mut children = vec![Vec::new(); n];
        let mut parent_edge = vec![usize::MAX; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        if n > 0 {
            let mut queue = VecDeque::from([0]);
            visited[0] = true;
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &(v, e) in &adj[u] {
                    if !visited[v] {
                        visited[v] = true;
                        parent_edge[v] = e;
                        children[u].push((v, e));
                        queue.push_back(v);
                    }
                }
            }
        }
        let mut subtree_population: Vec<u64> = sub.nodes.iter().map(|&g| populations[g]).collect();
        for &u in order.iter().rev() {
            for &(v, _) in &children[u] {
                subtree_population[u] += subtree_population[v];
            }
        }
        RootedTree {
            children,
            parent_edge,
            order,
            subtree_population,
        }
    }

    pub fn total_population(&self) -> u64 {
        self.order.first().map_or(0, |&r| self.subtree_population[r])
    }

    /// Every tree edge as a cut, in BFS order of the child endpoint.
    pub fn cuts(&self) -> impl Iterator<Item = Cut> + '_ {
        let total = self.total_population();
        self.order.iter().skip(1).map(move |&v| Cut {
            edge: self.parent_edge[v],
            child: v,
            child_population: self.subtree_population[v],
            rest_population: total - self.subtree_population[v],
        })
    }

    /// Local-node membership of the child side of `cut`.
    pub fn child_side(&self, cut: &Cut) -> Vec<bool> {
        let mut side = vec![false; self.children.len()];
        let mut stack = vec![cut.child];
        while let Some(u) = stack.pop() {
            side[u] = true;
            stack.extend(self.children[u].iter().map(|&(v, _)| v));
        }
        side
    }
}

/// True when `population` is within `tolerance · ideal` of `target`.
pub(crate) fn within(population: u64, target: f64, ideal: f64, tolerance: f64) -> bool {
    (population as f64 - target).abs() <= tolerance * ideal * (1.0 + 1e-12)
}

/// All cuts leaving both sides within `tolerance` of `ideal`.
pub fn feasible_cuts(tree: &RootedTree, ideal: f64, tolerance: f64) -> Vec<Cut> {
    tree.cuts()
        .filter(|c| {
            within(c.child_population, ideal, ideal, tolerance) && within(c.rest_population, ideal, ideal, tolerance)
        })
        .collect()
}

/// Picks a balanced cut uniformly at random, or `None` when no tree edge
/// yields two balanced sides.
pub fn balanced_cut<R: Rng + ?Sized>(tree: &RootedTree, ideal: f64, tolerance: f64, rng: &mut R) -> Option<Cut> {
    let cuts = feasible_cuts(tree, ideal, tolerance);
    if cuts.is_empty() {
        None
    } else {
        Some(cuts[rng.gen_range(0..cuts.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{grid_graph, path_graph, star_graph, unit_pops};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn whole(g: &DualGraph) -> Subgraph {
        let all: Vec<usize> = (0..g.node_count()).collect();
        Subgraph::induced(g, &all)
    }

    fn total_weight(tree: &[usize], w: &[f64]) -> f64 {
        tree.iter().map(|&i| w[i]).sum()
    }

    #[test]
    fn triangle_keeps_two_heaviest() {
        // edges in order ab, bc, ac
        let g = crate::synthetic::graph_from_edges(3, &[(0, 1), (1, 2), (0, 2)], &["A"; 3]);
        let sub = whole(&g);
        let tree = max_weight_spanning_tree(&sub, &[3.0, 2.0, 1.0]).unwrap();
        let mut t = tree.clone();
        t.sort();
        assert_eq!(t, vec![0, 1]);
    }

    #[test]
    fn tree_input_returns_all_edges() {
        let g = path_graph(5, &unit_pops(5));
        let sub = whole(&g);
        let mut t = max_weight_spanning_tree(&sub, &[0.3, 0.1, 0.9, 0.2]).unwrap();
        t.sort();
        assert_eq!(t, vec![0, 1, 2, 3]);
    }

    #[test]
    fn four_cycle_drops_lightest() {
        let g = crate::synthetic::graph_from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], &["A"; 4]);
        let sub = whole(&g);
        let w: [f64; 4] = [3.0, 1.0, 4.0, 2.0];
        // Oracle: the four spanning trees of a 4-cycle each omit one edge.
        let sum: f64 = w.iter().sum();
        let best_omit = (0..4).max_by(|&x, &y| (sum - w[x]).total_cmp(&(sum - w[y]))).unwrap();
        let mut t = max_weight_spanning_tree(&sub, &w).unwrap();
        t.sort();
        let expected: Vec<usize> = (0..4).filter(|&i| i != best_omit).collect();
        assert_eq!(t, expected);
        assert_eq!(best_omit, 1);
    }

    #[test]
    fn disconnected_subgraph_errors() {
        let g = path_graph(4, &unit_pops(4));
        let sub = Subgraph::induced(&g, &[0, 2]);
        assert_eq!(max_weight_spanning_tree(&sub, &[]), Err(TreeError::Disconnected));
    }

    #[test]
    fn kruskal_matches_brute_force_on_small_grid() {
        // Oracle: enumerate all (|E| choose n-1) edge subsets of a 2x3 grid.
        let g = grid_graph(2, 3, &unit_pops(6), |_, _| "A".into());
        let sub = whole(&g);
        let m = sub.edges.len();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..50 {
            let w: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
            let tree = max_weight_spanning_tree(&sub, &w).unwrap();
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..(1 << m) {
                if mask.count_ones() as usize != 5 {
                    continue;
                }
                let mut uf = UnionFind::new(6);
                let mut ok = true;
                let mut total = 0.0;
                for (i, (e, wi)) in sub.edges.iter().zip(&w).enumerate() {
                    if mask & (1 << i) != 0 {
                        ok &= uf.union(e.a, e.b);
                        total += wi;
                    }
                }
                if ok && total > best {
                    best = total;
                }
            }
            assert!((total_weight(&tree, &w) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn intra_county_weights_scale_with_w() {
        let g = grid_graph(10, 10, &unit_pops(100), |_, _| "A".into());
        let sub = whole(&g);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut draws = Vec::new();
        while draws.len() < 10_000 {
            draws.extend(draw_edge_weights(&g, &sub, 20.0, &mut rng));
        }
        draws.truncate(10_000);
        assert!(draws.iter().all(|&x| (0.0..=20.0).contains(&x)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 10.0).abs() <= 0.5, "mean {mean}");
    }

    #[test]
    fn inter_county_only_ignores_w() {
        // Every node its own county: no intra-county edges.
        let g = grid_graph(3, 3, &unit_pops(9), |r, c| format!("{r}-{c}"));
        let sub = whole(&g);
        let a = draw_edge_weights(&g, &sub, 1.0, &mut ChaCha12Rng::seed_from_u64(3));
        let b = draw_edge_weights(&g, &sub, 20.0, &mut ChaCha12Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    fn path_tree(g: &DualGraph) -> RootedTree {
        let sub = whole(g);
        let tree: Vec<usize> = (0..sub.edges.len()).collect();
        let pops: Vec<u64> = g.nodes().iter().map(|n| n.population).collect();
        RootedTree::new(&sub, &tree, &pops)
    }

    #[test]
    fn balanced_cut_on_paths() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let g4 = path_graph(4, &unit_pops(4));
        let t4 = path_tree(&g4);
        let cut = balanced_cut(&t4, 2.0, 0.01, &mut rng).unwrap();
        assert_eq!(cut.edge, 1);
        assert_eq!((cut.child_population, cut.rest_population), (2, 2));

        let g3 = path_graph(3, &unit_pops(3));
        assert!(balanced_cut(&path_tree(&g3), 1.5, 0.01, &mut rng).is_none());
    }

    #[test]
    fn star_with_empty_center_has_no_cut() {
        let g = star_graph(5, 0, 1);
        let sub = whole(&g);
        let tree: Vec<usize> = (0..sub.edges.len()).collect();
        let pops: Vec<u64> = g.nodes().iter().map(|n| n.population).collect();
        let t = RootedTree::new(&sub, &tree, &pops);
        // Oracle: each of the 5 cuts isolates a single leaf (pop 1 vs 4).
        for c in t.cuts() {
            assert_eq!(c.child_population.min(c.rest_population), 1);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(balanced_cut(&t, 2.5, 0.25, &mut rng).is_none());
    }

    #[test]
    fn child_side_matches_subtree_population() {
        let g = grid_graph(4, 4, &unit_pops(16), |_, _| "A".into());
        let sub = whole(&g);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let w = draw_edge_weights(&g, &sub, 1.0, &mut rng);
        let tree = max_weight_spanning_tree(&sub, &w).unwrap();
        let t = RootedTree::new(&sub, &tree, &[1; 16]);
        for c in t.cuts() {
            let side = t.child_side(&c);
            assert_eq!(side.iter().filter(|&&s| s).count() as u64, c.child_population);
        }
    }
}
