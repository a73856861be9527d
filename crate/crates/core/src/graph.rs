// Licensed under the Apache License, Version 2.0 (the "License"); you may
// not use this file except in compliance with the License. You may obtain
// a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
// WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
// License for the specific language governing permissions and limitations
// under the License.

//! Undirected graphs, edge-list ingestion, the power-law cluster generator
//! and exact all-pairs hop distances.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::seed;

/// Undirected, unweighted simple graph on nodes `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops and repeated edges are
    /// dropped; every edge is stored in both directions.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Empty("graph has no nodes"));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= node_count {
                    return Err(Error::param(
                        "edges",
                        format!("node {x} out of range for {node_count} nodes"),
                    ));
                }
            }
            if u != v {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        Ok(Self::from_adjacency_lists(adjacency))
    }

    fn from_adjacency_lists(mut adjacency: Vec<Vec<usize>>) -> Self {
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Graph {
            node_count: adjacency.len(),
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted neighbor indices of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Each edge once, as `(low, high)`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Connected components as sorted node lists, ordered by their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.node_count];
        let mut components = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut members = Vec::new();
            while let Some(u) = queue.pop_front() {
                members.push(u);
                for &v in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Subgraph induced on `nodes` (sorted, distinct), relabeled densely in
    /// the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut new_index = vec![usize::MAX; self.node_count];
        for (k, &v) in nodes.iter().enumerate() {
            new_index[v] = k;
        }
        let adjacency = nodes
            .iter()
            .map(|&v| {
                self.adjacency[v]
                    .iter()
                    .filter_map(|&w| (new_index[w] != usize::MAX).then(|| new_index[w]))
                    .collect()
            })
            .collect();
        Self::from_adjacency_lists(adjacency)
    }
}

/// A graph read from labelled input together with its label mapping.
#[derive(Clone, Debug)]
pub struct LabeledGraph {
    pub graph: Graph,
    /// `labels[i]` is the original label of node `i`.
    pub labels: Vec<String>,
}

impl LabeledGraph {
    /// Parses a whitespace-separated edge list. Lines starting with `#` or
    /// `%` and blank lines are skipped. Nodes are numbered in order of first
    /// appearance.
    pub fn parse(text: &str) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected 2 node labels, found {}", tokens.len()),
                });
            }
            let mut ids = [0usize; 2];
            for (slot, token) in ids.iter_mut().zip(&tokens) {
                let next = labels.len();
                *slot = *index.entry(token).or_insert_with(|| {
                    labels.push((*token).to_owned());
                    next
                });
            }
            edges.push((ids[0], ids[1]));
        }
        if labels.is_empty() {
            return Err(Error::Empty("edge list contains no edges"));
        }
        let graph = Graph::from_edges(labels.len(), &edges)?;
        Ok(LabeledGraph { graph, labels })
    }

    /// Restricts to the largest connected component, keeping labels aligned.
    pub fn largest_component(&self) -> Result<LabeledGraph> {
        let (graph, original) = largest_connected_component_with_map(&self.graph)?;
        let labels = original.iter().map(|&i| self.labels[i].clone()).collect();
        Ok(LabeledGraph { graph, labels })
    }
}

pub fn load_edge_list(text: &str) -> Result<Graph> {
    LabeledGraph::parse(text).map(|lg| lg.graph)
}

/// Parameters of the power-law cluster growth model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn new(n: usize, m: usize, p: f64, seed: u64) -> Self {
        GeneratorParams { n, m, p, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::param("m", "must be at least 1"));
        }
        if self.m >= self.n {
            return Err(Error::param(
                "m",
                format!("m = {} must be smaller than n = {}", self.m, self.n),
            ));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", format!("{} is not in [0, 1]", self.p)));
        }
        Ok(())
    }
}

impl fmt::Display for GeneratorParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "powerlaw:{},{},{},{}", self.n, self.m, self.p, self.seed)
    }
}

/// Holme–Kim power-law cluster graph.
///
/// Growth starts from `m` isolated nodes. Each new node draws `m` distinct
/// preferential-attachment candidates from the repeated-nodes list (one
/// entry per edge endpoint; the seed nodes appear once each so the first
/// attachment is uniform) and links to the first of them. Every further edge
/// closes a triangle with probability `p` by linking to a random neighbour of
/// the last preferential target, and otherwise links to the next candidate.
/// A candidate that is already linked is replaced by a fresh preferential
/// draw, so each new node contributes exactly `m` edges and the result has
/// `m * (n - m)` edges.
pub fn powerlaw_cluster_graph(params: &GeneratorParams) -> Result<Graph> {
    params.validate()?;
    let GeneratorParams { n, m, p, .. } = *params;
    let mut rng = seed::rng(params.seed);
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut repeated: Vec<usize> = (0..m).collect();
    repeated.reserve(2 * m * (n - m));

    for source in m..n {
        let mut candidates: Vec<usize> = Vec::with_capacity(m);
        while candidates.len() < m {
            let x = repeated[rng.random_range(0..repeated.len())];
            if !candidates.contains(&x) {
                candidates.push(x);
            }
        }

        let mut target = preferential_target(&adjacency, &repeated, &mut candidates, source, &mut rng);
        link(&mut adjacency, source, target);
        repeated.push(target);

        let mut count = 1;
        while count < m {
            if rng.random::<f64>() < p {
                let open: Vec<usize> = adjacency[target]
                    .iter()
                    .copied()
                    .filter(|&nbr| nbr != source && !adjacency[source].contains(&nbr))
                    .collect();
                if !open.is_empty() {
                    let nbr = open[rng.random_range(0..open.len())];
                    link(&mut adjacency, source, nbr);
                    repeated.push(nbr);
                    count += 1;
                    continue;
                }
            }
            target = preferential_target(&adjacency, &repeated, &mut candidates, source, &mut rng);
            link(&mut adjacency, source, target);
            repeated.push(target);
            count += 1;
        }
        repeated.extend(std::iter::repeat_n(source, m));
    }
    Ok(Graph::from_adjacency_lists(adjacency))
}

/// Next pending candidate, or a fresh draw from `repeated` when the
/// candidate is already linked to `source`.
fn preferential_target(
    adjacency: &[Vec<usize>],
    repeated: &[usize],
    candidates: &mut Vec<usize>,
    source: usize,
    rng: &mut seed::Rng,
) -> usize {
    let linked = |x: usize| adjacency[source].contains(&x);
    match candidates.pop() {
        Some(x) if !linked(x) => x,
        _ => loop {
            let x = repeated[rng.random_range(0..repeated.len())];
            if !linked(x) {
                break x;
            }
        },
    }
}

fn link(adjacency: &mut [Vec<usize>], u: usize, v: usize) {
    adjacency[u].push(v);
    adjacency[v].push(u);
}

/// Largest connected component, relabeled densely in original index order.
/// Ties go to the component holding the smallest node index.
pub fn largest_connected_component(g: &Graph) -> Result<Graph> {
    largest_connected_component_with_map(g).map(|(graph, _)| graph)
}

/// As [`largest_connected_component`], also returning the original index of
/// every retained node.
pub fn largest_connected_component_with_map(g: &Graph) -> Result<(Graph, Vec<usize>)> {
    if g.node_count() == 0 {
        return Err(Error::Empty("graph has no nodes"));
    }
    let components = g.components();
    // components are ordered by smallest member, so the first maximum wins ties
    let mut best = &components[0];
    for c in &components[1..] {
        if c.len() > best.len() {
            best = c;
        }
    }
    Ok((g.induced_subgraph(best), best.clone()))
}

/// Symmetric matrix of shortest hop counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopDistanceMatrix {
    n: usize,
    entries: Vec<u32>,
}

impl HopDistanceMatrix {
    /// Wraps row-major entries, checking shape, symmetry and the zero diagonal.
    pub fn from_entries(n: usize, entries: Vec<u32>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                actual: entries.len(),
            });
        }
        let h = HopDistanceMatrix { n, entries };
        for i in 0..n {
            if h.get(i, i) != 0 {
                return Err(Error::param("entries", format!("diagonal entry {i} is not 0")));
            }
            for j in i + 1..n {
                if h.get(i, j) != h.get(j, i) {
                    return Err(Error::param("entries", format!("({i}, {j}) is not symmetric")));
                }
            }
        }
        Ok(h)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn diameter(&self) -> u32 {
        self.entries.iter().copied().max().unwrap_or(0)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.get(i, j)))
    }
}

/// All-pairs hop distances by one BFS per source.
pub fn hop_distance_matrix(g: &Graph) -> Result<HopDistanceMatrix> {
    hop_distance_matrix_with(g, Execution::default())
}

pub fn hop_distance_matrix_with(g: &Graph, exec: Execution) -> Result<HopDistanceMatrix> {
    let n = g.node_count();
    let rows = exec::map_range(exec, n, |source| bfs_row(g, source));
    let mut entries = Vec::with_capacity(n * n);
    for (source, row) in rows.into_iter().enumerate() {
        if let Some(to) = row.iter().position(|&d| d == u32::MAX) {
            return Err(Error::Disconnected { from: source, to });
        }
        entries.extend(row);
    }
    Ok(HopDistanceMatrix { n, entries })
}

fn bfs_row(g: &Graph, source: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; g.node_count()];
    let mut queue = VecDeque::with_capacity(g.node_count());
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = dist[u] + 1;
        for &v in g.neighbors(u) {
            if dist[v] == u32::MAX {
                dist[v] = next;
                queue.push_back(v);
            }
        }
    }
    dist
}

pub fn average_degree(g: &Graph) -> f64 {
    if g.node_count() == 0 {
        return 0.0;
    }
    2.0 * g.edge_count() as f64 / g.node_count() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn floyd_warshall(g: &Graph) -> Vec<u32> {
        let n = g.node_count();
        let inf = u32::MAX / 4;
        let mut d = vec![inf; n * n];
        for i in 0..n {
            d[i * n + i] = 0;
            for &j in g.neighbors(i) {
                d[i * n + j] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i * n + k] + d[k * n + j];
                    if via < d[i * n + j] {
                        d[i * n + j] = via;
                    }
                }
            }
        }
        d
    }

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn edge_list_basic() {
        let g = load_edge_list("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_drops_duplicates_and_self_loops() {
        let lg = LabeledGraph::parse("a b\nb a\na a").unwrap();
        assert_eq!(lg.graph.node_count(), 2);
        assert_eq!(lg.graph.edge_count(), 1);
        assert_eq!(lg.labels, vec!["a", "b"]);
    }

    #[test]
    fn edge_list_comments_and_errors() {
        let g = load_edge_list("# header\n% other\n\nx y\n  y   z  \n").unwrap();
        assert_eq!(g.node_count(), 3);
        match load_edge_list("0 1\n1 2 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(load_edge_list(""), Err(Error::Empty(_))));
        assert!(matches!(load_edge_list("# nothing\n"), Err(Error::Empty(_))));
    }

    #[test]
    fn generator_edge_count_identity() {
        let g = powerlaw_cluster_graph(&GeneratorParams::new(100, 3, 0.5, 7)).unwrap();
        assert_eq!(g.node_count(), 100);
        assert_eq!(g.edge_count(), 291);
        assert!(g.is_connected());
    }

    #[test]
    fn generator_m1_is_tree() {
        let g = powerlaw_cluster_graph(&GeneratorParams::new(5, 1, 0.0, 3)).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert!(g.is_connected());
    }

    #[test]
    fn generator_rejects_bad_params() {
        assert!(powerlaw_cluster_graph(&GeneratorParams::new(5, 5, 0.1, 0)).is_err());
        assert!(powerlaw_cluster_graph(&GeneratorParams::new(5, 0, 0.1, 0)).is_err());
        assert!(powerlaw_cluster_graph(&GeneratorParams::new(5, 2, 1.5, 0)).is_err());
    }

    #[test]
    fn generator_is_deterministic() {
        let params = GeneratorParams::new(200, 4, 0.3, 11);
        assert_eq!(
            powerlaw_cluster_graph(&params).unwrap(),
            powerlaw_cluster_graph(&params).unwrap()
        );
        let other = GeneratorParams { seed: 12, ..params };
        assert_ne!(
            powerlaw_cluster_graph(&params).unwrap(),
            powerlaw_cluster_graph(&other).unwrap()
        );
    }

    #[test]
    fn generator_degree_is_right_skewed() {
        let g = powerlaw_cluster_graph(&GeneratorParams::new(1133, 5, 0.1, 1)).unwrap();
        let mut degrees = g.degrees();
        degrees.sort_unstable();
        let median = degrees[degrees.len() / 2] as f64;
        assert!(median < average_degree(&g), "median {median}");
    }

    #[test]
    fn generator_mean_degree_near_2m_without_clustering() {
        let m = 4;
        let total: f64 = (0..20)
            .map(|s| average_degree(&powerlaw_cluster_graph(&GeneratorParams::new(300, m, 0.0, s)).unwrap()))
            .sum();
        let mean = total / 20.0;
        assert!((mean - 2.0 * m as f64).abs() <= 0.05 * 2.0 * m as f64, "mean {mean}");
    }

    #[test]
    fn triangle_closure_raises_clustering() {
        fn triangles(g: &Graph) -> usize {
            g.edges()
                .map(|(u, v)| g.neighbors(u).iter().filter(|w| g.has_edge(v, **w)).count())
                .sum()
        }
        let low = powerlaw_cluster_graph(&GeneratorParams::new(400, 3, 0.0, 5)).unwrap();
        let high = powerlaw_cluster_graph(&GeneratorParams::new(400, 3, 0.9, 5)).unwrap();
        assert!(triangles(&high) > 3 * triangles(&low));
    }

    #[test]
    fn lcc_picks_largest_and_breaks_ties_low() {
        let g = Graph::from_edges(5, &[(0, 1), (2, 3), (3, 4)]).unwrap();
        let (lcc, map) = largest_connected_component_with_map(&g).unwrap();
        assert_eq!(map, vec![2, 3, 4]);
        assert_eq!(lcc, path(3));

        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let (_, map) = largest_connected_component_with_map(&g).unwrap();
        assert_eq!(map, vec![0, 1]);

        let connected = path(6);
        assert_eq!(largest_connected_component(&connected).unwrap(), connected);
    }

    #[test]
    fn labels_follow_component() {
        let lg = LabeledGraph::parse("x y\np q\nq r").unwrap();
        let lcc = lg.largest_component().unwrap();
        assert_eq!(lcc.labels, vec!["p", "q", "r"]);
    }

    #[test]
    fn hop_distances_small_cases() {
        let h = hop_distance_matrix(&path(3)).unwrap();
        assert_eq!(h.entries(), &[0, 1, 2, 1, 0, 1, 2, 1, 0]);

        let k4: Vec<_> = (0..4).flat_map(|i| (i + 1..4).map(move |j| (i, j))).collect();
        let h = hop_distance_matrix(&Graph::from_edges(4, &k4).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h.get(i, j), u32::from(i != j));
            }
        }
    }

    #[test]
    fn hop_distances_reject_disconnected() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        match hop_distance_matrix(&g) {
            Err(Error::Disconnected { from, to }) => assert_eq!((from, to), (0, 2)),
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn hop_distances_sequential_equals_parallel() {
        let g = powerlaw_cluster_graph(&GeneratorParams::new(150, 2, 0.4, 9)).unwrap();
        assert_eq!(
            hop_distance_matrix_with(&g, Execution::Sequential).unwrap(),
            hop_distance_matrix_with(&g, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn average_degree_of_path() {
        assert!((average_degree(&path(3)) - 4.0 / 3.0).abs() < 1e-15);
    }

    fn connected_graph() -> impl Strategy<Value = Graph> {
        (2usize..=60).prop_flat_map(|n| {
            let tree = proptest::collection::vec(any::<u32>(), n - 1);
            let extra = proptest::collection::vec((0..n, 0..n), 0..2 * n);
            (Just(n), tree, extra).prop_map(|(n, parents, extra)| {
                let mut edges: Vec<_> = parents
                    .iter()
                    .enumerate()
                    .map(|(k, &r)| (k + 1, r as usize % (k + 1)))
                    .collect();
                edges.extend(extra);
                Graph::from_edges(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn bfs_matches_floyd_warshall(g in connected_graph()) {
            let h = hop_distance_matrix(&g).unwrap();
            let oracle = floyd_warshall(&g);
            prop_assert_eq!(h.entries(), oracle.as_slice());
            let n = h.n();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(h.get(i, j), h.get(j, i));
                    if i != j {
                        prop_assert!(h.get(i, j) >= 1);
                    }
                    for k in 0..n {
                        prop_assert!(h.get(i, k) <= h.get(i, j) + h.get(j, k));
                    }
                }
            }
        }

        #[test]
        fn generated_graphs_have_exact_edge_count(n in 3usize..120, m_frac in 0.0f64..1.0, p in 0.0f64..=1.0, s in any::<u64>()) {
            let m = 1 + ((n - 2) as f64 * m_frac) as usize;
            let g = powerlaw_cluster_graph(&GeneratorParams::new(n, m, p, s)).unwrap();
            prop_assert_eq!(g.edge_count(), m * (n - m));
            prop_assert!(g.is_connected());
            for u in 0..n {
                prop_assert!(!g.has_edge(u, u));
                for &v in g.neighbors(u) {
                    prop_assert!(g.has_edge(v, u));
                }
            }
        }
    }
}
