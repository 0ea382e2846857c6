//! Undirected simple graphs with per-node neighbor lists.
//!
//! Nodes are the indices `0..n`. A graph is immutable once built; the
//! neighbor lists are materialized up front because partner selection in
//! the agent model reads them on every interaction.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Block tag attached to a node (1 or 2).
pub type BlockLabel = u8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    /// Sorted `(i, j)` pairs with `i < j`.
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    labels: Option<Vec<BlockLabel>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeSequence(pub Vec<usize>);

impl DegreeSequence {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl Graph {
    /// Builds a graph from unordered pairs. Rejects self-loops, duplicate
    /// pairs (in either orientation) and out-of-range endpoints.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::NodeOutOfRange { node: i.max(j), n });
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if !set.insert((i.min(j), i.max(j))) {
                return Err(Error::InvalidGraph(format!("duplicate edge {{{i}, {j}}}")));
            }
        }
        Ok(Self::from_sorted_unchecked(n, set.into_iter().collect()))
    }

    /// `edges` must be sorted, deduplicated and satisfy `i < j < n`.
    pub(crate) fn from_sorted_unchecked(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Graph {
            n,
            edges,
            adjacency,
            labels: None,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_sorted_unchecked(n, Vec::new())
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::from_sorted_unchecked(n, edges)
    }

    pub fn path(n: usize) -> Self {
        let edges = (1..n).map(|j| (j - 1, j)).collect();
        Self::from_sorted_unchecked(n, edges)
    }

    /// Star with `center` joined to every other node.
    pub fn star(n: usize, center: usize) -> Result<Self> {
        Self::new(n, (0..n).filter(|&j| j != center).map(|j| (center, j)))
    }

    /// Attaches block labels; one label per node, each in {1, 2}.
    pub fn with_labels(mut self, labels: Vec<BlockLabel>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidGraph(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != 2) {
            return Err(Error::InvalidGraph(format!("block label {bad} not in {{1, 2}}")));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[BlockLabel]> {
        self.labels.as_deref()
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange { node: i, n: self.n })
    }

    /// Neighbor list without the bounds check; panics on a bad index.
    #[inline]
    pub(crate) fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && self.adjacency[i].binary_search(&j).is_ok()
    }

    pub fn degrees(&self) -> DegreeSequence {
        DegreeSequence(self.adjacency.iter().map(Vec::len).collect())
    }

    /// Breadth-first search from node 0. The one-node graph is connected;
    /// the zero-node graph is reported as not connected.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.n
    }

    /// Dense 0/1 adjacency matrix, row-major.
    pub fn adjacency_matrix(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n * self.n];
        for &(i, j) in &self.edges {
            m[i * self.n + j] = 1.0;
            m[j * self.n + i] = 1.0;
        }
        m
    }

    /// Edge-list text: `# n=<N>` header, an optional `# labels=` line with
    /// one block tag per node, then one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# n={}\n", self.n);
        if let Some(labels) = &self.labels {
            let tags: Vec<String> = labels.iter().map(u8::to_string).collect();
            let _ = writeln!(out, "# labels={}", tags.join(" "));
        }
        for (i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses the edge-list format written by [`Graph::to_edge_list`].
    /// Without an `n=` header the node count is one past the largest index.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared_n = None;
        let mut labels = None;
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("n=") {
                    declared_n = Some(v.trim().parse::<usize>().map_err(|e| {
                        Error::Parse(format!("line {}: bad node count: {e}", lineno + 1))
                    })?);
                } else if let Some(v) = comment.strip_prefix("labels=") {
                    let parsed: std::result::Result<Vec<BlockLabel>, _> =
                        v.split_whitespace().map(str::parse).collect();
                    labels = Some(parsed.map_err(|e| {
                        Error::Parse(format!("line {}: bad label: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut next = || -> Result<usize> {
                fields
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected `i j`", lineno + 1)))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let i = next()?;
            let j = next()?;
            pairs.push((i, j));
        }
        let n = declared_n.unwrap_or_else(|| {
            pairs
                .iter()
                .map(|&(i, j)| i.max(j) + 1)
                .max()
                .unwrap_or(0)
        });
        let g = Graph::new(n, pairs)?;
        match labels {
            Some(l) => g.with_labels(l),
            None => Ok(g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neighbor_queries() {
        let path = Graph::path(3);
        assert_eq!(path.neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(Graph::complete(3).neighbors(0).unwrap(), &[1, 2]);
        assert!(Graph::empty(3).neighbors(0).unwrap().is_empty());
        assert!(matches!(
            path.neighbors(3),
            Err(Error::NodeOutOfRange { node: 3, n: 3 })
        ));
    }

    #[test]
    fn degree_sequences() {
        assert_eq!(Graph::complete(3).degrees().0, vec![2, 2, 2]);
        assert_eq!(Graph::path(3).degrees().0, vec![1, 2, 1]);
        assert_eq!(Graph::star(5, 0).unwrap().degrees().0, vec![4, 1, 1, 1, 1]);
    }

    #[test]
    fn connectivity() {
        assert!(Graph::path(3).is_connected());
        assert!(!Graph::new(4, [(0, 1), (2, 3)]).unwrap().is_connected());
        assert!(Graph::empty(1).is_connected());
    }

    #[test]
    fn edge_counts() {
        assert_eq!(Graph::complete(4).edge_count(), 6);
        assert_eq!(Graph::empty(5).edge_count(), 0);
    }

    #[test]
    fn rejects_malformed_edges() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::empty(2).with_labels(vec![1]).is_err());
        assert!(Graph::empty(2).with_labels(vec![1, 3]).is_err());
    }

    #[test]
    fn edge_list_text_round_trip() {
        let g = Graph::new(4, [(0, 1), (2, 1), (3, 0)])
            .unwrap()
            .with_labels(vec![1, 1, 2, 2])
            .unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("# n=4\n# labels=1 1 2 2\n0 1\n"));
        assert_eq!(Graph::parse_edge_list(&text).unwrap(), g);
        // Header keeps trailing isolated nodes.
        let h = Graph::parse_edge_list("# n=5\n0 1\n").unwrap();
        assert_eq!(h.node_count(), 5);
        assert!(Graph::parse_edge_list("0 x\n").is_err());
    }

    fn closure_connected(n: usize, edges: &[(usize, usize)]) -> bool {
        // Warshall transitive closure.
        let mut reach = vec![vec![false; n]; n];
        for (i, row) in reach.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(i, j) in edges {
            reach[i][j] = true;
            reach[j][i] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        reach[0].iter().all(|&r| r)
    }

    #[test]
    fn connectivity_matches_transitive_closure_on_all_small_graphs() {
        for n in 1..=6usize {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            for mask in 0u32..(1 << pairs.len()) {
                let edges: Vec<_> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect();
                let g = Graph::new(n, edges.iter().copied()).unwrap();
                assert_eq!(g.is_connected(), closure_connected(n, &edges), "n={n} mask={mask}");
            }
        }
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..15).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..40).prop_map(move |pairs| {
                let set: BTreeSet<_> = pairs
                    .into_iter()
                    .filter(|(i, j)| i != j)
                    .map(|(i, j)| (i.min(j), i.max(j)))
                    .collect();
                Graph::new(n, set).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn degree_sum_is_twice_edge_count(g in arb_graph()) {
            prop_assert_eq!(g.degrees().total(), 2 * g.edge_count());
        }

        #[test]
        fn neighbor_relation_is_symmetric(g in arb_graph()) {
            for i in 0..g.node_count() {
                for &j in g.neighbors(i).unwrap() {
                    prop_assert!(g.neighbors(j).unwrap().contains(&i));
                }
            }
        }
    }
}
