//! Graph structures: the user-tweet bipartite graph, top-down propagation
//! trees, symmetric GCN normalization and k-hop subgraph extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({src}, {dst}) out of range for {n} nodes")]
    EdgeOutOfRange { src: usize, dst: usize, n: usize },
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("edge ({src}, {dst}) has non-positive weight {weight}")]
    BadWeight { src: usize, dst: usize, weight: f64 },
    #[error("adjacency must have at least one node")]
    Empty,
    #[error("node {0} has zero degree")]
    DegenerateDegree(usize),
    #[error("seed tweet index {seed} out of range ({tweets} tweets)")]
    InvalidSeed { seed: usize, tweets: usize },
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("node feature rows {rows} do not match node count {nodes}")]
    NodeCountMismatch { rows: usize, nodes: usize },
}

/// Weighted edge list over `n` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseAdjacency {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl SparseAdjacency {
    /// Validates and stores `edges` sorted by `(src, dst)`.
    pub fn new(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Result<Self, GraphError> {
        for &(src, dst, weight) in &edges {
            if src >= n || dst >= n {
                return Err(GraphError::EdgeOutOfRange { src, dst, n });
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(GraphError::BadWeight { src, dst, weight });
            }
        }
        edges.sort_by_key(|a| (a.0, a.1));
        for w in edges.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(GraphError::DuplicateEdge {
                    src: w[0].0,
                    dst: w[0].1,
                });
            }
        }
        Ok(Self { n, edges })
    }

    /// Adds both directions for every listed pair, weight 1.
    pub fn undirected(n: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut set = BTreeSet::new();
        for &(a, b) in pairs {
            set.insert((a, b));
            set.insert((b, a));
        }
        Self::new(n, set.into_iter().map(|(a, b)| (a, b, 1.0)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_symmetric(&self) -> bool {
        let map: HashMap<(usize, usize), f64> =
            self.edges.iter().map(|&(s, d, w)| ((s, d), w)).collect();
        self.edges
            .iter()
            .all(|&(s, d, w)| map.get(&(d, s)).is_some_and(|&r| r == w))
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for &(s, d, w) in &self.edges {
            m.set(s, d, w);
        }
        m
    }
}

/// `Â = D̃^{-1/2} Ã D̃^{-1/2}` in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    degree: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Diagonal of `D̃`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// `Â · h`.
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix, GraphError> {
        if h.rows() != self.n {
            return Err(GraphError::NodeCountMismatch {
                rows: h.rows(),
                nodes: self.n,
            });
        }
        let mut out = Matrix::zeros(self.n, h.cols());
        for i in 0..self.n {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            let out_row = out.row_mut(i);
            for k in range {
                let v = self.values[k];
                for (o, &x) in out_row.iter_mut().zip(h.row(self.col_idx[k])) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `Âᵀ · h`, used by backward passes over directed graphs.
    pub fn spmm_t(&self, h: &Matrix) -> Result<Matrix, GraphError> {
        if h.rows() != self.n {
            return Err(GraphError::NodeCountMismatch {
                rows: h.rows(),
                nodes: self.n,
            });
        }
        let mut out = Matrix::zeros(self.n, h.cols());
        for i in 0..self.n {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            for k in range {
                let v = self.values[k];
                let j = self.col_idx[k];
                for (o, &x) in out.row_mut(j).iter_mut().zip(h.row(i)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// Block-diagonal union of several normalized adjacencies.
    pub fn block_diagonal(blocks: &[NormalizedAdjacency]) -> Self {
        let n: usize = blocks.iter().map(|b| b.n).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut degree = Vec::with_capacity(n);
        row_ptr.push(0);
        let mut offset = 0;
        for b in blocks {
            for i in 0..b.n {
                for (j, v) in b.row(i) {
                    col_idx.push(j + offset);
                    values.push(v);
                }
                row_ptr.push(col_idx.len());
            }
            degree.extend_from_slice(&b.degree);
            offset += b.n;
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
            degree,
        }
    }
}

/// Symmetric GCN normalization of `adj`, optionally adding self-loops.
///
/// Degrees are taken on the symmetrized support of `Ã` (each neighbor counted
/// once whichever direction the edge points), which equals the row sum for
/// symmetric input and the total in+out degree plus self-loop for trees.
pub fn normalize_adjacency(
    adj: &SparseAdjacency,
    add_self_loops: bool,
) -> Result<NormalizedAdjacency, GraphError> {
    let n = adj.n;
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let mut tilde: BTreeMap<(usize, usize), f64> =
        adj.edges.iter().map(|&(s, d, w)| ((s, d), w)).collect();
    if add_self_loops {
        for i in 0..n {
            *tilde.entry((i, i)).or_insert(0.0) += 1.0;
        }
    }

    let mut degree = vec![0.0; n];
    for (&(s, d), &w) in &tilde {
        if s == d {
            degree[s] += w;
            continue;
        }
        match tilde.get(&(d, s)) {
            Some(&rev) => {
                if s < d {
                    let w = w.max(rev);
                    degree[s] += w;
                    degree[d] += w;
                }
            }
            None => {
                degree[s] += w;
                degree[d] += w;
            }
        }
    }
    if let Some(i) = degree.iter().position(|&d| d <= 0.0) {
        return Err(GraphError::DegenerateDegree(i));
    }

    let mut row_ptr = vec![0; n + 1];
    let mut col_idx = Vec::with_capacity(tilde.len());
    let mut values = Vec::with_capacity(tilde.len());
    for (&(s, d), &w) in &tilde {
        row_ptr[s + 1] += 1;
        col_idx.push(d);
        values.push(w / (degree[s] * degree[d]).sqrt());
    }
    for i in 0..n {
        row_ptr[i + 1] += row_ptr[i];
    }
    Ok(NormalizedAdjacency {
        n,
        row_ptr,
        col_idx,
        values,
        degree,
    })
}

/// One user action on a source tweet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub tweet_id: String,
    pub action: String,
}

/// Users and source tweets on one unified node set `[users ∥ tweets]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    user_ids: Vec<String>,
    tweet_ids: Vec<String>,
    adjacency: SparseAdjacency,
    neighbors: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    fn from_parts(
        user_ids: Vec<String>,
        tweet_ids: Vec<String>,
        pairs: &BTreeSet<(usize, usize)>,
    ) -> Self {
        let u = user_ids.len();
        let n = u + tweet_ids.len();
        let mut edges = Vec::with_capacity(pairs.len() * 2);
        let mut neighbors = vec![Vec::new(); n];
        for &(ui, ti) in pairs {
            edges.push((ui, u + ti, 1.0));
            edges.push((u + ti, ui, 1.0));
            neighbors[ui].push(u + ti);
            neighbors[u + ti].push(ui);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let adjacency = SparseAdjacency::new(n, edges).expect("bipartite edges are valid");
        Self {
            user_ids,
            tweet_ids,
            adjacency,
            neighbors,
        }
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn tweet_ids(&self) -> &[String] {
        &self.tweet_ids
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_tweets(&self) -> usize {
        self.tweet_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.user_ids.len() + self.tweet_ids.len()
    }

    /// Undirected edge count.
    pub fn num_edges(&self) -> usize {
        self.adjacency.edges.len() / 2
    }

    pub fn adjacency(&self) -> &SparseAdjacency {
        &self.adjacency
    }

    pub fn tweet_node(&self, tweet_index: usize) -> usize {
        self.user_ids.len() + tweet_index
    }

    pub fn tweet_index(&self, tweet_id: &str) -> Option<usize> {
        self.tweet_ids
            .binary_search_by(|t| t.as_str().cmp(tweet_id))
            .ok()
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_ids
            .binary_search_by(|u| u.as_str().cmp(user_id))
            .ok()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, user_index: usize, tweet_index: usize) -> bool {
        self.neighbors[user_index]
            .binary_search(&self.tweet_node(tweet_index))
            .is_ok()
    }

    /// Every edge joins a user node to a tweet node.
    pub fn is_bipartite(&self) -> bool {
        let u = self.user_ids.len();
        self.adjacency
            .edges
            .iter()
            .all(|&(s, d, _)| (s < u) != (d < u))
    }
}

/// Builds `G₁`: one unit-weight edge per distinct `(user, tweet)` pair, with
/// node orderings sorted by id.
pub fn build_bipartite(interactions: &[Interaction]) -> BipartiteGraph {
    build_bipartite_from_pairs(
        interactions
            .iter()
            .map(|i| (i.user_id.as_str(), i.tweet_id.as_str())),
    )
}

pub fn build_bipartite_from_pairs<'a, I>(pairs: I) -> BipartiteGraph
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let distinct: BTreeSet<(&str, &str)> = pairs.into_iter().collect();
    let users: BTreeSet<&str> = distinct.iter().map(|p| p.0).collect();
    let tweets: BTreeSet<&str> = distinct.iter().map(|p| p.1).collect();
    let user_ids: Vec<String> = users.iter().map(|s| s.to_string()).collect();
    let tweet_ids: Vec<String> = tweets.iter().map(|s| s.to_string()).collect();
    let uidx: HashMap<&str, usize> = users.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let tidx: HashMap<&str, usize> = tweets.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let index_pairs: BTreeSet<(usize, usize)> =
        distinct.iter().map(|(u, t)| (uidx[u], tidx[t])).collect();
    BipartiteGraph::from_parts(user_ids, tweet_ids, &index_pairs)
}

/// Maps subgraph nodes back to the graph they were cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphMapping {
    /// Original unified node index for each subgraph node.
    pub nodes: Vec<usize>,
    /// Original user index per subgraph user.
    pub users: Vec<usize>,
    /// Original tweet index per subgraph tweet.
    pub tweets: Vec<usize>,
    /// Subgraph tweet index of each seed, in seed order.
    pub seeds: Vec<usize>,
}

/// Induced subgraph on every node within `k` hops of the seed tweets.
pub fn k_hop_subgraph(
    graph: &BipartiteGraph,
    seeds: &[usize],
    k: usize,
) -> Result<(BipartiteGraph, SubgraphMapping), GraphError> {
    let n = graph.num_nodes();
    let u = graph.num_users();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if s >= graph.num_tweets() {
            return Err(GraphError::InvalidSeed {
                seed: s,
                tweets: graph.num_tweets(),
            });
        }
        let node = u + s;
        if dist[node] == usize::MAX {
            dist[node] = 0;
            queue.push_back(node);
        }
    }
    while let Some(v) = queue.pop_front() {
        if dist[v] == k {
            continue;
        }
        for &w in &graph.neighbors[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }

    let users: Vec<usize> = (0..u).filter(|&i| dist[i] != usize::MAX).collect();
    let tweets: Vec<usize> = (0..graph.num_tweets())
        .filter(|&t| dist[u + t] != usize::MAX)
        .collect();
    let mut user_map = vec![usize::MAX; u];
    for (new, &old) in users.iter().enumerate() {
        user_map[old] = new;
    }
    let mut tweet_map = vec![usize::MAX; graph.num_tweets()];
    for (new, &old) in tweets.iter().enumerate() {
        tweet_map[old] = new;
    }
    let mut pairs = BTreeSet::new();
    for &old_u in &users {
        for &t_node in &graph.neighbors[old_u] {
            let nt = tweet_map[t_node - u];
            if nt != usize::MAX {
                pairs.insert((user_map[old_u], nt));
            }
        }
    }
    let sub = BipartiteGraph::from_parts(
        users.iter().map(|&i| graph.user_ids[i].clone()).collect(),
        tweets.iter().map(|&i| graph.tweet_ids[i].clone()).collect(),
        &pairs,
    );
    let nodes = users
        .iter()
        .copied()
        .chain(tweets.iter().map(|&t| u + t))
        .collect();
    let seed_pos = seeds.iter().map(|&s| tweet_map[s]).collect();
    Ok((
        sub,
        SubgraphMapping {
            nodes,
            users,
            tweets,
            seeds: seed_pos,
        },
    ))
}

/// Reply tree rooted at the source tweet; `parent[root]` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationTree<T> {
    pub nodes: Vec<T>,
    pub parent: Vec<Option<usize>>,
    pub root: usize,
}

impl<T> PropagationTree<T> {
    pub fn single(root: T) -> Self {
        Self {
            nodes: vec![root],
            parent: vec![None],
            root: 0,
        }
    }

    /// Builds and validates a tree from per-node parent pointers.
    pub fn new(nodes: Vec<T>, parent: Vec<Option<usize>>) -> Result<Self, GraphError> {
        let root = parent
            .iter()
            .position(Option::is_none)
            .ok_or_else(|| GraphError::MalformedTree("no root".into()))?;
        let tree = Self {
            nodes,
            parent,
            root,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.parent.len();
        if n == 0 || self.nodes.len() != n {
            return Err(GraphError::MalformedTree(format!(
                "{} payloads for {} parent pointers",
                self.nodes.len(),
                n
            )));
        }
        if self.root >= n || self.parent[self.root].is_some() {
            return Err(GraphError::MalformedTree("root has a parent".into()));
        }
        let roots = self.parent.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return Err(GraphError::MalformedTree(format!("{roots} roots")));
        }
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(GraphError::MalformedTree(format!(
                        "node {i} has parent {p} out of range"
                    )));
                }
            }
        }
        // Walking up from every node must reach the root within n steps.
        for start in 0..n {
            let mut v = start;
            let mut steps = 0;
            while let Some(p) = self.parent[v] {
                v = p;
                steps += 1;
                if steps > n {
                    return Err(GraphError::MalformedTree(format!(
                        "cycle through node {start}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(node))
            .map(|(i, _)| i)
    }

    pub fn depth(&self, node: usize) -> usize {
        let mut d = 0;
        let mut v = node;
        while let Some(p) = self.parent[v] {
            v = p;
            d += 1;
        }
        d
    }

    /// Appends a leaf under `parent` and returns its index.
    pub fn push_leaf(&mut self, parent: usize, payload: T) -> Result<usize, GraphError> {
        if parent >= self.len() {
            return Err(GraphError::MalformedTree(format!(
                "parent {parent} not in tree"
            )));
        }
        self.nodes.push(payload);
        self.parent.push(Some(parent));
        Ok(self.len() - 1)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> PropagationTree<U> {
        PropagationTree {
            nodes: self.nodes.iter().map(f).collect(),
            parent: self.parent.clone(),
            root: self.root,
        }
    }
}

/// Directed parent → child adjacency of a propagation tree.
pub fn tree_adjacency<T>(tree: &PropagationTree<T>) -> Result<SparseAdjacency, GraphError> {
    tree.validate()?;
    let edges = tree
        .parent
        .iter()
        .enumerate()
        .filter_map(|(child, p)| p.map(|p| (p, child, 1.0)))
        .collect();
    SparseAdjacency::new(tree.len(), edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inter(u: &str, t: &str, a: &str) -> Interaction {
        Interaction {
            user_id: u.into(),
            tweet_id: t.into(),
            action: a.into(),
        }
    }

    #[test]
    fn empty_bipartite() {
        let g = build_bipartite(&[]);
        assert_eq!((g.num_users(), g.num_tweets(), g.num_edges()), (0, 0, 0));
    }

    #[test]
    fn repeated_actions_deduplicated() {
        let g = build_bipartite(&[inter("u1", "t1", "post"), inter("u1", "t1", "retweet")]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn small_bipartite() {
        let g = build_bipartite(&[
            inter("u1", "t1", "post"),
            inter("u2", "t1", "comment"),
            inter("u2", "t2", "retweet"),
        ]);
        assert_eq!(g.num_users(), 2);
        assert_eq!(g.num_tweets(), 2);
        assert_eq!(g.num_edges(), 3);
        assert!(g.is_bipartite());
        assert!(g.adjacency().is_symmetric());
        assert_eq!(g.user_ids(), ["u1", "u2"]);
    }

    #[test]
    fn normalize_single_node() {
        let adj = SparseAdjacency::new(1, vec![]).unwrap();
        let norm = normalize_adjacency(&adj, true).unwrap();
        assert_eq!(norm.to_dense(), Matrix::from_rows(&[vec![1.0]]));
    }

    #[test]
    fn normalize_pair() {
        let adj = SparseAdjacency::undirected(2, &[(0, 1)]).unwrap();
        let norm = normalize_adjacency(&adj, true).unwrap();
        assert_eq!(norm.degree(), [2.0, 2.0]);
        for v in norm.to_dense().data() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn zero_degree_without_self_loops() {
        let adj = SparseAdjacency::undirected(3, &[(0, 1)]).unwrap();
        assert_eq!(
            normalize_adjacency(&adj, false).unwrap_err(),
            GraphError::DegenerateDegree(2)
        );
        assert_eq!(
            normalize_adjacency(&SparseAdjacency::new(0, vec![]).unwrap(), true).unwrap_err(),
            GraphError::Empty
        );
    }

    #[test]
    fn sparse_adjacency_validation() {
        assert!(matches!(
            SparseAdjacency::new(2, vec![(0, 2, 1.0)]),
            Err(GraphError::EdgeOutOfRange { .. })
        ));
        assert!(matches!(
            SparseAdjacency::new(2, vec![(0, 1, 1.0), (0, 1, 2.0)]),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            SparseAdjacency::new(2, vec![(0, 1, 0.0)]),
            Err(GraphError::BadWeight { .. })
        ));
    }

    fn chain() -> BipartiteGraph {
        // u1 – t1 – u2 – t2
        build_bipartite(&[
            inter("u1", "t1", "post"),
            inter("u2", "t1", "post"),
            inter("u2", "t2", "post"),
        ])
    }

    #[test]
    fn k_hop_zero_is_seeds_only() {
        let g = chain();
        let (sub, map) = k_hop_subgraph(&g, &[0], 0).unwrap();
        assert_eq!(sub.num_users(), 0);
        assert_eq!(sub.tweet_ids(), ["t1"]);
        assert_eq!(sub.num_edges(), 0);
        assert_eq!(map.seeds, [0]);
    }

    #[test]
    fn k_hop_one_on_chain() {
        let g = chain();
        let (sub, map) = k_hop_subgraph(&g, &[0], 1).unwrap();
        assert_eq!(sub.user_ids(), ["u1", "u2"]);
        assert_eq!(sub.tweet_ids(), ["t1"]);
        assert_eq!(sub.num_edges(), 2);
        assert_eq!(map.users, [0, 1]);
        assert_eq!(map.tweets, [0]);
        assert!(sub.is_bipartite());
    }

    #[test]
    fn k_hop_saturates_to_component() {
        let mut inters = vec![
            inter("u1", "t1", "post"),
            inter("u2", "t1", "post"),
            inter("u2", "t2", "post"),
        ];
        inters.push(inter("u9", "t9", "post"));
        let g = build_bipartite(&inters);
        let (sub, _) = k_hop_subgraph(&g, &[0], 10).unwrap();
        assert_eq!(sub.user_ids(), ["u1", "u2"]);
        assert_eq!(sub.tweet_ids(), ["t1", "t2"]);
        assert_eq!(sub.num_edges(), 3);
    }

    #[test]
    fn k_hop_invalid_seed() {
        assert_eq!(
            k_hop_subgraph(&chain(), &[5], 1).unwrap_err(),
            GraphError::InvalidSeed { seed: 5, tweets: 2 }
        );
    }

    #[test]
    fn tree_edges_are_top_down() {
        let single = PropagationTree::single(());
        assert!(tree_adjacency(&single).unwrap().edges().is_empty());

        let star = PropagationTree::new(vec![(); 3], vec![None, Some(0), Some(0)]).unwrap();
        assert_eq!(
            tree_adjacency(&star).unwrap().edges(),
            [(0, 1, 1.0), (0, 2, 1.0)]
        );

        let chain =
            PropagationTree::new(vec![(); 4], vec![None, Some(0), Some(1), Some(2)]).unwrap();
        assert_eq!(
            tree_adjacency(&chain).unwrap().edges(),
            [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]
        );
    }

    #[test]
    fn cyclic_tree_rejected() {
        let bad = PropagationTree {
            nodes: vec![(); 3],
            parent: vec![None, Some(2), Some(1)],
            root: 0,
        };
        assert!(matches!(
            tree_adjacency(&bad),
            Err(GraphError::MalformedTree(_))
        ));
        assert!(PropagationTree::new(vec![(); 2], vec![Some(1), Some(0)]).is_err());
        assert!(PropagationTree::new(vec![(); 2], vec![None, None]).is_err());
    }

    #[test]
    fn directed_tree_rows_only_touch_self_and_children() {
        let tree = PropagationTree::new(
            vec![(); 5],
            vec![None, Some(0), Some(0), Some(1), Some(1)],
        )
        .unwrap();
        let norm = normalize_adjacency(&tree_adjacency(&tree).unwrap(), true).unwrap();
        // root: self + 2 children; node 1: self + parent + 2 children
        assert_eq!(norm.degree(), [3.0, 4.0, 2.0, 2.0, 2.0]);
        for i in 0..tree.len() {
            let children: Vec<usize> = tree.children(i).collect();
            for (j, _) in norm.row(i) {
                assert!(j == i || children.contains(&j), "row {i} touches {j}");
            }
        }
    }

    #[test]
    fn spmm_transpose_matches_dense() {
        let tree =
            PropagationTree::new(vec![(); 4], vec![None, Some(0), Some(0), Some(2)]).unwrap();
        let norm = normalize_adjacency(&tree_adjacency(&tree).unwrap(), true).unwrap();
        let h = Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![-1.0, 0.5],
            vec![3.0, 0.0],
            vec![0.25, -2.0],
        ]);
        let dense = norm.to_dense();
        assert!(norm.spmm(&h).unwrap().max_abs_diff(&dense.matmul(&h).unwrap()) < 1e-15);
        assert!(
            norm.spmm_t(&h)
                .unwrap()
                .max_abs_diff(&dense.transpose().matmul(&h).unwrap())
                < 1e-15
        );
    }
}
