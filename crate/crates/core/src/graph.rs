//! Attributed-graph data model and subgraph extraction.
//!
//! Graphs are undirected, store each edge once, and carry fixed-length
//! categorical attribute vectors on nodes and edges. Self-loops are never
//! stored; message passing injects virtual self-loop edges on the fly.
//! All values are immutable after construction, so extraction operations
//! are pure and safe to call concurrently.

use crate::error::{Error, Result};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Graph domain; selects the attribute vocabulary and encoder input scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Molecule,
    Protein,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Molecule => write!(f, "molecule"),
            Domain::Protein => write!(f, "protein"),
        }
    }
}

/// Per-attribute-slot category counts, including the reserved mask and
/// self-loop categories appended after the real categories.
///
/// Layout conventions:
/// - node slots: `[real categories..., mask]` (mask is the last index);
/// - molecule edge slots: `[real..., self-loop, mask]`;
/// - protein edge slots: `[false, true, mask]` (self-loops are expressed as
///   a dedicated bit in the encoder input vector, not as a category).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub domain: Domain,
    /// Total category count per node attribute slot (mask included).
    pub node_slots: Vec<u32>,
    /// Total category count per edge attribute slot (reserved included).
    pub edge_slots: Vec<u32>,
}

impl Vocab {
    /// Mask category index for a node slot (always the last index).
    pub fn node_mask(&self, slot: usize) -> u32 {
        self.node_slots[slot] - 1
    }

    /// Mask category index for an edge slot (always the last index).
    pub fn edge_mask(&self, slot: usize) -> u32 {
        self.edge_slots[slot] - 1
    }

    /// Self-loop category index for a molecule edge slot (second to last).
    /// Protein self-loops are not categorical; see the encoder input map.
    pub fn edge_self_loop(&self, slot: usize) -> u32 {
        debug_assert_eq!(self.domain, Domain::Molecule);
        self.edge_slots[slot] - 2
    }

    pub fn describe(&self) -> String {
        format!(
            "{} domain, node slots {:?}, edge slots {:?}",
            self.domain, self.node_slots, self.edge_slots
        )
    }
}

/// Protein vocabulary: a single uniform node category (plus mask) and the
/// 7 binary relation slots (plus mask) from PPI edge annotations.
pub fn protein_vocab() -> Vocab {
    Vocab {
        domain: Domain::Protein,
        node_slots: vec![2],
        edge_slots: vec![3; 7],
    }
}

/// Number of protein edge relation slots.
pub const PROTEIN_EDGE_SLOTS: usize = 7;

/// An undirected edge with categorical attributes. Endpoints are normalized
/// so `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub attrs: Vec<u32>,
}

/// Undirected graph with categorical node/edge attribute vectors.
///
/// Invariants, checked at construction:
/// - every attribute index is below its slot's vocabulary size;
/// - no duplicate undirected edges, no stored self-loops;
/// - endpoints and the optional center are in range.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    num_nodes: usize,
    node_attrs: Vec<Vec<u32>>,
    edges: Vec<Edge>,
    /// Sorted adjacency: for each node, (neighbor, edge index) ascending by neighbor.
    adj: Vec<Vec<(usize, usize)>>,
    vocab: Vocab,
    center: Option<usize>,
    labels: Option<Vec<i8>>,
    species: Option<String>,
}

impl AttributedGraph {
    pub fn new(
        num_nodes: usize,
        node_attrs: Vec<Vec<u32>>,
        edges: Vec<(usize, usize, Vec<u32>)>,
        vocab: Vocab,
    ) -> Result<Self> {
        if node_attrs.len() != num_nodes {
            return Err(Error::invalid(format!(
                "expected {num_nodes} node attribute vectors, got {}",
                node_attrs.len()
            )));
        }
        for (i, attrs) in node_attrs.iter().enumerate() {
            if attrs.len() != vocab.node_slots.len() {
                return Err(Error::invalid(format!(
                    "node {i}: expected {} attribute slots, got {}",
                    vocab.node_slots.len(),
                    attrs.len()
                )));
            }
            for (s, &a) in attrs.iter().enumerate() {
                if a >= vocab.node_slots[s] {
                    return Err(Error::invalid(format!(
                        "node {i} slot {s}: category {a} >= vocab size {}",
                        vocab.node_slots[s]
                    )));
                }
            }
        }
        let mut normalized = Vec::with_capacity(edges.len());
        let mut seen = std::collections::BTreeSet::new();
        for (i, (u, v, attrs)) in edges.into_iter().enumerate() {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::invalid(format!(
                    "edge {i}: endpoint out of range ({u},{v}) with {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("edge {i}: self-loop at node {u}")));
            }
            if attrs.len() != vocab.edge_slots.len() {
                return Err(Error::invalid(format!(
                    "edge {i}: expected {} attribute slots, got {}",
                    vocab.edge_slots.len(),
                    attrs.len()
                )));
            }
            for (s, &a) in attrs.iter().enumerate() {
                if a >= vocab.edge_slots[s] {
                    return Err(Error::invalid(format!(
                        "edge {i} slot {s}: category {a} >= vocab size {}",
                        vocab.edge_slots[s]
                    )));
                }
            }
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            if !seen.insert((a, b)) {
                return Err(Error::invalid(format!("duplicate edge ({a},{b})")));
            }
            normalized.push(Edge { u: a, v: b, attrs });
        }
        let mut adj = vec![Vec::new(); num_nodes];
        for (idx, e) in normalized.iter().enumerate() {
            adj[e.u].push((e.v, idx));
            adj[e.v].push((e.u, idx));
        }
        for nbrs in &mut adj {
            nbrs.sort_unstable();
        }
        Ok(AttributedGraph {
            num_nodes,
            node_attrs,
            edges: normalized,
            adj,
            vocab,
            center: None,
            labels: None,
            species: None,
        })
    }

    pub fn with_center(mut self, center: usize) -> Result<Self> {
        if center >= self.num_nodes {
            return Err(Error::invalid(format!(
                "center {center} out of range ({} nodes)",
                self.num_nodes
            )));
        }
        self.center = Some(center);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<i8>) -> Result<Self> {
        if labels.iter().any(|&l| !(-1..=1).contains(&l)) {
            return Err(Error::invalid("labels must be in {-1, 0, 1}"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_species(mut self, species: impl Into<String>) -> Self {
        self.species = Some(species.into());
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_attrs(&self, v: usize) -> &[u32] {
        &self.node_attrs[v]
    }

    pub fn all_node_attrs(&self) -> &[Vec<u32>] {
        &self.node_attrs
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` with their edge indices, ascending by neighbor id.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn domain(&self) -> Domain {
        self.vocab.domain
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn labels(&self) -> Option<&[i8]> {
        self.labels.as_deref()
    }

    pub fn species(&self) -> Option<&str> {
        self.species.as_deref()
    }

    /// Unweighted shortest-path hop counts from `v`, stopping at `radius`.
    /// Nodes farther than `radius` (or unreachable) get `u32::MAX`.
    pub fn bfs_distances(&self, v: usize, radius: u32) -> Result<Vec<u32>> {
        if v >= self.num_nodes {
            return Err(Error::invalid(format!(
                "node {v} out of range ({} nodes)",
                self.num_nodes
            )));
        }
        let mut dist = vec![u32::MAX; self.num_nodes];
        dist[v] = 0;
        let mut queue = VecDeque::new();
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            if dist[u] >= radius {
                continue;
            }
            for &(w, _) in &self.adj[u] {
                if dist[w] == u32::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// All nodes and edges at most `k` hops from `v`.
    ///
    /// Node order is ascending (distance, node id); `v` is always included.
    pub fn khop_neighborhood(&self, v: usize, k: u32) -> Result<Subgraph> {
        let dist = self.bfs_distances(v, k)?;
        let nodes = order_by_distance(&dist, |d| d <= k);
        Ok(self.induced(nodes, Vec::new()))
    }

    /// The ring of nodes at distance in `[r1, r2]` from `v`, with anchors
    /// marking the overlap with the `k`-hop neighborhood.
    ///
    /// Requires `r1 < r2` and `r1 < k` (anchors must be able to exist).
    pub fn context_ring(&self, v: usize, r1: u32, r2: u32, k: u32) -> Result<Subgraph> {
        if r1 >= r2 {
            return Err(Error::invalid(format!(
                "context ring requires r1 < r2 (got r1={r1}, r2={r2})"
            )));
        }
        if r1 >= k {
            return Err(Error::invalid(format!(
                "context ring requires r1 < K so the anchor set is nonempty (got r1={r1}, K={k})"
            )));
        }
        let dist = self.bfs_distances(v, r2)?;
        let nodes = order_by_distance(&dist, |d| d >= r1 && d <= r2);
        let anchors = nodes
            .iter()
            .enumerate()
            .filter(|(_, &p)| dist[p] <= k)
            .map(|(local, _)| local)
            .collect();
        Ok(self.induced(nodes, anchors))
    }

    /// Breadth-first ego-network sample around `v`: per dequeued node, at most
    /// `max_expand` not-yet-selected neighbors are expanded (uniformly,
    /// without replacement), down to `depth` hops. The result is the induced
    /// subgraph on the selected nodes with `center` set to `v`'s local id.
    pub fn ego_sample(
        &self,
        v: usize,
        depth: u32,
        max_expand: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<AttributedGraph> {
        if v >= self.num_nodes {
            return Err(Error::invalid(format!(
                "node {v} out of range ({} nodes)",
                self.num_nodes
            )));
        }
        if depth < 1 || max_expand < 1 {
            return Err(Error::invalid("ego_sample requires depth >= 1 and max_expand >= 1"));
        }
        let mut selected = vec![false; self.num_nodes];
        let mut order = vec![v];
        selected[v] = true;
        let mut queue = VecDeque::new();
        queue.push_back((v, 0u32));
        while let Some((u, d)) = queue.pop_front() {
            if d >= depth {
                continue;
            }
            // Adjacency is already sorted ascending, so the candidate list
            // (and therefore the sample) depends only on the seed.
            let candidates: Vec<usize> = self
                .adj[u]
                .iter()
                .map(|&(w, _)| w)
                .filter(|&w| !selected[w])
                .collect();
            let picked: Vec<usize> = if candidates.len() <= max_expand {
                candidates
            } else {
                let mut idx: Vec<usize> =
                    sample(rng, candidates.len(), max_expand).into_iter().collect();
                idx.sort_unstable();
                idx.into_iter().map(|i| candidates[i]).collect()
            };
            for w in picked {
                selected[w] = true;
                order.push(w);
                queue.push_back((w, d + 1));
            }
        }
        let sub = self.induced(order, Vec::new());
        sub.materialize(self)?.with_center(0)
    }

    /// Relabel nodes with the bijection `perm` (`perm[old] = new`).
    pub fn permute(&self, perm: &[usize]) -> Result<AttributedGraph> {
        if perm.len() != self.num_nodes {
            return Err(Error::invalid(format!(
                "permutation length {} != {} nodes",
                perm.len(),
                self.num_nodes
            )));
        }
        let mut seen = vec![false; self.num_nodes];
        for &p in perm {
            if p >= self.num_nodes || seen[p] {
                return Err(Error::invalid("permutation is not a bijection on node ids"));
            }
            seen[p] = true;
        }
        let mut node_attrs = vec![Vec::new(); self.num_nodes];
        for (old, attrs) in self.node_attrs.iter().enumerate() {
            node_attrs[perm[old]] = attrs.clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| (perm[e.u], perm[e.v], e.attrs.clone()))
            .collect();
        let mut g = AttributedGraph::new(self.num_nodes, node_attrs, edges, self.vocab.clone())?;
        if let Some(c) = self.center {
            g = g.with_center(perm[c])?;
        }
        if let Some(l) = &self.labels {
            g = g.with_labels(l.clone())?;
        }
        if let Some(s) = &self.species {
            g = g.with_species(s.clone());
        }
        Ok(g)
    }

    /// Build a Subgraph over the given parent node list (order preserved),
    /// collecting every parent edge with both endpoints selected.
    fn induced(&self, nodes: Vec<usize>, anchors: Vec<usize>) -> Subgraph {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &p) in nodes.iter().enumerate() {
            local[p] = i;
        }
        let mut edges = Vec::new();
        for (idx, e) in self.edges.iter().enumerate() {
            if local[e.u] != usize::MAX && local[e.v] != usize::MAX {
                edges.push((local[e.u], local[e.v], idx));
            }
        }
        Subgraph { nodes, edges, anchors }
    }
}

fn order_by_distance(dist: &[u32], keep: impl Fn(u32) -> bool) -> Vec<usize> {
    let mut nodes: Vec<usize> = (0..dist.len())
        .filter(|&i| dist[i] != u32::MAX && keep(dist[i]))
        .collect();
    nodes.sort_by_key(|&i| (dist[i], i));
    nodes
}

/// A subgraph referencing its parent: an ordered duplicate-free parent-node
/// list, induced edges in local ids (with the parent edge index), and the
/// local ids of context anchor nodes (empty for plain neighborhoods).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub nodes: Vec<usize>,
    /// (local u, local v, parent edge index)
    pub edges: Vec<(usize, usize, usize)>,
    pub anchors: Vec<usize>,
}

impl Subgraph {
    pub fn local_id(&self, parent_id: usize) -> Option<usize> {
        self.nodes.iter().position(|&p| p == parent_id)
    }

    /// Copy attributes out of the parent to produce a standalone graph.
    pub fn materialize(&self, parent: &AttributedGraph) -> Result<AttributedGraph> {
        let node_attrs = self
            .nodes
            .iter()
            .map(|&p| parent.node_attrs(p).to_vec())
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|&(u, v, idx)| (u, v, parent.edges()[idx].attrs.clone()))
            .collect();
        AttributedGraph::new(self.nodes.len(), node_attrs, edges, parent.vocab().clone())
    }
}
