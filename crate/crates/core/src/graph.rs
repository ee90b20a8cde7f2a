//! Bipartite user-item graph over explicit ratings, stored as CSR with both
//! directions materialized.
//!
//! Users occupy node indices `[0, U)` and items `[U, U + I)`. Every node has an
//! implicit self-loop that is not stored in the CSR arrays; [`BipartiteGraph::neighbors`]
//! appends it after the sorted stored neighbors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use thiserror::Error;

use crate::dataset::{Interaction, ItemId, UserId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("no positive or negative ratings left after dropping rating 3")]
    Empty,
    #[error("node {node} out of range (graph has {len} nodes)")]
    NodeOutOfRange { node: usize, len: usize },
    #[error("duplicate rating for user {user_id}, item {item_id}")]
    DuplicateEdge { user_id: UserId, item_id: ItemId },
    #[error("interaction references unknown {kind} {id}")]
    UnknownId { kind: &'static str, id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    /// 4 and 5 are positive, 1 and 2 negative, 3 carries no edge.
    pub fn from_rating(rating: u8) -> Option<Sign> {
        match rating {
            4 | 5 => Some(Sign::Positive),
            1 | 2 => Some(Sign::Negative),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
        }
    }
}

/// Id to node-index maps for both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIndex {
    users: BTreeMap<UserId, usize>,
    items: BTreeMap<ItemId, usize>,
    user_ids: Vec<UserId>,
    item_ids: Vec<ItemId>,
}

impl NodeIndex {
    /// Builds the index from sorted, duplicate-free id lists.
    pub fn new(user_ids: &[UserId], item_ids: &[ItemId]) -> Self {
        let user_ids: Vec<UserId> = user_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let item_ids: Vec<ItemId> = item_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let u = user_ids.len();
        Self {
            users: user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect(),
            items: item_ids.iter().enumerate().map(|(i, &id)| (id, u + i)).collect(),
            user_ids,
            item_ids,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users() + self.num_items()
    }

    pub fn user_node(&self, id: UserId) -> Option<usize> {
        self.users.get(&id).copied()
    }

    pub fn item_node(&self, id: ItemId) -> Option<usize> {
        self.items.get(&id).copied()
    }

    pub fn user_ids(&self) -> &[UserId] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.item_ids
    }

    pub fn is_user(&self, node: usize) -> bool {
        node < self.num_users()
    }

    /// Item id of an item node.
    pub fn item_id(&self, node: usize) -> Option<ItemId> {
        node.checked_sub(self.num_users())
            .and_then(|i| self.item_ids.get(i))
            .copied()
    }

    pub fn user_id(&self, node: usize) -> Option<UserId> {
        self.user_ids.get(node).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedEdge {
    pub user_node: usize,
    pub item_node: usize,
    pub sign: Sign,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    node_index: NodeIndex,
    edges: Vec<SignedEdge>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    signs: Vec<Sign>,
}

/// Graph over the users and items that appear in `interactions`.
pub fn build_graph(interactions: &[Interaction]) -> Result<BipartiteGraph, GraphError> {
    let users: Vec<UserId> = interactions.iter().map(|i| i.user_id).collect();
    let items: Vec<ItemId> = interactions.iter().map(|i| i.item_id).collect();
    build_graph_with_nodes(NodeIndex::new(&users, &items), interactions)
}

/// Graph over a fixed node set; nodes without retained ratings are isolated
/// and keep only their self-loop.
pub fn build_graph_with_nodes(
    node_index: NodeIndex,
    interactions: &[Interaction],
) -> Result<BipartiteGraph, GraphError> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    for it in interactions {
        let user_node = node_index.user_node(it.user_id).ok_or(GraphError::UnknownId {
            kind: "user",
            id: it.user_id,
        })?;
        let item_node = node_index.item_node(it.item_id).ok_or(GraphError::UnknownId {
            kind: "item",
            id: it.item_id,
        })?;
        if !seen.insert((user_node, item_node)) {
            return Err(GraphError::DuplicateEdge {
                user_id: it.user_id,
                item_id: it.item_id,
            });
        }
        if let Some(sign) = Sign::from_rating(it.rating) {
            edges.push(SignedEdge {
                user_node,
                item_node,
                sign,
                rating: it.rating,
            });
        }
    }
    if edges.is_empty() {
        return Err(GraphError::Empty);
    }
    Ok(BipartiteGraph::from_edges(node_index, edges))
}

impl BipartiteGraph {
    fn from_edges(node_index: NodeIndex, mut edges: Vec<SignedEdge>) -> Self {
        edges.sort_by_key(|e| (e.user_node, e.item_node));
        let n = node_index.num_nodes();
        let mut lists: Vec<Vec<(usize, Sign)>> = vec![Vec::new(); n];
        for e in &edges {
            lists[e.user_node].push((e.item_node, e.sign));
            lists[e.item_node].push((e.user_node, e.sign));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(2 * edges.len());
        let mut signs = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for mut list in lists {
            list.sort_by_key(|&(j, _)| j);
            for (j, s) in list {
                targets.push(j);
                signs.push(s);
            }
            offsets.push(targets.len());
        }
        Self {
            node_index,
            edges,
            offsets,
            targets,
            signs,
        }
    }

    pub fn node_index(&self) -> &NodeIndex {
        &self.node_index
    }

    pub fn num_nodes(&self) -> usize {
        self.node_index.num_nodes()
    }

    pub fn num_users(&self) -> usize {
        self.node_index.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.node_index.num_items()
    }

    /// Logical edges sorted by (user node, item node).
    pub fn edges(&self) -> &[SignedEdge] {
        &self.edges
    }

    /// Stored (non-self) neighbors of `node`, ascending. Unchecked.
    #[inline]
    pub fn stored_neighbors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn stored_signs(&self, node: usize) -> &[Sign] {
        &self.signs[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Non-self degree.
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// Neighbors ascending by index, then the self-loop (as `Positive`).
    pub fn neighbors(&self, node: usize) -> Result<Vec<(usize, Sign)>, GraphError> {
        if node >= self.num_nodes() {
            return Err(GraphError::NodeOutOfRange {
                node,
                len: self.num_nodes(),
            });
        }
        let mut out: Vec<(usize, Sign)> = self
            .stored_neighbors(node)
            .iter()
            .copied()
            .zip(self.stored_signs(node).iter().copied())
            .collect();
        out.push((node, Sign::Positive));
        Ok(out)
    }

    /// Same nodes, only the edges for which `keep` holds.
    pub fn filter_edges(&self, keep: impl Fn(&SignedEdge) -> bool) -> BipartiteGraph {
        let edges = self.edges.iter().copied().filter(|e| keep(e)).collect();
        Self::from_edges(self.node_index.clone(), edges)
    }

    /// Graph that propagates only over positive edges.
    pub fn positive_only(&self) -> BipartiteGraph {
        self.filter_edges(|e| e.sign == Sign::Positive)
    }

    /// Edge list as TSV: `user_id<TAB>item_id<TAB>sign<TAB>rating`.
    pub fn write_edge_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.edges {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                self.node_index.user_id(e.user_node).unwrap(),
                self.node_index.item_id(e.item_node).unwrap(),
                e.sign.as_str(),
                e.rating
            )?;
        }
        Ok(())
    }
}
