//! Offline pre-routing: k loop-free shortest routes (by hop count) per
//! end-system pair, computed with Yen's algorithm.
//!
//! Ties are broken lexicographically on the link sequence, so tables are
//! identical across runs and platforms. Only switches may appear as
//! intermediate nodes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LinkId, NetworkGraph, NodeId};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("node {0} is not an end system")]
    NotEndSystem(NodeId),
    #[error("source and destination are both {0}")]
    SameEndpoints(NodeId),
    #[error("no path from {0} to {1}")]
    NoPath(NodeId, NodeId),
    #[error("route table entry {src}->{dst} is not a valid route in this graph")]
    InvalidEntry { src: NodeId, dst: NodeId },
    #[error("route table: {0}")]
    Format(String),
}

/// A loop-free route as its ordered egress links.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route {
    pub links: Vec<LinkId>,
}

impl Route {
    /// Hop count.
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn nodes(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.links.len() + 1);
        if let Some(first) = self.links.first() {
            out.push(first.from());
        }
        out.extend(self.links.iter().map(|l| l.to()));
        out
    }

    /// Node ids joined by `>`, e.g. `3>0>1>5`.
    pub fn hop_list(&self) -> String {
        self.nodes()
            .iter()
            .map(|n| n.0.to_string())
            .collect::<Vec<_>>()
            .join(">")
    }

    fn sort_key(&self) -> (usize, &[LinkId]) {
        (self.links.len(), &self.links)
    }
}

/// Lexicographically smallest shortest path from `src` to `dst`, as link
/// positions, avoiding banned nodes and links (both by graph position).
fn shortest_lex(
    graph: &NetworkGraph,
    src: NodeId,
    dst: NodeId,
    banned_nodes: &[bool],
    banned_links: &[bool],
) -> Option<Vec<usize>> {
    let links = graph.links();
    let src_pos = graph.node_position(src)?;
    let dst_pos = graph.node_position(dst)?;
    let mut dist = vec![usize::MAX; graph.nodes().len()];
    dist[dst_pos] = 0;
    let mut queue = VecDeque::from([dst]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[graph.node_position(v)?];
        for &li in graph.in_links(v) {
            if banned_links[li] {
                continue;
            }
            let u = links[li].id.from();
            let up = graph.node_position(u)?;
            if banned_nodes[up] || dist[up] != usize::MAX {
                continue;
            }
            if u != src && !graph.is_switch(u) {
                continue;
            }
            dist[up] = dv + 1;
            if u != src {
                queue.push_back(u);
            }
        }
    }
    if dist[src_pos] == usize::MAX {
        return None;
    }
    let mut path = Vec::with_capacity(dist[src_pos]);
    let mut at = src;
    while at != dst {
        let d_at = dist[graph.node_position(at)?];
        let next = graph.out_links(at).iter().copied().find(|&li| {
            let w = links[li].id.to();
            let wp = graph.node_position(w).unwrap_or(usize::MAX);
            !banned_links[li] && wp != usize::MAX && !banned_nodes[wp] && dist[wp].checked_add(1) == Some(d_at)
        })?;
        path.push(next);
        at = links[next].id.to();
    }
    Some(path)
}

/// Up to `k` loop-free routes from `src` to `dst`, ascending by hop count,
/// ties ordered by link sequence.
pub fn k_shortest(graph: &NetworkGraph, src: NodeId, dst: NodeId, k: usize) -> Result<Vec<Route>, RoutingError> {
    for n in [src, dst] {
        if !graph.is_end_system(n) {
            return Err(RoutingError::NotEndSystem(n));
        }
    }
    if src == dst {
        return Err(RoutingError::SameEndpoints(src));
    }
    let n_nodes = graph.nodes().len();
    let n_links = graph.links().len();
    let links = graph.links();
    let to_route = |path: &[usize]| Route {
        links: path.iter().map(|&li| links[li].id).collect(),
    };

    let first = shortest_lex(graph, src, dst, &vec![false; n_nodes], &vec![false; n_links])
        .ok_or(RoutingError::NoPath(src, dst))?;
    let mut accepted: Vec<Vec<usize>> = vec![first];
    let mut candidates: BTreeSet<(usize, Route, Vec<usize>)> = BTreeSet::new();

    while accepted.len() < k {
        let prev = accepted.last().expect("nonempty").clone();
        for spur_idx in 0..prev.len() {
            let root = &prev[..spur_idx];
            let spur_node = links[prev[spur_idx]].id.from();

            let mut banned_links = vec![false; n_links];
            for p in &accepted {
                if p.len() > spur_idx && &p[..spur_idx] == root {
                    banned_links[p[spur_idx]] = true;
                }
            }
            let mut banned_nodes = vec![false; n_nodes];
            for &li in root {
                let u = links[li].id.from();
                banned_nodes[graph.node_position(u).expect("route node")] = true;
            }

            if let Some(spur) = shortest_lex(graph, spur_node, dst, &banned_nodes, &banned_links) {
                let mut total = root.to_vec();
                total.extend(spur);
                if !accepted.contains(&total) {
                    let route = to_route(&total);
                    candidates.insert((route.len(), route, total));
                }
            }
        }
        match candidates.pop_first() {
            Some((_, _, path)) => accepted.push(path),
            None => break,
        }
    }
    let mut routes: Vec<Route> = accepted.iter().map(|p| to_route(p)).collect();
    routes.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    routes.truncate(k);
    Ok(routes)
}

/// Pre-computed candidate routes per (source, destination) end-system pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateRouteTable {
    k: usize,
    routes: BTreeMap<(NodeId, NodeId), Vec<Route>>,
}

pub const TABLE_FORMAT: &str = "tsnac-routes";
pub const TABLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TableEntry {
    src: NodeId,
    dst: NodeId,
    routes: Vec<Route>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    k: usize,
    entries: Vec<TableEntry>,
}

impl CandidateRouteTable {
    /// Builds the table for `pairs`, or for every ordered pair of distinct
    /// end systems when `pairs` is `None`. Unreachable pairs map to an empty
    /// list.
    pub fn build(
        graph: &NetworkGraph,
        k: usize,
        pairs: Option<&[(NodeId, NodeId)]>,
    ) -> Result<Self, RoutingError> {
        let pairs: Vec<(NodeId, NodeId)> = match pairs {
            Some(p) => {
                let unique: BTreeSet<_> = p.iter().copied().collect();
                unique.into_iter().collect()
            }
            None => {
                let es: Vec<NodeId> = graph.end_systems().collect();
                es.iter()
                    .flat_map(|&s| es.iter().filter(move |&&d| d != s).map(move |&d| (s, d)))
                    .collect()
            }
        };
        let computed: Vec<((NodeId, NodeId), Vec<Route>)> = pairs
            .par_iter()
            .map(|&(s, d)| match k_shortest(graph, s, d, k) {
                Ok(r) => Ok(((s, d), r)),
                Err(RoutingError::NoPath(..)) => Ok(((s, d), Vec::new())),
                Err(e) => Err(e),
            })
            .collect::<Result<_, _>>()?;
        Ok(CandidateRouteTable {
            k,
            routes: computed.into_iter().collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Candidate routes for a pair; empty when the pair is unknown.
    pub fn get(&self, src: NodeId, dst: NodeId) -> &[Route] {
        self.routes.get(&(src, dst)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &Vec<Route>)> {
        self.routes.iter()
    }

    /// Checks that every stored route is a loop-free path of the graph
    /// between its pair, with switches only in between.
    pub fn validate(&self, graph: &NetworkGraph) -> Result<(), RoutingError> {
        for (&(src, dst), routes) in &self.routes {
            let mut seen = BTreeSet::new();
            for r in routes {
                let nodes = r.nodes();
                let ok = crate::model::is_simple_path(graph, &r.links, src, dst)
                    && nodes[1..nodes.len() - 1].iter().all(|&n| graph.is_switch(n))
                    && seen.insert(r.links.clone());
                if !ok {
                    return Err(RoutingError::InvalidEntry { src, dst });
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, RoutingError> {
        let file = TableFile {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            k: self.k,
            entries: self
                .routes
                .iter()
                .map(|(&(src, dst), routes)| TableEntry {
                    src,
                    dst,
                    routes: routes.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).map_err(|e| RoutingError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, RoutingError> {
        let file: TableFile =
            serde_json::from_str(text).map_err(|e| RoutingError::Format(e.to_string()))?;
        if file.format != TABLE_FORMAT || file.version != TABLE_VERSION {
            return Err(RoutingError::Format(format!(
                "unsupported table format {} v{}",
                file.format, file.version
            )));
        }
        Ok(CandidateRouteTable {
            k: file.k,
            routes: file
                .entries
                .into_iter()
                .map(|e| ((e.src, e.dst), e.routes))
                .collect(),
        })
    }
}
