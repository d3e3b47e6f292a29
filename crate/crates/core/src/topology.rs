//! Undirected network graphs. Every node carries an implicit self-loop: the
//! neighbor lists exclude it, and offset views add the zero self-offset.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("topology has no nodes")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    BadNode(usize, usize, usize),
    #[error("topology is not connected")]
    Disconnected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct Topology {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    diameter: u32,
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<TopologyRepr> for Topology {
    type Error = TopologyError;
    fn try_from(r: TopologyRepr) -> Result<Self, TopologyError> {
        Topology::from_edges(r.node_count, r.edges)
    }
}

impl From<Topology> for TopologyRepr {
    fn from(t: Topology) -> Self {
        TopologyRepr { node_count: t.node_count, edges: t.edges }
    }
}

impl Topology {
    /// Builds a graph from unordered pairs. Duplicates and explicit
    /// self-loops are dropped.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Topology, TopologyError> {
        if node_count == 0 {
            return Err(TopologyError::Empty);
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(TopologyError::BadNode(a, b, node_count));
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); node_count];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        let mut t = Topology { node_count, edges, adj, diameter: 0 };
        let mut diam = 0;
        for v in 0..node_count {
            let dist = t.bfs(v);
            for d in dist {
                match d {
                    None => return Err(TopologyError::Disconnected),
                    Some(d) => diam = diam.max(d),
                }
            }
        }
        t.diameter = diam;
        Ok(t)
    }

    pub fn line(n: usize) -> Topology {
        Topology::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("line is connected")
    }

    pub fn ring(n: usize) -> Topology {
        let extra = if n > 2 { Some((n - 1, 0)) } else { None };
        Topology::from_edges(n, (1..n).map(|i| (i - 1, i)).chain(extra)).expect("ring is connected")
    }

    /// `w` columns by `h` rows; node id is `y*w + x`.
    pub fn grid(w: usize, h: usize) -> Topology {
        let mut e = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = y * w + x;
                if x + 1 < w {
                    e.push((v, v + 1));
                }
                if y + 1 < h {
                    e.push((v, v + w));
                }
            }
        }
        Topology::from_edges(w * h, e).expect("grid is connected")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Longest shortest path, at least 1 so that single-node graphs still
    /// yield positive bounds.
    pub fn diameter(&self) -> u32 {
        self.diameter.max(1)
    }

    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        a == b || self.adj[a].binary_search(&b).is_ok()
    }

    /// Hop distances from `src`; `None` for unreachable nodes.
    pub fn bfs(&self, src: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.node_count];
        dist[src] = Some(0);
        let mut q = VecDeque::from([src]);
        while let Some(v) = q.pop_front() {
            let dv = dist[v].unwrap();
            for &w in &self.adj[v] {
                if dist[w].is_none() {
                    dist[w] = Some(dv + 1);
                    q.push_back(w);
                }
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameters() {
        assert_eq!(Topology::line(4).diameter(), 3);
        assert_eq!(Topology::line(7).diameter(), 6);
        assert_eq!(Topology::ring(6).diameter(), 3);
        assert_eq!(Topology::grid(3, 3).diameter(), 4);
        assert_eq!(Topology::line(1).diameter(), 1);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert_eq!(Topology::from_edges(0, []), Err(TopologyError::Empty));
        assert_eq!(Topology::from_edges(3, [(0, 1)]), Err(TopologyError::Disconnected));
        assert_eq!(Topology::from_edges(2, [(0, 2)]), Err(TopologyError::BadNode(0, 2, 2)));
    }

    #[test]
    fn self_loops_are_implicit() {
        let t = Topology::from_edges(2, [(0, 0), (0, 1), (1, 0)]).unwrap();
        assert_eq!(t.edges(), &[(0, 1)]);
        assert!(t.is_edge(1, 1));
        assert_eq!(t.neighbors(0), &[1]);
    }

    #[test]
    fn serde_round_trip() {
        let t = Topology::grid(3, 2);
        let s = serde_json::to_string(&t).unwrap();
        let back: Topology = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
