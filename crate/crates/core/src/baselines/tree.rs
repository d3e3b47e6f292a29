//! Clock-tree skew model on a `W x W` grid. Skew between two grid nodes is
//! estimated from their distance in the distribution tree: every unit of
//! wire contributes a bounded fraction of a hop delay as uncertainty.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{local_and_global, SystemParams};
use crate::time::Fs;

/// Weights are in quarter grid units, so H-tree Steiner points stay integral.
pub const QUARTER: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub width: usize,
    /// Grid nodes are `0..W*W` (`y*W + x`); Steiner nodes follow.
    pub node_count: usize,
    pub edges: Vec<(usize, usize, u64)>,
    pub uncertainty: f64,
    /// Delay of one grid unit of wire.
    pub hop_delay: Fs,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("expected {want} edges for a tree on {nodes} nodes, got {got}")]
    EdgeCount { nodes: usize, want: usize, got: usize },
    #[error("tree does not span node {0}")]
    NotSpanning(usize),
    #[error("width {0} must be a positive power of two")]
    Width(usize),
}

pub const DEFAULT_UNCERTAINTY: f64 = 0.05;
/// 40 ps per grid unit of wire.
pub const DEFAULT_HOP_DELAY: Fs = 40_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSkew {
    /// Tree distance of the witness pair in grid units.
    pub distance: f64,
    pub witness: (usize, usize),
    pub estimate_fs: f64,
}

impl TreeModel {
    pub fn new(width: usize, node_count: usize, edges: Vec<(usize, usize, u64)>) -> Result<TreeModel, TreeError> {
        let m = TreeModel { width, node_count, edges, uncertainty: DEFAULT_UNCERTAINTY, hop_delay: DEFAULT_HOP_DELAY };
        if m.edges.len() + 1 != node_count {
            return Err(TreeError::EdgeCount { nodes: node_count, want: node_count - 1, got: m.edges.len() });
        }
        let d = m.distances(0);
        if let Some(v) = d.iter().position(Option::is_none) {
            return Err(TreeError::NotSpanning(v));
        }
        Ok(m)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, u64)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(a, b, w) in &self.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        adj
    }

    /// Weighted distances from `src` in quarter units (paths in a tree are
    /// unique, so a traversal suffices).
    pub fn distances(&self, src: usize) -> Vec<Option<u64>> {
        let adj = self.adjacency();
        let mut d = vec![None; self.node_count];
        d[src] = Some(0);
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for &(v, w) in &adj[u] {
                if d[v].is_none() {
                    d[v] = Some(d[u].unwrap() + w);
                    q.push_back(v);
                }
            }
        }
        d
    }

    fn grid_pairs(&self) -> Vec<(usize, usize)> {
        let w = self.width;
        let mut p = Vec::new();
        for y in 0..w {
            for x in 0..w {
                let v = y * w + x;
                if x + 1 < w {
                    p.push((v, v + 1));
                }
                if y + 1 < w {
                    p.push((v, v + w));
                }
            }
        }
        p
    }
}

/// The grid-adjacent pair with the largest tree distance and its skew
/// estimate.
pub fn tree_local_skew(model: &TreeModel) -> TreeSkew {
    let mut best = (0u64, (0usize, 0usize));
    let n = model.width * model.width;
    for v in 0..n {
        let d = model.distances(v);
        for &(a, b) in model.grid_pairs().iter().filter(|p| p.0 == v) {
            let x = d[b].expect("tree spans the grid");
            if x > best.0 {
                best = (x, (a, b));
            }
        }
    }
    let distance = best.0 as f64 / QUARTER as f64;
    TreeSkew { distance, witness: best.1, estimate_fs: distance * model.uncertainty * model.hop_delay as f64 }
}

fn recursive_quadrants(x0: usize, y0: usize, w: usize, root: (usize, usize), width: usize, out: &mut Vec<(usize, usize, u64)>) {
    if w == 1 {
        return;
    }
    let h = w / 2;
    let id = |x: usize, y: usize| y * width + x;
    let mut corner = [[0usize; 2]; 2];
    for qy in 0..2 {
        for qx in 0..2 {
            recursive_quadrants(x0 + qx * h, y0 + qy * h, h, (1 - qx, 1 - qy), width, out);
            corner[qx][qy] = id(x0 + qx * h + (h - 1) * (1 - qx), y0 + qy * h + (h - 1) * (1 - qy));
        }
    }
    let (rx, ry) = root;
    let c = |x: usize, y: usize| corner[x][y];
    out.push((c(rx, ry), c(1 - rx, ry), QUARTER));
    out.push((c(rx, ry), c(rx, 1 - ry), QUARTER));
    out.push((c(1 - rx, ry), c(1 - rx, 1 - ry), QUARTER));
}

/// Spanning tree built from quadrant subtrees rooted at their corners
/// nearest the center and joined across the central square.
pub fn low_stretch_tree(width: usize) -> Result<TreeModel, TreeError> {
    if width == 0 || !width.is_power_of_two() {
        return Err(TreeError::Width(width));
    }
    let mut e = Vec::new();
    recursive_quadrants(0, 0, width, (0, 0), width, &mut e);
    TreeModel::new(width, width * width, e)
}

/// H-tree whose leaves are the grid nodes, with Steiner points at every
/// branching.
pub fn h_tree(width: usize) -> Result<TreeModel, TreeError> {
    if width == 0 || !width.is_power_of_two() {
        return Err(TreeError::Width(width));
    }
    let n = width * width;
    let mut edges = Vec::new();
    let mut next = n;
    // Coordinates in quarter units: grid node (x, y) sits at (4x, 4y).
    fn build(cx: i64, cy: i64, w: i64, width: usize, next: &mut usize, edges: &mut Vec<(usize, usize, u64)>) -> usize {
        if w == 1 {
            return (cy / 4) as usize * width + (cx / 4) as usize;
        }
        let me = *next;
        *next += 1;
        let arm = w as u64; // w/4 grid units
        for sx in [-1i64, 1] {
            let bar = *next;
            *next += 1;
            edges.push((me, bar, arm));
            for sy in [-1i64, 1] {
                let child = build(cx + sx * w, cy + sy * w, w / 2, width, next, edges);
                edges.push((bar, child, arm));
            }
        }
        me
    }
    let c = 2 * (width as i64 - 1);
    build(c, c, width as i64, width, &mut next, &mut edges);
    TreeModel::new(width, next, edges)
}

/// One row of the tree-versus-GCS comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossoverRow {
    pub width: usize,
    pub diameter: u32,
    pub tree_distance: f64,
    pub tree_skew_fs: f64,
    pub gcs_local_bound_fs: Fs,
    pub log_term: u32,
}

/// GCS bound on the `W x W` grid (diameter `2(W-1)`) against the
/// low-stretch tree estimate.
pub fn crossover(params: &SystemParams, widths: &[usize]) -> Result<Vec<CrossoverRow>, TreeError> {
    widths
        .iter()
        .map(|&w| {
            let t = low_stretch_tree(w)?;
            let s = tree_local_skew(&t);
            let diameter = (2 * (w - 1)).max(1) as u32;
            let b = local_and_global(params.rho_ppb(), params.mu_ppb(), params.kappa, diameter);
            Ok(CrossoverRow {
                width: w,
                diameter,
                tree_distance: s.distance,
                tree_skew_fs: s.estimate_fs,
                gcs_local_bound_fs: b.local_bound,
                log_term: b.log_term,
            })
        })
        .collect()
}

/// Smallest width from which the GCS bound stays below the tree estimate.
pub fn crossover_width(rows: &[CrossoverRow]) -> Option<usize> {
    let mut w = None;
    for r in rows.iter().rev() {
        if (r.gcs_local_bound_fs as f64) < r.tree_skew_fs {
            w = Some(r.width);
        } else {
            break;
        }
    }
    w
}
