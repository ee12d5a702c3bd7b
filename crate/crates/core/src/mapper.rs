//! Mapper soft clustering: cubical cover over a 2D lens, per-cell clustering
//! and the 1-skeleton of the nerve of the refined pullback cover.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Cubical cover of a 2D lens image: a product of two families of closed
/// intervals of equal length with symmetric fractional overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub intervals: [Vec<Interval>; 2],
    /// Interval length (resolution) per dimension.
    pub lengths: [f64; 2],
    pub gains: [f64; 2],
}

pub type CellIndex = (usize, usize);

impl Cover {
    pub fn build(lens: &[[f64; 2]], n_intervals: (usize, usize), gains: (f64, f64)) -> Result<Self> {
        if lens.is_empty() {
            return Err(Error::EmptyInput("cover requires at least one lens value".into()));
        }
        let ns = [n_intervals.0, n_intervals.1];
        let gs = [gains.0, gains.1];
        let mut intervals: [Vec<Interval>; 2] = [Vec::new(), Vec::new()];
        let mut lengths = [0.0; 2];
        for d in 0..2 {
            let (n, g) = (ns[d], gs[d]);
            if n == 0 {
                return Err(Error::invalid("interval count must be at least 1"));
            }
            if !(0.0..1.0).contains(&g) {
                return Err(Error::invalid(format!("gain must lie in [0, 1), got {g}")));
            }
            let (lo, hi) = lens.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[d]), hi.max(p[d]))
            });
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid("lens values must be finite"));
            }
            let len = (hi - lo) / (n as f64 - (n as f64 - 1.0) * g);
            let stride = len * (1.0 - g);
            let mut list: Vec<Interval> = (0..n)
                .map(|k| {
                    let low = lo + k as f64 * stride;
                    Interval { low, high: low + len }
                })
                .collect();
            // pin the outer endpoints to the data range exactly
            list[0].low = lo;
            list[n - 1].high = hi;
            intervals[d] = list;
            lengths[d] = len;
        }
        Ok(Self { intervals, lengths, gains: gs })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.intervals[0].len(), self.intervals[1].len())
    }

    pub fn n_cells(&self) -> usize {
        self.intervals[0].len() * self.intervals[1].len()
    }

    /// Cells in row-major order `(i, j)`, `i` over dimension 0.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let (n0, n1) = self.shape();
        (0..n0).flat_map(move |i| (0..n1).map(move |j| (i, j)))
    }

    pub fn cell_contains(&self, cell: CellIndex, p: &[f64; 2]) -> bool {
        self.intervals[0][cell.0].contains(p[0]) && self.intervals[1][cell.1].contains(p[1])
    }

    /// All cells whose closed box contains `p`.
    pub fn cells_containing(&self, p: &[f64; 2]) -> Vec<CellIndex> {
        let rows: Vec<usize> = (0..self.intervals[0].len()).filter(|&i| self.intervals[0][i].contains(p[0])).collect();
        let cols: Vec<usize> = (0..self.intervals[1].len()).filter(|&j| self.intervals[1][j].contains(p[1])).collect();
        rows.iter().flat_map(|&i| cols.iter().map(move |&j| (i, j))).collect()
    }

    /// Preimage of every cell: ascending item ids per cell, cells in row-major order.
    pub fn pullback(&self, lens: &[[f64; 2]]) -> Vec<Vec<usize>> {
        let (_, n1) = self.shape();
        let mut cells = vec![Vec::new(); self.n_cells()];
        for (id, p) in lens.iter().enumerate() {
            for (i, j) in self.cells_containing(p) {
                cells[i * n1 + j].push(id);
            }
        }
        cells
    }
}

/// DBSCAN parameters. With `count_self` the point itself counts toward `min_pts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
    pub count_self: bool,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Self {
        Self { eps, min_pts, count_self: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("dbscan eps must be positive, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::invalid("dbscan min_pts must be at least 1"));
        }
        Ok(())
    }

    fn is_core(&self, neighborhood_with_self: usize) -> bool {
        let n = if self.count_self { neighborhood_with_self } else { neighborhood_with_self - 1 };
        n >= self.min_pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Noise,
    Cluster(usize),
}

/// DBSCAN over `n` items where `region(i, out)` appends every item within eps
/// of `i` (including `i` itself).
///
/// Clusters are numbered in ascending order of their smallest member.
pub fn dbscan_with(n: usize, params: &DbscanParams, mut region: impl FnMut(usize, &mut Vec<usize>)) -> Result<Vec<Label>> {
    params.validate()?;
    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut next = 0usize;
    let mut nb = Vec::new();
    let mut queue = Vec::new();
    for p in 0..n {
        if labels[p].is_some() {
            continue;
        }
        nb.clear();
        region(p, &mut nb);
        if !params.is_core(nb.len()) {
            labels[p] = Some(Label::Noise);
            continue;
        }
        let c = next;
        next += 1;
        labels[p] = Some(Label::Cluster(c));
        queue.clear();
        queue.extend(nb.iter().copied().filter(|&q| q != p));
        while let Some(q) = queue.pop() {
            match labels[q] {
                Some(Label::Cluster(_)) => continue,
                Some(Label::Noise) => {
                    // border point: reachable but never expanded before
                    labels[q] = Some(Label::Cluster(c));
                    continue;
                }
                None => {}
            }
            labels[q] = Some(Label::Cluster(c));
            nb.clear();
            region(q, &mut nb);
            if params.is_core(nb.len()) {
                queue.extend(nb.iter().copied().filter(|&r| !matches!(labels[r], Some(Label::Cluster(_)))));
            }
        }
    }
    let labels: Vec<Label> = labels.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect();
    Ok(renumber_by_smallest_member(labels, next))
}

fn renumber_by_smallest_member(labels: Vec<Label>, count: usize) -> Vec<Label> {
    let mut first = vec![usize::MAX; count];
    for (i, l) in labels.iter().enumerate() {
        if let Label::Cluster(c) = *l {
            first[c] = first[c].min(i);
        }
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.sort_by_key(|&c| first[c]);
    let mut remap = vec![0; count];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    labels
        .into_iter()
        .map(|l| match l {
            Label::Cluster(c) => Label::Cluster(remap[c]),
            Label::Noise => Label::Noise,
        })
        .collect()
}

/// Brute-force DBSCAN with an arbitrary metric.
pub fn dbscan<T>(items: &[T], metric: impl Fn(&T, &T) -> f64, params: &DbscanParams) -> Result<Vec<Label>> {
    dbscan_with(items.len(), params, |i, out| {
        out.extend((0..items.len()).filter(|&j| metric(&items[i], &items[j]) <= params.eps));
    })
}

/// Groups labels into member lists, one per cluster id.
pub fn clusters_from_labels(labels: &[Label]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        if let Label::Cluster(c) = *l {
            if out.len() <= c {
                out.resize(c + 1, Vec::new());
            }
            out[c].push(i);
        }
    }
    out
}

/// Splits a subset of the dataset (given by ascending global ids) into clusters.
/// Noise is omitted; returned clusters hold global ids.
pub trait Clusterer: Sync {
    fn cluster(&self, ids: &[usize]) -> Result<Vec<Vec<usize>>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedCluster {
    pub cell: CellIndex,
    /// Ascending ids into the input dataset.
    pub members: Vec<usize>,
}

/// Clusters the preimage of every cover cell. Cells are processed in parallel;
/// the output is in row-major cell order and, within a cell, by smallest member.
pub fn refined_pullback(lens: &[[f64; 2]], cover: &Cover, clusterer: &dyn Clusterer) -> Result<Vec<RefinedCluster>> {
    let cells: Vec<CellIndex> = cover.cells().collect();
    let preimages = cover.pullback(lens);
    let per_cell: Vec<Result<Vec<RefinedCluster>>> = cells
        .par_iter()
        .zip(preimages.par_iter())
        .map(|(&cell, ids)| {
            if ids.is_empty() {
                return Ok(Vec::new());
            }
            let mut clusters = clusterer.cluster(ids)?;
            for c in &mut clusters {
                c.sort_unstable();
            }
            clusters.retain(|c| !c.is_empty());
            clusters.sort_by_key(|c| c[0]);
            Ok(clusters.into_iter().map(|members| RefinedCluster { cell, members }).collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_cell {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperGraph {
    pub nodes: Vec<RefinedCluster>,
    /// Sorted `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
}

impl MapperGraph {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub fn connected_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut count = 0;
        for s in 0..self.nodes.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Writes the graph as JSON: `{"nodes": [{"id", "cell", "members"}], "edges": [[i, j]]}`.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct NodeOut<'a> {
            id: usize,
            cell: CellIndex,
            members: &'a [usize],
        }
        #[derive(Serialize)]
        struct GraphOut<'a> {
            nodes: Vec<NodeOut<'a>>,
            edges: &'a [(usize, usize)],
        }
        let out = GraphOut {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(id, n)| NodeOut { id, cell: n.cell, members: &n.members })
                .collect(),
            edges: &self.edges,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &out).map_err(|e| Error::corrupt(e.to_string()))?;
        f.flush()?;
        Ok(())
    }
}

/// 1-skeleton of the nerve: one node per cluster, an edge per intersecting pair.
pub fn nerve(clusters: Vec<RefinedCluster>) -> MapperGraph {
    let max_id = clusters.iter().flat_map(|c| c.members.iter().copied()).max();
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); max_id.map_or(0, |m| m + 1)];
    for (node, c) in clusters.iter().enumerate() {
        for &m in &c.members {
            owners[m].push(node);
        }
    }
    let mut edges = BTreeSet::new();
    for list in &owners {
        for a in 0..list.len() {
            for b in a + 1..list.len() {
                let (i, j) = (list[a].min(list[b]), list[a].max(list[b]));
                if i != j {
                    edges.insert((i, j));
                }
            }
        }
    }
    MapperGraph { nodes: clusters, edges: edges.into_iter().collect() }
}
