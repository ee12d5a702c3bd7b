//! Network of coarse color regions built with Mapper over the sampled sRGB grid.
//!
//! Pipeline: chroma/hue lens, cubical cover, HyAB DBSCAN per cell, nerve,
//! cyclic edges across the hue seam, redundant-node merging, HyAB edge
//! weights, and the shortest-path similarity matrix.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color_metric::{grid_channel_values, hyab, sample_srgb_grid, srgb_to_lab, ColorSet, Lab, Srgb};
use crate::error::{Error, Result};
use crate::mapper::{clusters_from_labels, dbscan_with, nerve, refined_pullback, Clusterer, Cover, DbscanParams, MapperGraph};
use crate::spatial::HashGrid;

pub const NETWORK_FORMAT_VERSION: u32 = 1;
/// Decimal places kept for similarity entries, in memory and on disk.
pub const SIMILARITY_DECIMALS: i32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Hue offset in radians.
    pub xi: f64,
    /// Interval counts along (chroma, hue).
    pub intervals: (usize, usize),
    /// Fractional overlap along (chroma, hue).
    pub gains: (f64, f64),
    pub dbscan: DbscanParams,
    /// Nodes sharing more than this fraction of the smaller member set are merge candidates.
    pub merge_threshold: f64,
    pub grid_step: u32,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            xi: PI / 8.0,
            intervals: (3, 8),
            gains: (0.10, 0.25),
            dbscan: DbscanParams::new(7.0, 6),
            merge_threshold: 0.95,
            grid_step: 5,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.merge_threshold > 0.0 && self.merge_threshold <= 1.0) {
            return Err(Error::invalid(format!("merge threshold must lie in (0, 1], got {}", self.merge_threshold)));
        }
        if !self.xi.is_finite() {
            return Err(Error::invalid("hue offset must be finite"));
        }
        grid_channel_values(self.grid_step)?;
        Ok(())
    }
}

/// Lens of a Lab color: `(chroma, hue)` with the hue measured by the
/// full-quadrant angle of `(a*, b*)`, shifted by `xi` and wrapped into `[0, 2π)`.
/// The gray axis takes angle 0.
pub fn chroma_hue_lens(c: &Lab, xi: f64) -> [f64; 2] {
    let chroma = c.a.hypot(c.b);
    let angle = if c.a == 0.0 && c.b == 0.0 { 0.0 } else { c.b.atan2(c.a).rem_euclid(TAU) };
    [chroma, (angle + xi).rem_euclid(TAU)]
}

/// Lab of the channel-wise arithmetic mean of the given sRGB colors.
pub fn mean_color(colors: impl IntoIterator<Item = Srgb>) -> Lab {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for c in colors {
        sum[0] += u64::from(c.r);
        sum[1] += u64::from(c.g);
        sum[2] += u64::from(c.b);
        n += 1;
    }
    if n == 0 {
        return Lab::default();
    }
    let mean = sum.map(|s| s as f64 / n as f64);
    crate::color_metric::srgb_f64_to_lab(mean)
}

/// DBSCAN under HyAB on Lab points, with a hash grid of cell `eps` for the
/// region queries. HyAB dominates every per-axis difference, so the grid
/// never misses a neighbor.
pub struct HyabDbscan<'a> {
    pub points: &'a [[f64; 3]],
    pub params: DbscanParams,
}

impl Clusterer for HyabDbscan<'_> {
    fn cluster(&self, ids: &[usize]) -> Result<Vec<Vec<usize>>> {
        let grid = HashGrid::from_subset(self.points, ids, self.params.eps);
        let pts = self.points;
        let dist = |a: &[f64; 3], b: &[f64; 3]| (a[0] - b[0]).abs() + (a[1] - b[1]).hypot(a[2] - b[2]);
        // map global ids to local positions
        let local: std::collections::HashMap<usize, usize> = ids.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        let mut scratch = Vec::new();
        let labels = dbscan_with(ids.len(), &self.params, |k, out| {
            let q = &pts[ids[k]];
            scratch.clear();
            grid.within(q, self.params.eps, |j| dist(q, &pts[j]), &mut scratch);
            out.extend(scratch.iter().map(|g| local[g]));
        })?;
        Ok(clusters_from_labels(&labels)
            .into_iter()
            .map(|c| c.into_iter().map(|k| ids[k]).collect())
            .collect())
    }
}

/// Adds an edge between every node of the first hue interval and every node
/// of the last hue interval that share a chroma interval.
pub fn augment_cyclic_edges(graph: &mut MapperGraph, cover: &Cover) {
    let (_, n_hue) = cover.shape();
    if n_hue < 2 {
        return;
    }
    let mut edges: BTreeSet<(usize, usize)> = graph.edges.iter().copied().collect();
    for (u, nu) in graph.nodes.iter().enumerate() {
        if nu.cell.1 != 0 {
            continue;
        }
        for (v, nv) in graph.nodes.iter().enumerate() {
            if nv.cell.1 == n_hue - 1 && nv.cell.0 == nu.cell.0 && u != v {
                edges.insert((u.min(v), u.max(v)));
            }
        }
    }
    graph.edges = edges.into_iter().collect();
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn sorted_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
            j += 1;
        }
    }
    out
}

/// Fraction of the smaller member set shared with the other node.
pub fn member_overlap(a: &[usize], b: &[usize]) -> f64 {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return 0.0;
    }
    intersection_size(a, b) as f64 / smaller as f64
}

/// Merges node pairs whose member overlap exceeds `threshold` and whose mean
/// colors are within `eps` (HyAB). The surviving node is the lower index; its
/// member set becomes the union and the other node's edges move onto it.
/// Repeats until no pair qualifies, for at most as many passes as nodes.
pub fn merge_redundant_nodes(graph: &mut MapperGraph, threshold: f64, eps: f64, colors: &[Srgb]) {
    let mean_of = |members: &[usize]| mean_color(members.iter().map(|&m| colors[m]));
    let max_passes = graph.nodes.len().max(1);
    for _ in 0..max_passes {
        let n = graph.nodes.len();
        let means: Vec<Lab> = graph.nodes.iter().map(|c| mean_of(&c.members)).collect();
        // candidate pairs: any two nodes sharing a member
        let mut owners: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
        for (k, node) in graph.nodes.iter().enumerate() {
            for &m in &node.members {
                owners.entry(m).or_default().push(k);
            }
        }
        let mut candidates = BTreeSet::new();
        for list in owners.values() {
            for a in 0..list.len() {
                for b in a + 1..list.len() {
                    candidates.insert((list[a].min(list[b]), list[a].max(list[b])));
                }
            }
        }
        let mut target: Vec<usize> = (0..n).collect();
        let mut touched = vec![false; n];
        let mut merged_any = false;
        for &(i, j) in &candidates {
            if touched[i] || touched[j] {
                continue;
            }
            let overlap = member_overlap(&graph.nodes[i].members, &graph.nodes[j].members);
            if overlap > threshold && hyab(&means[i], &means[j]) <= eps {
                target[j] = i;
                touched[i] = true;
                touched[j] = true;
                merged_any = true;
            }
        }
        if !merged_any {
            return;
        }
        // compact: surviving nodes keep their relative order
        let mut new_index = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for k in 0..n {
            if target[k] == k {
                new_index[k] = nodes.len();
                nodes.push(graph.nodes[k].clone());
            }
        }
        for k in 0..n {
            if target[k] != k {
                let t = new_index[target[k]];
                nodes[t].members = sorted_union(&nodes[t].members, &graph.nodes[k].members);
                new_index[k] = t;
            }
        }
        let mut edges = BTreeSet::new();
        for &(a, b) in &graph.edges {
            let (a, b) = (new_index[a], new_index[b]);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        graph.nodes = nodes;
        graph.edges = edges.into_iter().collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeapItem {
    dist_bits: u64,
    node: usize,
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on non-negative distance; bit order equals numeric order for non-negative f64
        other.dist_bits.cmp(&self.dist_bits).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path lengths; unreachable nodes get `+inf`.
pub fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem { dist_bits: 0f64.to_bits(), node: source });
    while let Some(HeapItem { dist_bits, node }) = heap.pop() {
        let d = f64::from_bits(dist_bits);
        if d > dist[node] {
            continue;
        }
        for &(v, w) in &adj[node] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem { dist_bits: nd.to_bits(), node: v });
            }
        }
    }
    dist
}

fn round_decimals(v: f64, decimals: i32) -> f64 {
    let s = format!("{:.*}", decimals as usize, v);
    s.parse().expect("formatted float parses")
}

/// Similarity matrix `δ = 1 / (1 + l)` from all-pairs shortest path lengths
/// over the weighted edges, row-major `n × n`. Unreachable pairs get 0.
pub fn similarity_matrix(n: usize, edges: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, w) in edges {
        if w < 0.0 || w.is_nan() {
            return Err(Error::NegativeWeight { from: i, to: j, weight: w });
        }
        adj[i].push((j, w));
        adj[j].push((i, w));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            dijkstra(&adj, s)
                .into_iter()
                .map(|l| if l.is_finite() { round_decimals(1.0 / (1.0 + l), SIMILARITY_DECIMALS) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut delta: Vec<f64> = rows.into_iter().flatten().collect();
    // shortest paths are symmetric up to summation order; mirror the upper triangle
    for i in 0..n {
        for j in 0..i {
            delta[i * n + j] = delta[j * n + i];
        }
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorNode {
    pub id: usize,
    /// Member colors in ascending packed order.
    pub members: Vec<Srgb>,
    pub mean: Lab,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorNetwork {
    pub params: NetworkParams,
    pub nodes: Vec<ColorNode>,
    /// `(i, j, weight)` with `i < j`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
    /// Row-major `n_c × n_c`.
    pub similarity: Vec<f64>,
    membership: Vec<Vec<usize>>,
}

impl ColorNetwork {
    pub fn build(params: &NetworkParams) -> Result<Self> {
        let colors = sample_srgb_grid(params.grid_step)?;
        Self::build_from(&colors, params)
    }

    /// Builds from an arbitrary color set. Membership lookups snap to the
    /// `params.grid_step` grid, so lookups are only meaningful for grid-built networks.
    pub fn build_from(colors: &ColorSet, params: &NetworkParams) -> Result<Self> {
        params.validate()?;
        if colors.is_empty() {
            return Err(Error::EmptyInput("color set is empty".into()));
        }
        let lens: Vec<[f64; 2]> = colors.lab().iter().map(|c| chroma_hue_lens(c, params.xi)).collect();
        let cover = Cover::build(&lens, params.intervals, params.gains)?;
        let points: Vec<[f64; 3]> = colors.lab().iter().map(|c| [c.l, c.a, c.b]).collect();
        let clusterer = HyabDbscan { points: &points, params: params.dbscan };
        let refined = refined_pullback(&lens, &cover, &clusterer)?;
        let mut graph = nerve(refined);
        augment_cyclic_edges(&mut graph, &cover);
        merge_redundant_nodes(&mut graph, params.merge_threshold, params.dbscan.eps, colors.rgb());
        Self::from_graph(&graph, colors.rgb(), params.clone())
    }

    /// Finishes a network from an already merged Mapper graph over `colors`.
    pub fn from_graph(graph: &MapperGraph, colors: &[Srgb], params: NetworkParams) -> Result<Self> {
        let nodes: Vec<ColorNode> = graph
            .nodes
            .iter()
            .enumerate()
            .map(|(id, c)| {
                let mut members: Vec<Srgb> = c.members.iter().map(|&m| colors[m]).collect();
                members.sort_by_key(|c| c.packed());
                let mean = mean_color(members.iter().copied());
                ColorNode { id, members, mean }
            })
            .collect();
        let edges: Vec<(usize, usize, f64)> =
            graph.edges.iter().map(|&(i, j)| (i, j, hyab(&nodes[i].mean, &nodes[j].mean))).collect();
        let similarity = similarity_matrix(nodes.len(), &edges)?;
        let membership = build_membership(&nodes, params.grid_step)?;
        Ok(Self { params, nodes, edges, similarity, membership })
    }

    pub fn n_c(&self) -> usize {
        self.nodes.len()
    }

    pub fn delta(&self, i: usize, j: usize) -> f64 {
        self.similarity[i * self.nodes.len() + j]
    }

    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        (0..n).all(|j| n == 0 || self.delta(0, j) > 0.0)
    }

    /// Ids of every region containing `c` (after snapping to the grid). Colors
    /// outside every region map to the region with the nearest mean color.
    pub fn color_regions_of(&self, c: Srgb) -> Vec<usize> {
        let list = &self.membership[grid_position(snap_to_grid(c, self.params.grid_step), self.params.grid_step)];
        if !list.is_empty() {
            return list.clone();
        }
        vec![self.nearest_region(c)]
    }

    pub fn nearest_region(&self, c: Srgb) -> usize {
        let lab = srgb_to_lab(c);
        let mut best = (f64::INFINITY, 0);
        for node in &self.nodes {
            let d = hyab(&lab, &node.mean);
            if d < best.0 {
                best = (d, node.id);
            }
        }
        best.1
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let file = NetworkFile {
            format: "color-network".into(),
            version: NETWORK_FORMAT_VERSION,
            params: self.params.clone(),
            grid_step: self.params.grid_step,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    mean: [n.mean.l, n.mean.a, n.mean.b],
                    members: n.members.iter().map(|c| c.packed()).collect(),
                })
                .collect(),
            edges: self.edges.clone(),
            similarity: (0..self.nodes.len())
                .map(|i| {
                    self.similarity[i * self.nodes.len()..(i + 1) * self.nodes.len()]
                        .iter()
                        .map(|v| format!("{:.*}", SIMILARITY_DECIMALS as usize, v))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("network serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| Error::corrupt(format!("color network: {e}")))?;
        if file.version != NETWORK_FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: file.version, expected: NETWORK_FORMAT_VERSION });
        }
        let n = file.nodes.len();
        let nodes: Vec<ColorNode> = file
            .nodes
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                if r.id != k {
                    return Err(Error::corrupt(format!("node {k} carries id {}", r.id)));
                }
                if r.members.is_empty() {
                    return Err(Error::corrupt(format!("node {k} has no members")));
                }
                Ok(ColorNode {
                    id: r.id,
                    members: r.members.into_iter().map(Srgb::from_packed).collect(),
                    mean: Lab::new(r.mean[0], r.mean[1], r.mean[2]),
                })
            })
            .collect::<Result<_>>()?;
        if file.similarity.len() != n {
            return Err(Error::corrupt("similarity row count differs from node count"));
        }
        let mut similarity = Vec::with_capacity(n * n);
        for row in &file.similarity {
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::corrupt(format!("similarity entry {t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(Error::corrupt("similarity row length differs from node count"));
            }
            similarity.extend(vals);
        }
        for &(i, j, _) in &file.edges {
            if i >= n || j >= n {
                return Err(Error::corrupt(format!("edge ({i}, {j}) references a missing node")));
            }
        }
        let membership = build_membership(&nodes, file.grid_step)?;
        Ok(Self { params: file.params, nodes, edges: file.edges, similarity, membership })
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    mean: [f64; 3],
    members: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    params: NetworkParams,
    grid_step: u32,
    nodes: Vec<NodeRecord>,
    edges: Vec<(usize, usize, f64)>,
    similarity: Vec<String>,
}

/// Rounds each channel to the nearest grid value.
pub fn snap_to_grid(c: Srgb, step: u32) -> Srgb {
    let snap = |v: u8| {
        let k = ((f64::from(v) / step as f64).round() as u32 * step).min(255);
        k as u8
    };
    Srgb::new(snap(c.r), snap(c.g), snap(c.b))
}

fn grid_position(c: Srgb, step: u32) -> usize {
    let per = (255 / step + 1) as usize;
    let idx = |v: u8| v as usize / step as usize;
    (idx(c.r) * per + idx(c.g)) * per + idx(c.b)
}

fn build_membership(nodes: &[ColorNode], step: u32) -> Result<Vec<Vec<usize>>> {
    grid_channel_values(step)?;
    let per = (255 / step + 1) as usize;
    let mut membership = vec![Vec::new(); per * per * per];
    for node in nodes {
        for &c in &node.members {
            if snap_to_grid(c, step) != c {
                return Err(Error::corrupt(format!("member color {c:?} is not on the step-{step} grid")));
            }
            let list = &mut membership[grid_position(c, step)];
            if list.last() != Some(&node.id) {
                list.push(node.id);
            }
        }
    }
    Ok(membership)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::RefinedCluster;

    #[test]
    fn lens_examples() {
        let xi = PI / 8.0;
        assert_eq!(chroma_hue_lens(&Lab::new(50.0, 0.0, 0.0), xi), [0.0, xi]);
        assert_eq!(chroma_hue_lens(&Lab::new(50.0, 1.0, 0.0), xi), [1.0, xi]);
        let p = chroma_hue_lens(&Lab::new(50.0, 0.0, 2.0), xi);
        assert!((p[0] - 2.0).abs() < 1e-12 && (p[1] - (xi + PI / 2.0)).abs() < 1e-12);
        // opposite hues are distinguished and the seam wraps
        let q = chroma_hue_lens(&Lab::new(50.0, 1.0, -1e-3), xi);
        assert!(q[1] < xi && q[1] >= 0.0);
        let r = chroma_hue_lens(&Lab::new(50.0, -1.0, 0.0), xi);
        assert!((r[1] - (PI + xi)).abs() < 1e-12);
    }

    fn node(cell: (usize, usize), members: &[usize]) -> RefinedCluster {
        RefinedCluster { cell, members: members.to_vec() }
    }

    fn cover_3x4() -> Cover {
        let pts: Vec<[f64; 2]> = vec![[0.0, 0.0], [3.0, 4.0]];
        Cover::build(&pts, (3, 4), (0.0, 0.0)).unwrap()
    }

    #[test]
    fn cyclic_edges() {
        let cover = cover_3x4();
        let mut g = nerve(vec![node((0, 0), &[0]), node((0, 1), &[1])]);
        let before = g.clone();
        augment_cyclic_edges(&mut g, &cover);
        assert_eq!(g, before, "nothing in the last hue interval");

        let mut g = nerve(vec![node((1, 0), &[0]), node((1, 3), &[1]), node((2, 3), &[2])]);
        augment_cyclic_edges(&mut g, &cover);
        assert_eq!(g.edges, vec![(0, 1)]);
        augment_cyclic_edges(&mut g, &cover);
        assert_eq!(g.edges, vec![(0, 1)], "idempotent");
    }

    #[test]
    fn merge_rules() {
        let colors: Vec<Srgb> = (0..100).map(|k| Srgb::new(100 + (k % 10) as u8, 50, 50)).collect();
        let all: Vec<usize> = (0..100).collect();
        // identical members, same mean
        let mut g = nerve(vec![node((0, 0), &all), node((0, 1), &all)]);
        merge_redundant_nodes(&mut g, 0.95, 7.0, &colors);
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());

        // 96 of 100 shared, but the extra members drag the mean far away
        let mut far = colors.clone();
        far.extend((0..4).map(|_| Srgb::new(255, 255, 0)));
        far.extend((0..400).map(|_| Srgb::new(0, 0, 255)));
        let a: Vec<usize> = (0..100).collect();
        let mut b: Vec<usize> = (4..100).collect();
        b.extend(104..504);
        let b_small: Vec<usize> = (4..100).chain(100..104).collect();
        let ov = member_overlap(&a, &b_small);
        assert!(ov > 0.95 && ov < 1.0);
        let mut g = nerve(vec![node((0, 0), &a), node((0, 1), &b)]);
        assert!(member_overlap(&a, &b) > 0.95);
        assert!(hyab(&mean_color(a.iter().map(|&m| far[m])), &mean_color(b.iter().map(|&m| far[m]))) > 7.0);
        merge_redundant_nodes(&mut g, 0.95, 7.0, &far);
        assert_eq!(g.nodes.len(), 2, "mean colors are not neighbors");

        let mut g = nerve(vec![node((0, 0), &[0, 1]), node((0, 1), &[2, 3])]);
        let before = g.clone();
        merge_redundant_nodes(&mut g, 0.95, 7.0, &colors);
        assert_eq!(g, before);
    }

    #[test]
    fn merge_reattaches_edges() {
        let colors: Vec<Srgb> = (0..10).map(|_| Srgb::new(10, 10, 10)).collect();
        // nodes 0 and 1 identical; node 2 touches 1 only
        let mut g = nerve(vec![node((0, 0), &[0, 1, 2, 3]), node((0, 1), &[0, 1, 2, 3, 4]), node((0, 2), &[4, 5])]);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        merge_redundant_nodes(&mut g, 0.95, 7.0, &colors);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[0].members, vec![0, 1, 2, 3, 4]);
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn similarity_examples() {
        let d = similarity_matrix(2, &[(0, 1, 4.0)]).unwrap();
        assert_eq!(d, vec![1.0, 0.2, 0.2, 1.0]);
        let d = similarity_matrix(3, &[(0, 1, 2.0), (1, 2, 3.0)]).unwrap();
        assert!((d[2] - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(d[6], d[2]);
        let d = similarity_matrix(3, &[(0, 1, 2.0)]).unwrap();
        assert_eq!(d[2], 0.0, "unreachable");
        assert!(similarity_matrix(2, &[(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn removing_an_edge_never_increases_similarity() {
        let edges = vec![(0, 1, 2.0), (1, 2, 3.0), (0, 2, 4.0), (2, 3, 1.0), (1, 3, 7.0)];
        let full = similarity_matrix(4, &edges).unwrap();
        for skip in 0..edges.len() {
            let reduced: Vec<_> = edges.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, e)| *e).collect();
            let d = similarity_matrix(4, &reduced).unwrap();
            assert!(d.iter().zip(&full).all(|(a, b)| a <= b));
        }
    }

    fn toy_colors() -> ColorSet {
        ColorSet::new(vec![
            Srgb::new(200, 20, 20),
            Srgb::new(205, 20, 20),
            Srgb::new(200, 25, 20),
            Srgb::new(20, 200, 20),
            Srgb::new(20, 205, 20),
            Srgb::new(25, 200, 20),
        ])
        .unwrap()
    }

    #[test]
    fn toy_two_hue_groups() {
        let params = NetworkParams {
            intervals: (1, 2),
            gains: (0.0, 0.0),
            dbscan: DbscanParams::new(10.0, 2),
            ..NetworkParams::default()
        };
        let net = ColorNetwork::build_from(&toy_colors(), &params).unwrap();
        assert_eq!(net.n_c(), 2);
        assert!(net.edges.len() <= 1);
    }

    #[test]
    fn single_node_network() {
        let params = NetworkParams {
            intervals: (1, 1),
            gains: (0.0, 0.0),
            dbscan: DbscanParams::new(1000.0, 1),
            ..NetworkParams::default()
        };
        let net = ColorNetwork::build_from(&toy_colors(), &params).unwrap();
        assert_eq!(net.n_c(), 1);
        assert_eq!(net.similarity, vec![1.0]);
    }

    #[test]
    fn region_lookup_and_fallback() {
        let params = NetworkParams {
            intervals: (1, 1),
            gains: (0.0, 0.0),
            dbscan: DbscanParams::new(10.0, 2),
            grid_step: 5,
            ..NetworkParams::default()
        };
        let mut rgb = toy_colors().rgb().to_vec();
        rgb.push(Srgb::new(0, 0, 255)); // isolated -> noise
        let net = ColorNetwork::build_from(&ColorSet::new(rgb).unwrap(), &params).unwrap();
        assert_eq!(net.n_c(), 2);
        assert_eq!(net.color_regions_of(Srgb::new(200, 20, 20)), vec![0]);
        // off-grid color snaps onto the grid
        assert_eq!(net.color_regions_of(Srgb::new(201, 21, 19)), vec![0]);
        // the noise color falls back to the nearest mean
        let blue = srgb_to_lab(Srgb::new(0, 0, 255));
        let want = if hyab(&blue, &net.nodes[0].mean) <= hyab(&blue, &net.nodes[1].mean) { 0 } else { 1 };
        assert_eq!(net.color_regions_of(Srgb::new(0, 0, 255)), vec![want]);
    }

    #[test]
    fn overlapping_regions_report_every_node() {
        let colors = vec![Srgb::new(100, 0, 0), Srgb::new(0, 0, 100)];
        let g = MapperGraph {
            nodes: vec![node((0, 0), &[0]), node((0, 1), &[0, 1]), node((0, 2), &[1])],
            edges: vec![(0, 1), (1, 2)],
        };
        let net = ColorNetwork::from_graph(&g, &colors, NetworkParams::default()).unwrap();
        assert_eq!(net.color_regions_of(Srgb::new(100, 0, 0)), vec![0, 1]);
        assert_eq!(net.color_regions_of(Srgb::new(0, 0, 100)), vec![1, 2]);
        assert_eq!(net.edges[0].2, hyab(&net.nodes[0].mean, &net.nodes[1].mean));
    }

    #[test]
    fn text_round_trip() {
        let params = NetworkParams { dbscan: DbscanParams::new(10.0, 2), intervals: (1, 2), ..NetworkParams::default() };
        let net = ColorNetwork::build_from(&toy_colors(), &params).unwrap();
        let text = net.to_text();
        let back = ColorNetwork::from_text(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_text(), text);
        assert!(ColorNetwork::from_text(&text.replace("\"version\": 1", "\"version\": 9")).is_err());
        assert!(ColorNetwork::from_text(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn snapping() {
        assert_eq!(snap_to_grid(Srgb::new(253, 2, 3), 5), Srgb::new(255, 0, 5));
        assert_eq!(grid_position(Srgb::new(255, 255, 255), 5), 52 * 52 * 52 - 1);
    }
}
