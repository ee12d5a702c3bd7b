//! Per-slice filtrations, zero-dimensional persistence and persistence images.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::Point3;
use crate::spatial::{euclid, HashGrid};

/// Vertices carry their x-coordinate; edges join points within the
/// connectivity radius and carry the larger endpoint value.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtration {
    /// `(point id, value)`, ascending by value then id.
    pub vertices: Vec<(usize, f64)>,
    /// `(u, v, value)` with `u < v`, ascending by value then `(u, v)`.
    pub edges: Vec<(usize, usize, f64)>,
}

impl Filtration {
    pub fn max_value(&self) -> Option<f64> {
        self.vertices.last().map(|v| v.1)
    }
}

pub fn slice_filtration(points: &[Point3], radius: f64) -> Result<Filtration> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("connectivity radius must be positive, got {radius}")));
    }
    let mut vertices: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, p[0])).collect();
    vertices.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut edges = Vec::new();
    if !points.is_empty() {
        let grid = HashGrid::new(points, radius);
        let mut near = Vec::new();
        for (u, p) in points.iter().enumerate() {
            near.clear();
            grid.within(p, radius, |j| euclid(p, &points[j]), &mut near);
            for &v in near.iter().filter(|&&v| v > u) {
                edges.push((u, v, p[0].max(points[v][0])));
            }
        }
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    Ok(Filtration { vertices, edges })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    /// `(birth, death)`, sorted.
    pub pairs: Vec<(f64, f64)>,
}

impl PersistenceDiagram {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Multiset union.
    pub fn union(&self, other: &Self) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        sort_pairs(&mut pairs);
        Self { pairs }
    }

    /// One `birth,death` row per pair.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "birth,death")?;
        for (b, d) in &self.pairs {
            writeln!(f, "{b},{d}")?;
        }
        f.flush()?;
        Ok(())
    }
}

fn sort_pairs(pairs: &mut [(f64, f64)]) {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// H0 persistence by union-find under the elder rule. Components surviving
/// the whole filtration die at `cap`.
pub fn h0_persistence(f: &Filtration, cap: f64) -> Result<PersistenceDiagram> {
    if let Some(m) = f.max_value() {
        if cap < m {
            return Err(Error::invalid(format!("cap {cap} is below the largest filtration value {m}")));
        }
    }
    let n = f.vertices.iter().map(|v| v.0 + 1).max().unwrap_or(0);
    // age rank: position in the sorted vertex order (smaller is older)
    let mut rank = vec![usize::MAX; n];
    for (r, &(id, _)) in f.vertices.iter().enumerate() {
        rank[id] = r;
    }
    let value: Vec<f64> = {
        let mut v = vec![0.0; n];
        for &(id, x) in &f.vertices {
            v[id] = x;
        }
        v
    };
    let mut uf = UnionFind::new(n);
    let mut pairs = Vec::with_capacity(f.vertices.len());
    // roots always hold the oldest vertex of their component
    for &(u, v, t) in &f.edges {
        let (ru, rv) = (uf.find(u), uf.find(v));
        if ru == rv {
            continue;
        }
        let (elder, younger) = if rank[ru] < rank[rv] { (ru, rv) } else { (rv, ru) };
        pairs.push((value[younger], t));
        uf.parent[younger] = elder;
    }
    for &(id, x) in &f.vertices {
        if uf.find(id) == id {
            pairs.push((x, cap));
        }
    }
    sort_pairs(&mut pairs);
    Ok(PersistenceDiagram { pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weighting {
    /// `min(persistence / max, 1)`.
    Linear { max: f64 },
    Constant,
}

impl Weighting {
    pub fn weight(&self, persistence: f64) -> f64 {
        match *self {
            Weighting::Linear { max } => (persistence / max).clamp(0.0, 1.0),
            Weighting::Constant => {
                if persistence > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageParams {
    /// Rows, along persistence.
    pub height: usize,
    /// Columns, along birth.
    pub width: usize,
    pub birth_range: (f64, f64),
    pub persistence_range: (f64, f64),
    pub sigma: f64,
    pub weighting: Weighting,
}

impl ImageParams {
    /// 16×16 over `[0, n_s_max·σ2]` in both axes with kernel spread σ2.
    pub fn for_strips(sigma2: f64, n_s_max: usize) -> Self {
        let hi = n_s_max as f64 * sigma2;
        Self {
            height: 16,
            width: 16,
            birth_range: (0.0, hi),
            persistence_range: (0.0, hi),
            sigma: sigma2,
            weighting: Weighting::Linear { max: hi },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("persistence image needs at least one pixel"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("kernel spread must be positive"));
        }
        let ok = |r: (f64, f64)| r.1 > r.0;
        if !ok(self.birth_range) || !ok(self.persistence_range) {
            return Err(Error::invalid("persistence image ranges must be non-empty"));
        }
        if let Weighting::Linear { max } = self.weighting {
            if !(max > 0.0) {
                return Err(Error::invalid("linear weighting needs a positive maximum"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn centers(range: (f64, f64), n: usize) -> Vec<f64> {
        let step = (range.1 - range.0) / n as f64;
        (0..n).map(|k| range.0 + (k as f64 + 0.5) * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceImage {
    pub params: ImageParams,
    /// Row-major, `height × width`.
    pub pixels: Vec<f64>,
}

impl PersistenceImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.params.width + col]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.pixels.iter().enumerate() {
            if *v > self.pixels[best] {
                best = k;
            }
        }
        (best / self.params.width, best % self.params.width)
    }
}

/// Sum over pairs of an isotropic Gaussian density centred at
/// `(birth, death − birth)`, scaled by the persistence weight and evaluated at
/// pixel centres.
pub fn persistence_image(d: &PersistenceDiagram, params: &ImageParams) -> Result<PersistenceImage> {
    params.validate()?;
    let bx = ImageParams::centers(params.birth_range, params.width);
    let py = ImageParams::centers(params.persistence_range, params.height);
    let mut pixels = vec![0.0; params.len()];
    let s2 = params.sigma * params.sigma;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s2);
    for &(birth, death) in &d.pairs {
        let pers = death - birth;
        let w = params.weighting.weight(pers);
        if w == 0.0 {
            continue;
        }
        let gx: Vec<f64> = bx.iter().map(|x| (-(x - birth).powi(2) / (2.0 * s2)).exp()).collect();
        for (row, y) in py.iter().enumerate() {
            let gy = w * norm * (-(y - pers).powi(2) / (2.0 * s2)).exp();
            let out = &mut pixels[row * params.width..(row + 1) * params.width];
            for (o, g) in out.iter_mut().zip(&gx) {
                *o += gy * g;
            }
        }
    }
    Ok(PersistenceImage { params: *params, pixels })
}
