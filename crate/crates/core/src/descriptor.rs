//! Slice-wise shape and color descriptors (TOPS and TOPS2).

use std::f64::consts::FRAC_PI_4;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color_network::ColorNetwork;
use crate::error::{Error, Result};
use crate::pointcloud::{flatten_slice_z, rotate_for_slicing, slice, strips, ColoredPointCloud, Slice};
use crate::topology::{h0_persistence, persistence_image, slice_filtration, ImageParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    /// Slice thickness.
    pub sigma1: f64,
    /// Strip width.
    pub sigma2: f64,
    /// Tilt of the longitudinal axis before slicing.
    pub alpha: f64,
    pub max_slices: usize,
    pub n_s_max: usize,
    /// Neighborhood radius of the slice filtration.
    pub radius: f64,
    pub image: ImageParams,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self::with_strips(0.1, 0.025, 12, 24)
    }
}

impl DescriptorConfig {
    pub fn with_strips(sigma1: f64, sigma2: f64, max_slices: usize, n_s_max: usize) -> Self {
        Self {
            sigma1,
            sigma2,
            alpha: FRAC_PI_4,
            max_slices,
            n_s_max,
            radius: 2.0 * sigma2,
            image: ImageParams::for_strips(sigma2, n_s_max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.radius > 0.0) {
            return Err(Error::invalid("slice thickness, strip width and radius must be positive"));
        }
        if self.max_slices == 0 || self.n_s_max == 0 {
            return Err(Error::invalid("max_slices and n_s_max must be at least 1"));
        }
        self.image.validate()
    }

    pub fn image_len(&self) -> usize {
        self.image.len()
    }

    pub fn block_len(&self, kind: DescriptorKind, n_c: usize) -> usize {
        match kind {
            DescriptorKind::Tops => self.image_len(),
            DescriptorKind::Tops2 => self.image_len() + n_c * self.n_s_max,
        }
    }
}

/// Per-strip color constitution in exact units: entry `λ` equals
/// `units[λ] / denominator`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorVector {
    pub units: Vec<u64>,
    pub denominator: u64,
}

impl ColorVector {
    pub fn values(&self) -> Vec<f64> {
        let d = self.denominator as f64;
        self.units.iter().map(|&u| u as f64 / d).collect()
    }

    /// Total mass as an exact fraction `(numerator, denominator)`.
    pub fn mass(&self) -> (u64, u64) {
        (self.units.iter().sum(), self.denominator)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Each point spreads unit mass evenly over the color regions containing its color.
pub fn color_vector(cloud: &ColoredPointCloud, ids: &[usize], network: &ColorNetwork) -> ColorVector {
    let regions: Vec<Vec<usize>> = ids.iter().map(|&i| network.color_regions_of(cloud.colors[i])).collect();
    let denominator = regions.iter().fold(1u64, |l, r| {
        let k = r.len() as u64;
        l / gcd(l, k) * k
    });
    let mut units = vec![0u64; network.n_c()];
    for r in &regions {
        let share = denominator / r.len() as u64;
        for &lambda in r {
            units[lambda] += share;
        }
    }
    ColorVector { units, denominator }
}

/// `n_s_max × n_c` matrix whose row `j` is the color vector of strip `j`;
/// trailing rows are zero.
pub fn color_matrix(
    cloud: &ColoredPointCloud,
    slice_: &Slice,
    sigma2: f64,
    n_s_max: usize,
    network: &ColorNetwork,
) -> Result<Array2<f64>> {
    let st = strips(cloud, slice_, sigma2)?;
    if st.len() > n_s_max {
        return Err(Error::DescriptorOverflow { what: "strip count", index: slice_.index, count: st.len(), max: n_s_max });
    }
    let mut m = Array2::zeros((n_s_max, network.n_c()));
    for s in &st {
        let v = color_vector(cloud, &s.ids, network).values();
        for (dst, src) in m.row_mut(s.index).iter_mut().zip(v) {
            *dst = src;
        }
    }
    Ok(m)
}

/// `(C·Δ)ᵀ`, of shape `n_c × n_s_max`.
pub fn color_embedding(c: &Array2<f64>, delta: &Array2<f64>) -> Result<Array2<f64>> {
    if delta.nrows() != delta.ncols() {
        return Err(Error::DimensionMismatch { context: "similarity matrix", expected: delta.nrows(), got: delta.ncols() });
    }
    if c.ncols() != delta.nrows() {
        return Err(Error::DimensionMismatch { context: "color matrix columns", expected: delta.nrows(), got: c.ncols() });
    }
    Ok(c.dot(delta).reversed_axes())
}

pub fn delta_matrix(network: &ColorNetwork) -> Array2<f64> {
    let n = network.n_c();
    Array2::from_shape_vec((n, n), network.similarity.clone()).expect("similarity is n_c × n_c")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptorKind {
    Tops,
    Tops2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub kind: DescriptorKind,
    pub max_slices: usize,
    /// Values per slice block.
    pub block: usize,
    /// Leading persistence-image values inside each block.
    pub image_len: usize,
    /// Number of non-empty slice positions before padding.
    pub slices: usize,
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn block_values(&self, i: usize) -> &[f64] {
        &self.values[i * self.block..(i + 1) * self.block]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct SliceBlocks {
    image: Vec<f64>,
    embedding: Option<Vec<f64>>,
}

fn slice_blocks(
    rotated: &ColoredPointCloud,
    s: &Slice,
    cfg: &DescriptorConfig,
    network: Option<(&ColorNetwork, &Array2<f64>)>,
) -> Result<SliceBlocks> {
    if s.ids.is_empty() {
        return Ok(SliceBlocks {
            image: vec![0.0; cfg.image_len()],
            embedding: network.map(|(n, _)| vec![0.0; n.n_c() * cfg.n_s_max]),
        });
    }
    let flat = flatten_slice_z(rotated, s, cfg.sigma1);
    let (lo, hi) = flat.bounds().expect("slice is non-empty");
    let local: Vec<[f64; 3]> = flat.points.iter().map(|p| [p[0] - lo[0], p[1], p[2]]).collect();
    let f = slice_filtration(&local, cfg.radius)?;
    let cap = (hi[0] - lo[0]) + cfg.sigma2;
    let diagram = h0_persistence(&f, cap)?;
    let image = persistence_image(&diagram, &cfg.image)?.pixels;
    let embedding = match network {
        Some((net, delta)) => {
            let c = color_matrix(rotated, s, cfg.sigma2, cfg.n_s_max, net)?;
            Some(color_embedding(&c, delta)?.iter().copied().collect())
        }
        None => None,
    };
    Ok(SliceBlocks { image, embedding })
}

/// TOPS, and TOPS2 when a network is supplied, for a view-normalized cloud.
pub fn compute_descriptors(
    cloud: &ColoredPointCloud,
    network: Option<&ColorNetwork>,
    cfg: &DescriptorConfig,
) -> Result<(Descriptor, Option<Descriptor>)> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("cannot describe an empty cloud".into()));
    }
    let rotated = rotate_for_slicing(cloud, cfg.alpha);
    let slices = slice(&rotated, cfg.sigma1)?;
    if slices.len() > cfg.max_slices {
        return Err(Error::DescriptorOverflow { what: "slice count", index: slices.len() - 1, count: slices.len(), max: cfg.max_slices });
    }
    let delta = network.map(delta_matrix);
    let net = network.zip(delta.as_ref());
    let blocks: Vec<SliceBlocks> =
        slices.par_iter().map(|s| slice_blocks(&rotated, s, cfg, net)).collect::<Result<_>>()?;

    let image_len = cfg.image_len();
    let mut tops = vec![0.0; cfg.max_slices * image_len];
    for (i, b) in blocks.iter().enumerate() {
        tops[i * image_len..(i + 1) * image_len].copy_from_slice(&b.image);
    }
    let tops = Descriptor {
        kind: DescriptorKind::Tops,
        max_slices: cfg.max_slices,
        block: image_len,
        image_len,
        slices: slices.len(),
        values: tops,
    };
    let tops2 = network.map(|n| {
        let block = cfg.block_len(DescriptorKind::Tops2, n.n_c());
        let mut v = vec![0.0; cfg.max_slices * block];
        for (i, b) in blocks.iter().enumerate() {
            let dst = &mut v[i * block..(i + 1) * block];
            dst[..image_len].copy_from_slice(&b.image);
            dst[image_len..].copy_from_slice(b.embedding.as_ref().expect("computed with a network"));
        }
        Descriptor { kind: DescriptorKind::Tops2, max_slices: cfg.max_slices, block, image_len, slices: slices.len(), values: v }
    });
    Ok((tops, tops2))
}

pub fn tops_descriptor(cloud: &ColoredPointCloud, cfg: &DescriptorConfig) -> Result<Descriptor> {
    Ok(compute_descriptors(cloud, None, cfg)?.0)
}

pub fn tops2_descriptor(cloud: &ColoredPointCloud, network: &ColorNetwork, cfg: &DescriptorConfig) -> Result<Descriptor> {
    Ok(compute_descriptors(cloud, Some(network), cfg)?.1.expect("network supplied"))
}

const MAGIC: &[u8; 4] = b"TCDS";
const VERSION: u32 = 1;

impl Descriptor {
    /// Binary record: magic, version, kind, layout, then little-endian f32 values.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[match self.kind {
            DescriptorKind::Tops => 1u8,
            DescriptorKind::Tops2 => 2u8,
        }])?;
        for v in [self.max_slices, self.block, self.image_len, self.slices, self.values.len()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let trunc = |_| Error::corrupt("descriptor record is truncated");
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MAGIC {
            return Err(Error::corrupt("not a descriptor record"));
        }
        let mut u = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u).map_err(trunc)?;
            Ok(u32::from_le_bytes(u))
        };
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version, expected: VERSION });
        }
        let mut k = [0u8; 1];
        r.read_exact(&mut k).map_err(trunc)?;
        let kind = match k[0] {
            1 => DescriptorKind::Tops,
            2 => DescriptorKind::Tops2,
            other => return Err(Error::corrupt(format!("unknown descriptor kind {other}"))),
        };
        let max_slices = read_u32(r)? as usize;
        let block = read_u32(r)? as usize;
        let image_len = read_u32(r)? as usize;
        let slices = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        if n != max_slices * block {
            return Err(Error::corrupt("descriptor layout does not match its length"));
        }
        let mut bytes = vec![0u8; 4 * n];
        r.read_exact(&mut bytes).map_err(trunc)?;
        let values = bytes.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))).collect();
        Ok(Self { kind, max_slices, block, image_len, slices, values })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_binary(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Human-readable dump, one line per slice block.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "kind {:?}\nmax_slices {}\nblock {}\nimage_len {}\nslices {}\n",
            self.kind, self.max_slices, self.block, self.image_len, self.slices
        );
        for i in 0..self.max_slices {
            let row: Vec<String> = self.block_values(i).iter().map(|v| format!("{v:.6e}")).collect();
            s.push_str(&format!("slice {i}: {}\n", row.join(" ")));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color_metric::{sample_srgb_grid, ColorSet, Srgb};
    use crate::color_network::NetworkParams;
    use crate::mapper::{DbscanParams, MapperGraph, RefinedCluster};
    use ndarray::array;

    /// Three regions over the step-255 grid: black alone, white alone, and
    /// everything else; red additionally belongs to the black region.
    fn tiny_network() -> ColorNetwork {
        let grid = sample_srgb_grid(255).unwrap();
        let idx = |c: Srgb| grid.rgb().iter().position(|&g| g == c).unwrap();
        let (black, white, red) = (idx(Srgb::gray(0)), idx(Srgb::gray(255)), idx(Srgb::new(255, 0, 0)));
        let rest: Vec<usize> = (0..8).filter(|&i| i != black && i != white).collect();
        let mut first = vec![black, red];
        first.sort();
        let g = MapperGraph {
            nodes: vec![
                RefinedCluster { cell: (0, 0), members: first },
                RefinedCluster { cell: (0, 1), members: vec![white] },
                RefinedCluster { cell: (0, 2), members: rest },
            ],
            edges: vec![(0, 2), (1, 2)],
        };
        let params = NetworkParams { grid_step: 255, ..NetworkParams::default() };
        ColorNetwork::from_graph(&g, grid.rgb(), params).unwrap()
    }

    fn cloud(points: Vec<[f64; 3]>, colors: Vec<Srgb>) -> ColoredPointCloud {
        ColoredPointCloud::new(points, colors).unwrap()
    }

    #[test]
    fn color_vector_examples() {
        let net = tiny_network();
        let c = cloud(vec![[0.0; 3]; 10], vec![Srgb::gray(255); 10]);
        let ids: Vec<usize> = (0..10).collect();
        assert_eq!(color_vector(&c, &ids, &net).values(), vec![0.0, 10.0, 0.0]);
        let r = cloud(vec![[0.0; 3]], vec![Srgb::new(255, 0, 0)]);
        assert_eq!(color_vector(&r, &[0], &net).values(), vec![0.5, 0.0, 0.5]);
        let v = color_vector(&r, &[], &net);
        assert_eq!(v.values(), vec![0.0; 3]);
        assert_eq!(v.mass(), (0, 1));
    }

    #[test]
    fn color_matrix_examples() {
        let net = tiny_network();
        let c = cloud(vec![[0.0, 0.0, 0.0], [0.03, 0.0, 0.0]], vec![Srgb::gray(0), Srgb::gray(255)]);
        let s = Slice { index: 0, ids: vec![0, 1] };
        let m = color_matrix(&c, &s, 0.025, 4, &net).unwrap();
        assert_eq!(m, array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let full = color_matrix(&c, &s, 0.025, 2, &net).unwrap();
        assert_eq!(full.nrows(), 2);
        assert!(full.rows().into_iter().all(|r| r.sum() > 0.0));
        let empty = color_matrix(&c, &Slice { index: 3, ids: vec![] }, 0.025, 4, &net).unwrap();
        assert!(empty.iter().all(|&v| v == 0.0));
        let err = color_matrix(&c, &s, 0.01, 2, &net).unwrap_err();
        assert!(matches!(err, Error::DescriptorOverflow { index: 0, count: 3, max: 2, .. }));
    }

    #[test]
    fn embedding_examples() {
        let c = array![[1.0, 0.0], [0.0, 2.0]];
        let d = array![[1.0, 0.5], [0.5, 1.0]];
        assert_eq!(color_embedding(&c, &d).unwrap(), array![[1.0, 1.0], [0.5, 2.0]]);
        assert_eq!(color_embedding(&c, &Array2::eye(2)).unwrap(), c.t());
        assert_eq!(color_embedding(&Array2::zeros((3, 2)), &d).unwrap(), Array2::<f64>::zeros((2, 3)));
        assert!(color_embedding(&c, &Array2::eye(3)).is_err());
    }

    fn bar(colors: impl Fn(usize) -> Srgb) -> ColoredPointCloud {
        let mut pts = Vec::new();
        for i in 0..60 {
            for j in 0..6 {
                pts.push([i as f64 * 0.005, j as f64 * 0.01, 0.0]);
            }
        }
        let cols = (0..pts.len()).map(colors).collect();
        cloud(pts, cols)
    }

    #[test]
    fn layout_and_determinism() {
        let net = tiny_network();
        let cfg = DescriptorConfig::with_strips(0.1, 0.025, 6, 12);
        let c = bar(|_| Srgb::gray(255));
        let (t, t2) = compute_descriptors(&c, Some(&net), &cfg).unwrap();
        let t2 = t2.unwrap();
        assert_eq!(t.len(), 6 * 256);
        assert_eq!(t2.block, 256 + 3 * 12);
        assert_eq!(t2.len(), 6 * (256 + 36));
        assert_eq!(tops_descriptor(&c, &cfg).unwrap(), t);
        assert_eq!(tops2_descriptor(&c, &net, &cfg).unwrap(), t2);
        assert!(t.slices < 6);
        assert!(t.block_values(5).iter().all(|&v| v == 0.0));
        for i in 0..t.slices {
            assert_eq!(t.block_values(i), &t2.block_values(i)[..256]);
        }
    }

    #[test]
    fn recoloring_changes_only_embeddings() {
        let net = tiny_network();
        let cfg = DescriptorConfig::with_strips(0.1, 0.025, 6, 12);
        let (a, a2) = compute_descriptors(&bar(|_| Srgb::gray(255)), Some(&net), &cfg).unwrap();
        let (b, b2) = compute_descriptors(&bar(|_| Srgb::gray(0)), Some(&net), &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a2.unwrap(), b2.unwrap());
    }

    #[test]
    fn overflow_is_reported() {
        let cfg = DescriptorConfig::with_strips(0.01, 0.025, 2, 12);
        let err = tops_descriptor(&bar(|_| Srgb::gray(9)), &cfg).unwrap_err();
        assert!(matches!(err, Error::DescriptorOverflow { what: "slice count", .. }));
    }

    #[test]
    fn binary_and_text_export() {
        let cfg = DescriptorConfig::with_strips(0.1, 0.025, 4, 8);
        let d = tops_descriptor(&bar(|_| Srgb::gray(3)), &cfg).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        let back = Descriptor::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back.kind, d.kind);
        for (x, y) in back.values.iter().zip(&d.values) {
            assert_eq!(*x, f64::from(*y as f32));
        }
        assert!(Descriptor::read_binary(&mut &buf[..buf.len() - 1]).is_err());
        assert!(d.to_text().lines().count() == 5 + 4);
    }

    #[test]
    fn toy_network_from_colors_still_works() {
        let colors = ColorSet::new(vec![Srgb::new(250, 0, 0), Srgb::new(245, 0, 0), Srgb::new(0, 0, 250)]).unwrap();
        let params = NetworkParams { intervals: (1, 1), gains: (0.0, 0.0), dbscan: DbscanParams::new(500.0, 1), ..NetworkParams::default() };
        let net = ColorNetwork::build_from(&colors, &params).unwrap();
        let c = cloud(vec![[0.0; 3], [0.01, 0.0, 0.0]], vec![Srgb::new(250, 0, 0), Srgb::new(1, 1, 1)]);
        let v = color_vector(&c, &[0, 1], &net);
        assert_eq!(v.mass(), (2 * v.denominator, v.denominator));
    }
}
