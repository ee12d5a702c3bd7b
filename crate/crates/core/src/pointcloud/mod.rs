//! Colored point clouds: data model, RGB-D ingestion, preprocessing, view
//! normalization, slicing geometry and occlusion handling.

mod image;
mod normalize;
mod ply;

pub use image::{backproject, detect_occlusion, occlusion_boundary, pixel_to_point, DepthImage, RgbImage, SegmentationMap};
pub use normalize::{min_area_rect_angle, view_normalize, RigidTransform};
pub use ply::{read_ply, write_ply, PlyFormat};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::color_metric::Srgb;
use crate::error::{Error, Result};
use crate::spatial::HashGrid;

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColoredPointCloud {
    pub points: Vec<Point3>,
    pub colors: Vec<Srgb>,
}

impl ColoredPointCloud {
    pub fn new(points: Vec<Point3>, colors: Vec<Srgb>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::DimensionMismatch { context: "point cloud colors", expected: points.len(), got: colors.len() });
        }
        if let Some(k) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!("point {k} has a non-finite coordinate")));
        }
        Ok(Self { points, colors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points[1..] {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Some((lo, hi))
    }

    pub fn extents(&self) -> Point3 {
        match self.bounds() {
            Some((lo, hi)) => [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
            None => [0.0; 3],
        }
    }

    /// The points at the given indices, in the given order.
    pub fn subset(&self, ids: &[usize]) -> Self {
        Self {
            points: ids.iter().map(|&i| self.points[i]).collect(),
            colors: ids.iter().map(|&i| self.colors[i]).collect(),
        }
    }

    /// Keeps the points satisfying `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Point3) -> bool) -> Self {
        let ids: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.points[i])).collect();
        self.subset(&ids)
    }

    pub fn map_points(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self { points: self.points.iter().map(f).collect(), colors: self.colors.clone() }
    }

    pub fn extend(&mut self, other: &Self) {
        self.points.extend_from_slice(&other.points);
        self.colors.extend_from_slice(&other.colors);
    }

    /// Shifts the cloud so its minimum corner sits at the origin.
    pub fn translate_to_origin(&self) -> Self {
        match self.bounds() {
            Some((lo, _)) => self.map_points(|p| [p[0] - lo[0], p[1] - lo[1], p[2] - lo[2]]),
            None => self.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Meters per depth unit.
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.depth_scale > 0.0) {
            return Err(Error::invalid("focal lengths and depth scale must be positive"));
        }
        Ok(())
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { fx: 570.0, fy: 570.0, cx: 320.0, cy: 240.0, depth_scale: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice {
    pub index: usize,
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strip {
    pub index: usize,
    pub ids: Vec<usize>,
}

pub fn scale(cloud: &ColoredPointCloud, sigma_s: f64) -> Result<ColoredPointCloud> {
    if !(sigma_s > 0.0 && sigma_s.is_finite()) {
        return Err(Error::invalid(format!("scale factor must be positive, got {sigma_s}")));
    }
    Ok(cloud.map_points(|p| p.map(|v| v * sigma_s)))
}

/// One point per occupied voxel at the member centroid, with the channel-wise
/// mean color. Voxels are anchored at the coordinate origin and emitted in
/// lexicographic voxel order.
pub fn voxel_downsample(cloud: &ColoredPointCloud, voxel: f64) -> Result<ColoredPointCloud> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::invalid(format!("voxel size must be positive, got {voxel}")));
    }
    let mut acc: BTreeMap<[i64; 3], ([f64; 3], [u64; 3], usize)> = BTreeMap::new();
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        let key = p.map(|v| (v / voxel).floor() as i64);
        let e = acc.entry(key).or_insert(([0.0; 3], [0; 3], 0));
        for d in 0..3 {
            e.0[d] += p[d];
        }
        for (s, ch) in e.1.iter_mut().zip(c.channels()) {
            *s += u64::from(ch);
        }
        e.2 += 1;
    }
    let mut out = ColoredPointCloud::default();
    for (sum, csum, n) in acc.into_values() {
        let nf = n as f64;
        out.points.push(sum.map(|s| s / nf));
        let ch = csum.map(|s| ((s as f64 / nf).round()) as u8);
        out.colors.push(Srgb::new(ch[0], ch[1], ch[2]));
    }
    Ok(out)
}

/// Mean distance from each point to its `k` nearest neighbors.
pub fn mean_knn_distances(points: &[Point3], k: usize) -> Vec<f64> {
    if points.is_empty() {
        return Vec::new();
    }
    let cell = knn_cell_size(points, k);
    let grid = HashGrid::new(points, cell);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = grid.knn(points, p, k, Some(i));
            nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len().max(1) as f64
        })
        .collect()
}

fn knn_cell_size(points: &[Point3], k: usize) -> f64 {
    let cloud = ColoredPointCloud { points: points.to_vec(), colors: Vec::new() };
    let e = cloud.extents();
    let span = e[0].max(e[1]).max(e[2]);
    if span <= 0.0 {
        return 1.0;
    }
    // roughly k points per cell for a surface-like sampling
    let per_axis = ((points.len() as f64 / k.max(1) as f64).sqrt()).max(1.0);
    span / per_axis
}

/// Statistical outlier removal: drops points whose mean distance to their `k`
/// nearest neighbors exceeds the global mean plus `std_ratio` standard deviations.
pub fn remove_outliers(cloud: &ColoredPointCloud, k: usize, std_ratio: f64) -> Result<ColoredPointCloud> {
    if k == 0 {
        return Err(Error::invalid("outlier removal needs k >= 1"));
    }
    if cloud.len() < k + 1 {
        return Ok(cloud.clone());
    }
    let d = mean_knn_distances(&cloud.points, k);
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    // relative slack so that exactly equal distances never fail on rounding
    let limit = mean + std_ratio * var.sqrt() + 1e-12 * mean;
    let ids: Vec<usize> = (0..cloud.len()).filter(|&i| d[i] <= limit).collect();
    Ok(cloud.subset(&ids))
}

/// The original cloud followed by its mirrors across the x and y axes, each
/// shifted back into the first octant. With `include_double` the mirror across
/// both axes is appended as well.
pub fn mirror_augment(cloud: &ColoredPointCloud, include_double: bool) -> Vec<ColoredPointCloud> {
    let Some((lo, hi)) = cloud.bounds() else {
        return vec![cloud.clone()];
    };
    let mx = |p: &Point3| [lo[0] + hi[0] - p[0], p[1], p[2]];
    let my = |p: &Point3| [p[0], lo[1] + hi[1] - p[1], p[2]];
    let mut out = vec![cloud.clone(), cloud.map_points(mx), cloud.map_points(my)];
    if include_double {
        out.push(cloud.map_points(|p| my(&mx(p))));
    }
    out
}

/// Rotates about the y axis so the x axis maps to `(cos α, 0, sin α)`, then
/// shifts into the first octant.
pub fn rotate_for_slicing(cloud: &ColoredPointCloud, alpha: f64) -> ColoredPointCloud {
    let (s, c) = alpha.sin_cos();
    cloud.map_points(|p| [c * p[0] - s * p[2], p[1], s * p[0] + c * p[2]]).translate_to_origin()
}

/// Index `i` of the half-open band `[i·w, (i+1)·w)` containing `v >= 0`,
/// evaluated so that the band predicate holds exactly in floating point.
pub fn band_index(v: f64, w: f64) -> usize {
    let mut i = (v / w).floor().max(0.0) as usize;
    while i > 0 && i as f64 * w > v {
        i -= 1;
    }
    while (i + 1) as f64 * w <= v {
        i += 1;
    }
    i
}

/// Partitions the cloud into half-open z-bands of thickness `sigma1`,
/// starting at `z = 0`. Empty bands in between are kept.
pub fn slice(cloud: &ColoredPointCloud, sigma1: f64) -> Result<Vec<Slice>> {
    if !(sigma1 > 0.0) {
        return Err(Error::invalid(format!("slice thickness must be positive, got {sigma1}")));
    }
    if cloud.points.iter().any(|p| p[2] < 0.0) {
        return Err(Error::invalid("slicing expects a cloud in the first octant"));
    }
    let idx: Vec<usize> = cloud.points.iter().map(|p| band_index(p[2], sigma1)).collect();
    let n = idx.iter().max().map_or(0, |m| m + 1);
    let mut slices: Vec<Slice> = (0..n).map(|index| Slice { index, ids: Vec::new() }).collect();
    for (k, &i) in idx.iter().enumerate() {
        slices[i].ids.push(k);
    }
    Ok(slices)
}

/// Number of strips of width `sigma2` spanning an x-extent `w`: at least one,
/// and `ceil(w / sigma2)` otherwise.
pub fn strip_count(w: f64, sigma2: f64) -> usize {
    ((w / sigma2).ceil() as usize).max(1)
}

/// Partitions a slice along x into bands of width `sigma2` measured from the
/// slice's own x-minimum. A point lying exactly on the far edge of the last
/// band is kept in that band.
pub fn strips(cloud: &ColoredPointCloud, slice: &Slice, sigma2: f64) -> Result<Vec<Strip>> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("strip width must be positive, got {sigma2}")));
    }
    if slice.ids.is_empty() {
        return Ok(Vec::new());
    }
    let xs: Vec<f64> = slice.ids.iter().map(|&k| cloud.points[k][0]).collect();
    let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x1 = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = strip_count(x1 - x0, sigma2);
    let mut out: Vec<Strip> = (0..n).map(|index| Strip { index, ids: Vec::new() }).collect();
    for (&k, &x) in slice.ids.iter().zip(&xs) {
        let j = band_index(x - x0, sigma2).min(n - 1);
        out[j].ids.push(k);
    }
    Ok(out)
}

/// The slice's points with every z set to `i·sigma1`.
pub fn flatten_slice_z(cloud: &ColoredPointCloud, slice: &Slice, sigma1: f64) -> ColoredPointCloud {
    let z = slice.index as f64 * sigma1;
    let mut out = cloud.subset(&slice.ids);
    for p in &mut out.points {
        p[2] = z;
    }
    out
}

/// Rotates by π about the z axis and shifts back into the first octant when
/// `occluded` is set.
pub fn reorient_if_occluded(cloud: &ColoredPointCloud, occluded: bool) -> ColoredPointCloud {
    if !occluded {
        return cloud.clone();
    }
    let Some((lo, hi)) = cloud.bounds() else {
        return cloud.clone();
    };
    cloud.map_points(|p| [lo[0] + hi[0] - p[0], lo[1] + hi[1] - p[1], p[2]])
}

/// Whether the occlusion boundary (given in the cloud's normalized frame)
/// lies toward the low-x end of the cloud, where slicing starts.
pub fn occlusion_at_slicing_start(cloud: &ColoredPointCloud, boundary: &[Point3]) -> bool {
    let Some((lo, hi)) = cloud.bounds() else {
        return false;
    };
    if boundary.is_empty() {
        return false;
    }
    let mean_x = boundary.iter().map(|p| p[0]).sum::<f64>() / boundary.len() as f64;
    mean_x < 0.5 * (lo[0] + hi[0])
}

/// Reorients an occluded, view-normalized cloud so that the occluded end is
/// sliced last.
pub fn reorient_for_occlusion(cloud: &ColoredPointCloud, boundary: &[Point3]) -> ColoredPointCloud {
    reorient_if_occluded(cloud, occlusion_at_slicing_start(cloud, boundary))
}
