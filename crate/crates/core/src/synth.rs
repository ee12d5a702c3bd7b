//! Synthetic colored objects: visible-surface sampling from camera
//! directions, scripted occlusion and RGB-D scene rendering.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color_metric::Srgb;
use crate::error::{Error, Result};
use crate::pointcloud::{
    write_ply, CameraIntrinsics, ColoredPointCloud, DepthImage, PlyFormat, Point3, RgbImage, SegmentationMap,
};

/// Primitives are centred at the origin with their long axis along z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box { x: f64, y: f64, z: f64 },
    Cylinder { radius: f64, height: f64 },
    Sphere { radius: f64 },
    /// `length` is the straight section; hemispherical caps extend it by `radius` on each end.
    Capsule { radius: f64, length: f64 },
}

impl Primitive {
    /// Half extent along z.
    pub fn half_length(&self) -> f64 {
        match *self {
            Primitive::Box { z, .. } => z / 2.0,
            Primitive::Cylinder { height, .. } => height / 2.0,
            Primitive::Sphere { radius } => radius,
            Primitive::Capsule { radius, length } => length / 2.0 + radius,
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            Primitive::Box { x, y, z } => vec![x, y, z],
            Primitive::Cylinder { radius, height } => vec![radius, height],
            Primitive::Sphere { radius } => vec![radius],
            Primitive::Capsule { radius, length } => vec![radius, length],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColorScheme {
    Uniform { color: Srgb },
    /// `low` below z = 0, `high` above.
    TwoTone { low: Srgb, high: Srgb },
    /// Equal-height bands along z from bottom to top.
    Bands { colors: Vec<Srgb> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub label: String,
    pub primitive: Primitive,
    pub colors: ColorScheme,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitive.dims().iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::invalid(format!("shape {:?} needs positive dimensions", self.label)));
        }
        if let ColorScheme::Bands { colors } = &self.colors {
            if colors.is_empty() {
                return Err(Error::invalid(format!("shape {:?} has an empty band list", self.label)));
            }
        }
        Ok(())
    }

    pub fn color_at(&self, p: &Point3) -> Srgb {
        match &self.colors {
            ColorScheme::Uniform { color } => *color,
            ColorScheme::TwoTone { low, high } => {
                if p[2] < 0.0 {
                    *low
                } else {
                    *high
                }
            }
            ColorScheme::Bands { colors } => {
                let h = self.primitive.half_length();
                let t = ((p[2] + h) / (2.0 * h)).clamp(0.0, 1.0 - 1e-12);
                colors[(t * colors.len() as f64) as usize]
            }
        }
    }
}

/// A surface sample with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Point3,
    pub normal: Point3,
}

fn cells(extent: f64, step: f64) -> usize {
    ((extent / step).ceil() as usize).max(1)
}

/// Centres of an `n`-cell partition of `[-h, h]`.
fn centres(h: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| -h + (k as f64 + 0.5) * 2.0 * h / n as f64)
}

fn box_samples(dims: [f64; 3], step: f64, out: &mut Vec<SurfaceSample>) {
    let h = dims.map(|d| d / 2.0);
    for axis in 0..3 {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        let (na, nb) = (cells(dims[a], step), cells(dims[b], step));
        for sign in [-1.0, 1.0] {
            for u in centres(h[a], na) {
                for v in centres(h[b], nb) {
                    let mut p = [0.0; 3];
                    let mut n = [0.0; 3];
                    p[axis] = sign * h[axis];
                    p[a] = u;
                    p[b] = v;
                    n[axis] = sign;
                    out.push(SurfaceSample { point: p, normal: n });
                }
            }
        }
    }
}

fn disc_samples(radius: f64, z: f64, sign: f64, step: f64, out: &mut Vec<SurfaceSample>) {
    let n = cells(2.0 * radius, step);
    for x in centres(radius, n) {
        for y in centres(radius, n) {
            if x * x + y * y <= radius * radius {
                out.push(SurfaceSample { point: [x, y, z], normal: [0.0, 0.0, sign] });
            }
        }
    }
}

fn tube_samples(radius: f64, half: f64, step: f64, out: &mut Vec<SurfaceSample>) {
    let na = cells(TAU * radius, step);
    let nz = cells(2.0 * half, step);
    for k in 0..na {
        let t = (k as f64 + 0.5) * TAU / na as f64;
        let (s, c) = t.sin_cos();
        for z in centres(half, nz) {
            out.push(SurfaceSample { point: [radius * c, radius * s, z], normal: [c, s, 0.0] });
        }
    }
}

/// Latitude rings over polar angles `[t0, t1]` of a sphere centred at `(0, 0, zc)`.
fn sphere_zone(radius: f64, zc: f64, t0: f64, t1: f64, step: f64, out: &mut Vec<SurfaceSample>) {
    let rings = cells(radius * (t1 - t0), step);
    for i in 0..rings {
        let t = t0 + (i as f64 + 0.5) * (t1 - t0) / rings as f64;
        let (st, ct) = t.sin_cos();
        let na = cells(TAU * radius * st, step);
        for k in 0..na {
            let p = (k as f64 + 0.5) * TAU / na as f64;
            let (sp, cp) = p.sin_cos();
            let n = [st * cp, st * sp, ct];
            out.push(SurfaceSample { point: [radius * n[0], radius * n[1], zc + radius * n[2]], normal: n });
        }
    }
}

/// Deterministic lattice samples over the whole surface, roughly `step` apart.
pub fn surface_samples(shape: &ShapeSpec, step: f64) -> Result<Vec<SurfaceSample>> {
    shape.validate()?;
    if !(step > 0.0) {
        return Err(Error::invalid("sampling step must be positive"));
    }
    let mut out = Vec::new();
    match shape.primitive {
        Primitive::Box { x, y, z } => box_samples([x, y, z], step, &mut out),
        Primitive::Cylinder { radius, height } => {
            tube_samples(radius, height / 2.0, step, &mut out);
            disc_samples(radius, height / 2.0, 1.0, step, &mut out);
            disc_samples(radius, -height / 2.0, -1.0, step, &mut out);
        }
        Primitive::Sphere { radius } => sphere_zone(radius, 0.0, 0.0, PI, step, &mut out),
        Primitive::Capsule { radius, length } => {
            tube_samples(radius, length / 2.0, step, &mut out);
            sphere_zone(radius, length / 2.0, 0.0, PI / 2.0, step, &mut out);
            sphere_zone(radius, -length / 2.0, PI / 2.0, PI, step, &mut out);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Surface sampling step in meters.
    pub step: f64,
    /// Depth quantum along the viewing direction in meters; 0 disables quantization.
    pub depth_quantum: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self { step: 0.004, depth_quantum: 0.001 }
    }
}

/// Unit vector toward the camera for a polar angle from +z and an azimuth about z.
pub fn view_direction(azimuth: f64, polar: f64) -> Point3 {
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    [sp * ca, sp * sa, cp]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Surface samples facing `camera` (unit vector from the object toward the
/// camera), in the object frame, with depth along `camera` snapped to the quantum.
pub fn render_view(shape: &ShapeSpec, camera: Point3, params: &RenderParams) -> Result<ColoredPointCloud> {
    let norm = dot(&camera, &camera).sqrt();
    if !((norm - 1.0).abs() < 1e-9) {
        return Err(Error::invalid("camera direction must be a unit vector"));
    }
    let mut cloud = ColoredPointCloud::default();
    for s in surface_samples(shape, params.step)? {
        if dot(&s.normal, &camera) <= 1e-12 {
            continue;
        }
        let mut p = s.point;
        if params.depth_quantum > 0.0 {
            let t = dot(&p, &camera);
            let dt = (t / params.depth_quantum).round() * params.depth_quantum - t;
            for d in 0..3 {
                p[d] += dt * camera[d];
            }
        }
        cloud.colors.push(shape.color_at(&s.point));
        cloud.points.push(p);
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraGrid {
    pub azimuth_step: f64,
    pub polar_step: f64,
    pub radius: f64,
}

impl CameraGrid {
    pub fn fine() -> Self {
        Self { azimuth_step: PI / 36.0, polar_step: PI / 36.0, radius: 1.0 }
    }

    pub fn desk() -> Self {
        Self { azimuth_step: PI / 6.0, polar_step: PI / 6.0, radius: 1.0 }
    }

    /// Azimuths `0, step, ...` below 2π and polar angles `0, step, ..., π`.
    pub fn views(&self) -> Result<Vec<(f64, f64)>> {
        let count = |range: f64, step: f64| -> Result<usize> {
            let k = range / step;
            if !(step > 0.0) || (k - k.round()).abs() > 1e-9 {
                return Err(Error::invalid(format!("step {step} does not divide {range}")));
            }
            Ok(k.round() as usize)
        };
        let na = count(TAU, self.azimuth_step)?;
        let np = count(PI, self.polar_step)? + 1;
        let mut v = Vec::with_capacity(na * np);
        for i in 0..na {
            for j in 0..np {
                v.push((i as f64 * self.azimuth_step, j as f64 * self.polar_step));
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub label: usize,
    pub azimuth: f64,
    pub polar: f64,
    pub cloud: ColoredPointCloud,
}

/// One rendered cloud per (shape, camera position), shape-major.
pub fn generate_training_set(shapes: &[ShapeSpec], grid: &CameraGrid, params: &RenderParams) -> Result<Vec<LabeledCloud>> {
    if shapes.is_empty() {
        return Err(Error::EmptyInput("no shapes to render".into()));
    }
    let views = grid.views()?;
    let jobs: Vec<(usize, f64, f64)> =
        (0..shapes.len()).flat_map(|s| views.iter().map(move |&(a, p)| (s, a, p))).collect();
    jobs.par_iter()
        .map(|&(s, a, p)| {
            let cloud = render_view(&shapes[s], view_direction(a, p), params)?;
            if cloud.is_empty() {
                return Err(Error::EmptyInput(format!("view ({a}, {p}) of {:?} is empty", shapes[s].label)));
            }
            Ok(LabeledCloud { label: s, azimuth: a, polar: p, cloud })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionEnd {
    Top,
    Bottom,
    Both,
}

/// Deletes `fraction` of the z-extent from the chosen end (from each end for `Both`).
pub fn occlude(cloud: &ColoredPointCloud, fraction: f64, end: OcclusionEnd) -> Result<ColoredPointCloud> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("occlusion fraction must lie in [0, 1), got {fraction}")));
    }
    let Some((lo, hi)) = cloud.bounds() else {
        return Err(Error::EmptyInput("cannot occlude an empty cloud".into()));
    };
    if fraction == 0.0 {
        return Ok(cloud.clone());
    }
    let cut = fraction * (hi[2] - lo[2]);
    let (top, bottom) = (hi[2] - cut, lo[2] + cut);
    let out = cloud.filter(|p| match end {
        OcclusionEnd::Top => p[2] < top,
        OcclusionEnd::Bottom => p[2] > bottom,
        OcclusionEnd::Both => p[2] > bottom && p[2] < top,
    });
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("occluding {fraction} from {end:?} leaves no points")));
    }
    Ok(out)
}

/// An object placed in the camera frame: `p_cam = rotation · p_obj + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub shape: ShapeSpec,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Rotation taking object coordinates to a camera looking along +z (image y
/// pointing down) that sees the object from `toward_camera`, with the
/// object's z axis pointing up in the image where possible.
pub fn look_rotation(toward_camera: Point3) -> Matrix3<f64> {
    let d = Vector3::from(toward_camera).normalize();
    let forward = -d;
    let z = Vector3::z();
    let mut up = z - forward * z.dot(&forward);
    if up.norm() < 1e-9 {
        let x = Vector3::x();
        up = x - forward * x.dot(&forward);
    }
    let up = up.normalize();
    let down = -up;
    let right = down.cross(&forward);
    Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub depth: DepthImage,
    pub rgb: RgbImage,
    /// Instance `k + 1` is object `k`.
    pub segmentation: SegmentationMap,
}

pub const BACKGROUND: Srgb = Srgb::new(90, 90, 90);

/// Z-buffered point splatting of the visible surface samples of every object.
pub fn render_scene(
    objects: &[SceneObject],
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
    step: f64,
) -> Result<RenderedScene> {
    intrinsics.validate()?;
    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut rgb = RgbImage::new(width, height);
    rgb.data.fill(BACKGROUND);
    let mut seg = SegmentationMap::new(width, height);
    for (k, obj) in objects.iter().enumerate() {
        for s in surface_samples(&obj.shape, step)? {
            let p = obj.rotation * Vector3::from(s.point) + obj.translation;
            let n = obj.rotation * Vector3::from(s.normal);
            if p.z <= 0.0 || n.dot(&(-p)) <= 0.0 {
                continue;
            }
            let u = (intrinsics.fx * p.x / p.z + intrinsics.cx).round();
            let v = (intrinsics.fy * p.y / p.z + intrinsics.cy).round();
            if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
                continue;
            }
            let i = v as usize * width + u as usize;
            if p.z < zbuf[i] {
                zbuf[i] = p.z;
                rgb.data[i] = obj.shape.color_at(&s.point);
                seg.data[i] = k as u32 + 1;
            }
        }
    }
    let mut depth = DepthImage::new(width, height);
    for (d, z) in depth.data.iter_mut().zip(&zbuf) {
        if z.is_finite() {
            *d = (z / intrinsics.depth_scale).round().clamp(1.0, f64::from(u16::MAX)) as u16;
        }
    }
    Ok(RenderedScene { depth, rgb, segmentation: seg })
}

/// Sampling step that puts neighboring samples at most about one pixel apart
/// at distance `nearest` from the camera.
pub fn scene_step(intrinsics: &CameraIntrinsics, nearest: f64) -> f64 {
    0.7 * nearest / intrinsics.fx.max(intrinsics.fy)
}

/// Scene-wide rendering parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneCamera {
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
}

impl Default for SceneCamera {
    fn default() -> Self {
        Self { intrinsics: CameraIntrinsics::default(), width: 640, height: 480 }
    }
}

fn nearest_depth(objects: &[SceneObject]) -> f64 {
    objects
        .iter()
        .map(|o| o.translation.z - o.shape.primitive.dims().iter().fold(0.0f64, |a, &d| a.max(d)))
        .fold(f64::INFINITY, f64::min)
        .max(0.05)
}

/// Renders `objects` with a sampling step fine enough to leave no holes.
pub fn render_objects(objects: &[SceneObject], camera: &SceneCamera) -> Result<RenderedScene> {
    let step = scene_step(&camera.intrinsics, nearest_depth(objects));
    render_scene(objects, &camera.intrinsics, camera.width, camera.height, step)
}

/// A flat gray panel in front of `target` hiding the top `fraction` of its
/// image rows, with a three-pixel margin on the other sides.
pub fn occluder_for(target: &SceneObject, fraction: f64, camera: &SceneCamera) -> Result<SceneObject> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("occluder fraction must lie in (0, 1), got {fraction}")));
    }
    let alone = render_objects(std::slice::from_ref(target), camera)?;
    let (w, k) = (camera.width, &camera.intrinsics);
    let (mut u0, mut u1, mut v0, mut v1, mut zmin) = (usize::MAX, 0, usize::MAX, 0, f64::INFINITY);
    for (i, &s) in alone.segmentation.data.iter().enumerate() {
        if s == 1 {
            let (u, v) = (i % w, i / w);
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
            zmin = zmin.min(f64::from(alone.depth.data[i]) * k.depth_scale);
        }
    }
    if u0 == usize::MAX {
        return Err(Error::EmptyInput("target is not visible".into()));
    }
    let z = zmin - 0.05;
    if z <= 0.01 {
        return Err(Error::invalid("target is too close to the camera for an occluder"));
    }
    let cut = v0 as f64 + fraction * (v1 - v0 + 1) as f64;
    let x = |u: f64| (u - k.cx) * z / k.fx;
    let y = |v: f64| (v - k.cy) * z / k.fy;
    let (xl, xh) = (x(u0 as f64 - 3.5), x(u1 as f64 + 3.5));
    let (yl, yh) = (y(v0 as f64 - 3.5), y(cut.round() - 0.5));
    let thickness = 0.01;
    Ok(SceneObject {
        shape: ShapeSpec {
            label: "occluder".into(),
            primitive: Primitive::Box { x: xh - xl, y: yh - yl, z: thickness },
            colors: ColorScheme::Uniform { color: Srgb::gray(128) },
        },
        rotation: Matrix3::identity(),
        translation: Vector3::new((xl + xh) / 2.0, (yl + yh) / 2.0, z + thickness / 2.0),
    })
}

/// One object (instance 1) seen from `toward_camera` at `distance`, with an
/// occluder (instance 2) over the top `occlusion` of it when positive.
pub fn single_object_scene(
    shape: &ShapeSpec,
    toward_camera: Point3,
    distance: f64,
    occlusion: f64,
    camera: &SceneCamera,
) -> Result<RenderedScene> {
    let target =
        SceneObject { shape: shape.clone(), rotation: look_rotation(toward_camera), translation: Vector3::new(0.0, 0.0, distance) };
    let mut objects = vec![target];
    if occlusion > 0.0 {
        objects.push(occluder_for(&objects[0], occlusion, camera)?);
    }
    render_objects(&objects, camera)
}

/// All shapes standing side by side one meter away, each seen from a
/// different azimuth, with the top `occlusion` of the last one hidden.
pub fn row_scene(shapes: &[ShapeSpec], occlusion: f64, camera: &SceneCamera) -> Result<RenderedScene> {
    if shapes.is_empty() {
        return Err(Error::EmptyInput("no shapes to place".into()));
    }
    let spacing = 0.13;
    let x0 = -spacing * (shapes.len() - 1) as f64 / 2.0;
    let mut objects: Vec<SceneObject> = shapes
        .iter()
        .enumerate()
        .map(|(k, s)| SceneObject {
            shape: s.clone(),
            rotation: look_rotation(view_direction(0.4 + 0.7 * k as f64, 1.3)),
            translation: Vector3::new(x0 + spacing * k as f64, 0.0, 1.0),
        })
        .collect();
    if occlusion > 0.0 {
        let last = objects.last().expect("non-empty").clone();
        objects.push(occluder_for(&last, occlusion, camera)?);
    }
    render_objects(&objects, camera)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    pub azimuth: f64,
    pub polar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub shapes: Vec<ShapeSpec>,
    pub render: RenderParams,
    pub grid: CameraGrid,
    pub clouds: Vec<ManifestEntry>,
}

pub const MANIFEST_VERSION: u32 = 1;

/// Writes one binary PLY per cloud plus `manifest.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    shapes: &[ShapeSpec],
    grid: &CameraGrid,
    render: &RenderParams,
    clouds: &[LabeledCloud],
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(clouds.len());
    for (k, c) in clouds.iter().enumerate() {
        let file = format!("{:05}_{}.ply", k, shapes[c.label].label);
        write_ply(&c.cloud, &dir.join(&file), PlyFormat::BinaryLittleEndian)?;
        entries.push(ManifestEntry { file, label: shapes[c.label].label.clone(), azimuth: c.azimuth, polar: c.polar });
    }
    let manifest = Manifest { version: MANIFEST_VERSION, shapes: shapes.to_vec(), render: *render, grid: *grid, clouds: entries };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let m: Manifest = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .map_err(|e| Error::corrupt(format!("{}: {e}", path.display())))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch { found: m.version, expected: MANIFEST_VERSION });
    }
    Ok(m)
}

/// The desk-scale object suite: two same-shape pairs that differ only in
/// color, a two-tone capsule and a banded box. All dimensions are distinct
/// so every view has a well-defined bounding box.
pub fn desk_suite() -> Vec<ShapeSpec> {
    let cyl = Primitive::Cylinder { radius: 0.035, height: 0.20 };
    let bx = Primitive::Box { x: 0.05, y: 0.09, z: 0.18 };
    vec![
        ShapeSpec { label: "red_cylinder".into(), primitive: cyl.clone(), colors: ColorScheme::Uniform { color: Srgb::new(200, 30, 30) } },
        ShapeSpec { label: "green_cylinder".into(), primitive: cyl, colors: ColorScheme::Uniform { color: Srgb::new(40, 170, 60) } },
        ShapeSpec { label: "blue_box".into(), primitive: bx.clone(), colors: ColorScheme::Uniform { color: Srgb::new(40, 70, 200) } },
        ShapeSpec { label: "yellow_box".into(), primitive: bx, colors: ColorScheme::Uniform { color: Srgb::new(230, 200, 40) } },
        ShapeSpec {
            label: "two_tone_capsule".into(),
            primitive: Primitive::Capsule { radius: 0.03, length: 0.14 },
            colors: ColorScheme::TwoTone { low: Srgb::new(240, 130, 20), high: Srgb::new(120, 40, 160) },
        },
        ShapeSpec {
            label: "banded_box".into(),
            primitive: Primitive::Box { x: 0.04, y: 0.065, z: 0.24 },
            colors: ColorScheme::Bands { colors: vec![Srgb::new(240, 240, 240), Srgb::new(30, 30, 110), Srgb::new(220, 40, 40)] },
        },
    ]
}
