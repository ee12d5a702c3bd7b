//! End-to-end orchestration: network build, training, scene recognition and
//! evaluation, driven by a versioned TOML configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{fuse_predictions, train, Mlp, TrainConfig, Winner};
use crate::color_network::{ColorNetwork, NetworkParams};
use crate::descriptor::{compute_descriptors, Descriptor, DescriptorConfig, DescriptorKind};
use crate::error::{Error, Result};
use crate::pointcloud::{
    mirror_augment, occlusion_boundary, pixel_to_point, read_ply, remove_outliers, reorient_for_occlusion, scale,
    view_normalize, voxel_downsample, ColoredPointCloud, DepthImage, Point3, RgbImage, RigidTransform,
    SegmentationMap,
};
use crate::synth::{desk_suite, generate_training_set, read_manifest, CameraGrid, RenderParams, RenderedScene, SceneCamera, ShapeSpec};

pub const CONFIG_VERSION: u32 = 1;
pub const REPORT_VERSION: u32 = 1;
pub const TOPS_MODEL_FILE: &str = "tops.tcml";
pub const TOPS2_MODEL_FILE: &str = "tops2.tcml";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    /// Voxel edge in scaled units; 0 disables downsampling.
    pub voxel: f64,
    /// Neighbors for statistical outlier removal; 0 disables it.
    pub outlier_k: usize,
    pub outlier_std_ratio: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { voxel: 0.01, outlier_k: 20, outlier_std_ratio: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub grid: CameraGrid,
    pub render: RenderParams,
    pub shapes: Vec<ShapeSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { grid: CameraGrid::desk(), render: RenderParams::default(), shapes: desk_suite() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub sigma_s: f64,
    /// Also train on the x-and-y mirrored copy of every view.
    pub mirror_double: bool,
    pub network_path: PathBuf,
    pub descriptor: DescriptorConfig,
    pub preprocess: Preprocess,
    pub network: NetworkParams,
    pub train: TrainConfig,
    pub camera: SceneCamera,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            sigma_s: 2.5,
            mirror_double: false,
            network_path: PathBuf::from("color_network.json"),
            descriptor: DescriptorConfig::with_strips(0.1, 0.025, 8, 20),
            preprocess: Preprocess::default(),
            network: NetworkParams::default(),
            train: TrainConfig::default(),
            camera: SceneCamera::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// The desk-scale defaults with the fine camera grid.
    pub fn fine_grid() -> Self {
        let mut c = Self::default();
        c.synth.grid = CameraGrid::fine();
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::VersionMismatch { found: self.version, expected: CONFIG_VERSION });
        }
        if !(self.sigma_s > 0.0 && self.sigma_s.is_finite()) {
            return Err(Error::invalid(format!("sigma_s must be positive, got {}", self.sigma_s)));
        }
        let p = &self.preprocess;
        if !(p.voxel >= 0.0 && p.voxel.is_finite()) || (p.outlier_k > 0 && !(p.outlier_std_ratio > 0.0)) {
            return Err(Error::invalid("preprocessing needs a non-negative voxel size and a positive outlier ratio"));
        }
        self.descriptor.validate()?;
        self.network.validate()?;
        self.train.validate()?;
        self.camera.intrinsics.validate()?;
        self.synth.grid.views()?;
        for s in &self.synth.shapes {
            s.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("configuration: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

pub fn preprocess(cloud: &ColoredPointCloud, p: &Preprocess) -> Result<ColoredPointCloud> {
    let mut c = if p.voxel > 0.0 { voxel_downsample(cloud, p.voxel)? } else { cloud.clone() };
    if p.outlier_k > 0 && c.len() > p.outlier_k {
        c = remove_outliers(&c, p.outlier_k, p.outlier_std_ratio)?;
    }
    Ok(c)
}

/// Scale, preprocess and view-normalize. The transform maps scaled input
/// coordinates into the normalized frame.
pub fn normalize_cloud(cloud: &ColoredPointCloud, cfg: &PipelineConfig) -> Result<(ColoredPointCloud, RigidTransform)> {
    let c = preprocess(&scale(cloud, cfg.sigma_s)?, &cfg.preprocess)?;
    if c.is_empty() {
        return Err(Error::EmptyInput("preprocessing removed every point".into()));
    }
    view_normalize(&c)
}

/// Normalizes a raw cloud and turns its occluded end, if any, away from the
/// slicing start. `boundary` holds occlusion boundary points in the cloud's
/// input frame; an empty boundary means the object is unoccluded.
pub fn prepare_for_recognition(cloud: &ColoredPointCloud, boundary: &[Point3], cfg: &PipelineConfig) -> Result<ColoredPointCloud> {
    let (normalized, tf) = normalize_cloud(cloud, cfg)?;
    let b: Vec<Point3> = boundary.iter().map(|p| tf.apply(&p.map(|v| v * cfg.sigma_s))).collect();
    Ok(reorient_for_occlusion(&normalized, &b))
}

/// Descriptors of a raw cloud as the recognition path computes them.
pub fn describe_cloud(
    cloud: &ColoredPointCloud,
    boundary: &[Point3],
    network: &ColorNetwork,
    cfg: &PipelineConfig,
) -> Result<(Descriptor, Descriptor)> {
    let oriented = prepare_for_recognition(cloud, boundary, cfg)?;
    let (tops, tops2) = compute_descriptors(&oriented, Some(network), &cfg.descriptor)?;
    Ok((tops, tops2.expect("network supplied")))
}

/// A labeled collection of clouds with its class table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub labels: Vec<usize>,
    pub clouds: Vec<ColoredPointCloud>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Render the configured shapes over the configured camera grid.
    Synth,
    /// A directory with `manifest.json`, or with one sub-directory of PLY files per class.
    Directory(PathBuf),
}

pub fn load_dataset(source: &DataSource, cfg: &PipelineConfig) -> Result<Dataset> {
    let data = match source {
        DataSource::Synth => {
            let s = &cfg.synth;
            let set = generate_training_set(&s.shapes, &s.grid, &s.render)?;
            Dataset {
                classes: s.shapes.iter().map(|x| x.label.clone()).collect(),
                labels: set.iter().map(|c| c.label).collect(),
                clouds: set.into_iter().map(|c| c.cloud).collect(),
            }
        }
        DataSource::Directory(dir) => load_directory(dir)?,
    };
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset has no clouds".into()));
    }
    Ok(data)
}

fn load_directory(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    if dir.join("manifest.json").exists() {
        let m = read_manifest(dir)?;
        let mut classes: Vec<String> = m.shapes.iter().map(|s| s.label.clone()).collect();
        for e in &m.clouds {
            if !classes.contains(&e.label) {
                classes.push(e.label.clone());
            }
        }
        let clouds = m.clouds.par_iter().map(|e| read_ply(&dir.join(&e.file))).collect::<Result<Vec<_>>>()?;
        let labels = m.clouds.iter().map(|e| classes.iter().position(|c| *c == e.label).expect("added above")).collect();
        return Ok(Dataset { classes, labels, clouds });
    }
    let mut classes = Vec::new();
    let mut files = Vec::new();
    let mut subdirs: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    for sub in subdirs {
        let mut plys: Vec<PathBuf> = std::fs::read_dir(&sub)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
            .collect();
        if plys.is_empty() {
            continue;
        }
        plys.sort();
        let label = classes.len();
        classes.push(sub.file_name().expect("directory entry").to_string_lossy().into_owned());
        files.extend(plys.into_iter().map(|p| (label, p)));
    }
    let clouds = files.par_iter().map(|(_, p)| read_ply(p)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { classes, labels: files.iter().map(|f| f.0).collect(), clouds })
}

/// Descriptor rows of every augmented view. Row `r` comes from cloud
/// `sources[r]`, augmentation `augmentations[r]` (0 is the unmirrored view).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub classes: Vec<String>,
    pub tops: Array2<f64>,
    pub tops2: Array2<f64>,
    pub labels: Vec<usize>,
    pub sources: Vec<usize>,
    pub augmentations: Vec<usize>,
}

impl TrainingSet {
    pub fn rows(&self, keep: impl Fn(usize) -> bool) -> (Array2<f64>, Array2<f64>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.labels.len()).filter(|&r| keep(r)).collect();
        let pick = |a: &Array2<f64>| a.select(ndarray::Axis(0), &idx);
        (pick(&self.tops), pick(&self.tops2), idx.iter().map(|&r| self.labels[r]).collect())
    }
}

fn stack(rows: Vec<Vec<f64>>) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.concat()).expect("equal row lengths")
}

/// Scale, normalize, mirror and describe every cloud of the dataset.
pub fn describe_training(data: &Dataset, network: &ColorNetwork, cfg: &PipelineConfig) -> Result<TrainingSet> {
    let per_cloud: Vec<Vec<(Descriptor, Descriptor)>> = data
        .clouds
        .par_iter()
        .enumerate()
        .map(|(id, cloud)| {
            let run = || -> Result<Vec<(Descriptor, Descriptor)>> {
                let (normalized, _) = normalize_cloud(cloud, cfg)?;
                mirror_augment(&normalized, cfg.mirror_double)
                    .iter()
                    .map(|c| {
                        let (t, t2) = compute_descriptors(c, Some(network), &cfg.descriptor)?;
                        Ok((t, t2.expect("network supplied")))
                    })
                    .collect()
            };
            run().map_err(|e| Error::Sample { id, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let (mut tops, mut tops2, mut labels, mut sources, mut augmentations) = (vec![], vec![], vec![], vec![], vec![]);
    for (id, views) in per_cloud.into_iter().enumerate() {
        for (a, (t, t2)) in views.into_iter().enumerate() {
            tops.push(t.values);
            tops2.push(t2.values);
            labels.push(data.labels[id]);
            sources.push(id);
            augmentations.push(a);
        }
    }
    Ok(TrainingSet { classes: data.classes.clone(), tops: stack(tops), tops2: stack(tops2), labels, sources, augmentations })
}

/// The shape-only (TOPS) and shape-and-color (TOPS2) classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub tops: Mlp,
    pub tops2: Mlp,
}

impl Models {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.tops.save(&dir.join(TOPS_MODEL_FILE))?;
        self.tops2.save(&dir.join(TOPS2_MODEL_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Self { tops: Mlp::load(&dir.join(TOPS_MODEL_FILE))?, tops2: Mlp::load(&dir.join(TOPS2_MODEL_FILE))? };
        if m.tops.classes != m.tops2.classes {
            return Err(Error::ClassTableMismatch);
        }
        Ok(m)
    }

    pub fn classes(&self) -> &[String] {
        &self.tops.classes
    }

    /// Checks the input widths against the descriptor layout of `cfg` and `network`.
    pub fn check_layout(&self, network: &ColorNetwork, cfg: &DescriptorConfig) -> Result<()> {
        let t = cfg.max_slices * cfg.block_len(DescriptorKind::Tops, network.n_c());
        let t2 = cfg.max_slices * cfg.block_len(DescriptorKind::Tops2, network.n_c());
        if self.tops.input_dim() != t {
            return Err(Error::DimensionMismatch { context: "TOPS model input", expected: t, got: self.tops.input_dim() });
        }
        if self.tops2.input_dim() != t2 {
            return Err(Error::DimensionMismatch { context: "TOPS2 model input", expected: t2, got: self.tops2.input_dim() });
        }
        Ok(())
    }

    pub fn predict(&self, tops: &Descriptor, tops2: &Descriptor) -> Result<Prediction> {
        let p1 = self.tops.forward(&tops.values)?;
        let p2 = self.tops2.forward(&tops2.values)?;
        let fused = fuse_predictions(&self.tops.classes, &p1, &self.tops2.classes, &p2)?;
        let (c1, q1) = crate::classifier::argmax(&p1);
        let (c2, q2) = crate::classifier::argmax(&p2);
        Ok(Prediction { class: fused.class, confidence: fused.confidence, winner: fused.winner, tops: (c1, q1), tops2: (c2, q2) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f64,
    pub winner: Winner,
    /// Top class and probability of each model on its own.
    pub tops: (usize, f64),
    pub tops2: (usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub input_dim: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub version: u32,
    pub clouds: usize,
    pub samples: usize,
    pub epochs: usize,
    pub classes: Vec<String>,
    pub tops: ModelSummary,
    pub tops2: ModelSummary,
}

impl TrainingReport {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

fn fit(x: &Array2<f64>, labels: &[usize], classes: &[String], cfg: &TrainConfig) -> Result<(Mlp, ModelSummary)> {
    let mut m = Mlp::new(x.ncols(), classes.to_vec(), cfg.seed)?;
    let losses = train(&mut m, x, labels, cfg)?;
    let summary = ModelSummary {
        input_dim: x.ncols(),
        final_loss: *losses.last().expect("at least one epoch"),
        train_accuracy: m.accuracy(x.view(), labels)?,
    };
    Ok((m, summary))
}

/// Trains both classifiers on the given rows.
pub fn train_models(
    tops: &Array2<f64>,
    tops2: &Array2<f64>,
    labels: &[usize],
    classes: &[String],
    cfg: &TrainConfig,
) -> Result<(Models, ModelSummary, ModelSummary)> {
    let (m1, s1) = fit(tops, labels, classes, cfg)?;
    let (m2, s2) = fit(tops2, labels, classes, cfg)?;
    Ok((Models { tops: m1, tops2: m2 }, s1, s2))
}

fn write_resolved_config(cfg: &PipelineConfig, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    cfg.save(path)
}

/// Builds the color network, writes it to `out` with the resolved
/// configuration beside it (`<out>.config.toml`).
pub fn cmd_build_network(cfg: &PipelineConfig, out: &Path) -> Result<ColorNetwork> {
    cfg.validate()?;
    let net = ColorNetwork::build(&cfg.network)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    net.write(out)?;
    let mut side = out.as_os_str().to_owned();
    side.push(".config.toml");
    write_resolved_config(cfg, Path::new(&side))?;
    Ok(net)
}

/// Trains both models from `source` and writes them, the training report and
/// the resolved configuration into `out`.
pub fn cmd_train(cfg: &PipelineConfig, source: &DataSource, out: &Path) -> Result<TrainingReport> {
    cfg.validate()?;
    let network = ColorNetwork::read(&cfg.network_path)?;
    let data = load_dataset(source, cfg)?;
    let set = describe_training(&data, &network, cfg)?;
    let (models, s1, s2) = train_models(&set.tops, &set.tops2, &set.labels, &set.classes, &cfg.train)?;
    models.save(out)?;
    let report = TrainingReport {
        version: REPORT_VERSION,
        clouds: data.len(),
        samples: set.labels.len(),
        epochs: cfg.train.epochs,
        classes: set.classes,
        tops: s1,
        tops2: s2,
    };
    std::fs::write(out.join("train_report.toml"), report.to_text())?;
    write_resolved_config(cfg, &out.join("config.toml"))?;
    Ok(report)
}

pub const DEPTH_FILE: &str = "depth.png";
pub const RGB_FILE: &str = "rgb.png";
pub const SEGMENTATION_FILE: &str = "segmentation.png";

pub fn write_scene(scene: &RenderedScene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    scene.depth.write_png(&dir.join(DEPTH_FILE))?;
    scene.rgb.write_png(&dir.join(RGB_FILE))?;
    scene.segmentation.write_png(&dir.join(SEGMENTATION_FILE))
}

pub fn read_scene(dir: &Path) -> Result<RenderedScene> {
    Ok(RenderedScene {
        depth: DepthImage::read_png(&dir.join(DEPTH_FILE))?,
        rgb: RgbImage::read_png(&dir.join(RGB_FILE))?,
        segmentation: SegmentationMap::read_png(&dir.join(SEGMENTATION_FILE))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub instance: u32,
    pub class: String,
    pub confidence: f64,
    pub occluded: bool,
    pub winner: Winner,
    pub tops_class: String,
    pub tops_confidence: f64,
    pub tops2_class: String,
    pub tops2_confidence: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecognitionReport {
    pub results: Vec<RecognitionResult>,
    pub warnings: Vec<String>,
}

impl RecognitionReport {
    pub const CSV_HEADER: &'static str =
        "instance,class,confidence,occluded,winner,tops_class,tops_confidence,tops2_class,tops2_confidence,points";

    pub fn summary(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            version: u32,
            objects: usize,
            occluded: usize,
            warnings: &'a [String],
        }
        let s = Summary {
            version: REPORT_VERSION,
            objects: self.results.len(),
            occluded: self.results.iter().filter(|r| r.occluded).count(),
            warnings: &self.warnings,
        };
        toml::to_string(&s).expect("summary serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.results {
            let w = match r.winner {
                Winner::Tops => "tops",
                Winner::Tops2 => "tops2",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.instance, r.class, r.confidence, r.occluded, w, r.tops_class, r.tops_confidence, r.tops2_class,
                r.tops2_confidence, r.points
            )
            .expect("writing to a string");
        }
        out
    }

    pub fn to_text(&self) -> String {
        format!("{}\n{}", self.summary(), self.to_csv())
    }

    /// Writes `report.toml` and `objects.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.toml"), self.summary())?;
        std::fs::write(dir.join("objects.csv"), self.to_csv())?;
        Ok(())
    }
}

fn recognize_instance(
    scene: &RenderedScene,
    instance: u32,
    models: &Models,
    network: &ColorNetwork,
    cfg: &PipelineConfig,
) -> Result<RecognitionResult> {
    let k = &cfg.camera.intrinsics;
    let cloud = crate::pointcloud::backproject(&scene.depth, &scene.rgb, &scene.segmentation, instance, k)?;
    let w = scene.depth.width;
    let boundary: Vec<Point3> = occlusion_boundary(&scene.segmentation, &scene.depth, instance)?
        .into_iter()
        .map(|(u, v)| pixel_to_point(u, v, f64::from(scene.depth.data[v * w + u]) * k.depth_scale, k))
        .collect();
    let (tops, tops2) = describe_cloud(&cloud, &boundary, network, cfg)?;
    let p = models.predict(&tops, &tops2)?;
    let name = |c: usize| models.classes()[c].clone();
    Ok(RecognitionResult {
        instance,
        class: name(p.class),
        confidence: p.confidence,
        occluded: !boundary.is_empty(),
        winner: p.winner,
        tops_class: name(p.tops.0),
        tops_confidence: p.tops.1,
        tops2_class: name(p.tops2.0),
        tops2_confidence: p.tops2.1,
        points: cloud.len(),
    })
}

/// Recognizes every segmented instance on a pool of `jobs` threads. Results
/// and warnings come out in instance order regardless of `jobs`.
pub fn cmd_recognize(
    scene: &RenderedScene,
    models: &Models,
    network: &ColorNetwork,
    cfg: &PipelineConfig,
    jobs: usize,
) -> Result<RecognitionReport> {
    cfg.validate()?;
    models.check_layout(network, &cfg.descriptor)?;
    let instances = scene.segmentation.instances();
    let mut report = RecognitionReport::default();
    if instances.is_empty() {
        report.warnings.push("segmentation map contains no object instances".into());
        log::warn!("segmentation map contains no object instances");
        return Ok(report);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    let outcomes: Vec<Result<RecognitionResult>> =
        pool.install(|| instances.par_iter().map(|&id| recognize_instance(scene, id, models, network, cfg)).collect());
    for (id, r) in instances.iter().zip(outcomes) {
        match r {
            Ok(r) => report.results.push(r),
            Err(e @ (Error::EmptyInput(_) | Error::DescriptorOverflow { .. })) => {
                log::warn!("instance {id} skipped: {e}");
                report.warnings.push(format!("instance {id} skipped: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub tops: f64,
    pub tops2: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: String,
    pub samples: usize,
    pub accuracy: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    /// Fused accuracy of each fold.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: u32,
    pub samples: usize,
    pub overall: Accuracy,
    pub per_class: Vec<ClassAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<FoldSummary>,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

/// Tallies `(label, tops, tops2, fused)` predictions into per-class and overall accuracies.
fn tally(classes: &[String], outcomes: &[(usize, usize, usize, usize)]) -> (Accuracy, Vec<ClassAccuracy>) {
    let mut per: BTreeMap<usize, (usize, [usize; 3])> = BTreeMap::new();
    let mut all = [0usize; 3];
    for &(y, a, b, c) in outcomes {
        let e = per.entry(y).or_default();
        e.0 += 1;
        for (k, hit) in [a == y, b == y, c == y].into_iter().enumerate() {
            e.1[k] += usize::from(hit);
            all[k] += usize::from(hit);
        }
    }
    let acc = |h: [usize; 3], n: usize| {
        let n = n.max(1) as f64;
        Accuracy { tops: h[0] as f64 / n, tops2: h[1] as f64 / n, fused: h[2] as f64 / n }
    };
    let per_class = per
        .into_iter()
        .map(|(y, (n, h))| ClassAccuracy { class: classes[y].clone(), samples: n, accuracy: acc(h, n) })
        .collect();
    (acc(all, outcomes.len()), per_class)
}

/// Maps dataset labels onto the model class table.
fn model_labels(data: &Dataset, models: &Models) -> Result<Vec<usize>> {
    data.labels
        .iter()
        .map(|&y| models.classes().iter().position(|c| *c == data.classes[y]).ok_or(Error::ClassTableMismatch))
        .collect()
}

/// Accuracy of both models and their fusion on every cloud of `source`.
pub fn cmd_evaluate(source: &DataSource, models: &Models, network: &ColorNetwork, cfg: &PipelineConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    models.check_layout(network, &cfg.descriptor)?;
    let data = load_dataset(source, cfg)?;
    evaluate_dataset(&data, models, network, cfg)
}

pub fn evaluate_dataset(data: &Dataset, models: &Models, network: &ColorNetwork, cfg: &PipelineConfig) -> Result<EvaluationReport> {
    if data.is_empty() {
        return Err(Error::EmptyInput("dataset has no clouds".into()));
    }
    let labels = model_labels(data, models)?;
    let outcomes: Vec<(usize, usize, usize, usize)> = data
        .clouds
        .par_iter()
        .zip(&labels)
        .enumerate()
        .map(|(id, (c, &y))| {
            let run = || -> Result<_> {
                let (t, t2) = describe_cloud(c, &[], network, cfg)?;
                let p = models.predict(&t, &t2)?;
                Ok((y, p.tops.0, p.tops2.0, p.class))
            };
            run().map_err(|e| Error::Sample { id, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let (overall, per_class) = tally(models.classes(), &outcomes);
    Ok(EvaluationReport { version: REPORT_VERSION, samples: outcomes.len(), overall, per_class, folds: None })
}

/// Stratified fold assignment: each class is shuffled with one seeded
/// generator (classes in label order) and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::invalid(format!("cannot split {} samples into {folds} folds", labels.len())));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for ids in by_class.values_mut() {
        ids.shuffle(&mut rng);
        for (rank, &i) in ids.iter().enumerate() {
            fold[i] = rank % folds;
        }
    }
    Ok(fold)
}

/// k-fold cross-validation: retrains both models on each fold's complement
/// and scores the unmirrored views of the held-out clouds.
pub fn cross_validate(source: &DataSource, network: &ColorNetwork, cfg: &PipelineConfig, folds: usize) -> Result<EvaluationReport> {
    cfg.validate()?;
    let data = load_dataset(source, cfg)?;
    let set = describe_training(&data, network, cfg)?;
    let assignment = stratified_folds(&data.labels, folds, cfg.train.seed)?;
    let mut outcomes = Vec::new();
    let mut accuracies = Vec::with_capacity(folds);
    for f in 0..folds {
        let (x1, x2, y) = set.rows(|r| assignment[set.sources[r]] != f);
        let (models, _, _) = train_models(&x1, &x2, &y, &set.classes, &cfg.train)?;
        let (t1, t2, yt) = set.rows(|r| assignment[set.sources[r]] == f && set.augmentations[r] == 0);
        let mut hits = 0;
        for i in 0..yt.len() {
            let p1 = models.tops.forward(t1.row(i).as_slice().expect("standard layout"))?;
            let p2 = models.tops2.forward(t2.row(i).as_slice().expect("standard layout"))?;
            let fused = fuse_predictions(&set.classes, &p1, &set.classes, &p2)?;
            let o = (yt[i], crate::classifier::argmax(&p1).0, crate::classifier::argmax(&p2).0, fused.class);
            hits += usize::from(o.3 == o.0);
            outcomes.push(o);
        }
        accuracies.push(hits as f64 / yt.len().max(1) as f64);
        log::info!("fold {f}: fused accuracy {:.4}", accuracies[f]);
    }
    let mean = accuracies.iter().sum::<f64>() / folds as f64;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (folds - 1) as f64).sqrt();
    let (overall, per_class) = tally(&set.classes, &outcomes);
    Ok(EvaluationReport {
        version: REPORT_VERSION,
        samples: outcomes.len(),
        overall,
        per_class,
        folds: Some(FoldSummary { accuracies, mean, std }),
    })
}
