use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::color_metric::Srgb;
use crate::error::{Error, Result};

use super::{CameraIntrinsics, ColoredPointCloud};

/// Row-major 16-bit depth image; 0 marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Srgb>,
}

/// Instance ids per pixel, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u32>,
}

macro_rules! image_common {
    ($t:ty, $px:ty, $zero:expr) => {
        impl $t {
            pub fn new(width: usize, height: usize) -> Self {
                Self { width, height, data: vec![$zero; width * height] }
            }

            pub fn get(&self, u: usize, v: usize) -> $px {
                self.data[v * self.width + u]
            }

            pub fn set(&mut self, u: usize, v: usize, value: $px) {
                self.data[v * self.width + u] = value;
            }
        }
    };
}

image_common!(DepthImage, u16, 0);
image_common!(RgbImage, Srgb, Srgb::gray(0));
image_common!(SegmentationMap, u32, 0);

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Image(e.to_string())
}

fn open_png(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

fn save_png(path: &Path, width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, bytes: &[u8]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

impl DepthImage {
    pub fn read_png(path: &Path) -> Result<Self> {
        let (info, buf) = open_png(path)?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
            return Err(Error::Image(format!("{}: depth must be 16-bit grayscale", path.display())));
        }
        let data = buf.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
        Ok(Self { width: info.width as usize, height: info.height as usize, data })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_be_bytes()).collect();
        save_png(path, self.width, self.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
    }
}

impl RgbImage {
    pub fn read_png(path: &Path) -> Result<Self> {
        let (info, buf) = open_png(path)?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Image(format!("{}: color image must be 8-bit", path.display())));
        }
        let stride = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(Error::Image(format!("{}: unsupported color type {other:?}", path.display()))),
        };
        let data = buf.chunks_exact(stride).map(|b| Srgb::new(b[0], b[1], b[2])).collect();
        Ok(Self { width: info.width as usize, height: info.height as usize, data })
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|c| c.channels()).collect();
        save_png(path, self.width, self.height, png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
    }
}

impl SegmentationMap {
    pub fn read_png(path: &Path) -> Result<Self> {
        let (info, buf) = open_png(path)?;
        if info.color_type != png::ColorType::Grayscale {
            return Err(Error::Image(format!("{}: segmentation must be single-channel", path.display())));
        }
        let data = match info.bit_depth {
            png::BitDepth::Eight => buf.iter().map(|&v| u32::from(v)).collect(),
            png::BitDepth::Sixteen => buf.chunks_exact(2).map(|b| u32::from(u16::from_be_bytes([b[0], b[1]]))).collect(),
            other => return Err(Error::Image(format!("{}: unsupported bit depth {other:?}", path.display()))),
        };
        Ok(Self { width: info.width as usize, height: info.height as usize, data })
    }

    /// Writes 8-bit when every id fits, 16-bit otherwise.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let max = self.data.iter().copied().max().unwrap_or(0);
        if max > u32::from(u16::MAX) {
            return Err(Error::invalid(format!("instance id {max} does not fit a 16-bit map")));
        }
        if max <= 255 {
            let bytes: Vec<u8> = self.data.iter().map(|&v| v as u8).collect();
            save_png(path, self.width, self.height, png::ColorType::Grayscale, png::BitDepth::Eight, &bytes)
        } else {
            let bytes: Vec<u8> = self.data.iter().flat_map(|&v| (v as u16).to_be_bytes()).collect();
            save_png(path, self.width, self.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
        }
    }

    /// Distinct non-zero ids in ascending order.
    pub fn instances(&self) -> Vec<u32> {
        let set: std::collections::BTreeSet<u32> = self.data.iter().copied().filter(|&v| v != 0).collect();
        set.into_iter().collect()
    }
}

fn check_aligned(w: usize, h: usize, other: (usize, usize), what: &'static str) -> Result<()> {
    if (w, h) != other {
        return Err(Error::DimensionMismatch { context: what, expected: w * h, got: other.0 * other.1 });
    }
    Ok(())
}

/// Camera-frame point of pixel `(u, v)` at metric depth `z`.
pub fn pixel_to_point(u: usize, v: usize, z: f64, k: &CameraIntrinsics) -> [f64; 3] {
    [(u as f64 - k.cx) * z / k.fx, (v as f64 - k.cy) * z / k.fy, z]
}

/// Pinhole back-projection of the pixels labeled `instance` that carry a depth.
pub fn backproject(
    depth: &DepthImage,
    rgb: &RgbImage,
    seg: &SegmentationMap,
    instance: u32,
    intrinsics: &CameraIntrinsics,
) -> Result<ColoredPointCloud> {
    intrinsics.validate()?;
    check_aligned(depth.width, depth.height, (rgb.width, rgb.height), "rgb image size")?;
    check_aligned(depth.width, depth.height, (seg.width, seg.height), "segmentation size")?;
    let mut cloud = ColoredPointCloud::default();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let i = v * depth.width + u;
            if seg.data[i] != instance || depth.data[i] == 0 {
                continue;
            }
            let z = f64::from(depth.data[i]) * intrinsics.depth_scale;
            cloud.points.push(pixel_to_point(u, v, z, intrinsics));
            cloud.colors.push(rgb.data[i]);
        }
    }
    if cloud.is_empty() {
        return Err(Error::EmptyInput(format!("instance {instance} has no pixels with depth")));
    }
    Ok(cloud)
}

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Pixels of `instance` with an 8-neighbor of a different instance whose
/// depth is strictly smaller. Missing depths never count as closer.
pub fn occlusion_boundary(seg: &SegmentationMap, depth: &DepthImage, instance: u32) -> Result<Vec<(usize, usize)>> {
    check_aligned(seg.width, seg.height, (depth.width, depth.height), "depth image size")?;
    if !seg.data.contains(&instance) {
        return Err(Error::MissingInstance(instance));
    }
    let (w, h) = (seg.width as isize, seg.height as isize);
    let mut out = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let i = (v * w + u) as usize;
            if seg.data[i] != instance || depth.data[i] == 0 {
                continue;
            }
            let own = depth.data[i];
            let hit = NEIGHBORS.iter().any(|&(du, dv)| {
                let (nu, nv) = (u + du, v + dv);
                if nu < 0 || nv < 0 || nu >= w || nv >= h {
                    return false;
                }
                let j = (nv * w + nu) as usize;
                let other = seg.data[j];
                other != 0 && other != instance && depth.data[j] != 0 && depth.data[j] < own
            });
            if hit {
                out.push((u as usize, v as usize));
            }
        }
    }
    Ok(out)
}

pub fn detect_occlusion(seg: &SegmentationMap, depth: &DepthImage, instance: u32) -> Result<bool> {
    Ok(!occlusion_boundary(seg, depth, instance)?.is_empty())
}
