use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::color_metric::Srgb;
use crate::error::{Error, Result};

use super::ColoredPointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Writes x/y/z as 32-bit floats and red/green/blue as 8-bit integers.
pub fn write_ply(cloud: &ColoredPointCloud, path: &Path, format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        let [x, y, z] = p.map(|v| v as f32);
        match format {
            PlyFormat::Ascii => writeln!(w, "{x} {y} {z} {} {} {}", c.r, c.g, c.b)?,
            PlyFormat::BinaryLittleEndian => {
                for v in [x, y, z] {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&c.channels())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(Error::corrupt(format!("unknown PLY property type {other:?}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

struct Header {
    format: PlyFormat,
    vertices: usize,
    props: Vec<(String, Scalar)>,
}

fn parse_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(Error::corrupt("PLY header ended early"));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim() != "ply" {
        return Err(Error::corrupt("missing PLY magic"));
    }
    let mut format = None;
    let mut vertices = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    loop {
        next(&mut line)?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => return Err(Error::corrupt(format!("unsupported PLY format {other}"))),
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertices = Some(count.parse().map_err(|_| Error::corrupt(format!("bad vertex count {count:?}")))?);
                } else if vertices.is_none() {
                    return Err(Error::corrupt("elements before the vertex element are not supported"));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(Error::corrupt("list properties on vertices are not supported")),
            ["property", ty, name] if in_vertex => props.push((name.to_string(), Scalar::parse(ty)?)),
            _ => {}
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| Error::corrupt("PLY header lacks a format line"))?,
        vertices: vertices.ok_or_else(|| Error::corrupt("PLY header lacks a vertex element"))?,
        props,
    })
}

/// Reads an ASCII or little-endian binary PLY with vertex x/y/z and optional
/// red/green/blue. Missing colors default to mid gray.
pub fn read_ply(path: &Path) -> Result<ColoredPointCloud> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let h = parse_header(&mut r)?;
    let find = |n: &str| h.props.iter().position(|(name, _)| name == n);
    let xyz = [find("x"), find("y"), find("z")];
    let rgb = [find("red"), find("green"), find("blue")];
    if xyz.iter().any(Option::is_none) {
        return Err(Error::corrupt("PLY vertices need x, y and z"));
    }
    let mut values = vec![0.0; h.props.len()];
    let mut cloud = ColoredPointCloud::default();
    let mut line = String::new();
    let stride: usize = h.props.iter().map(|(_, t)| t.size()).sum();
    let mut buf = vec![0u8; stride];
    for k in 0..h.vertices {
        match h.format {
            PlyFormat::Ascii => {
                line.clear();
                if r.read_line(&mut line)? == 0 {
                    return Err(Error::corrupt(format!("PLY ended after {k} of {} vertices", h.vertices)));
                }
                let mut it = line.split_whitespace();
                for (v, (_, ty)) in values.iter_mut().zip(&h.props) {
                    let t = it.next().ok_or_else(|| Error::corrupt(format!("vertex {k} has too few values")))?;
                    let bad = |_| Error::corrupt(format!("vertex {k}: bad number {t:?}"));
                    // single-precision text must round to the same value a binary file would hold
                    *v = if *ty == Scalar::F32 { f64::from(t.parse::<f32>().map_err(bad)?) } else { t.parse().map_err(bad)? };
                }
            }
            PlyFormat::BinaryLittleEndian => {
                r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("PLY ended after {k} of {} vertices", h.vertices)))?;
                let mut off = 0;
                for (v, (_, ty)) in values.iter_mut().zip(&h.props) {
                    *v = ty.decode_le(&buf[off..]);
                    off += ty.size();
                }
            }
        }
        let p = xyz.map(|i| values[i.expect("checked above")]);
        let c = match rgb {
            [Some(r), Some(g), Some(b)] => Srgb::new(values[r] as u8, values[g] as u8, values[b] as u8),
            _ => Srgb::gray(128),
        };
        cloud.points.push(p);
        cloud.colors.push(c);
    }
    ColoredPointCloud::new(cloud.points, cloud.colors)
}
