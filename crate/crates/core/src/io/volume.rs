//! MetaImage-style volumes: a `key = value` text header followed by (or
//! pointing to) a little-endian binary payload.
//!
//! Headers are written with these keys, in this order:
//!
//! ```text
//! ObjectType = Image
//! NDims = 3
//! DimSize = nx ny nz
//! ElementSpacing = sx sy sz
//! Offset = ox oy oz
//! ElementNumberOfChannels = 1 | 3
//! ElementType = MET_FLOAT | MET_DOUBLE | MET_SHORT | MET_UCHAR
//! BinaryData = True
//! BinaryDataByteOrderMSB = False
//! ElementDataFile = LOCAL | <file>
//! ```
//!
//! `.mha` files carry the payload after the header (`LOCAL`); any other
//! extension gets a sibling `.raw` payload file. Displacement fields are
//! stored as three interleaved channels of world-space millimetres.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{DisplacementField, LabelVolume, ScalarVolume, WorldGrid};
use crate::io::{atomic_write, read_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Float32,
    Float64,
    Int16,
    UInt8,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::Float32 => 4,
            ElementType::Float64 => 8,
            ElementType::Int16 => 2,
            ElementType::UInt8 => 1,
        }
    }

    pub fn header_name(self) -> &'static str {
        match self {
            ElementType::Float32 => "MET_FLOAT",
            ElementType::Float64 => "MET_DOUBLE",
            ElementType::Int16 => "MET_SHORT",
            ElementType::UInt8 => "MET_UCHAR",
        }
    }

    /// Accepts the MetaImage names and the plain `float32`-style aliases.
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "met_float" | "float32" | "float" => ElementType::Float32,
            "met_double" | "float64" | "double" => ElementType::Float64,
            "met_short" | "int16" | "short" => ElementType::Int16,
            "met_uchar" | "uint8" | "uchar" => ElementType::UInt8,
            _ => return None,
        })
    }

    pub fn is_integer(self) -> bool {
        matches!(self, ElementType::Int16 | ElementType::UInt8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataFile {
    Local,
    External(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub offset: [f64; 3],
    pub element_type: ElementType,
    pub channels: usize,
    pub data_file: DataFile,
}

impl VolumeHeader {
    pub fn grid(&self) -> Result<WorldGrid> {
        WorldGrid::new(self.dims, self.spacing, self.offset)
    }

    pub fn payload_len(&self) -> usize {
        self.dims.iter().product::<usize>() * self.channels * self.element_type.size()
    }

    pub fn to_text(&self) -> String {
        let v = |a: [f64; 3]| format!("{} {} {}", a[0], a[1], a[2]);
        let file = match &self.data_file {
            DataFile::Local => "LOCAL".to_string(),
            DataFile::External(f) => f.clone(),
        };
        format!(
            "ObjectType = Image\nNDims = 3\nDimSize = {} {} {}\nElementSpacing = {}\nOffset = {}\n\
             ElementNumberOfChannels = {}\nElementType = {}\nBinaryData = True\n\
             BinaryDataByteOrderMSB = False\nElementDataFile = {}\n",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            v(self.spacing),
            v(self.offset),
            self.channels,
            self.element_type.header_name(),
            file
        )
    }
}

/// Any volume the format can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Scalar(ScalarVolume),
    Labels(LabelVolume),
    Field(DisplacementField),
}

fn parse_triple<T: std::str::FromStr>(path: &Path, line: usize, key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    let bad = || Error::Parse { path: path.into(), line, message: format!("{key} needs three numbers, got `{value}`") };
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| bad())?);
    }
    out.try_into().map_err(|_| bad())
}

/// Parses the header; returns it with the byte offset where a `LOCAL`
/// payload starts.
pub fn parse_header(path: &Path, bytes: &[u8]) -> Result<(VolumeHeader, usize)> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut ndims = None;
    let mut dims = None;
    let mut spacing = None;
    let mut offset = None;
    let mut element_type = None;
    let mut channels = None;
    let mut data_file = None;
    while pos < bytes.len() && data_file.is_none() {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
        line_no += 1;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| Error::Parse { path: path.into(), line: line_no, message: "header is not UTF-8".into() })?
            .trim();
        pos = (end + 1).min(bytes.len());
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse { path: path.into(), line: line_no, message: format!("expected `key = value`, got `{line}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        let parse_usize = |v: &str| {
            v.parse::<usize>().map_err(|_| Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("{key} must be a non-negative integer, got `{v}`"),
            })
        };
        match key {
            "NDims" => ndims = Some(parse_usize(value)?),
            "DimSize" => dims = Some(parse_triple::<usize>(path, line_no, key, value)?),
            "ElementSpacing" | "ElementSize" => spacing = Some(parse_triple::<f64>(path, line_no, key, value)?),
            "Offset" | "Origin" | "Position" => offset = Some(parse_triple::<f64>(path, line_no, key, value)?),
            "ElementNumberOfChannels" => channels = Some(parse_usize(value)?),
            "ElementType" => {
                element_type = Some(ElementType::parse(value).ok_or_else(|| Error::UnsupportedElementType {
                    path: path.into(),
                    element_type: value.to_string(),
                })?)
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => {
                if value.eq_ignore_ascii_case("true") {
                    return Err(Error::BigEndian { path: path.into() });
                }
            }
            "ElementDataFile" => {
                data_file = Some(if value.eq_ignore_ascii_case("local") {
                    DataFile::Local
                } else {
                    DataFile::External(value.to_string())
                })
            }
            _ => {}
        }
    }
    let missing = |key| Error::MissingKey { path: path.into(), key };
    let ndims = ndims.ok_or_else(|| missing("NDims"))?;
    if ndims != 3 {
        return Err(Error::Parse { path: path.into(), line: 0, message: format!("only 3-D volumes are supported, NDims = {ndims}") });
    }
    let header = VolumeHeader {
        dims: dims.ok_or_else(|| missing("DimSize"))?,
        spacing: spacing.ok_or_else(|| missing("ElementSpacing"))?,
        offset: offset.ok_or_else(|| missing("Offset"))?,
        element_type: element_type.ok_or_else(|| missing("ElementType"))?,
        channels: channels.unwrap_or(1),
        data_file: data_file.ok_or_else(|| missing("ElementDataFile"))?,
    };
    if header.channels != 1 && header.channels != 3 {
        return Err(Error::Parse {
            path: path.into(),
            line: 0,
            message: format!("ElementNumberOfChannels must be 1 or 3, got {}", header.channels),
        });
    }
    Ok((header, pos))
}

fn decode(ty: ElementType, payload: &[u8]) -> Vec<f64> {
    match ty {
        ElementType::Float32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        ElementType::Float64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        ElementType::Int16 => payload.chunks_exact(2).map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        ElementType::UInt8 => payload.iter().map(|&b| b as f64).collect(),
    }
}

fn encode(ty: ElementType, values: impl Iterator<Item = f64>, out: &mut Vec<u8>) {
    for v in values {
        match ty {
            ElementType::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            ElementType::Float64 => out.extend_from_slice(&v.to_le_bytes()),
            ElementType::Int16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            ElementType::UInt8 => out.push(v as u8),
        }
    }
}

/// Reads the header and the raw sample values.
pub fn read_raw(path: &Path) -> Result<(VolumeHeader, Vec<f64>)> {
    let bytes = read_file(path)?;
    let (header, start) = parse_header(path, &bytes)?;
    let (payload, payload_path): (Vec<u8>, PathBuf) = match &header.data_file {
        DataFile::Local => (bytes[start..].to_vec(), path.to_path_buf()),
        DataFile::External(name) => {
            let p = path.parent().unwrap_or(Path::new("")).join(name);
            (read_file(&p)?, p)
        }
    };
    let expected = header.payload_len();
    if payload.len() != expected {
        return Err(Error::SizeMismatch { path: payload_path, expected, actual: payload.len() });
    }
    header.grid()?;
    Ok((header.clone(), decode(header.element_type, &payload)))
}

/// Reads any supported volume: 3-channel volumes become displacement fields,
/// integer volumes label maps, and everything else scalar images.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let (header, values) = read_raw(path)?;
    let grid = header.grid()?;
    if header.channels == 3 {
        if header.element_type.is_integer() {
            return Err(Error::UnsupportedElementType {
                path: path.into(),
                element_type: format!("{} with 3 channels", header.element_type.header_name()),
            });
        }
        let vectors = values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        return Ok(Volume::Field(DisplacementField::new(grid, vectors)?));
    }
    if header.element_type.is_integer() {
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Parse { path: path.into(), line: 0, message: "label volumes must not contain negative values".into() });
        }
        return Ok(Volume::Labels(LabelVolume::from_labels(grid, values.iter().map(|&v| v as u16).collect())?));
    }
    Ok(Volume::Scalar(ScalarVolume::new(grid, values)?))
}

/// Reads a single-channel volume of any element type as an image.
pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    let (header, values) = read_raw(path)?;
    if header.channels != 1 {
        return Err(Error::InvalidParameter(format!("{}: expected a single-channel image", path.display())));
    }
    ScalarVolume::new(header.grid()?, values)
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    match read_volume(path)? {
        Volume::Labels(l) => Ok(l),
        _ => Err(Error::InvalidParameter(format!("{}: expected an integer label volume", path.display()))),
    }
}

pub fn read_field(path: &Path) -> Result<DisplacementField> {
    match read_volume(path)? {
        Volume::Field(f) => Ok(f),
        _ => Err(Error::InvalidParameter(format!("{}: expected a 3-channel displacement field", path.display()))),
    }
}

fn check_representable(path: &Path, ty: ElementType, values: &[f64]) -> Result<()> {
    let ok = |v: f64| match ty {
        ElementType::Float32 | ElementType::Float64 => true,
        ElementType::Int16 => v.fract() == 0.0 && (i16::MIN as f64..=i16::MAX as f64).contains(&v),
        ElementType::UInt8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
    };
    if let Some(bad) = values.iter().find(|&&v| !ok(v)) {
        return Err(Error::InvalidParameter(format!(
            "{}: value {bad} cannot be stored as {}",
            path.display(),
            ty.header_name()
        )));
    }
    Ok(())
}

fn write_with(path: &Path, grid: &WorldGrid, ty: ElementType, channels: usize, values: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("cannot write a volume without voxels"));
    }
    check_representable(path, ty, values)?;
    let local = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mha"));
    let raw_name = path.with_extension("raw");
    let header = VolumeHeader {
        dims: grid.dims(),
        spacing: grid.spacing(),
        offset: grid.origin(),
        element_type: ty,
        channels,
        data_file: if local {
            DataFile::Local
        } else {
            DataFile::External(raw_name.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        },
    };
    let mut payload = Vec::with_capacity(header.payload_len());
    encode(ty, values.iter().copied(), &mut payload);
    if local {
        let mut bytes = header.to_text().into_bytes();
        bytes.extend_from_slice(&payload);
        atomic_write(path, &bytes)
    } else {
        atomic_write(&raw_name, &payload)?;
        atomic_write(path, header.to_text().as_bytes())
    }
}

/// Writes `vol` with the given element type. Scalars and fields are written
/// as `float64` unless `float32` is requested explicitly.
pub fn write_volume(vol: &Volume, path: &Path, element_type: Option<ElementType>) -> Result<()> {
    match vol {
        Volume::Scalar(s) => write_with(path, s.grid(), element_type.unwrap_or(ElementType::Float64), 1, s.data()),
        Volume::Field(f) => {
            let ty = element_type.unwrap_or(ElementType::Float64);
            if ty.is_integer() {
                return Err(Error::InvalidParameter("displacement fields need a float element type".into()));
            }
            let flat: Vec<f64> = f.vectors().iter().flatten().copied().collect();
            write_with(path, f.grid(), ty, 3, &flat)
        }
        Volume::Labels(l) => {
            let max = l.labels().iter().copied().max().unwrap_or(0);
            let ty = element_type.unwrap_or(if max <= 255 { ElementType::UInt8 } else { ElementType::Int16 });
            let values: Vec<f64> = l.labels().iter().map(|&v| v as f64).collect();
            write_with(path, l.grid(), ty, 1, &values)
        }
    }
}
