//! Volume containers: a JSON sidecar header next to a raw little-endian
//! payload (`name.json` + `name.raw`), or a directory of 2D grayscale slices.
//!
//! Header schema:
//!
//! ```json
//! {"dims": [nx, ny, nz], "voxel_size_nm": [sx, sy, sz], "dtype": "u8", "order": "xyz"}
//! ```
//!
//! `dtype` is one of `u8`, `u16`, `u32` (labels only) or `f32`. Optional keys:
//! `kind` (label semantics) and `normalized` (an `f32` payload already in
//! `[0, 1]`, loaded without re-normalization).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelKind, LabelVolume, Volume, VoxelSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U16,
    U32,
    F32,
}

impl Dtype {
    pub const fn width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::U32 | Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub voxel_size_nm: [f64; 3],
    pub dtype: Dtype,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<LabelKind>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalized: bool,
}

impl VolumeHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let h: VolumeHeader =
            serde_json::from_slice(bytes).map_err(|e| Error::Header(e.to_string()))?;
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order != "xyz" {
            return Err(Error::Header(format!(
                "unsupported axis order {:?}, expected \"xyz\"",
                self.order
            )));
        }
        Dims::from(self.dims).validate()?;
        VoxelSize::from(self.voxel_size_nm).validate()?;
        self.payload_len()?;
        Ok(())
    }

    pub fn voxel_count(&self) -> Result<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::Header(format!("dims {:?} overflow", self.dims)))
    }

    pub fn payload_len(&self) -> Result<usize> {
        self.voxel_count()?
            .checked_mul(self.dtype.width())
            .ok_or_else(|| Error::Header(format!("dims {:?} overflow", self.dims)))
    }
}

/// Map `values` onto `[0, 1]` by min-max. A constant input becomes all 1.0
/// when its value is positive, else all 0.0.
pub fn normalize_min_max(values: &mut [f32]) {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() {
        return;
    }
    if hi <= lo {
        let fill = if lo > 0.0 { 1.0 } else { 0.0 };
        values.iter_mut().for_each(|v| *v = fill);
        return;
    }
    let scale = 1.0 / (hi as f64 - lo as f64);
    for v in values.iter_mut() {
        *v = ((*v as f64 - lo as f64) * scale).clamp(0.0, 1.0) as f32;
    }
}

fn check_payload(header: &VolumeHeader, payload: &[u8]) -> Result<usize> {
    header.validate()?;
    let expected = header.payload_len()?;
    if payload.len() != expected {
        return Err(Error::PayloadSize {
            expected,
            actual: payload.len(),
        });
    }
    header.voxel_count()
}

/// Decode an intensity payload.
pub fn decode_volume(header: &VolumeHeader, payload: &[u8]) -> Result<Volume> {
    let n = check_payload(header, payload)?;
    let mut data: Vec<f32> = match header.dtype {
        Dtype::U8 => payload.iter().map(|&b| b as f32).collect(),
        Dtype::U16 => payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        Dtype::U32 => {
            return Err(Error::Header(
                "u32 payloads hold labels, not intensities".into(),
            ))
        }
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    debug_assert_eq!(data.len(), n);
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Header("payload contains non-finite values".into()));
    }
    let already = header.normalized
        && header.dtype == Dtype::F32
        && data.iter().all(|v| (0.0..=1.0).contains(v));
    if !already {
        normalize_min_max(&mut data);
    }
    Volume::new(header.dims.into(), header.voxel_size_nm.into(), data)
}

/// Decode an integer label payload.
pub fn decode_labels(header: &VolumeHeader, payload: &[u8]) -> Result<LabelVolume> {
    check_payload(header, payload)?;
    let labels: Vec<u32> = match header.dtype {
        Dtype::U8 => payload.iter().map(|&b| b as u32).collect(),
        Dtype::U16 => payload
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as u32)
            .collect(),
        Dtype::U32 => payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        Dtype::F32 => return Err(Error::Header("label payloads must be integer".into())),
    };
    LabelVolume::new(
        header.dims.into(),
        header.voxel_size_nm.into(),
        header.kind.unwrap_or(LabelKind::AxonInstance),
        labels,
    )
}

/// The raw payload that accompanies a header path.
pub fn payload_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load an intensity volume from a header file or a slice directory.
pub fn load_volume(path: &Path) -> Result<Volume> {
    if path.is_dir() {
        return Err(Error::Header(format!(
            "{} is a directory; use load_slice_stack with an explicit voxel size",
            path.display()
        )));
    }
    let header = VolumeHeader::parse(&read(path)?)?;
    let payload = read(&payload_path(path))?;
    decode_volume(&header, &payload)
}

/// Persist a volume at native `f32` precision.
pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    let header = VolumeHeader {
        dims: v.dims.to_array(),
        voxel_size_nm: v.voxel_size.to_array(),
        dtype: Dtype::F32,
        order: "xyz".into(),
        kind: None,
        normalized: true,
    };
    let mut payload = Vec::with_capacity(v.data.len() * 4);
    for x in &v.data {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    write(&payload_path(path), &payload)?;
    write(path, &serde_json::to_vec_pretty(&header)?)
}

pub fn load_labels(path: &Path) -> Result<LabelVolume> {
    let header = VolumeHeader::parse(&read(path)?)?;
    let payload = read(&payload_path(path))?;
    decode_labels(&header, &payload)
}

/// Persist labels using the narrowest integer width that holds them.
pub fn save_labels(lv: &LabelVolume, path: &Path) -> Result<()> {
    let (bytes, dtype) = encode_labels(lv);
    let header = VolumeHeader {
        dims: lv.dims.to_array(),
        voxel_size_nm: lv.voxel_size.to_array(),
        dtype,
        order: "xyz".into(),
        kind: Some(lv.kind),
        normalized: false,
    };
    write(&payload_path(path), &bytes)?;
    write(path, &serde_json::to_vec_pretty(&header)?)
}

pub fn encode_labels(lv: &LabelVolume) -> (Vec<u8>, Dtype) {
    let max = lv.max_label();
    if max <= u8::MAX as u32 {
        (lv.labels.iter().map(|&l| l as u8).collect(), Dtype::U8)
    } else if max <= u16::MAX as u32 {
        let mut b = Vec::with_capacity(lv.labels.len() * 2);
        for &l in &lv.labels {
            b.extend_from_slice(&(l as u16).to_le_bytes());
        }
        (b, Dtype::U16)
    } else {
        let mut b = Vec::with_capacity(lv.labels.len() * 4);
        for &l in &lv.labels {
            b.extend_from_slice(&l.to_le_bytes());
        }
        (b, Dtype::U32)
    }
}

/// Load a directory of same-sized 8/16-bit grayscale PNG or TIFF slices,
/// ordered lexicographically by file name as increasing z.
pub fn load_slice_stack(dir: &Path, voxel_size: VoxelSize) -> Result<Volume> {
    voxel_size.validate()?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Header(format!("no slice images in {}", dir.display())));
    }
    let mut data = Vec::new();
    let mut plane: Option<(u32, u32)> = None;
    for f in &files {
        let img = image::open(f).map_err(|e| Error::Image(format!("{}: {e}", f.display())))?;
        let gray = img.to_luma16();
        let wh = gray.dimensions();
        match plane {
            None => plane = Some(wh),
            Some(p) if p != wh => {
                return Err(Error::Header(format!(
                    "slice {} is {}x{}, expected {}x{}",
                    f.display(),
                    wh.0,
                    wh.1,
                    p.0,
                    p.1
                )))
            }
            _ => {}
        }
        data.extend(gray.into_raw().into_iter().map(|v| v as f32));
    }
    let (w, h) = plane.expect("at least one slice");
    normalize_min_max(&mut data);
    Volume::new(
        Dims::new(w as usize, h as usize, files.len()),
        voxel_size,
        data,
    )
}
