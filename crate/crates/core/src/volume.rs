//! Voxel grids: intensity volumes, label volumes, cropping and isotropic
//! resampling.
//!
//! All grids store their samples x-fastest, then y, then z. Voxel `(i, j, k)`
//! has its center at `((i + 0.5) sx, (j + 0.5) sy, (k + 0.5) sz)` in
//! nanometers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims { nx, ny, nz }
    }

    pub fn validate(self) -> Result<Self> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::EmptyDims(self.to_array()));
        }
        Ok(self)
    }

    #[inline]
    pub const fn len(self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub const fn is_empty(self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn slice_len(self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub const fn index(self, x: usize, y: usize, z: usize) -> usize {
        (z * self.ny + y) * self.nx + x
    }

    #[inline]
    pub const fn coords(self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        (x, y, z)
    }

    #[inline]
    pub fn contains(self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }

    /// Index of `(x, y, z)` if it lies inside the grid.
    #[inline]
    pub fn checked_index(self, x: i64, y: i64, z: i64) -> Option<usize> {
        self.contains(x, y, z)
            .then(|| self.index(x as usize, y as usize, z as usize))
    }

    pub const fn to_array(self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Face neighbors (6-connectivity) of a voxel index.
    pub fn neighbors6(self, idx: usize) -> impl Iterator<Item = usize> {
        let (x, y, z) = self.coords(idx);
        let (x, y, z) = (x as i64, y as i64, z as i64);
        const OFFS: [(i64, i64, i64); 6] = [
            (-1, 0, 0),
            (1, 0, 0),
            (0, -1, 0),
            (0, 1, 0),
            (0, 0, -1),
            (0, 0, 1),
        ];
        OFFS.into_iter()
            .filter_map(move |(dx, dy, dz)| self.checked_index(x + dx, y + dy, z + dz))
    }

    /// All 26 neighbors of a voxel index.
    pub fn neighbors26(self, idx: usize) -> impl Iterator<Item = usize> {
        let (x, y, z) = self.coords(idx);
        let (x, y, z) = (x as i64, y as i64, z as i64);
        (-1i64..=1)
            .flat_map(|dz| (-1i64..=1).flat_map(move |dy| (-1i64..=1).map(move |dx| (dx, dy, dz))))
            .filter(|&o| o != (0, 0, 0))
            .filter_map(move |(dx, dy, dz)| self.checked_index(x + dx, y + dy, z + dz))
    }
}

impl From<[usize; 3]> for Dims {
    fn from(a: [usize; 3]) -> Self {
        Dims::new(a[0], a[1], a[2])
    }
}

/// Physical voxel size in nanometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelSize {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl VoxelSize {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        VoxelSize { x, y, z }
    }

    pub const fn isotropic(s: f64) -> Self {
        VoxelSize { x: s, y: s, z: s }
    }

    pub fn validate(self) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.x) && ok(self.y) && ok(self.z) {
            Ok(self)
        } else {
            Err(Error::VoxelSize(self.to_array()))
        }
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn min(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn is_isotropic(self) -> bool {
        self.x == self.y && self.y == self.z
    }

    /// Physical center (nm) of voxel `(i, j, k)`.
    pub fn center(self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.x,
            (j as f64 + 0.5) * self.y,
            (k as f64 + 0.5) * self.z,
        ]
    }

    /// Volume of one voxel in cubic micrometers.
    pub fn voxel_volume_um3(self) -> f64 {
        self.x * self.y * self.z * 1e-9
    }
}

impl From<[f64; 3]> for VoxelSize {
    fn from(a: [f64; 3]) -> Self {
        VoxelSize::new(a[0], a[1], a[2])
    }
}

/// Scalar intensity volume, values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: Dims,
    pub voxel_size: VoxelSize,
    pub data: Vec<f32>,
}

/// What a label volume's integers mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// 0 = background, 1 = myelin.
    Semantic,
    /// 0 = unassigned, ids >= 2 are intra-axonal instances.
    AxonInstance,
    /// 0 = not myelin, ids >= 2 name the owning axon.
    MyelinInstance,
    /// Binary edge mask (1 = edge).
    EdgeMask,
    /// Supervoxel partition, ids start at 1.
    Supervoxel,
}

/// Integer label per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub dims: Dims,
    pub voxel_size: VoxelSize,
    pub kind: LabelKind,
    pub labels: Vec<u32>,
}

/// Integer voxel coordinate, serialized as `{"x":..,"y":..,"z":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Voxel {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Voxel {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Voxel { x, y, z }
    }

    pub fn from_index(dims: Dims, idx: usize) -> Self {
        let (x, y, z) = dims.coords(idx);
        Voxel { x, y, z }
    }

    pub fn index_in(self, dims: Dims) -> Result<usize> {
        dims.checked_index(self.x as i64, self.y as i64, self.z as i64)
            .ok_or(Error::OutOfBounds {
                coord: [self.x as i64, self.y as i64, self.z as i64],
                dims: dims.to_array(),
            })
    }
}

/// Label reserved for semantic myelin.
pub const MYELIN: u32 = 1;
/// First id handed to axon and myelin instances.
pub const FIRST_INSTANCE: u32 = 2;

impl Volume {
    pub fn new(dims: Dims, voxel_size: VoxelSize, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        voxel_size.validate()?;
        if data.len() != dims.len() {
            return Err(Error::PayloadSize {
                expected: dims.len(),
                actual: data.len(),
            });
        }
        Ok(Volume {
            dims,
            voxel_size,
            data,
        })
    }

    pub fn filled(dims: Dims, voxel_size: VoxelSize, value: f32) -> Self {
        Volume {
            dims,
            voxel_size,
            data: vec![value; dims.len()],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// A label volume of the same geometry, all zeros.
    pub fn empty_labels(&self, kind: LabelKind) -> LabelVolume {
        LabelVolume::zeros(self.dims, self.voxel_size, kind)
    }
}

impl LabelVolume {
    pub fn zeros(dims: Dims, voxel_size: VoxelSize, kind: LabelKind) -> Self {
        LabelVolume {
            dims,
            voxel_size,
            kind,
            labels: vec![0; dims.len()],
        }
    }

    pub fn new(dims: Dims, voxel_size: VoxelSize, kind: LabelKind, labels: Vec<u32>) -> Result<Self> {
        dims.validate()?;
        voxel_size.validate()?;
        if labels.len() != dims.len() {
            return Err(Error::PayloadSize {
                expected: dims.len(),
                actual: labels.len(),
            });
        }
        Ok(LabelVolume {
            dims,
            voxel_size,
            kind,
            labels,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.labels[self.dims.index(x, y, z)]
    }

    pub fn slice(&self, z: usize) -> &[u32] {
        let n = self.dims.slice_len();
        &self.labels[z * n..(z + 1) * n]
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Sorted distinct nonzero labels.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut seen = std::collections::BTreeSet::new();
        for &l in &self.labels {
            if l != 0 {
                seen.insert(l);
            }
        }
        seen.into_iter().collect()
    }

    /// Voxel counts keyed by label (label 0 included).
    pub fn histogram(&self) -> std::collections::BTreeMap<u32, usize> {
        let mut h = std::collections::BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }

    pub fn is_set(&self, idx: usize) -> bool {
        self.labels[idx] != 0
    }

    pub fn count_nonzero(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Reject grids whose geometry differs from `dims`/`voxel_size`.
    pub fn ensure_congruent(&self, dims: Dims, voxel_size: VoxelSize, what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::Congruence(format!(
                "{what}: dims {:?} vs {:?}",
                self.dims.to_array(),
                dims.to_array()
            )));
        }
        if self.voxel_size != voxel_size {
            return Err(Error::Congruence(format!(
                "{what}: voxel size {:?} vs {:?}",
                self.voxel_size.to_array(),
                voxel_size.to_array()
            )));
        }
        Ok(())
    }
}

/// Inclusive voxel-coordinate box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| min[a] > max[a]) {
            return Err(Error::param(format!(
                "bounding box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(BoundingBox { min, max })
    }

    pub fn full(dims: Dims) -> Self {
        BoundingBox {
            min: [0, 0, 0],
            max: [dims.nx - 1, dims.ny - 1, dims.nz - 1],
        }
    }

    pub fn extent(&self) -> Dims {
        Dims::new(
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        )
    }

    pub fn check_inside(&self, dims: Dims) -> Result<()> {
        let d = dims.to_array();
        if (0..3).any(|a| self.max[a] >= d[a]) {
            return Err(Error::OutOfBounds {
                coord: self.max.map(|v| v as i64),
                dims: d,
            });
        }
        Ok(())
    }

    /// Tight box around every voxel for which `pred` holds.
    pub fn of(dims: Dims, mut pred: impl FnMut(usize) -> bool) -> Option<Self> {
        let mut min = [usize::MAX; 3];
        let mut max = [0usize; 3];
        let mut any = false;
        for idx in 0..dims.len() {
            if pred(idx) {
                let (x, y, z) = dims.coords(idx);
                for (a, v) in [x, y, z].into_iter().enumerate() {
                    min[a] = min[a].min(v);
                    max[a] = max[a].max(v);
                }
                any = true;
            }
        }
        any.then_some(BoundingBox { min, max })
    }

    /// Grow by `margin` voxels on every side, clipped to `dims`.
    pub fn dilate(&self, margin: usize, dims: Dims) -> Self {
        let d = dims.to_array();
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = self.min[a].saturating_sub(margin);
            out.max[a] = (self.max[a] + margin).min(d[a] - 1);
        }
        out
    }
}

fn crop_vec<T: Copy>(data: &[T], dims: Dims, bb: &BoundingBox) -> Vec<T> {
    let ext = bb.extent();
    let mut out = Vec::with_capacity(ext.len());
    for z in bb.min[2]..=bb.max[2] {
        for y in bb.min[1]..=bb.max[1] {
            let start = dims.index(bb.min[0], y, z);
            out.extend_from_slice(&data[start..start + ext.nx]);
        }
    }
    out
}

/// Output dims for an isotropic resample; each axis keeps its physical
/// extent to within one output voxel.
pub fn isotropic_dims(dims: Dims, voxel_size: VoxelSize, target: f64) -> Result<Dims> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::param(format!("resample target must be > 0, got {target}")));
    }
    let axis = |n: usize, s: f64| (n as f64 * s / target).round() as usize;
    let out = Dims::new(
        axis(dims.nx, voxel_size.x),
        axis(dims.ny, voxel_size.y),
        axis(dims.nz, voxel_size.z),
    );
    if out.is_empty() {
        return Err(Error::param(format!(
            "resample target {target} nm collapses dims {:?} to {:?}",
            dims.to_array(),
            out.to_array()
        )));
    }
    Ok(out)
}

/// Continuous input index sampled by output voxel `i` along one axis.
#[inline]
fn source_coord(i: usize, in_size: f64, target: f64) -> f64 {
    (i as f64 + 0.5) * target / in_size - 0.5
}

/// Operations shared by intensity and label grids.
pub trait Grid: Sized {
    fn dims(&self) -> Dims;
    fn voxel_size(&self) -> VoxelSize;

    /// Extract the sub-grid covered by `bb`.
    fn crop(&self, bb: &BoundingBox) -> Result<Self>;

    /// Resample to cubic voxels of `target` nm.
    fn resample_isotropic(&self, target: f64) -> Result<Self>;
}

impl Grid for Volume {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn voxel_size(&self) -> VoxelSize {
        self.voxel_size
    }

    fn crop(&self, bb: &BoundingBox) -> Result<Self> {
        bb.check_inside(self.dims)?;
        Ok(Volume {
            dims: bb.extent(),
            voxel_size: self.voxel_size,
            data: crop_vec(&self.data, self.dims, bb),
        })
    }

    /// Trilinear interpolation with edge clamping.
    fn resample_isotropic(&self, target: f64) -> Result<Self> {
        let out_dims = isotropic_dims(self.dims, self.voxel_size, target)?;
        let vs = self.voxel_size;
        let d = self.dims;
        let axis_taps = |n_out: usize, n_in: usize, s: f64| -> Vec<(usize, usize, f32)> {
            (0..n_out)
                .map(|i| {
                    let u = source_coord(i, s, target).clamp(0.0, (n_in - 1) as f64);
                    let lo = u.floor() as usize;
                    let hi = (lo + 1).min(n_in - 1);
                    (lo, hi, (u - lo as f64) as f32)
                })
                .collect()
        };
        let tx = axis_taps(out_dims.nx, d.nx, vs.x);
        let ty = axis_taps(out_dims.ny, d.ny, vs.y);
        let tz = axis_taps(out_dims.nz, d.nz, vs.z);
        let mut data = vec![0f32; out_dims.len()];
        let lerp = |a: f32, b: f32, t: f32| if t == 0.0 { a } else { a + (b - a) * t };
        for (k, &(z0, z1, fz)) in tz.iter().enumerate() {
            for (j, &(y0, y1, fy)) in ty.iter().enumerate() {
                let row = out_dims.index(0, j, k);
                for (i, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let c = |x, y, z| self.data[d.index(x, y, z)];
                    let c00 = lerp(c(x0, y0, z0), c(x1, y0, z0), fx);
                    let c10 = lerp(c(x0, y1, z0), c(x1, y1, z0), fx);
                    let c01 = lerp(c(x0, y0, z1), c(x1, y0, z1), fx);
                    let c11 = lerp(c(x0, y1, z1), c(x1, y1, z1), fx);
                    let c0 = lerp(c00, c10, fy);
                    let c1 = lerp(c01, c11, fy);
                    data[row + i] = lerp(c0, c1, fz);
                }
            }
        }
        Ok(Volume {
            dims: out_dims,
            voxel_size: VoxelSize::isotropic(target),
            data,
        })
    }
}

impl Grid for LabelVolume {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn voxel_size(&self) -> VoxelSize {
        self.voxel_size
    }

    fn crop(&self, bb: &BoundingBox) -> Result<Self> {
        bb.check_inside(self.dims)?;
        Ok(LabelVolume {
            dims: bb.extent(),
            voxel_size: self.voxel_size,
            kind: self.kind,
            labels: crop_vec(&self.labels, self.dims, bb),
        })
    }

    /// Nearest-neighbor sampling; never invents labels.
    fn resample_isotropic(&self, target: f64) -> Result<Self> {
        let out_dims = isotropic_dims(self.dims, self.voxel_size, target)?;
        let vs = self.voxel_size;
        let d = self.dims;
        let nearest = |n_out: usize, n_in: usize, s: f64| -> Vec<usize> {
            (0..n_out)
                .map(|i| {
                    let u = source_coord(i, s, target).round();
                    u.clamp(0.0, (n_in - 1) as f64) as usize
                })
                .collect()
        };
        let nx = nearest(out_dims.nx, d.nx, vs.x);
        let ny = nearest(out_dims.ny, d.ny, vs.y);
        let nz = nearest(out_dims.nz, d.nz, vs.z);
        let mut labels = Vec::with_capacity(out_dims.len());
        for &z in &nz {
            for &y in &ny {
                let row = d.index(0, y, z);
                labels.extend(nx.iter().map(|&x| self.labels[row + x]));
            }
        }
        Ok(LabelVolume {
            dims: out_dims,
            voxel_size: VoxelSize::isotropic(target),
            kind: self.kind,
            labels,
        })
    }
}
