//! Proofreading edits on an axon instance map, with exact undo and an
//! append-only JSON-lines log.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use axonvox_core::instseg::{self, AxonRecord, BvgParams, SeedOrigin};
use axonvox_core::volume::FIRST_INSTANCE;
use axonvox_core::{LabelVolume, Volume, Voxel};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// A 2D region on one slice. Polygon vertices are in voxel coordinates
/// (pixel `(x, y)` is the point `(x, y)`); a pixel belongs to the polygon
/// when its point is inside by the even-odd rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Polygon { vertices: Vec<[f64; 2]> },
    Pixels { pixels: Vec<[usize; 2]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NewLabel {
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DrawTarget {
    Label(u32),
    New(NewLabel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditKind {
    Merge {
        labels: Vec<u32>,
    },
    /// The part of `label` inside the region becomes a new label.
    Split {
        label: u32,
        region: Region,
        z: usize,
    },
    Erase {
        label: u32,
    },
    Draw {
        label: DrawTarget,
        region: Region,
        z: usize,
        #[serde(default)]
        force: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    #[serde(flatten)]
    pub kind: EditKind,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub timestamp: String,
}

/// Previous values of every voxel an edit changed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndoRecord {
    pub changes: Vec<(usize, u32)>,
    /// Labels created by the edit.
    pub created: Vec<u32>,
}

impl UndoRecord {
    pub fn apply(&self, labels: &mut LabelVolume) {
        for &(i, old) in self.changes.iter().rev() {
            labels.labels[i] = old;
        }
    }
}

fn reject(msg: impl Into<String>) -> PipelineError {
    PipelineError::Edit(msg.into())
}

fn point_in_polygon(px: f64, py: f64, v: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (xi, yi) = (v[i][0], v[i][1]);
        let (xj, yj) = (v[j][0], v[j][1]);
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Pixels of `region` on an `nx × ny` slice, row-major and deduplicated.
pub fn rasterize(region: &Region, nx: usize, ny: usize) -> Result<Vec<(usize, usize)>> {
    match region {
        Region::Pixels { pixels } => {
            let mut out = Vec::with_capacity(pixels.len());
            for &[x, y] in pixels {
                if x >= nx || y >= ny {
                    return Err(reject(format!("pixel ({x}, {y}) outside {nx}x{ny} slice")));
                }
                out.push((x, y));
            }
            out.sort_by_key(|&(x, y)| (y, x));
            out.dedup();
            Ok(out)
        }
        Region::Polygon { vertices } => {
            if vertices.len() < 3 {
                return Err(reject("polygon needs at least 3 vertices"));
            }
            let lim = |v: f64, n: usize| v.is_finite() && v >= -0.5 && v <= n as f64 - 0.5;
            if !vertices.iter().all(|&[x, y]| lim(x, nx) && lim(y, ny)) {
                return Err(reject(format!("polygon leaves the {nx}x{ny} slice")));
            }
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for &[x, y] in vertices {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
            let mut out = Vec::new();
            for y in (y0.ceil().max(0.0) as usize)..=(y1.floor().min(ny as f64 - 1.0) as usize) {
                for x in (x0.ceil().max(0.0) as usize)..=(x1.floor().min(nx as f64 - 1.0) as usize) {
                    if point_in_polygon(x as f64, y as f64, vertices) {
                        out.push((x, y));
                    }
                }
            }
            Ok(out)
        }
    }
}

fn region_indices(labels: &LabelVolume, region: &Region, z: usize) -> Result<Vec<usize>> {
    let d = labels.dims;
    if z >= d.nz {
        return Err(reject(format!("slice {z} outside 0..{}", d.nz)));
    }
    Ok(rasterize(region, d.nx, d.ny)?
        .into_iter()
        .map(|(x, y)| d.index(x, y, z))
        .collect())
}

fn require(labels: &LabelVolume, l: u32) -> Result<()> {
    if l != 0 && labels.labels.contains(&l) {
        Ok(())
    } else {
        Err(reject(format!("label {l} does not exist")))
    }
}

fn next_label(labels: &LabelVolume) -> u32 {
    labels.max_label().max(FIRST_INSTANCE - 1) + 1
}

/// Apply `op` in place. Nothing changes when the op is rejected.
pub fn apply_edit(labels: &mut LabelVolume, op: &EditOp) -> Result<UndoRecord> {
    let mut undo = UndoRecord::default();
    match &op.kind {
        EditKind::Merge { labels: ids } => {
            if ids.len() < 2 {
                return Err(reject("merge needs at least two labels"));
            }
            for &l in ids {
                require(labels, l)?;
            }
            let target = *ids.iter().min().unwrap();
            for (i, l) in labels.labels.iter_mut().enumerate() {
                if *l != target && ids.contains(l) {
                    undo.changes.push((i, *l));
                    *l = target;
                }
            }
        }
        EditKind::Erase { label } => {
            require(labels, *label)?;
            for (i, l) in labels.labels.iter_mut().enumerate() {
                if *l == *label {
                    undo.changes.push((i, *l));
                    *l = 0;
                }
            }
        }
        EditKind::Split { label, region, z } => {
            require(labels, *label)?;
            let idx = region_indices(labels, region, *z)?;
            let hit: Vec<usize> = idx.into_iter().filter(|&i| labels.labels[i] == *label).collect();
            if hit.is_empty() {
                return Err(reject(format!("region does not intersect label {label} on slice {z}")));
            }
            if hit.len() == labels.labels.iter().filter(|&&l| l == *label).count() {
                return Err(reject(format!("region covers all of label {label}")));
            }
            let id = next_label(labels);
            for i in hit {
                undo.changes.push((i, *label));
                labels.labels[i] = id;
            }
            undo.created.push(id);
        }
        EditKind::Draw { label, region, z, force } => {
            let idx = region_indices(labels, region, *z)?;
            let id = match *label {
                DrawTarget::Label(l) => {
                    require(labels, l)?;
                    l
                }
                DrawTarget::New(_) => next_label(labels),
            };
            for i in idx {
                let old = labels.labels[i];
                if old == id || (old != 0 && !force) {
                    continue;
                }
                undo.changes.push((i, old));
                labels.labels[i] = id;
            }
            if matches!(label, DrawTarget::New(_)) && !undo.changes.is_empty() {
                undo.created.push(id);
            }
        }
    }
    Ok(undo)
}

/// Inputs needed to grow new axons from manual seeds.
pub struct GrowContext<'a> {
    pub volume: &'a Volume,
    pub myelin: &'a LabelVolume,
    pub barrier: &'a [bool],
    pub params: BvgParams,
}

/// Grow manual seeds into `labels`; seeds on myelin, edges or existing
/// labels are skipped.
pub fn grow_seeds(labels: &mut LabelVolume, ctx: &GrowContext, seeds: &[Voxel]) -> Result<(UndoRecord, Vec<AxonRecord>)> {
    for s in seeds {
        s.index_in(labels.dims)?;
    }
    let before = labels.clone();
    let recs = instseg::bvg_into(labels, ctx.volume, ctx.myelin, ctx.barrier, seeds, SeedOrigin::Manual, &ctx.params)?;
    let changes = before
        .labels
        .iter()
        .zip(&labels.labels)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, (&a, _))| (i, a))
        .collect();
    Ok((
        UndoRecord {
            changes,
            created: recs.iter().map(|r| r.label).collect(),
        },
        recs,
    ))
}

/// One line of the edit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum LogEntry {
    Edit {
        op: EditOp,
    },
    Seeds {
        seeds: Vec<Voxel>,
        #[serde(default)]
        author: String,
        #[serde(default)]
        timestamp: String,
    },
    Undo {
        #[serde(default)]
        author: String,
        #[serde(default)]
        timestamp: String,
    },
}

pub fn parse_log(bytes: &[u8]) -> Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for line in BufReader::new(bytes).lines() {
        let line = line.map_err(|e| PipelineError::Io(PathBuf::from("<edit log>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Apply log entries to `labels`, returning the undo stack left behind.
pub fn replay(labels: &mut LabelVolume, entries: &[LogEntry], ctx: Option<&GrowContext>) -> Result<Vec<UndoRecord>> {
    let mut stack = Vec::new();
    for e in entries {
        match e {
            LogEntry::Edit { op } => stack.push(apply_edit(labels, op)?),
            LogEntry::Seeds { seeds, .. } => {
                let ctx = ctx.ok_or_else(|| reject("seed entries need the volume and myelin to replay"))?;
                stack.push(grow_seeds(labels, ctx, seeds)?.0);
            }
            LogEntry::Undo { .. } => stack
                .pop()
                .ok_or_else(|| reject("undo with nothing to undo"))?
                .apply(labels),
        }
    }
    Ok(stack)
}

/// Append-only edit log.
#[derive(Debug, Clone)]
pub struct EditLog {
    path: PathBuf,
}

impl EditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        EditLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &LogEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        let io = |e| PipelineError::Io(self.path.clone(), e);
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        f.write_all(&line).map_err(io)?;
        f.sync_data().map_err(io)
    }

    pub fn read(&self) -> Result<Vec<LogEntry>> {
        match std::fs::read(&self.path) {
            Ok(b) => parse_log(&b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(PipelineError::Io(self.path.clone(), e)),
        }
    }
}
