//! Skeletonization and cross-sectional morphometry of myelinated axons.

mod section;
mod skeleton;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BoundingBox, LabelVolume};

pub use section::{cross_section, fit_ellipse, myelin_thickness, tangent, thickness_samples, Section};
pub use skeleton::{skeletonize, Skeleton, MIN_SKELETON_VOXELS};

/// g-ratio convention written into every morphometry metadata record.
pub const G_RATIO_CONVENTION: &str = "g = d_e / (d_e + 2 t), t = median one-sided myelin thickness";

pub const SECTION_HEADER: [&str; 9] = [
    "axon_id", "arc_um", "area_um2", "d_e_um", "minor_um", "major_um", "ecc", "t_um", "g_ratio",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "axon_id", "length_um", "n_sections", "area_um2", "d_e_um", "minor_um", "major_um", "ecc", "t_um", "g_ratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphoParams {
    pub length_threshold_um: f64,
}

impl Default for MorphoParams {
    fn default() -> Self {
        MorphoParams { length_threshold_um: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionRecord {
    pub axon_id: u32,
    pub arc_um: f64,
    pub area_um2: f64,
    pub d_e_um: f64,
    pub minor_um: f64,
    pub major_um: f64,
    pub ecc: f64,
    pub t_um: Option<f64>,
    pub g_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxonMorphometry {
    pub axon_id: u32,
    pub length_um: f64,
    pub n_sections: usize,
    pub area_um2: f64,
    pub d_e_um: f64,
    pub minor_um: f64,
    pub major_um: f64,
    pub ecc: f64,
    pub t_um: Option<f64>,
    pub g_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AxonOutcome {
    Measured {
        summary: AxonMorphometry,
        sections: Vec<CrossSectionRecord>,
    },
    Rejected {
        axon_id: u32,
        length_um: f64,
        reason: String,
    },
}

/// Diameter of the circle with the given area.
pub fn eq_diameter(area: f64) -> f64 {
    2.0 * (area.max(0.0) / std::f64::consts::PI).sqrt()
}

/// `d_e / (d_e + 2 t)`.
pub fn g_ratio(d_e: f64, t: f64) -> Result<f64> {
    if !(d_e >= 0.0 && t >= 0.0) {
        return Err(Error::param(format!("g-ratio needs d_e, t >= 0, got {d_e}, {t}")));
    }
    let den = d_e + 2.0 * t;
    if den == 0.0 {
        return Err(Error::Degenerate("g-ratio undefined for d_e = t = 0".into()));
    }
    Ok(d_e / den)
}

fn record_of(axon_id: u32, arc_um: f64, s: &Section) -> Result<CrossSectionRecord> {
    let p = s.pitch_nm * 1e-3;
    let area_um2 = s.axon.len() as f64 * p * p;
    let d_e_um = eq_diameter(area_um2);
    let (minor, major, ecc) = fit_ellipse(&s.axon)?;
    let t_um = myelin_thickness(&s.myelin).map(|t| t * p);
    let g = t_um.map(|t| g_ratio(d_e_um, t)).transpose()?;
    Ok(CrossSectionRecord {
        axon_id,
        arc_um,
        area_um2,
        d_e_um,
        minor_um: minor * p,
        major_um: major * p,
        ecc,
        t_um,
        g_ratio: g,
    })
}

fn median_of(rows: &[CrossSectionRecord], f: impl Fn(&CrossSectionRecord) -> Option<f64>) -> Option<f64> {
    let mut v: Vec<f64> = rows.iter().filter_map(f).collect();
    section::median(&mut v)
}

/// Per-axon medians over the given section rows.
pub fn summarize(axon_id: u32, length_um: f64, rows: &[CrossSectionRecord]) -> Option<AxonMorphometry> {
    if rows.is_empty() {
        return None;
    }
    Some(AxonMorphometry {
        axon_id,
        length_um,
        n_sections: rows.len(),
        area_um2: median_of(rows, |r| Some(r.area_um2))?,
        d_e_um: median_of(rows, |r| Some(r.d_e_um))?,
        minor_um: median_of(rows, |r| Some(r.minor_um))?,
        major_um: median_of(rows, |r| Some(r.major_um))?,
        ecc: median_of(rows, |r| Some(r.ecc))?,
        t_um: median_of(rows, |r| r.t_um),
        g_ratio: median_of(rows, |r| r.g_ratio),
    })
}

fn search_radius(bb: &BoundingBox, axons: &LabelVolume, pitch: f64) -> i32 {
    let vs = axons.voxel_size.to_array();
    let ext = bb.extent().to_array();
    let diag = (0..3).map(|a| (ext[a] as f64 * vs[a]).powi(2)).sum::<f64>().sqrt();
    (diag / pitch).ceil() as i32 + 2
}

fn measure_in(
    axon_id: u32,
    bb: &BoundingBox,
    axons: &LabelVolume,
    myelin_inst: &LabelVolume,
    p: &MorphoParams,
) -> Result<AxonOutcome> {
    let sk = skeleton::skeletonize_in(axons, axon_id, bb)?;
    let length_um = sk.length_um();
    if length_um < p.length_threshold_um {
        return Ok(AxonOutcome::Rejected {
            axon_id,
            length_um,
            reason: format!("shorter than {} um", p.length_threshold_um),
        });
    }
    let radius = search_radius(bb, axons, sk.pitch_nm);
    let rows: Vec<Option<CrossSectionRecord>> = (0..sk.points_nm.len())
        .into_par_iter()
        .map(|k| -> Result<Option<CrossSectionRecord>> {
            let s = cross_section(axons, myelin_inst, &sk, k, radius)?;
            if s.partial || s.axon.is_empty() {
                return Ok(None);
            }
            record_of(axon_id, sk.arc_um[k], &s).map(Some)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<CrossSectionRecord> = rows.into_iter().flatten().collect();
    match summarize(axon_id, length_um, &rows) {
        Some(summary) => Ok(AxonOutcome::Measured { summary, sections: rows }),
        None => Ok(AxonOutcome::Rejected {
            axon_id,
            length_um,
            reason: "no complete cross-section".into(),
        }),
    }
}

/// Morphometry of one axon: skeleton, a section at every skeleton point,
/// boundary-clipped sections dropped, medians over the rest.
pub fn axon_morphometry(
    axon_id: u32,
    axons: &LabelVolume,
    myelin_inst: &LabelVolume,
    p: &MorphoParams,
) -> Result<AxonOutcome> {
    myelin_inst.ensure_congruent(axons.dims, axons.voxel_size, "myelin instances")?;
    let bb = BoundingBox::of(axons.dims, |i| axons.labels[i] == axon_id).ok_or(Error::MissingLabel(axon_id))?;
    measure_in(axon_id, &bb, axons, myelin_inst, p)
}

/// Morphometry of several axons, results in the order of `ids`.
pub fn morphometry_all(
    ids: &[u32],
    axons: &LabelVolume,
    myelin_inst: &LabelVolume,
    p: &MorphoParams,
) -> Result<Vec<(u32, Result<AxonOutcome>)>> {
    myelin_inst.ensure_congruent(axons.dims, axons.voxel_size, "myelin instances")?;
    let d = axons.dims;
    let mut boxes: BTreeMap<u32, BoundingBox> = BTreeMap::new();
    for i in 0..d.len() {
        let l = axons.labels[i];
        if l == 0 {
            continue;
        }
        let (x, y, z) = d.coords(i);
        let c = [x, y, z];
        boxes
            .entry(l)
            .and_modify(|b| {
                for a in 0..3 {
                    b.min[a] = b.min[a].min(c[a]);
                    b.max[a] = b.max[a].max(c[a]);
                }
            })
            .or_insert(BoundingBox { min: c, max: c });
    }
    Ok(ids
        .par_iter()
        .map(|&id| {
            let r = match boxes.get(&id) {
                Some(bb) => measure_in(id, bb, axons, myelin_inst, p),
                None => Err(Error::MissingLabel(id)),
            };
            (id, r)
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// One row per cross-section, ordered by (axon id, arc position).
pub fn write_sections_csv<W: Write>(w: W, rows: &[CrossSectionRecord]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.axon_id.cmp(&b.axon_id).then(a.arc_um.total_cmp(&b.arc_um)));
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SECTION_HEADER).map_err(csv_err)?;
    for r in &rows {
        wr.write_record([
            r.axon_id.to_string(),
            r.arc_um.to_string(),
            r.area_um2.to_string(),
            r.d_e_um.to_string(),
            r.minor_um.to_string(),
            r.major_um.to_string(),
            r.ecc.to_string(),
            opt(r.t_um),
            opt(r.g_ratio),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// One row of per-axon medians per measured axon.
pub fn write_summary_csv<W: Write>(w: W, rows: &[AxonMorphometry]) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| r.axon_id);
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for r in &rows {
        wr.write_record([
            r.axon_id.to_string(),
            r.length_um.to_string(),
            r.n_sections.to_string(),
            r.area_um2.to_string(),
            r.d_e_um.to_string(),
            r.minor_um.to_string(),
            r.major_um.to_string(),
            r.ecc.to_string(),
            opt(r.t_um),
            opt(r.g_ratio),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Csv(e.to_string()))
}

fn parse_opt(s: &str, line: usize, col: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Csv(format!("line {line}: column {col}: not a number: {s:?}")))
}

/// Parse a section table written by [`write_sections_csv`].
pub fn read_sections_csv<R: Read>(r: R) -> Result<Vec<CrossSectionRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(SECTION_HEADER) {
        return Err(Error::Csv(format!("unexpected section header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k + 2;
        let num = |c: usize| -> Result<f64> {
            parse_opt(&rec[c], line, SECTION_HEADER[c])?
                .ok_or_else(|| Error::Csv(format!("line {line}: column {} is empty", SECTION_HEADER[c])))
        };
        out.push(CrossSectionRecord {
            axon_id: rec[0]
                .parse()
                .map_err(|_| Error::Csv(format!("line {line}: bad axon_id {:?}", &rec[0])))?,
            arc_um: num(1)?,
            area_um2: num(2)?,
            d_e_um: num(3)?,
            minor_um: num(4)?,
            major_um: num(5)?,
            ecc: num(6)?,
            t_um: parse_opt(&rec[7], line, "t_um")?,
            g_ratio: parse_opt(&rec[8], line, "g_ratio")?,
        });
    }
    Ok(out)
}
