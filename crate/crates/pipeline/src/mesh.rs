//! Iso-surface of one label as a triangle list, by marching tetrahedra on
//! the Kuhn subdivision of the voxel-centre lattice.

use std::collections::HashMap;

use axonvox_core::{BoundingBox, LabelVolume};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Vertices in nm, triangles wound counter-clockwise seen from outside.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                norm(cross(sub(b, a), sub(c, a))) / 2.0
            })
            .sum()
    }

    /// Signed enclosed volume (divergence theorem).
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

const CORNER: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Six tetrahedra sharing the 0–7 diagonal, one per axis permutation.
const TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// Surface between voxels of `label` and everything else, through the
/// midpoints of lattice edges whose ends differ. Closed for any label.
pub fn label_mesh(labels: &LabelVolume, label: u32) -> Result<Mesh> {
    let d = labels.dims;
    let bb = BoundingBox::of(d, |i| labels.labels[i] == label)
        .ok_or(PipelineError::Core(axonvox_core::Error::MissingLabel(label)))?;
    let vs = labels.voxel_size.to_array();
    let inside = |p: [i64; 3]| -> bool {
        d.checked_index(p[0], p[1], p[2])
            .is_some_and(|i| labels.labels[i] == label)
    };
    let key = |p: [i64; 3]| -> u64 {
        // padded lattice coordinates fit in 21 bits each
        let q = [p[0] + 1, p[1] + 1, p[2] + 1];
        (q[0] as u64) | ((q[1] as u64) << 21) | ((q[2] as u64) << 42)
    };
    let mut mesh = Mesh::default();
    let mut index: HashMap<(u64, u64), u32> = HashMap::new();
    let mut vertex = |a: [i64; 3], b: [i64; 3], mesh: &mut Mesh| -> u32 {
        let (ka, kb) = (key(a), key(b));
        let k = if ka < kb { (ka, kb) } else { (kb, ka) };
        *index.entry(k).or_insert_with(|| {
            let p = [0, 1, 2].map(|ax| ((a[ax] + b[ax]) as f64 / 2.0 + 0.5) * vs[ax]);
            mesh.vertices.push(p);
            (mesh.vertices.len() - 1) as u32
        })
    };
    let lo = bb.min.map(|v| v as i64 - 1);
    let hi = bb.max.map(|v| v as i64);
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let c: [[i64; 3]; 8] = CORNER.map(|o| [x + o[0], y + o[1], z + o[2]]);
                let v: [bool; 8] = c.map(inside);
                if v.iter().all(|&b| b) || v.iter().all(|&b| !b) {
                    continue;
                }
                for t in TETS {
                    let (ins, outs): (Vec<usize>, Vec<usize>) = t.iter().partition(|&&k| v[k]);
                    if ins.is_empty() || outs.is_empty() {
                        continue;
                    }
                    let centre = |ks: &[usize]| {
                        let mut s = [0.0; 3];
                        for &k in ks {
                            for ax in 0..3 {
                                s[ax] += c[k][ax] as f64 * vs[ax];
                            }
                        }
                        s.map(|x| x / ks.len() as f64)
                    };
                    let outward = sub(centre(&outs), centre(&ins));
                    let emit = |p: [u32; 3], mesh: &mut Mesh| {
                        let [a, b, cc] = p.map(|i| mesh.vertices[i as usize]);
                        let n = cross(sub(b, a), sub(cc, a));
                        if dot(n, outward) < 0.0 {
                            mesh.triangles.push([p[0], p[2], p[1]]);
                        } else {
                            mesh.triangles.push(p);
                        }
                    };
                    if ins.len() == 2 {
                        let (i0, i1, o0, o1) = (ins[0], ins[1], outs[0], outs[1]);
                        let p00 = vertex(c[i0], c[o0], &mut mesh);
                        let p01 = vertex(c[i0], c[o1], &mut mesh);
                        let p11 = vertex(c[i1], c[o1], &mut mesh);
                        let p10 = vertex(c[i1], c[o0], &mut mesh);
                        emit([p00, p01, p11], &mut mesh);
                        emit([p00, p11, p10], &mut mesh);
                    } else {
                        let (apex, base) = if ins.len() == 1 { (ins[0], outs) } else { (outs[0], ins) };
                        let p: Vec<u32> = base.iter().map(|&k| vertex(c[apex], c[k], &mut mesh)).collect();
                        emit([p[0], p[1], p[2]], &mut mesh);
                    }
                }
            }
        }
    }
    Ok(mesh)
}
