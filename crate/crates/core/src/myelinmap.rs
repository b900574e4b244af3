//! Myelin instance segmentation: split the semantic myelin mask among axons
//! along the watershed of the distance to the nearest axon.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::edt;
use crate::error::{Error, Result};
use crate::volume::{LabelKind, LabelVolume};

/// Myelin assigned farther than this from its axon is flagged.
pub const FAR_ASSIGNMENT_UM: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct MyelinInstances {
    pub labels: LabelVolume,
    /// Per axon: myelin voxels assigned at distance > the flag threshold.
    pub far_voxels: BTreeMap<u32, usize>,
}

/// Watershed basins of the physical distance to the axon instances, flooded
/// from the axons in increasing distance; equal distances go to the lower
/// label. Returns the basin map over the whole domain and the distance
/// field in µm.
pub fn axon_basins(axons: &LabelVolume) -> Result<(Vec<u32>, Vec<f64>)> {
    let d = axons.dims;
    if axons.labels.iter().all(|&l| l == 0) {
        return Err(Error::Degenerate("no axons present".into()));
    }
    let dist: Vec<f64> = edt::squared_3d(d, axons.voxel_size.to_array(), |i| axons.labels[i] != 0)
        .into_iter()
        .map(|d2| d2.sqrt() * 1e-3)
        .collect();
    let mut basin = axons.labels.clone();
    let mut heap = BinaryHeap::new();
    let key = |x: f64| Reverse(x.to_bits());
    for i in 0..d.len() {
        if basin[i] == 0 {
            continue;
        }
        for nb in d.neighbors6(i) {
            if basin[nb] == 0 {
                heap.push((key(dist[nb]), Reverse(basin[i]), Reverse(nb)));
            }
        }
    }
    while let Some((_, Reverse(label), Reverse(i))) = heap.pop() {
        if basin[i] != 0 {
            continue;
        }
        basin[i] = label;
        for nb in d.neighbors6(i) {
            if basin[nb] == 0 {
                heap.push((key(dist[nb]), Reverse(label), Reverse(nb)));
            }
        }
    }
    Ok((basin, dist))
}

/// Label each myelin voxel with the axon whose basin contains it.
pub fn myelin_instances(axons: &LabelVolume, myelin: &LabelVolume) -> Result<MyelinInstances> {
    myelin.ensure_congruent(axons.dims, axons.voxel_size, "myelin")?;
    let (basin, dist) = axon_basins(axons)?;
    let mut labels = vec![0u32; basin.len()];
    let mut far_voxels = BTreeMap::new();
    for i in 0..basin.len() {
        if myelin.labels[i] != 0 && axons.labels[i] == 0 {
            labels[i] = basin[i];
            if dist[i] > FAR_ASSIGNMENT_UM {
                *far_voxels.entry(basin[i]).or_insert(0) += 1;
            }
        }
    }
    Ok(MyelinInstances {
        labels: LabelVolume::new(axons.dims, axons.voxel_size, LabelKind::MyelinInstance, labels)?,
        far_voxels,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    /// axon id → myelin instance id
    pub pairs: BTreeMap<u32, u32>,
    /// axons with no myelin voxels
    pub empty: Vec<u32>,
    /// myelin ids with no matching axon
    pub orphans: Vec<u32>,
}

/// One-to-one pairing of axons and myelin instances by shared id.
pub fn pair_labels(axons: &LabelVolume, myelin_inst: &LabelVolume) -> Result<Pairing> {
    myelin_inst.ensure_congruent(axons.dims, axons.voxel_size, "myelin instances")?;
    let a = axons.histogram();
    let m = myelin_inst.histogram();
    let mut p = Pairing::default();
    for &id in a.keys().filter(|&&l| l != 0) {
        if m.contains_key(&id) {
            p.pairs.insert(id, id);
        } else {
            p.empty.push(id);
        }
    }
    p.orphans = m.keys().copied().filter(|&l| l != 0 && !a.contains_key(&l)).collect();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_phantom, Centerline, PhantomSpec, TubeSpec};
    use crate::volume::{Dims, VoxelSize, MYELIN};

    fn tube(x: f64, y: f64, lumen: f64, shell: f64) -> TubeSpec {
        TubeSpec {
            centerline: Centerline::Straight {
                start: [x, y, -2.0],
                end: [x, y, 20.0],
            },
            lumen_radius_um: lumen,
            shell_thickness_um: shell,
            lumen_intensity: 0.85,
            shell_intensity: 0.15,
            myelinated: true,
        }
    }

    #[test]
    fn single_tube_shell_takes_one_label() {
        let ph = generate_phantom(&PhantomSpec {
            dims: [30, 30, 12],
            voxel_size_nm: [10.0; 3],
            tubes: vec![tube(15.0, 15.0, 0.06, 0.04)],
            background: 0.5,
            noise_sigma: 0.0,
            rng_seed: 0,
        })
        .unwrap();
        let mi = myelin_instances(&ph.axons, &ph.semantic).unwrap();
        for i in 0..mi.labels.labels.len() {
            let expect = if ph.semantic.labels[i] == MYELIN { 2 } else { 0 };
            assert_eq!(mi.labels.labels[i], expect);
        }
        assert!(mi.far_voxels.is_empty());
    }

    #[test]
    fn shared_wall_split_at_mid_plane() {
        // two identical tubes whose shells overlap in a wall at x = 30
        let d = Dims::new(61, 40, 8);
        let vs = VoxelSize::new(10.0, 10.0, 30.0);
        let mut axons = vec![0u32; d.len()];
        let mut myelin = vec![0u32; d.len()];
        for i in 0..d.len() {
            let (x, y, _) = d.coords(i);
            let (x, y) = (x as f64, y as f64);
            let r1 = ((x - 20.0).powi(2) + (y - 20.0).powi(2)).sqrt();
            let r2 = ((x - 40.0).powi(2) + (y - 20.0).powi(2)).sqrt();
            if r1 <= 6.0 {
                axons[i] = 2;
            } else if r2 <= 6.0 {
                axons[i] = 3;
            } else if r1 <= 12.0 || r2 <= 12.0 {
                myelin[i] = MYELIN;
            }
        }
        let a = LabelVolume::new(d, vs, LabelKind::AxonInstance, axons).unwrap();
        let m = LabelVolume::new(d, vs, LabelKind::Semantic, myelin).unwrap();
        let mi = myelin_instances(&a, &m).unwrap();
        let mut good = 0;
        let mut total = 0;
        for i in 0..d.len() {
            if m.labels[i] == 0 {
                continue;
            }
            total += 1;
            let (x, y, _) = d.coords(i);
            let (xf, yf) = (x as f64, y as f64);
            let d1 = ((xf - 20.0).powi(2) + (yf - 20.0).powi(2)).sqrt();
            let d2 = ((xf - 40.0).powi(2) + (yf - 20.0).powi(2)).sqrt();
            let nearer = if d1 <= d2 { 2 } else { 3 };
            // distance from the equidistant plane x = 30
            if mi.labels.labels[i] == nearer || (xf - 30.0).abs() <= 1.0 {
                good += 1;
            }
        }
        assert_eq!(good, total);
        let counts = mi.labels.histogram();
        assert_eq!(counts[&2] + counts[&3], m.count_nonzero());
    }

    #[test]
    fn basins_are_identity_on_axons_and_ties_go_low() {
        let d = Dims::new(5, 1, 1);
        let a = LabelVolume::new(d, VoxelSize::isotropic(1.0), LabelKind::AxonInstance, vec![4, 0, 0, 0, 2]).unwrap();
        let (b, dist) = axon_basins(&a).unwrap();
        assert_eq!(b, vec![4, 4, 2, 2, 2]);
        assert_eq!(dist[2], 2e-3);
        let none = LabelVolume::zeros(d, VoxelSize::isotropic(1.0), LabelKind::AxonInstance);
        assert!(axon_basins(&none).is_err());
    }

    #[test]
    fn far_myelin_flagged() {
        let d = Dims::new(40, 1, 1);
        let mut m = vec![0u32; 40];
        m[39] = MYELIN;
        m[1] = MYELIN;
        let mut a = vec![0u32; 40];
        a[0] = 2;
        let a = LabelVolume::new(d, VoxelSize::isotropic(100.0), LabelKind::AxonInstance, a).unwrap();
        let m = LabelVolume::new(d, VoxelSize::isotropic(100.0), LabelKind::Semantic, m).unwrap();
        let mi = myelin_instances(&a, &m).unwrap();
        assert_eq!(mi.far_voxels[&2], 1);
        assert_eq!(mi.labels.count_nonzero(), 2);
    }

    #[test]
    fn pairing_reports_empty_and_is_stable_under_renumbering() {
        let ph = generate_phantom(&PhantomSpec {
            dims: [60, 30, 10],
            voxel_size_nm: [10.0; 3],
            tubes: vec![tube(15.0, 15.0, 0.06, 0.04), tube(45.0, 15.0, 0.06, 0.04), {
                let mut t = tube(30.0, 4.0, 0.02, 0.0);
                t.myelinated = false;
                t
            }],
            background: 0.5,
            noise_sigma: 0.0,
            rng_seed: 0,
        })
        .unwrap();
        let mi = myelin_instances(&ph.axons, &ph.semantic).unwrap();
        let p = pair_labels(&ph.axons, &mi.labels).unwrap();
        assert_eq!(p.pairs.len(), 2);
        assert_eq!(p.empty, vec![4]);
        assert!(p.orphans.is_empty());
        // swap ids 2 and 3 and compare the voxel sets of each pair
        let perm = |l: u32| match l {
            2 => 3,
            3 => 2,
            x => x,
        };
        let mut axons2 = ph.axons.clone();
        axons2.labels.iter_mut().for_each(|l| *l = perm(*l));
        let mi2 = myelin_instances(&axons2, &ph.semantic).unwrap();
        let mapped: Vec<u32> = mi2.labels.labels.iter().map(|&l| perm(l)).collect();
        assert_eq!(mapped, mi.labels.labels);
        assert_eq!(pair_labels(&axons2, &mi2.labels).unwrap().pairs.len(), 2);
    }
}
