use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::SupervoxelMap;
use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Result of supervoxel refinement.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub labels: LabelVolume,
    /// `I_i` for every refined axon, supervoxel ids ascending.
    pub claimed: BTreeMap<u32, Vec<u32>>,
    /// Voxels of refined axons left uncovered by their claimed supervoxels.
    pub released: Vec<bool>,
}

/// Replace every axon with more than `big_threshold` voxels by the union of
/// the supervoxels it covers to at least `overlap`, visiting axons in label
/// order and never handing a supervoxel to two axons. Axons at or below the
/// threshold keep their voxels except where a claimed supervoxel covers them.
pub fn refine_with_supervoxels(
    axons: &LabelVolume,
    sv: &SupervoxelMap,
    overlap: f64,
    big_threshold: usize,
) -> Result<Refinement> {
    sv.labels.ensure_congruent(axons.dims, axons.voxel_size, "supervoxels")?;
    if !(overlap > 0.0 && overlap <= 1.0) {
        return Err(Error::param("overlap must be in (0, 1]"));
    }
    let sizes = sv.sizes();
    let mut inter: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); sv.q + 1];
    let mut axon_size: BTreeMap<u32, usize> = BTreeMap::new();
    for (&a, &q) in axons.labels.iter().zip(&sv.labels.labels) {
        if a != 0 {
            *inter[q as usize].entry(a).or_default() += 1;
            *axon_size.entry(a).or_default() += 1;
        }
    }
    let big: BTreeSet<u32> = axon_size
        .iter()
        .filter(|&(_, &n)| n > big_threshold)
        .map(|(&l, _)| l)
        .collect();
    let mut owner = vec![0u32; sv.q + 1];
    let mut claimed: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &i in &big {
        let mine = claimed.entry(i).or_default();
        for q in 1..=sv.q {
            if owner[q] != 0 {
                continue;
            }
            let c = inter[q].get(&i).copied().unwrap_or(0);
            if c > 0 && c as f64 >= overlap * sizes[q] as f64 {
                owner[q] = i;
                mine.push(q as u32);
            }
        }
    }
    let mut labels = axons.clone();
    let mut released = vec![false; axons.labels.len()];
    for (i, (out, &q)) in labels.labels.iter_mut().zip(&sv.labels.labels).enumerate() {
        let o = owner[q as usize];
        if o != 0 {
            *out = o;
        } else if big.contains(out) {
            *out = 0;
            released[i] = true;
        }
    }
    Ok(Refinement {
        labels,
        claimed,
        released,
    })
}

/// Attach released 6-connected fragments smaller than `min_fragment` to the
/// single refined axon they touch. Returns the number of voxels relabeled.
pub fn merge_fragments(r: &mut Refinement, min_fragment: usize) -> usize {
    let d = r.labels.dims;
    let mut seen = vec![false; d.len()];
    let mut merged = 0;
    let mut queue = VecDeque::new();
    for start in 0..d.len() {
        if !r.released[start] || seen[start] || r.labels.labels[start] != 0 {
            continue;
        }
        let mut comp = Vec::new();
        let mut touching = BTreeSet::new();
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            for nb in d.neighbors6(i) {
                let l = r.labels.labels[nb];
                if l != 0 {
                    touching.insert(l);
                } else if r.released[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        if comp.len() < min_fragment && touching.len() == 1 {
            let l = *touching.iter().next().unwrap();
            if r.claimed.contains_key(&l) {
                for &i in &comp {
                    r.labels.labels[i] = l;
                }
                merged += comp.len();
            }
        }
    }
    merged
}

/// Myelination test for every axon: the enclosing cylinder is the set of
/// supervoxels that contain a voxel face-adjacent to the axon, minus the
/// axon's own voxels. Returns `label -> (myelinated, myelin fraction)`.
pub fn myelination_all(
    axons: &LabelVolume,
    sv: &SupervoxelMap,
    myelin: &LabelVolume,
    frac: f64,
) -> Result<BTreeMap<u32, (bool, f64)>> {
    let d = axons.dims;
    sv.labels.ensure_congruent(d, axons.voxel_size, "supervoxels")?;
    myelin.ensure_congruent(d, axons.voxel_size, "myelin")?;
    let mut size = vec![0usize; sv.q + 1];
    let mut my = vec![0usize; sv.q + 1];
    let mut inter: BTreeMap<(u32, u32), (usize, usize)> = BTreeMap::new();
    let mut shell: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for i in 0..d.len() {
        let q = sv.labels.labels[i];
        let m = myelin.labels[i] != 0;
        size[q as usize] += 1;
        my[q as usize] += m as usize;
        let a = axons.labels[i];
        if a == 0 {
            continue;
        }
        let e = inter.entry((a, q)).or_default();
        e.0 += 1;
        e.1 += m as usize;
        let set = shell.entry(a).or_default();
        for nb in d.neighbors6(i) {
            if axons.labels[nb] != a {
                set.insert(sv.labels.labels[nb]);
            }
        }
    }
    let mut out = BTreeMap::new();
    for (a, qs) in shell {
        let mut total = 0usize;
        let mut mye = 0usize;
        for q in qs {
            let (n_in, m_in) = inter.get(&(a, q)).copied().unwrap_or((0, 0));
            total += size[q as usize] - n_in;
            mye += my[q as usize] - m_in;
        }
        let f = if total == 0 { 0.0 } else { mye as f64 / total as f64 };
        out.insert(a, (f > frac, f));
    }
    Ok(out)
}

/// Myelination test for one axon; myelinated iff the myelin fraction of its
/// enclosing cylinder exceeds `frac`.
pub fn myelination_test(
    axon_label: u32,
    axons: &LabelVolume,
    sv: &SupervoxelMap,
    myelin: &LabelVolume,
    frac: f64,
) -> Result<(bool, f64)> {
    if !axons.labels.contains(&axon_label) || axon_label == 0 {
        return Err(Error::MissingLabel(axon_label));
    }
    let all = myelination_all(axons, sv, myelin, frac)?;
    Ok(all.get(&axon_label).copied().unwrap_or((false, 0.0)))
}
