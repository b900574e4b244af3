use std::collections::VecDeque;

use rayon::prelude::*;

use super::{AxonRecord, BvgParams, SeedOrigin};
use crate::error::Result;
use crate::volume::{LabelKind, LabelVolume, Volume, Voxel, FIRST_INSTANCE};

/// Edge voxels that block growth. Edges lying on myelin or 4-adjacent to it
/// within the slice are dropped: the myelin already bounds growth there, and
/// keeping them would peel the outer ring off every lumen.
pub fn edge_barrier(edges: &LabelVolume, myelin: &LabelVolume) -> Vec<bool> {
    let d = edges.dims;
    (0..d.len())
        .into_par_iter()
        .map(|i| {
            if edges.labels[i] == 0 || myelin.labels[i] != 0 {
                return false;
            }
            let (x, y, z) = d.coords(i);
            let touches = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)].iter().any(|&(dx, dy)| {
                d.checked_index(x as i64 + dx, y as i64 + dy, z as i64)
                    .is_some_and(|j| myelin.labels[j] != 0)
            });
            !touches
        })
        .collect()
}

/// Bounded volume growing from `seeds` in order. Creates labels from
/// `FIRST_INSTANCE` upward.
pub fn bvg(
    v: &Volume,
    myelin: &LabelVolume,
    edges: &LabelVolume,
    seeds: &[Voxel],
    origin: SeedOrigin,
    p: &BvgParams,
) -> Result<(LabelVolume, Vec<AxonRecord>)> {
    myelin.ensure_congruent(v.dims, v.voxel_size, "myelin")?;
    edges.ensure_congruent(v.dims, v.voxel_size, "edges")?;
    let barrier = edge_barrier(edges, myelin);
    let mut labels = v.empty_labels(LabelKind::AxonInstance);
    let records = bvg_into(&mut labels, v, myelin, &barrier, seeds, origin, p)?;
    Ok((labels, records))
}

/// Grow new regions into an existing instance map; existing labels act as
/// the earlier `V_j`. New ids continue after the current maximum.
pub fn bvg_into(
    labels: &mut LabelVolume,
    v: &Volume,
    myelin: &LabelVolume,
    barrier: &[bool],
    seeds: &[Voxel],
    origin: SeedOrigin,
    p: &BvgParams,
) -> Result<Vec<AxonRecord>> {
    p.validate()?;
    labels.ensure_congruent(v.dims, v.voxel_size, "axons")?;
    myelin.ensure_congruent(v.dims, v.voxel_size, "myelin")?;
    let dims = v.dims;
    let theta = p.similarity_threshold;
    let mut next = labels.max_label().max(FIRST_INSTANCE - 1) + 1;
    let mut records = Vec::new();
    let mut queue = VecDeque::new();
    let mut region = Vec::new();
    for seed in seeds {
        let s = seed.index_in(dims)?;
        if labels.labels[s] != 0 || myelin.labels[s] != 0 || barrier[s] {
            continue;
        }
        let id = next;
        region.clear();
        queue.clear();
        labels.labels[s] = id;
        region.push(s);
        queue.push_back(s);
        let mut sum = v.data[s] as f64;
        let mut flagged = false;
        'grow: while let Some(i) = queue.pop_front() {
            for nb in dims.neighbors6(i) {
                if labels.labels[nb] != 0 || myelin.labels[nb] != 0 || barrier[nb] {
                    continue;
                }
                let val = v.data[nb] as f64;
                if (val - sum / region.len() as f64).abs() > theta {
                    continue;
                }
                labels.labels[nb] = id;
                region.push(nb);
                sum += val;
                queue.push_back(nb);
                if region.len() > p.max_volume {
                    flagged = true;
                    break 'grow;
                }
            }
        }
        if region.len() < p.min_volume {
            for &i in &region {
                labels.labels[i] = 0;
            }
            continue;
        }
        next += 1;
        records.push(AxonRecord {
            label: id,
            voxel_count: region.len(),
            seed: *seed,
            seed_origin: origin,
            flagged,
            myelinated: false,
            myelin_fraction: 0.0,
        });
    }
    Ok(records)
}
