//! Object-level agreement between a predicted and a reference instance map.

use std::collections::BTreeMap;

use axonvox_core::stats::EvalCounts;
use axonvox_core::LabelVolume;

use crate::error::Result;

/// Predicted and reference objects pair up when their IoU reaches `min_iou`;
/// pairs are taken greedily by decreasing IoU, one-to-one.
pub fn match_objects(pred: &LabelVolume, truth: &LabelVolume, min_iou: f64) -> Result<(EvalCounts, Vec<(u32, u32, f64)>)> {
    pred.ensure_congruent(truth.dims, truth.voxel_size, "truth")?;
    let mut inter: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut np: BTreeMap<u32, usize> = BTreeMap::new();
    let mut nt: BTreeMap<u32, usize> = BTreeMap::new();
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        if p != 0 {
            *np.entry(p).or_default() += 1;
        }
        if t != 0 {
            *nt.entry(t).or_default() += 1;
        }
        if p != 0 && t != 0 {
            *inter.entry((p, t)).or_default() += 1;
        }
    }
    let mut cands: Vec<(f64, u32, u32)> = inter
        .iter()
        .map(|(&(p, t), &c)| (c as f64 / (np[&p] + nt[&t] - c) as f64, p, t))
        .filter(|&(iou, _, _)| iou >= min_iou)
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = BTreeMap::new();
    let mut used_t = BTreeMap::new();
    let mut pairs = Vec::new();
    for (iou, p, t) in cands {
        if used_p.contains_key(&p) || used_t.contains_key(&t) {
            continue;
        }
        used_p.insert(p, ());
        used_t.insert(t, ());
        pairs.push((p, t, iou));
    }
    let tp = pairs.len() as u64;
    let counts = EvalCounts {
        tp,
        fp: np.len() as u64 - tp,
        fn_: nt.len() as u64 - tp,
    };
    Ok((counts, pairs))
}
