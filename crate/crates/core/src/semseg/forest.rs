//! Bagged Gini decision trees over the five voxel features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureStack, Scribble, ScribbleClass, N_FEATURES};
use crate::error::{Error, Result};
use crate::volume::{LabelKind, LabelVolume, VoxelSize, MYELIN};

pub const FOREST_FORMAT_VERSION: u32 = 1;

const OTHER: usize = 0;
const MYELIN_CLASS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub rng_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 12,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        channel: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
    /// Training votes as `[other, myelin]`.
    Leaf { votes: [u32; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// True when the leaf reached by `x` votes myelin (ties go to myelin).
    pub fn votes_myelin(&self, x: &[f32]) -> bool {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    channel,
                    threshold,
                    left,
                    right,
                } => at = if x[*channel] <= *threshold { *left } else { *right },
                Node::Leaf { votes } => return votes[MYELIN_CLASS] >= votes[OTHER],
            }
        }
    }

    fn validate(&self, n_channels: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::param("empty tree"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split {
                channel, left, right, threshold,
            } = n
            {
                // children must point forward so traversal terminates
                if *channel >= n_channels
                    || *left <= i
                    || *right <= i
                    || *left >= self.nodes.len()
                    || *right >= self.nodes.len()
                    || !threshold.is_finite()
                {
                    return Err(Error::param(format!("malformed split node {i}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub n_channels: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub training_seed: u64,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: ForestModel = serde_json::from_slice(bytes)?;
        if m.version != FOREST_FORMAT_VERSION {
            return Err(Error::param(format!("unsupported forest version {}", m.version)));
        }
        if m.n_channels != N_FEATURES {
            return Err(Error::param(format!("forest expects {} channels, features have {N_FEATURES}", m.n_channels)));
        }
        if m.trees.len() != m.n_trees || m.trees.is_empty() {
            return Err(Error::param("tree count mismatch"));
        }
        for t in &m.trees {
            t.validate(m.n_channels)?;
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn predict_one(&self, x: &[f32]) -> bool {
        let yes = self.trees.iter().filter(|t| t.votes_myelin(x)).count();
        2 * yes >= self.trees.len()
    }
}

struct Sample<'a> {
    x: &'a [[f32; N_FEATURES]],
    y: &'a [usize],
}

fn gini(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = c[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

fn counts(s: &Sample, idx: &[usize]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for &i in idx {
        c[s.y[i]] += 1;
    }
    c
}

/// Best (impurity, threshold) split on one channel.
fn best_split(s: &Sample, idx: &[usize], channel: usize, total: [usize; 2]) -> Option<(f64, f32)> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| s.x[a][channel].total_cmp(&s.x[b][channel]).then(a.cmp(&b)));
    let n = order.len();
    let mut left = [0usize; 2];
    let mut best: Option<(f64, f32)> = None;
    for k in 0..n - 1 {
        left[s.y[order[k]]] += 1;
        let a = s.x[order[k]][channel];
        let b = s.x[order[k + 1]][channel];
        if a == b {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let nl = (k + 1) as f64;
        let nr = (n - k - 1) as f64;
        let imp = (nl * gini(left) + nr * gini(right)) / n as f64;
        let mut thr = a + (b - a) / 2.0;
        if thr >= b {
            thr = a;
        }
        if best.is_none_or(|(bi, _)| imp < bi) {
            best = Some((imp, thr));
        }
    }
    best
}

fn grow(s: &Sample, idx: Vec<usize>, depth: usize, max_depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
    let c = counts(s, &idx);
    let at = nodes.len();
    nodes.push(Node::Leaf {
        votes: [c[0] as u32, c[1] as u32],
    });
    if depth >= max_depth || c[0] == 0 || c[1] == 0 {
        return at;
    }
    let parent = gini(c);
    let mut channels: Vec<usize> = (0..N_FEATURES).collect();
    channels.shuffle(rng);
    let mtry = (N_FEATURES as f64).sqrt().floor() as usize;
    let mut best: Option<(f64, usize, f32)> = None;
    for (k, &ch) in channels.iter().enumerate() {
        // keep looking past the random subset only while nothing splits
        if k >= mtry && best.is_some() {
            break;
        }
        if let Some((imp, thr)) = best_split(s, &idx, ch, c) {
            if imp < parent - 1e-12 && best.is_none_or(|(bi, _, _)| imp < bi) {
                best = Some((imp, ch, thr));
            }
        }
    }
    let Some((_, channel, threshold)) = best else {
        return at;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| s.x[i][channel] <= threshold);
    let left = grow(s, l, depth + 1, max_depth, rng, nodes);
    let right = grow(s, r, depth + 1, max_depth, rng, nodes);
    nodes[at] = Node::Split {
        channel,
        threshold,
        left,
        right,
    };
    at
}

/// Train on scribbled voxels. Each tree draws its own bootstrap sample from
/// an RNG stream keyed by the tree index.
pub fn train_forest(f: &FeatureStack, scribbles: &[Scribble], p: &ForestParams) -> Result<ForestModel> {
    if p.n_trees == 0 {
        return Err(Error::param("n_trees must be >= 1"));
    }
    let mut x = Vec::with_capacity(scribbles.len());
    let mut y = Vec::with_capacity(scribbles.len());
    for s in scribbles {
        let idx = crate::volume::Voxel::new(s.x, s.y, s.z).index_in(f.dims)?;
        x.push(f.vector(idx));
        y.push(match s.class {
            ScribbleClass::Myelin => MYELIN_CLASS,
            ScribbleClass::Other => OTHER,
        });
    }
    if !y.contains(&MYELIN_CLASS) || !y.contains(&OTHER) {
        return Err(Error::param("scribbles must contain both classes"));
    }
    let sample = Sample { x: &x, y: &y };
    let n = x.len();
    let trees = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
            rng.set_stream(t as u64);
            let boot: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut nodes = Vec::new();
            grow(&sample, boot, 0, p.max_depth, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();
    Ok(ForestModel {
        version: FOREST_FORMAT_VERSION,
        n_channels: N_FEATURES,
        n_trees: p.n_trees,
        max_depth: p.max_depth,
        training_seed: p.rng_seed,
        trees,
    })
}

/// Per-voxel majority vote; ties go to myelin.
pub fn predict_forest(m: &ForestModel, f: &FeatureStack, voxel_size: VoxelSize) -> Result<LabelVolume> {
    if f.channels.len() != m.n_channels {
        return Err(Error::param(format!(
            "model expects {} channels, features have {}",
            m.n_channels,
            f.channels.len()
        )));
    }
    let labels = (0..f.dims.len())
        .into_par_iter()
        .map(|i| if m.predict_one(&f.vector(i)) { MYELIN } else { 0 })
        .collect();
    LabelVolume::new(f.dims, voxel_size, LabelKind::Semantic, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semseg::compute_features;
    use crate::volume::Dims;

    fn stack_from(rows: &[[f32; N_FEATURES]]) -> FeatureStack {
        let dims = Dims::new(rows.len(), 1, 1);
        let channels = (0..N_FEATURES).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        FeatureStack { dims, channels }
    }

    fn scrib(x: usize, class: ScribbleClass) -> Scribble {
        Scribble { x, y: 0, z: 0, class }
    }

    #[test]
    fn separable_training_accuracy() {
        let rows: Vec<[f32; 5]> = (0..40).map(|i| [i as f32 / 40.0, 0.3, 0.3, 0.3, 0.3]).collect();
        let f = stack_from(&rows);
        let s: Vec<Scribble> = (0..40)
            .map(|i| scrib(i, if i < 17 { ScribbleClass::Myelin } else { ScribbleClass::Other }))
            .collect();
        let m = train_forest(&f, &s, &ForestParams { n_trees: 15, max_depth: 12, rng_seed: 1 }).unwrap();
        for sc in &s {
            assert_eq!(m.predict_one(&f.vector(sc.x)), sc.class == ScribbleClass::Myelin);
        }
    }

    #[test]
    fn conflicting_labels_predict_majority() {
        let rows = vec![[0.5f32; 5]; 7];
        let f = stack_from(&rows);
        let s: Vec<Scribble> = (0..7)
            .map(|i| scrib(i, if i < 2 { ScribbleClass::Myelin } else { ScribbleClass::Other }))
            .collect();
        let m = train_forest(&f, &s, &ForestParams { n_trees: 25, max_depth: 12, rng_seed: 3 }).unwrap();
        assert!(!m.predict_one(&[0.5; 5]));
    }

    #[test]
    fn depth_zero_is_constant() {
        let rows: Vec<[f32; 5]> = (0..10).map(|i| [i as f32; 5]).collect();
        let f = stack_from(&rows);
        let s: Vec<Scribble> = (0..10)
            .map(|i| scrib(i, if i < 3 { ScribbleClass::Myelin } else { ScribbleClass::Other }))
            .collect();
        let m = train_forest(&f, &s, &ForestParams { n_trees: 5, max_depth: 0, rng_seed: 0 }).unwrap();
        let out = predict_forest(&m, &f, VoxelSize::isotropic(1.0)).unwrap();
        assert!(out.labels.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn single_class_rejected_and_deterministic() {
        let rows: Vec<[f32; 5]> = (0..6).map(|i| [i as f32; 5]).collect();
        let f = stack_from(&rows);
        let only: Vec<Scribble> = (0..6).map(|i| scrib(i, ScribbleClass::Other)).collect();
        assert!(train_forest(&f, &only, &ForestParams::default()).is_err());
        let s: Vec<Scribble> = (0..6)
            .map(|i| scrib(i, if i % 2 == 0 { ScribbleClass::Myelin } else { ScribbleClass::Other }))
            .collect();
        let p = ForestParams { n_trees: 8, max_depth: 5, rng_seed: 77 };
        assert_eq!(train_forest(&f, &s, &p).unwrap(), train_forest(&f, &s, &p).unwrap());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let rows: Vec<[f32; 5]> = (0..6).map(|i| [i as f32; 5]).collect();
        let f = stack_from(&rows);
        let s: Vec<Scribble> = (0..6)
            .map(|i| scrib(i, if i < 3 { ScribbleClass::Myelin } else { ScribbleClass::Other }))
            .collect();
        let m = train_forest(&f, &s, &ForestParams { n_trees: 4, max_depth: 4, rng_seed: 2 }).unwrap();
        let back = ForestModel::from_json(m.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(back, m);
        let looped = r#"{"version":1,"n_channels":5,"n_trees":1,"max_depth":1,"training_seed":0,
            "trees":[{"nodes":[{"node":"split","channel":0,"threshold":0.5,"left":0,"right":0}]}]}"#;
        assert!(ForestModel::from_json(looped.as_bytes()).is_err());
        let mut short = f.clone();
        short.channels.pop();
        assert!(predict_forest(&m, &short, VoxelSize::isotropic(1.0)).is_err());
    }

    #[test]
    fn phantom_scribbles_generalize() {
        let ph = super::super::tests::two_tube_phantom(0.03);
        let f = compute_features(&ph.volume);
        let dims = ph.volume.dims;
        let z = 12;
        let plane: Vec<usize> = (0..dims.slice_len()).map(|i| z * dims.slice_len() + i).collect();
        let pick = |pred: &dyn Fn(usize) -> bool, n: usize| -> Vec<usize> {
            let c: Vec<usize> = plane.iter().copied().filter(|&i| pred(i)).collect();
            (0..n).map(|k| c[k * c.len() / n]).collect()
        };
        let mut s = Vec::new();
        for i in pick(&|i| ph.semantic.labels[i] == MYELIN, 50) {
            let (x, y, z) = dims.coords(i);
            s.push(Scribble { x, y, z, class: ScribbleClass::Myelin });
        }
        let lumen = pick(&|i| ph.axons.labels[i] != 0, 25);
        let background = pick(&|i| ph.axons.labels[i] == 0 && ph.semantic.labels[i] == 0, 25);
        for i in lumen.into_iter().chain(background) {
            let (x, y, z) = dims.coords(i);
            s.push(Scribble { x, y, z, class: ScribbleClass::Other });
        }
        let m = train_forest(&f, &s, &ForestParams { n_trees: 20, max_depth: 12, rng_seed: 9 }).unwrap();
        let pred = predict_forest(&m, &f, ph.volume.voxel_size).unwrap();
        let tp = pred.labels.iter().zip(&ph.semantic.labels).filter(|(p, t)| **p != 0 && **t != 0).count();
        let dice = 2.0 * tp as f64 / (pred.count_nonzero() + ph.semantic.count_nonzero()) as f64;
        assert!(dice >= 0.9, "dice {dice}");
    }
}
