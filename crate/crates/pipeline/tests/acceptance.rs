//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails. Positional arguments filter by name.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use axonvox_core::instseg::{regional_maxima_counts, refine_with_supervoxels, watershed_counts, SupervoxelMap};
use axonvox_core::instseg::edt2d_stack;
use axonvox_core::morpho::{self, AxonMorphometry, AxonOutcome};
use axonvox_core::myelinmap::myelin_instances;
use axonvox_core::phantom::{generate_phantom, ten_tube_spec, Centerline, Phantom, PhantomSpec, TubeSpec};
use axonvox_core::stats::{self, CompareParams};
use axonvox_core::volume::FIRST_INSTANCE;
use axonvox_core::{Dims, LabelKind, LabelVolume, VoxelSize};
use axonvox_pipeline::run::split_outcomes;
use axonvox_pipeline::{eval, run_pipeline, stages, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// g-ratio anchor
const G_ANCHOR: f64 = 0.552;
const G_ANCHOR_TOL: f64 = 0.0005;
const G_PAPER_MEAN: f64 = 0.56;
const G_PAPER_TOL: f64 = 0.01;

// phantom end to end
const E2E_N: usize = 256;
const E2E_NOISE: f64 = 0.05;
const E2E_SEED: u64 = 7;
const E2E_MIN_F1: f64 = 0.9;
const E2E_MIN_IOU: f64 = 0.5;
const E2E_MIN_RADIUS_VOX: f64 = 5.0;
const E2E_DE_TOL: f64 = 0.10;
const E2E_T_TOL: f64 = 0.15;
const E2E_MAX_SECONDS: f64 = 600.0;

const REFINE_CASES: u64 = 100;

const SPLIT_WITHIN_VOX: f64 = 1.0;
const SPLIT_MIN_FRACTION: f64 = 0.99;

const SEEDING_PHANTOMS: u64 = 50;

const KS_SIMS: usize = 500;
const KS_N: usize = 30;
const KS_N_PERM: usize = 999;
const KS_MAX_D: f64 = 0.05;
const EXHAUSTIVE_CASES: u64 = 20;
const BCA_SIMS: usize = 1000;
const BCA_N: usize = 30;
const BCA_N_BOOT: usize = 2000;
const BCA_COVERAGE: f64 = 0.95;
const BCA_COVERAGE_TOL: f64 = 0.03;
const WELCH_EXPECTED: f64 = -3.674;
const WELCH_TOL: f64 = 1e-3;

const TABLE3_MEAN_A: f64 = 0.48;
const TABLE3_MEAN_B: f64 = 0.42;
const TABLE3_MEAN_TOL: f64 = 0.005;
const TABLE3_T: f64 = 2.12;
const TABLE3_T_TOL: f64 = 0.02;
const TABLE3_P: f64 = 0.032;
const TABLE3_P_TOL: f64 = 0.01;

const DETERMINISM_THREADS: [usize; 2] = [1, 3];

const RESCALE_BASE_NM: f64 = 20.0;
const RESCALE_FACTORS: [f64; 2] = [2.0, 3.0];
const RESCALE_TOL: f64 = 0.02;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn g_ratio_anchor() -> Outcome {
    let g = morpho::g_ratio(0.37, 0.15).unwrap();
    verdict(
        (g - G_ANCHOR).abs() <= G_ANCHOR_TOL && (g - G_PAPER_MEAN).abs() <= G_PAPER_TOL,
        format!("g(0.37, 0.15) = {g:.4}; reported mean {G_PAPER_MEAN}"),
    )
}

fn measured(outcomes: &[AxonOutcome]) -> BTreeMap<u32, AxonMorphometry> {
    split_outcomes(outcomes).0.into_iter().map(|m| (m.axon_id, m)).collect()
}

fn phantom_end_to_end() -> Outcome {
    let spec = ten_tube_spec(E2E_N, E2E_NOISE, E2E_SEED);
    let ph = generate_phantom(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let out = match run_pipeline(&PipelineConfig::default(), &ph.volume, dir.path()) {
        Ok(o) => o,
        Err(e) => return verdict(false, format!("pipeline failed: {e}")),
    };
    let seconds = t0.elapsed().as_secs_f64();
    let (counts, pairs) = eval::match_objects(&out.axons, &ph.axons, E2E_MIN_IOU).unwrap();
    let f1 = stats::prf1(counts).map(|m| m.f1).unwrap_or(0.0);
    let by_axon = measured(&out.outcomes);
    let vs_um = spec.voxel_size_nm[0] / 1000.0;
    let mut bad = Vec::new();
    let mut checked = 0;
    for (t, tube) in spec.tubes.iter().enumerate() {
        let r_vox = tube.lumen_radius_um / vs_um;
        if r_vox < E2E_MIN_RADIUS_VOX {
            continue;
        }
        checked += 1;
        let truth = FIRST_INSTANCE + t as u32;
        let Some(&(pred, _, _)) = pairs.iter().find(|p| p.1 == truth) else {
            bad.push(format!("r{r_vox}: undetected"));
            continue;
        };
        let Some(m) = by_axon.get(&pred) else {
            bad.push(format!("r{r_vox}: not measured"));
            continue;
        };
        let de_true = 2.0 * tube.lumen_radius_um;
        let t_true = tube.shell_thickness_um;
        let de_err = rel(m.d_e_um, de_true);
        let t_err = m.t_um.map_or(f64::INFINITY, |t| rel(t, t_true));
        if de_err > E2E_DE_TOL || t_err > E2E_T_TOL {
            bad.push(format!("r{r_vox}: d_e err {:.1}%, t err {:.1}%", de_err * 100.0, t_err * 100.0));
        }
    }
    let ok = f1 >= E2E_MIN_F1 && bad.is_empty() && seconds < E2E_MAX_SECONDS;
    verdict(
        ok,
        format!(
            "F1 {f1:.3} (tp {} fp {} fn {}), {checked} tubes within d_e {:.0}% / t {:.0}%{}, {seconds:.0} s",
            counts.tp,
            counts.fp,
            counts.fn_,
            E2E_DE_TOL * 100.0,
            E2E_T_TOL * 100.0,
            if bad.is_empty() { String::new() } else { format!(", misses: {}", bad.join("; ")) }
        ),
    )
}

/// The refinement set formula evaluated directly per axon and supervoxel.
fn refine_brute(axons: &[u32], sv: &[u32], overlap: f64, big: usize) -> Vec<u32> {
    let ids: BTreeSet<u32> = axons.iter().copied().filter(|&a| a != 0).collect();
    let qs: BTreeSet<u32> = sv.iter().copied().collect();
    let mut taken: BTreeSet<u32> = BTreeSet::new();
    let mut owner: BTreeMap<u32, u32> = BTreeMap::new();
    let mut big_ids = BTreeSet::new();
    for &i in &ids {
        let vi = axons.iter().filter(|&&a| a == i).count();
        if vi <= big {
            continue;
        }
        big_ids.insert(i);
        for &q in &qs {
            let sq = sv.iter().filter(|&&s| s == q).count();
            let both = (0..sv.len()).filter(|&v| sv[v] == q && axons[v] == i).count();
            if both as f64 / sq as f64 >= overlap && !taken.contains(&q) {
                taken.insert(q);
                owner.insert(q, i);
            }
        }
    }
    (0..axons.len())
        .map(|v| match owner.get(&sv[v]) {
            Some(&i) => i,
            None if big_ids.contains(&axons[v]) => 0,
            None => axons[v],
        })
        .collect()
}

fn refine_oracle() -> Outcome {
    let d = Dims::new(20, 20, 20);
    let vs = VoxelSize::isotropic(1.0);
    let mut agree = 0;
    for case in 0..REFINE_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        // Voronoi supervoxels around distinct random centers
        let k = rng.random_range(4..40);
        let mut centers: Vec<[i64; 3]> = Vec::new();
        while centers.len() < k {
            let c = [rng.random_range(0..20), rng.random_range(0..20), rng.random_range(0..20)];
            if !centers.contains(&c) {
                centers.push(c);
            }
        }
        let sv: Vec<u32> = (0..d.len())
            .map(|i| {
                let (x, y, z) = d.coords(i);
                let p = [x as i64, y as i64, z as i64];
                let dist = |c: &[i64; 3]| (0..3).map(|a| (p[a] - c[a]).pow(2)).sum::<i64>();
                (0..k).min_by_key(|&j| (dist(&centers[j]), j)).unwrap() as u32 + 1
            })
            .collect();
        let mut axons = vec![0u32; d.len()];
        for l in FIRST_INSTANCE..FIRST_INSTANCE + rng.random_range(1..8u32) {
            let lo: [usize; 3] = std::array::from_fn(|_| rng.random_range(0..16));
            let ext: [usize; 3] = std::array::from_fn(|_| rng.random_range(2..14));
            for z in lo[2]..(lo[2] + ext[2]).min(20) {
                for y in lo[1]..(lo[1] + ext[1]).min(20) {
                    for x in lo[0]..(lo[0] + ext[0]).min(20) {
                        if rng.random_bool(0.9) {
                            axons[d.index(x, y, z)] = l;
                        }
                    }
                }
            }
        }
        let overlap = rng.random_range(0.2..1.0);
        let big = rng.random_range(0..600);
        let map = SupervoxelMap {
            labels: LabelVolume::new(d, vs, LabelKind::Supervoxel, sv.clone()).unwrap(),
            q: k,
            target_size: d.len() / k,
            compactness: 0.1,
        };
        let av = LabelVolume::new(d, vs, LabelKind::AxonInstance, axons.clone()).unwrap();
        let r = refine_with_supervoxels(&av, &map, overlap, big).unwrap();
        if r.labels.labels == refine_brute(&axons, &sv, overlap, big) {
            agree += 1;
        }
    }
    verdict(agree == REFINE_CASES, format!("{agree}/{REFINE_CASES} random 20^3 instances match"))
}

fn straight_tube(cx: f64, cy: f64, z1: f64, r_um: f64, t_um: f64) -> TubeSpec {
    TubeSpec {
        centerline: Centerline::Straight {
            start: [cx, cy, -3.0],
            end: [cx, cy, z1],
        },
        lumen_radius_um: r_um,
        shell_thickness_um: t_um,
        lumen_intensity: 0.85,
        shell_intensity: 0.15,
        myelinated: true,
    }
}

fn myelin_split_midplane() -> Outcome {
    // lumen 6, shell 3 voxels at 20 nm, centers 16 apart: one shared wall
    let (r, t) = (0.12, 0.06);
    let ph = generate_phantom(&PhantomSpec {
        dims: [56, 40, 32],
        voxel_size_nm: [20.0; 3],
        tubes: vec![straight_tube(20.0, 20.0, 35.0, r, t), straight_tube(36.0, 20.0, 35.0, r, t)],
        background: 0.5,
        noise_sigma: 0.0,
        rng_seed: 0,
    })
    .unwrap();
    let mid = 28.0;
    let mi = myelin_instances(&ph.axons, &ph.semantic).unwrap();
    let d = mi.labels.dims;
    let mut boundary = 0usize;
    let mut near = 0usize;
    for i in 0..d.len() {
        let a = mi.labels.labels[i];
        if a == 0 {
            continue;
        }
        let other = d.neighbors6(i).any(|j| {
            let b = mi.labels.labels[j];
            b != 0 && b != a
        });
        if other {
            boundary += 1;
            let (x, _, _) = d.coords(i);
            if (x as f64 - mid).abs() <= SPLIT_WITHIN_VOX {
                near += 1;
            }
        }
    }
    let frac = near as f64 / boundary.max(1) as f64;
    verdict(
        boundary > 0 && frac >= SPLIT_MIN_FRACTION,
        format!("{near}/{boundary} boundary voxels within {SPLIT_WITHIN_VOX} voxel of the mid-plane ({:.2}%)", frac * 100.0),
    )
}

/// Random non-overlapping, slightly tilted tubes in a 64 x 64 x 12 volume.
fn random_phantom(seed: u64) -> Phantom {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(2..7);
        let tubes = (0..n)
            .map(|_| {
                let r = rng.random_range(3.0..8.0);
                let t = rng.random_range(2.0..5.0);
                let x = rng.random_range(6.0..58.0);
                let y = rng.random_range(6.0..58.0);
                let dx = rng.random_range(-3.0..3.0);
                let dy = rng.random_range(-3.0..3.0);
                TubeSpec {
                    centerline: Centerline::Straight {
                        start: [x, y, -2.0],
                        end: [x + dx, y + dy, 14.0],
                    },
                    lumen_radius_um: r * 0.02,
                    shell_thickness_um: t * 0.02,
                    lumen_intensity: 0.85,
                    shell_intensity: 0.15,
                    myelinated: true,
                }
            })
            .collect();
        let spec = PhantomSpec {
            dims: [64, 64, 12],
            voxel_size_nm: [20.0; 3],
            tubes,
            background: 0.5,
            noise_sigma: 0.05,
            rng_seed: seed,
        };
        if let Ok(ph) = generate_phantom(&spec) {
            return ph;
        }
    }
}

fn seeding_inequality() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut slices = 0;
    let mut violations = Vec::new();
    let (mut n_ws, mut n_max) = (0usize, 0usize);
    for s in 0..SEEDING_PHANTOMS {
        let ph = random_phantom(500 + s);
        let pre = stages::preprocess(&cfg.preproc, &ph.volume).unwrap();
        let myelin = stages::semantic(&cfg, &pre).unwrap();
        let dist = edt2d_stack(&myelin);
        let ws = watershed_counts(&dist, cfg.instseg.h);
        let mx = regional_maxima_counts(&dist);
        for (z, (w, m)) in ws.iter().zip(&mx).enumerate() {
            slices += 1;
            n_ws += w;
            n_max += m;
            if w > m {
                violations.push(format!("phantom {s} slice {z}: {w} > {m}"));
            }
        }
    }
    verdict(
        violations.is_empty(),
        format!(
            "{slices} slices of {SEEDING_PHANTOMS} phantoms, {n_ws} watershed vs {n_max} maxima seeds, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

fn normal_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Kolmogorov–Smirnov distance of a sample from U(0, 1) and its asymptotic p.
fn ks_uniform(mut p: Vec<f64>) -> (f64, f64) {
    p.sort_unstable_by(f64::total_cmp);
    let n = p.len() as f64;
    let d = p
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (d, q.clamp(0.0, 1.0))
}

fn welch_direct(a: &[f64], b: &[f64]) -> f64 {
    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let v = |x: &[f64]| {
        let mu = m(x);
        x.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    (m(a) - m(b)) / (v(a) / a.len() as f64 + v(b) / b.len() as f64).sqrt()
}

fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut parts = Vec::new();
    let mut ok = true;

    let ps: Vec<f64> = (0..KS_SIMS)
        .map(|k| {
            let a = normal_sample(&mut rng, KS_N);
            let b = normal_sample(&mut rng, KS_N);
            stats::permutation_test(&a, &b, KS_N_PERM, k as u64).unwrap().p
        })
        .collect();
    let (d, ks_p) = ks_uniform(ps);
    ok &= d < KS_MAX_D;
    parts.push(format!("KS D {d:.4} (p {ks_p:.2})"));

    let mut exact = 0;
    for _ in 0..EXHAUSTIVE_CASES {
        let pooled = normal_sample(&mut rng, 6);
        let (a, b) = pooled.split_at(3);
        let r = stats::permutation_test(a, b, 10_000, 0).unwrap();
        let t = welch_direct(a, b).abs();
        let mut hits = 0;
        let mut total = 0;
        for mask in 0u32..64 {
            if mask.count_ones() != 3 {
                continue;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = {
                let mut x = Vec::new();
                let mut y = Vec::new();
                for (i, &v) in pooled.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        x.push(v);
                    } else {
                        y.push(v);
                    }
                }
                (x, y)
            };
            total += 1;
            if welch_direct(&x, &y).abs() >= t - 1e-9 {
                hits += 1;
            }
        }
        if r.exhaustive && r.n_perm == total && r.p == hits as f64 / total as f64 {
            exact += 1;
        }
    }
    ok &= exact == EXHAUSTIVE_CASES;
    parts.push(format!("exhaustive 3v3 {exact}/{EXHAUSTIVE_CASES}"));

    let covered = (0..BCA_SIMS)
        .filter(|&k| {
            let x = normal_sample(&mut rng, BCA_N);
            let (lo, hi) = stats::bca_bootstrap_ci(&x, BCA_N_BOOT, 0.05, k as u64).unwrap();
            lo <= 0.0 && 0.0 <= hi
        })
        .count();
    let coverage = covered as f64 / BCA_SIMS as f64;
    ok &= (coverage - BCA_COVERAGE).abs() <= BCA_COVERAGE_TOL;
    parts.push(format!("BCa coverage {:.1}%", coverage * 100.0));

    let t = stats::welch_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    ok &= (t - WELCH_EXPECTED).abs() <= WELCH_TOL;
    parts.push(format!("Welch t {t:.4}"));

    verdict(ok, parts.join(", "))
}

fn table3() -> Outcome {
    let (Some(a), Some(b)) = (std::env::var_os("AXONVOX_TABLE3_A"), std::env::var_os("AXONVOX_TABLE3_B")) else {
        return Outcome {
            status: Status::Skip,
            detail: "set AXONVOX_TABLE3_A and AXONVOX_TABLE3_B to the sham and ipsilateral per-axon tables".into(),
        };
    };
    let column = std::env::var("AXONVOX_TABLE3_COLUMN").unwrap_or_else(|_| "d_e_um".into());
    let open = |p: &std::ffi::OsStr| std::fs::File::open(PathBuf::from(p));
    let (fa, fb) = match (open(&a), open(&b)) {
        (Ok(fa), Ok(fb)) => (fa, fb),
        _ => return verdict(false, "cannot open the supplied tables".into()),
    };
    let r = match stats::compare_groups(fa, fb, &[column.as_str()], &CompareParams::default()) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("comparison failed: {e}")),
    };
    let row = &r.rows[0];
    let ok = (row.mean_a - TABLE3_MEAN_A).abs() <= TABLE3_MEAN_TOL
        && (row.mean_b - TABLE3_MEAN_B).abs() <= TABLE3_MEAN_TOL
        && (row.tstat - TABLE3_T).abs() <= TABLE3_T_TOL
        && (row.p - TABLE3_P).abs() <= TABLE3_P_TOL;
    verdict(
        ok,
        format!("means {:.3} / {:.3}, t {:.3}, p {:.4}", row.mean_a, row.mean_b, row.tstat, row.p),
    )
}

fn determinism() -> Outcome {
    let tubes = vec![
        straight_tube(24.0, 24.0, 50.0, 0.12, 0.08),
        straight_tube(70.0, 26.0, 50.0, 0.16, 0.06),
        straight_tube(26.0, 70.0, 50.0, 0.10, 0.10),
        straight_tube(68.0, 70.0, 50.0, 0.20, 0.08),
    ];
    let ph = generate_phantom(&PhantomSpec {
        dims: [96, 96, 48],
        voxel_size_nm: [20.0; 3],
        tubes,
        background: 0.5,
        noise_sigma: 0.05,
        rng_seed: 11,
    })
    .unwrap();
    let cfg = PipelineConfig::default();
    let runs: Vec<_> = DETERMINISM_THREADS
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            let dir = tempfile::tempdir().unwrap();
            let out = pool.install(|| run_pipeline(&cfg, &ph.volume, dir.path())).unwrap();
            (n, out)
        })
        .collect();
    let (_, first) = &runs[0];
    let mut diffs = Vec::new();
    for (n, r) in &runs[1..] {
        if r.axons != first.axons || r.semantic != first.semantic || r.myelin_instances != first.myelin_instances {
            diffs.push(format!("labels differ at {n} threads"));
        }
        if r.manifest.outputs != first.manifest.outputs {
            diffs.push(format!("output hashes differ at {n} threads"));
        }
    }
    verdict(
        diffs.is_empty(),
        format!(
            "threads {:?}: {} output hashes, {} axons{}",
            DETERMINISM_THREADS,
            first.manifest.outputs.len(),
            first.records.len(),
            if diffs.is_empty() { String::new() } else { format!(", {}", diffs.join("; ")) }
        ),
    )
}

fn morpho_rescaling() -> Outcome {
    let tilted = TubeSpec {
        centerline: Centerline::Straight {
            start: [44.0, 20.0, -3.0],
            end: [60.0, 20.0, 243.0],
        },
        ..straight_tube(0.0, 0.0, 0.0, 0.14, 0.08)
    };
    let ph = generate_phantom(&PhantomSpec {
        dims: [80, 40, 240],
        voxel_size_nm: [RESCALE_BASE_NM; 3],
        tubes: vec![straight_tube(16.0, 20.0, 243.0, 0.16, 0.06), tilted],
        background: 0.5,
        noise_sigma: 0.0,
        rng_seed: 0,
    })
    .unwrap();
    let cfg = PipelineConfig::default();
    let measure = |s: f64| {
        let vs = VoxelSize::isotropic(RESCALE_BASE_NM * s);
        let mut axons = ph.axons.clone();
        axons.voxel_size = vs;
        let mut sem = ph.semantic.clone();
        sem.voxel_size = vs;
        let mi = stages::myelin_map(&axons, &sem).unwrap();
        measured(&stages::morphometry(&cfg, &axons, &mi.labels).unwrap())
    };
    let base = measure(1.0);
    if base.len() != 2 {
        return verdict(false, format!("{} of 2 tubes measured at the base size", base.len()));
    }
    let mut worst: [f64; 3] = [0.0; 3];
    let mut missing = 0;
    for s in RESCALE_FACTORS {
        let m = measure(s);
        for (id, b) in &base {
            let Some(x) = m.get(id) else {
                missing += 1;
                continue;
            };
            let g = match (x.g_ratio, b.g_ratio) {
                (Some(x), Some(b)) => rel(x, b),
                _ => f64::INFINITY,
            };
            worst[0] = worst[0].max((x.ecc - b.ecc).abs() / b.ecc.abs().max(1e-12));
            worst[1] = worst[1].max(g);
            worst[2] = worst[2].max(rel(x.d_e_um, b.d_e_um * s));
        }
    }
    verdict(
        missing == 0 && worst.iter().all(|&w| w <= RESCALE_TOL),
        format!(
            "factors {RESCALE_FACTORS:?}: worst change ecc {:.2}%, g {:.2}%, d_e vs linear {:.2}%",
            worst[0] * 100.0,
            worst[1] * 100.0,
            worst[2] * 100.0
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("g_ratio_anchor", g_ratio_anchor),
        ("refine_oracle", refine_oracle),
        ("myelin_split_midplane", myelin_split_midplane),
        ("seeding_inequality", seeding_inequality),
        ("statistics", statistics),
        ("table3_reproduction", table3),
        ("morpho_rescaling", morpho_rescaling),
        ("determinism_threads", determinism),
        ("phantom_end_to_end", phantom_end_to_end),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let o = f();
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!("{tag} {name}: {} [{:.1} s]", o.detail, t0.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
