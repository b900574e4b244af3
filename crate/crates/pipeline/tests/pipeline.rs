use std::fs;

use axonvox_core::io;
use axonvox_core::phantom::{generate_phantom, Centerline, Phantom, PhantomSpec, TubeSpec};
use axonvox_core::{Dims, Volume, VoxelSize};
use axonvox_pipeline::artifacts::{self, Manifest, RunLock};
use axonvox_pipeline::config::SemsegMethod;
use axonvox_pipeline::{eval, run_pipeline, stages, PipelineConfig, PipelineError, Stage};

fn tube(cx: f64, cy: f64, r_vox: f64, t_vox: f64) -> TubeSpec {
    TubeSpec {
        centerline: Centerline::Straight {
            start: [cx, cy, -3.0],
            end: [cx, cy, 130.0],
        },
        lumen_radius_um: r_vox * 0.04,
        shell_thickness_um: t_vox * 0.04,
        lumen_intensity: 0.85,
        shell_intensity: 0.15,
        myelinated: true,
    }
}

/// Two tubes, 4.8 µm long at 40 nm voxels.
fn small_phantom() -> Phantom {
    generate_phantom(&PhantomSpec {
        dims: [56, 36, 120],
        voxel_size_nm: [40.0; 3],
        tubes: vec![tube(15.0, 18.0, 6.0, 3.0), tube(41.0, 18.0, 5.0, 4.0)],
        background: 0.5,
        noise_sigma: 0.05,
        rng_seed: 3,
    })
    .unwrap()
}

#[test]
fn small_phantom_end_to_end() {
    let ph = small_phantom();
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&PipelineConfig::default(), &ph.volume, dir.path()).unwrap();
    let (c, pairs) = eval::match_objects(&out.axons, &ph.axons, 0.5).unwrap();
    assert_eq!((c.tp, c.fn_), (2, 0));
    assert!(pairs.iter().all(|p| p.2 > 0.95));
    // the single background region touches nothing but shells, so it also
    // passes the myelination test; it is the only extra object
    assert_eq!(c.fp, 1);
    let extra = out.records.iter().find(|r| !pairs.iter().any(|p| p.0 == r.label)).unwrap();
    assert!(extra.voxel_count > 100_000);
    assert_eq!(out.manifest.n_axons, 3);
    for name in [
        artifacts::PREPROCESSED,
        artifacts::SEMANTIC,
        artifacts::AXONS,
        artifacts::MYELIN_INSTANCES,
        artifacts::SECTIONS_CSV,
        artifacts::SUMMARY_CSV,
        artifacts::MORPHOMETRY,
        artifacts::MANIFEST,
        artifacts::CONFIG,
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    assert!(!dir.path().join(artifacts::LOCK).exists());
    let m = Manifest::load(dir.path()).unwrap();
    assert_eq!(m.stages.iter().map(|s| s.stage).collect::<Vec<_>>(), Stage::ALL.to_vec());
    assert_eq!(m.config_hash, PipelineConfig::default().hash());
    assert!(m.outputs.contains_key("axons.raw"));
    let cfg = PipelineConfig::load(&dir.path().join(artifacts::CONFIG)).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn stage_artifacts_are_rerunnable() {
    let ph = small_phantom();
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let out = run_pipeline(&cfg, &ph.volume, dir.path()).unwrap();
    let pre = io::load_volume(&dir.path().join(artifacts::PREPROCESSED)).unwrap();
    assert_eq!(pre, out.preprocessed);
    let sem = stages::semantic(&cfg, &pre).unwrap();
    assert_eq!(sem, io::load_labels(&dir.path().join(artifacts::SEMANTIC)).unwrap());
    let inst = stages::instances(&cfg, &pre, &sem).unwrap();
    let axons = io::load_labels(&dir.path().join(artifacts::AXONS)).unwrap();
    assert_eq!(inst.axons, axons);
    let mi = stages::myelin_map(&axons, &sem).unwrap();
    assert_eq!(mi.labels, io::load_labels(&dir.path().join(artifacts::MYELIN_INSTANCES)).unwrap());
    let o = stages::morphometry(&cfg, &axons, &mi.labels).unwrap();
    assert_eq!(o, out.outcomes);
}

#[test]
fn empty_volume_gives_no_axons() {
    let v = Volume::filled(Dims::new(24, 24, 12), VoxelSize::isotropic(20.0), 0.5);
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&PipelineConfig::default(), &v, dir.path()).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.axons.count_nonzero(), 0);
    for csv in [artifacts::SECTIONS_CSV, artifacts::SUMMARY_CSV] {
        let text = fs::read_to_string(dir.path().join(csv)).unwrap();
        assert_eq!(text.lines().count(), 1, "{csv} should hold only its header");
    }
}

#[test]
fn failing_stage_is_named_and_earlier_artifacts_kept() {
    let ph = small_phantom();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.semseg.method = SemsegMethod::Forest;
    cfg.semseg.scribbles = Some(dir.path().join("missing.json"));
    let err = run_pipeline(&cfg, &ph.volume, dir.path()).unwrap_err();
    assert_eq!(err.failed_stage(), Some(Stage::Semseg));
    assert!(err.to_string().contains("semseg"));
    assert!(dir.path().join(artifacts::PREPROCESSED).exists());
    assert!(!dir.path().join(artifacts::SEMANTIC).exists());
    let m = Manifest::load(dir.path()).unwrap();
    assert_eq!(m.failed_stage, Some(Stage::Semseg));
    assert!(m.outputs.contains_key(artifacts::PREPROCESSED));
    assert!(!dir.path().join(artifacts::LOCK).exists());
}

#[test]
fn locked_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let _held = RunLock::acquire(dir.path()).unwrap();
    let v = Volume::filled(Dims::new(4, 4, 4), VoxelSize::isotropic(20.0), 0.5);
    let err = run_pipeline(&PipelineConfig::default(), &v, dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::Locked(_)));
}

#[test]
fn overridden_fixed_parameters_are_recorded() {
    let v = Volume::filled(Dims::new(8, 8, 4), VoxelSize::isotropic(20.0), 0.5);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.instseg.h = 1.5;
    let out = run_pipeline(&cfg, &v, dir.path()).unwrap();
    assert_eq!(out.manifest.warnings.len(), 1);
    assert!(out.manifest.warnings[0].contains("instseg.h"));
}
