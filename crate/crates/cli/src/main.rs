use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use axonvox_core::phantom::{generate_phantom, ten_tube_spec, PhantomSpec};
use axonvox_core::preproc::DenoiseMethod;
use axonvox_core::stats::{self, CompareParams, EvalCounts};
use axonvox_core::{io, Volume, VoxelSize};
use axonvox_pipeline::artifacts;
use axonvox_pipeline::config::{SeedSource, SemsegMethod};
use axonvox_pipeline::run::{write_json, write_morphometry};
use axonvox_pipeline::{eval, run_pipeline, stages, PipelineConfig};
use clap::{Args, Parser, Subcommand};

/// Segmentation and morphometry of myelinated axons in 3D EM volumes.
#[derive(Debug, Parser)]
#[command(name = "axonvox", version)]
struct Cli {
    /// TOML configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run every stage and write all artifacts into OUT.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Contrast normalization and denoising.
    Preprocess {
        #[arg(long)]
        denoise: Option<DenoiseMethod>,
        /// Gaussian sigma in voxels.
        #[arg(long)]
        sigma: Option<f64>,
        /// NLM filtering strength.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        no_normalize: bool,
        #[command(flatten)]
        input: InputArgs,
        output: PathBuf,
    },
    /// Semantic myelin segmentation of a preprocessed volume.
    Semseg {
        #[arg(long)]
        method: Option<SemsegMethod>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        scribbles: Option<PathBuf>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Axon instance segmentation from a preprocessed volume and its myelin.
    Segment {
        #[arg(long)]
        seeds: Option<SeedSource>,
        #[arg(long)]
        seeds_file: Option<PathBuf>,
        #[arg(long = "H")]
        h_max: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        min: Option<usize>,
        #[arg(long)]
        max: Option<usize>,
        #[arg(long)]
        myelin: PathBuf,
        input: PathBuf,
        /// Directory for axons.json, axon_records.json and candidates.json.
        out: PathBuf,
    },
    /// Map myelin to axons and measure every axon.
    Morpho {
        #[arg(long)]
        axons: PathBuf,
        /// Semantic myelin mask.
        #[arg(long)]
        myelin: PathBuf,
        #[arg(long)]
        length_threshold: Option<f64>,
        out: PathBuf,
    },
    /// Compare two per-axon summary tables.
    Stats {
        table_a: PathBuf,
        table_b: PathBuf,
        /// Comma-separated columns to compare.
        #[arg(long, value_delimiter = ',', default_values_t = default_parameters())]
        params: Vec<String>,
        #[arg(long, default_value_t = stats::DEFAULT_N_PERM)]
        n_perm: usize,
        #[arg(long, default_value_t = stats::DEFAULT_N_BOOT)]
        n_boot: usize,
        #[arg(long, default_value_t = stats::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report CSV; the table is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic volume with ground truth.
    Phantom {
        /// JSON phantom specification.
        #[arg(long, conflicts_with = "ten_tube")]
        spec: Option<PathBuf>,
        /// Edge length of the built-in ten-tube phantom.
        #[arg(long)]
        ten_tube: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        out: PathBuf,
    },
    /// Serve a run directory for proofreading on 127.0.0.1.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Object detection counts or precision/recall/F1.
    Eval {
        /// Predicted instance labels.
        #[arg(long, requires = "truth")]
        pred: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        min_iou: f64,
        #[arg(long, conflicts_with = "pred")]
        tp: Option<u64>,
        #[arg(long, requires = "tp")]
        fp: Option<u64>,
        #[arg(long = "fn", requires = "tp")]
        fn_: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Volume header (.json) or a directory of PNG/TIFF slices.
    input: PathBuf,
    /// Voxel size in nm for slice directories, as x,y,z or one value.
    #[arg(long, value_delimiter = ',')]
    voxel_size: Vec<f64>,
}

fn default_parameters() -> Vec<String> {
    ["d_e_um", "minor_um", "major_um", "ecc", "t_um", "g_ratio"].map(String::from).to_vec()
}

impl InputArgs {
    fn load(&self) -> Result<Volume> {
        if self.input.is_dir() {
            let vs = match self.voxel_size[..] {
                [s] => VoxelSize::isotropic(s),
                [x, y, z] => VoxelSize::new(x, y, z),
                _ => bail!("--voxel-size is required for slice directories, as x,y,z or one value"),
            };
            return Ok(io::load_slice_stack(&self.input, vs)?);
        }
        io::load_volume(&self.input).with_context(|| format!("reading {}", self.input.display()))
    }
}

/// Config file plus the overrides given on the command line.
fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match &cli.cmd {
        Cmd::Run { seed, .. } => {
            if let Some(s) = seed {
                cfg.run.seed = *s;
            }
        }
        Cmd::Preprocess {
            denoise,
            sigma,
            h,
            no_normalize,
            ..
        } => {
            let d = &mut cfg.preproc.denoise;
            if let Some(m) = denoise {
                d.method = *m;
            }
            if let Some(s) = sigma {
                d.gaussian_sigma = *s;
            }
            if let Some(h) = h {
                d.nlm_h = *h;
            }
            if *no_normalize {
                cfg.preproc.normalize_contrast = false;
            }
        }
        Cmd::Semseg {
            method,
            threshold,
            scribbles,
            ..
        } => {
            if let Some(m) = method {
                cfg.semseg.method = *m;
            }
            if let Some(t) = threshold {
                cfg.semseg.threshold = *t;
            }
            if scribbles.is_some() {
                cfg.semseg.scribbles = scribbles.clone();
            }
        }
        Cmd::Segment {
            seeds,
            seeds_file,
            h_max,
            theta,
            min,
            max,
            ..
        } => {
            let c = &mut cfg.instseg;
            if let Some(s) = seeds {
                c.seeds = *s;
            }
            if seeds_file.is_some() {
                c.seeds_file = seeds_file.clone();
                if seeds.is_none() {
                    c.seeds = SeedSource::File;
                }
            }
            if let Some(h) = h_max {
                c.h = *h;
            }
            if let Some(t) = theta {
                c.similarity_threshold = *t;
            }
            if let Some(m) = min {
                c.min_volume = *m;
            }
            if let Some(m) = max {
                c.max_volume = *m;
            }
        }
        Cmd::Morpho { length_threshold, .. } => {
            if let Some(l) = length_threshold {
                cfg.morpho.length_threshold_um = *l;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn warn_overrides(cfg: &PipelineConfig) {
    for w in cfg.fixed_overrides() {
        log::warn!("{w}");
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match cli.cmd {
        Cmd::Run { input, out, .. } => {
            let v = input.load()?;
            let r = run_pipeline(&cfg, &v, &out)?;
            println!(
                "{} candidates, {} axons, {} measured; artifacts in {}",
                r.manifest.n_candidates,
                r.manifest.n_axons,
                r.manifest.n_measured,
                out.display()
            );
        }
        Cmd::Preprocess { input, output, .. } => {
            warn_overrides(&cfg);
            let v = stages::preprocess(&cfg.preproc, &input.load()?)?;
            io::save_volume(&v, &output)?;
        }
        Cmd::Semseg { input, output, .. } => {
            warn_overrides(&cfg);
            let v = io::load_volume(&input)?;
            let m = stages::semantic(&cfg, &v)?;
            io::save_labels(&m, &output)?;
            println!("{} myelin voxels", m.count_nonzero());
        }
        Cmd::Segment { myelin, input, out, .. } => {
            warn_overrides(&cfg);
            let v = io::load_volume(&input)?;
            let m = io::load_labels(&myelin)?;
            let r = stages::instances(&cfg, &v, &m)?;
            create_dir(&out)?;
            io::save_labels(&r.axons, &out.join(artifacts::AXONS))?;
            write_json(&out, artifacts::AXON_RECORDS, &r.records)?;
            write_json(&out, artifacts::CANDIDATES, &r.candidates)?;
            println!("{} candidates, {} myelinated axons", r.candidates.len(), r.records.len());
        }
        Cmd::Morpho { axons, myelin, out, .. } => {
            warn_overrides(&cfg);
            let a = io::load_labels(&axons)?;
            let m = io::load_labels(&myelin)?;
            let mi = stages::myelin_map(&a, &m)?;
            let o = stages::morphometry(&cfg, &a, &mi.labels)?;
            create_dir(&out)?;
            io::save_labels(&mi.labels, &out.join(artifacts::MYELIN_INSTANCES))?;
            write_morphometry(&out, &cfg, &o)?;
            let measured = o
                .iter()
                .filter(|x| matches!(x, axonvox_core::morpho::AxonOutcome::Measured { .. }))
                .count();
            println!("{measured} of {} axons measured", o.len());
        }
        Cmd::Stats {
            table_a,
            table_b,
            params,
            n_perm,
            n_boot,
            alpha,
            seed,
            out,
        } => {
            let open = |p: &Path| fs::File::open(p).with_context(|| format!("opening {}", p.display()));
            let names: Vec<&str> = params.iter().map(String::as_str).collect();
            let p = CompareParams {
                n_perm,
                n_boot,
                alpha,
                seed,
            };
            let report = stats::compare_groups(open(&table_a)?, open(&table_b)?, &names, &p)?;
            print!("{}", stats::format_report(&report));
            if let Some(out) = out {
                let f = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
                stats::write_report_csv(f, &report)?;
            }
        }
        Cmd::Phantom {
            spec,
            ten_tube,
            noise,
            seed,
            out,
        } => {
            let spec: PhantomSpec = match (spec, ten_tube) {
                (Some(p), _) => serde_json::from_slice(&fs::read(&p).with_context(|| format!("reading {}", p.display()))?)?,
                (None, Some(n)) => ten_tube_spec(n, noise, seed),
                (None, None) => bail!("give --spec or --ten-tube"),
            };
            let ph = generate_phantom(&spec)?;
            create_dir(&out)?;
            io::save_volume(&ph.volume, &out.join("volume.json"))?;
            io::save_labels(&ph.semantic, &out.join("truth_semantic.json"))?;
            io::save_labels(&ph.axons, &out.join("truth_axons.json"))?;
            io::save_labels(&ph.myelin, &out.join("truth_myelin.json"))?;
            fs::write(out.join("spec.json"), serde_json::to_vec_pretty(&spec)?)?;
            println!("{} tubes written to {}", spec.tubes.len(), out.display());
        }
        Cmd::Serve { dir, port } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(axonvox_service::serve(&dir, port))?;
        }
        Cmd::Eval {
            pred,
            truth,
            min_iou,
            tp,
            fp,
            fn_,
        } => {
            let counts = match (pred, truth, tp) {
                (Some(p), Some(t), _) => {
                    let (c, _) = eval::match_objects(&io::load_labels(&p)?, &io::load_labels(&t)?, min_iou)?;
                    c
                }
                (None, None, Some(tp)) => EvalCounts {
                    tp,
                    fp: fp.unwrap_or(0),
                    fn_: fn_.unwrap_or(0),
                },
                _ => bail!("give --pred and --truth, or --tp/--fp/--fn"),
            };
            let m = stats::prf1(counts)?;
            let out = serde_json::json!({ "counts": counts, "metrics": m });
            let mut so = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut so, &out)?;
            writeln!(so)?;
        }
    }
    Ok(())
}
