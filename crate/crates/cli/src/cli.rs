//! Flag definitions and config merging for the `uwimg` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use uwimg_core::dataset::{GenerationConfig, CONFIG_ECHO_FILE, MANIFEST_FILE};
use uwimg_core::losses::DEFAULT_MIX_ALPHA;
use uwimg_core::restoration::InversionConfig;
use uwimg_core::{Method, WaterParams, WaterType};

use crate::commands::{
    cmd_ablate, cmd_assess, cmd_compare, cmd_synthesize, parse_losses, parse_methods, AblateOpts,
    AssessOpts, CompareOpts, SynthesizeOpts,
};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::timing::{run_bench, BenchConfig};

#[derive(Debug, Parser)]
#[command(name = "uwimg", version, about = "Synthesise, restore and score underwater images")]
pub struct Cli {
    /// Seed for every randomised step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate degraded/clear pairs from RGB-D captures.
    Synthesize(SynthesizeArgs),
    /// Score images with quality metrics.
    Assess(AssessArgs),
    /// Run restoration methods and score their output.
    Compare(CompareArgs),
    /// Invert a synthetic set with each loss and report full-reference scores.
    Ablate(AblateArgs),
    /// Time restoration methods on random images.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Directory of `<id>.png` + `<id>_depth.png` pairs.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// clear-oceanic, coastal-green or turbid-green.
    #[arg(long)]
    pub water_type: Option<String>,
    #[arg(long)]
    pub samples_per_pair: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Metres per raw unit of the 16-bit depth files.
    #[arg(long)]
    pub meters_per_unit: Option<f64>,
    #[arg(long)]
    pub max_range: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference images with matching file names.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Comma-separated: uicm, uism, uiconm, uiqm, mse, psnr, ssim.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Degraded images, or a synthesised dataset root.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated: analytic, graddesc, udcp, he, grayworld.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Per-image water parameters and range-map locations.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    /// Attenuation r,g,b for model-based methods.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub beta: Option<Vec<f64>>,
    /// Ambient light r,g,b.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ambient: Option<Vec<f64>>,
    /// Scattering coefficient.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub meters_per_unit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Synthesised dataset root.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated loss names, e.g. l2,ssim,l1gdl.
    #[arg(long, value_delimiter = ',')]
    pub losses: Option<Vec<String>>,
    #[arg(long)]
    pub mix_alpha: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Use only the first N manifest rows.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub meters_per_unit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Timed images per method.
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

/// Parses nothing; runs an already parsed command line, printing tables and
/// writing outputs under `--out`.
pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, in which case that pool is used.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let out = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("uwimg-out"));

    match cli.command {
        Command::Synthesize(a) => {
            let water_type: WaterType = a
                .water_type
                .or(cfg.water_type.clone())
                .unwrap_or_else(|| "coastal-green".into())
                .parse()
                .map_err(|e: uwimg_core::Error| CliError::Usage(e.to_string()))?;
            let d = GenerationConfig::default();
            let opts = SynthesizeOpts {
                input_dir: required(a.input.or(cfg.input.clone()), "--input")?,
                out_dir: out,
                water_type,
                ranges: cfg.ranges,
                enforce_order: cfg.enforce_order.unwrap_or(true),
                seed,
                generation: GenerationConfig {
                    samples_per_pair: a.samples_per_pair.or(cfg.samples_per_pair).unwrap_or(d.samples_per_pair),
                    width: a.width.or(cfg.width).unwrap_or(d.width),
                    height: a.height.or(cfg.height).unwrap_or(d.height),
                    meters_per_unit: a.meters_per_unit.or(cfg.meters_per_unit).unwrap_or(d.meters_per_unit),
                    max_range: a.max_range.or(cfg.max_range).unwrap_or(d.max_range),
                },
            };
            let s = cmd_synthesize(&opts)?;
            println!("manifest: {}", s.manifest_path.display());
            println!("config: {}", opts.out_dir.join(CONFIG_ECHO_FILE).display());
            println!(
                "pairs: {}, samples: {}, unpaired images: {}",
                s.pairs,
                s.manifest.entries.len(),
                s.unpaired.len()
            );
            for p in &s.unpaired {
                eprintln!("warning: no range map for {}", p.display());
            }
        }
        Command::Assess(a) => {
            let opts = AssessOpts {
                input_dir: required(a.input.or(cfg.input.clone()), "--input")?,
                reference_dir: a.reference.or(cfg.reference.clone()),
                metrics: a.metrics.or(cfg.metrics.clone()).unwrap_or_else(|| vec!["uiqm".into()]),
            };
            let table = cmd_assess(&opts)?;
            table.write(&out, "assess")?;
            println!("{}", table.to_terminal());
        }
        Command::Compare(a) => {
            let methods = parse_methods(&a.methods.or(cfg.methods.clone()).unwrap_or_else(|| {
                Method::ALL.iter().map(|m| m.name().to_string()).collect()
            }))?;
            let params = explicit_params(
                a.beta.map(to3).or(cfg.beta),
                a.ambient.map(to3).or(cfg.ambient),
                a.alpha.or(cfg.alpha),
            )?;
            let manifest = a.manifest.or(cfg.manifest.clone());
            let reference = a.reference.or(cfg.reference.clone());
            let input_dir = required(a.input.or(cfg.input.clone()), "--input")?;
            let paired = manifest.is_some() || reference.is_some() || input_dir.join(MANIFEST_FILE).is_file();
            let default_metrics = if paired {
                vec!["uiqm", "mse", "psnr", "ssim"]
            } else {
                vec!["uiqm"]
            };
            let opts = CompareOpts {
                input_dir,
                manifest,
                reference_dir: reference,
                depth_dir: a.depth_dir.or(cfg.depth_dir.clone()),
                params,
                methods,
                metrics: a
                    .metrics
                    .or(cfg.metrics.clone())
                    .unwrap_or_else(|| default_metrics.iter().map(|s| s.to_string()).collect()),
                inversion: inversion(&cfg, a.max_iters, None)?,
                meters_per_unit: a
                    .meters_per_unit
                    .or(cfg.meters_per_unit)
                    .unwrap_or(GenerationConfig::default().meters_per_unit),
                restored_dir: Some(out.join("restored")),
            };
            let res = cmd_compare(&opts)?;
            res.per_image.write(&out, "compare_images")?;
            res.summary.write(&out, "compare_summary")?;
            println!("{}", res.per_image.to_terminal());
            println!("{}", res.summary.to_terminal());
        }
        Command::Ablate(a) => {
            let names = a.losses.or(cfg.losses.clone()).unwrap_or_default();
            let mix = a.mix_alpha.or(cfg.mix_alpha).unwrap_or(DEFAULT_MIX_ALPHA);
            let opts = AblateOpts {
                dataset_dir: required(a.input.or(cfg.input.clone()), "--input")?,
                losses: parse_losses(&names, mix)?,
                inversion: inversion(&cfg, a.max_iters, a.step_size)?,
                limit: a.limit.or(cfg.limit),
                meters_per_unit: a
                    .meters_per_unit
                    .or(cfg.meters_per_unit)
                    .unwrap_or(GenerationConfig::default().meters_per_unit),
            };
            let res = cmd_ablate(&opts)?;
            res.summary.write(&out, "ablation")?;
            res.per_image.write(&out, "ablation_images")?;
            println!("{}", res.summary.to_terminal());
        }
        Command::Bench(a) => {
            let methods = parse_methods(&a.methods.or(cfg.methods.clone()).unwrap_or_else(|| {
                ["he", "grayworld", "analytic"].iter().map(|s| s.to_string()).collect()
            }))?;
            let d = BenchConfig::default();
            let bc = BenchConfig {
                images: a.images.or(cfg.images).unwrap_or(d.images),
                warmup: a.warmup.or(cfg.warmup).unwrap_or(d.warmup),
                width: a.width.or(cfg.width).unwrap_or(d.width),
                height: a.height.or(cfg.height).unwrap_or(d.height),
                seed,
            };
            let report = run_bench(&methods, &bc)?;
            report.table().write(&out, "timing")?;
            let json_path = out.join("timing.json");
            let json = serde_json::to_string_pretty(&report).expect("timing report serialises");
            std::fs::write(&json_path, json).map_err(|e| CliError::io(&json_path, e))?;
            println!("{}", report.render());
        }
    }
    Ok(())
}

fn required(v: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    v.ok_or_else(|| CliError::Usage(format!("{flag} is required (flag or config)")))
}

fn to3(v: Vec<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn explicit_params(
    beta: Option<[f64; 3]>,
    ambient: Option<[f64; 3]>,
    alpha: Option<f64>,
) -> CliResult<Option<WaterParams>> {
    match (beta, ambient) {
        (None, None) => Ok(None),
        (Some(b), Some(a)) => WaterParams::new(b, a, alpha.unwrap_or(uwimg_core::imaging::DEFAULT_ALPHA))
            .map(Some)
            .map_err(|e| CliError::Usage(e.to_string())),
        _ => Err(CliError::Usage("--beta and --ambient must be given together".into())),
    }
}

fn inversion(cfg: &FileConfig, max_iters: Option<usize>, step: Option<f64>) -> CliResult<InversionConfig> {
    let d = InversionConfig::default();
    let c = InversionConfig {
        max_iters: max_iters.or(cfg.max_iters).unwrap_or(d.max_iters),
        step_size: step.or(cfg.step_size).unwrap_or(d.step_size),
        transmission_floor: cfg.transmission_floor.unwrap_or(d.transmission_floor),
        ..d
    };
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}
