//! Subcommand implementations. Each takes fully resolved options and returns
//! its tables; the binary only parses flags and prints.

use std::path::{Path, PathBuf};

use uwimg_core::dataset::{
    generate_batch, load_rgbd_pair, scan_pairs, DatasetManifest, GenerationConfig, ManifestEntry,
    ParamSampler, MANIFEST_FILE,
};
use uwimg_core::imaging::WaterRanges;
use uwimg_core::io::{read_depth16, read_rgb8, write_rgb8};
use uwimg_core::losses::{evaluate, LossSpec};
use uwimg_core::metrics::{mse, psnr_from_mse, ssim_index, uiqm, METRIC_NAMES};
use uwimg_core::par;
use uwimg_core::restoration::{
    analytic_invert, equalize_hist, gray_world_balance, invert_by_gradient_descent, restore_udcp,
    InversionConfig, UdcpConfig,
};
use uwimg_core::{DepthMap, Error, Image, LossKind, Method, WaterParams, WaterType};

use crate::error::{CliError, CliResult};
use crate::table::ComparisonTable;

const FULL_REFERENCE: [&str; 3] = ["mse", "psnr", "ssim"];

// ---------------------------------------------------------------- synthesize

#[derive(Debug, Clone)]
pub struct SynthesizeOpts {
    pub input_dir: PathBuf,
    pub out_dir: PathBuf,
    pub water_type: WaterType,
    pub ranges: Option<WaterRanges>,
    pub enforce_order: bool,
    pub seed: u64,
    pub generation: GenerationConfig,
}

#[derive(Debug, Clone)]
pub struct SynthesizeSummary {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub pairs: usize,
    /// Images in the input directory without a `<id>_depth.png`.
    pub unpaired: Vec<PathBuf>,
}

pub fn cmd_synthesize(opts: &SynthesizeOpts) -> CliResult<SynthesizeSummary> {
    require_dir(&opts.input_dir, "input directory")?;
    let mut sampler = ParamSampler::from_preset(opts.water_type, opts.seed);
    if let Some(r) = opts.ranges {
        sampler.ranges = r;
    }
    sampler.enforce_order = opts.enforce_order;
    sampler.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let g = &opts.generation;
    if g.samples_per_pair == 0 || g.width == 0 || g.height == 0 {
        return Err(CliError::Usage("samples per pair and output size must be positive".into()));
    }
    if !(g.meters_per_unit > 0.0) || !(g.max_range > 0.0) {
        return Err(CliError::Usage("depth scale and max range must be positive".into()));
    }

    let (paths, unpaired) = scan_pairs(&opts.input_dir)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!(
            "no <id>.png / <id>_depth.png pairs in {}",
            opts.input_dir.display()
        )));
    }
    let mut load_errors = Vec::new();
    let mut pairs = Vec::new();
    for p in &paths {
        match load_rgbd_pair(&p.image, &p.depth, g.meters_per_unit) {
            Ok(pair) => pairs.push(pair),
            Err(e) => load_errors.push(format!("{}: {e}", p.source_id)),
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Runtime(format!("no readable pairs:\n{}", load_errors.join("\n"))));
    }
    let mut manifest = generate_batch(&pairs, &sampler, g, &opts.out_dir)?;
    manifest.errors.splice(0..0, load_errors);
    let summary = SynthesizeSummary {
        manifest_path: opts.out_dir.join(MANIFEST_FILE),
        pairs: paths.len(),
        unpaired,
        manifest,
    };
    if !summary.manifest.errors.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} of {} samples failed; manifest written to {}:\n{}",
            summary.manifest.errors.len(),
            summary.manifest.errors.len() + summary.manifest.entries.len(),
            summary.manifest_path.display(),
            summary.manifest.errors.join("\n")
        )));
    }
    Ok(summary)
}

// -------------------------------------------------------------------- assess

#[derive(Debug, Clone)]
pub struct AssessOpts {
    pub input_dir: PathBuf,
    pub reference_dir: Option<PathBuf>,
    pub metrics: Vec<String>,
}

/// Per-image scores, one row per PNG in the input directory.
pub fn cmd_assess(opts: &AssessOpts) -> CliResult<ComparisonTable> {
    require_dir(&opts.input_dir, "input directory")?;
    validate_metrics(&opts.metrics, opts.reference_dir.is_some())?;
    if let Some(r) = &opts.reference_dir {
        require_dir(r, "reference directory")?;
    }
    let files = list_png(&opts.input_dir)?;
    let mut table = ComparisonTable::new("image", opts.metrics.clone());
    let rows = par::map_slice(&files, |path| {
        let name = file_name(path);
        let img = read_rgb8(path).map_err(|e| format!("{name}: skipped, {e}"))?;
        let reference = match &opts.reference_dir {
            Some(dir) => Some(read_rgb8(&dir.join(&name)).map_err(|e| format!("{name}: skipped, {e}"))?),
            None => None,
        };
        let (cells, notes) = score(&img, reference.as_ref(), &opts.metrics);
        Ok((name, cells, notes))
    });
    for r in rows {
        match r {
            Ok((name, cells, notes)) => {
                table.notes.extend(notes.into_iter().map(|n| format!("{name}: {n}")));
                table.push(name, cells);
            }
            Err(msg) => {
                eprintln!("warning: {msg}");
                table.notes.push(msg);
            }
        }
    }
    Ok(table)
}

// ------------------------------------------------------------------- compare

#[derive(Debug, Clone)]
pub struct CompareOpts {
    /// Directory of degraded images, or a synthesised dataset root holding a
    /// manifest.
    pub input_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub reference_dir: Option<PathBuf>,
    pub depth_dir: Option<PathBuf>,
    /// Overrides per-entry manifest parameters when set.
    pub params: Option<WaterParams>,
    pub methods: Vec<Method>,
    pub metrics: Vec<String>,
    pub inversion: InversionConfig,
    pub meters_per_unit: f64,
    /// Where restored images go; `None` skips writing them.
    pub restored_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    /// Rows `<method>/<image>`.
    pub per_image: ComparisonTable,
    /// Rows are `input` followed by each method; cells are column means.
    pub summary: ComparisonTable,
}

struct Sample {
    name: String,
    input: PathBuf,
    reference: Option<PathBuf>,
    depth: Option<PathBuf>,
    params: Option<WaterParams>,
}

pub fn cmd_compare(opts: &CompareOpts) -> CliResult<CompareOutput> {
    require_dir(&opts.input_dir, "input directory")?;
    if opts.methods.is_empty() {
        return Err(CliError::Usage("no methods requested".into()));
    }
    let samples = discover_samples(opts)?;
    let have_refs = samples.iter().any(|s| s.reference.is_some());
    validate_metrics(&opts.metrics, have_refs)?;
    opts.inversion.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut per_image = ComparisonTable::new("method/image", opts.metrics.clone());
    let mut summary = ComparisonTable::new("method", opts.metrics.clone());
    let loaded = par::map_slice(&samples, |s| load_sample(s, opts.meters_per_unit));

    let inputs: Vec<_> = samples
        .iter()
        .zip(&loaded)
        .map(|(s, l)| match l {
            Ok((img, reference, _)) => Ok(score(img, reference.as_ref(), &opts.metrics)),
            Err(e) => Err(format!("{}: {e}", s.name)),
        })
        .collect();
    let mut input_rows = ComparisonTable::new("image", opts.metrics.clone());
    for (s, r) in samples.iter().zip(inputs) {
        match r {
            Ok((cells, _)) => input_rows.push(s.name.clone(), cells),
            Err(msg) => {
                eprintln!("warning: {msg}");
                per_image.notes.push(msg);
            }
        }
    }
    summary.push("input", input_rows.means());

    for &method in &opts.methods {
        let jobs: Vec<usize> = (0..samples.len()).collect();
        let results = par::map_slice(&jobs, |&i| {
            let s = &samples[i];
            let (img, reference, depth) = loaded[i].as_ref().map_err(|e| format!("unreadable: {e}"))?;
            let restored = restore(method, img, depth.as_ref(), s.params.as_ref(), &opts.inversion)?;
            if let Some(dir) = &opts.restored_dir {
                let path = dir.join(method.name()).join(format!("{}.png", s.name));
                write_rgb8(&path, &restored).map_err(|e| e.to_string())?;
            }
            Ok::<_, String>(score(&restored, reference.as_ref(), &opts.metrics))
        });
        let mut method_rows = ComparisonTable::new("image", opts.metrics.clone());
        let mut reasons = Vec::new();
        for (s, r) in samples.iter().zip(results) {
            let label = format!("{}/{}", method.name(), s.name);
            match r {
                Ok((cells, notes)) => {
                    per_image.notes.extend(notes.into_iter().map(|n| format!("{label}: {n}")));
                    method_rows.push(s.name.clone(), cells.clone());
                    per_image.push(label, cells);
                }
                Err(reason) => {
                    per_image.push_absent(label, &reason);
                    if !reasons.contains(&reason) {
                        reasons.push(reason);
                    }
                }
            }
        }
        if method_rows.rows.is_empty() {
            summary.push_absent(method.name(), reasons.join("; "));
        } else {
            summary.push(method.name(), method_rows.means());
        }
    }
    Ok(CompareOutput { per_image, summary })
}

fn discover_samples(opts: &CompareOpts) -> CliResult<Vec<Sample>> {
    let manifest_path = opts
        .manifest
        .clone()
        .or_else(|| Some(opts.input_dir.join(MANIFEST_FILE)).filter(|p| p.is_file()));
    if let Some(path) = manifest_path {
        if !path.is_file() {
            return Err(CliError::Usage(format!("manifest not found: {}", path.display())));
        }
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let manifest = DatasetManifest::read_csv(&path)?;
        return Ok(manifest
            .entries
            .iter()
            .map(|e| Sample {
                name: format!("{}_{}", e.source_id, e.sample_index),
                input: root.join(&e.degraded_path),
                reference: Some(match &opts.reference_dir {
                    Some(dir) => dir.join(format!("{}_{}.png", e.source_id, e.sample_index)),
                    None => root.join(&e.clear_path),
                }),
                depth: Some(match &opts.depth_dir {
                    Some(dir) => dir.join(format!("{}_{}.png", e.source_id, e.sample_index)),
                    None => root.join(e.depth_path()),
                }),
                params: Some(opts.params.unwrap_or_else(|| e.params())),
            })
            .collect());
    }
    if let Some(r) = &opts.reference_dir {
        require_dir(r, "reference directory")?;
    }
    if let Some(d) = &opts.depth_dir {
        require_dir(d, "depth directory")?;
    }
    let files: Vec<PathBuf> = list_png(&opts.input_dir)?
        .into_iter()
        .filter(|p| !file_stem(p).ends_with("_depth"))
        .collect();
    Ok(files
        .into_iter()
        .map(|input| {
            let stem = file_stem(&input);
            let reference = opts.reference_dir.as_ref().map(|d| d.join(file_name(&input)));
            let depth = opts.depth_dir.as_ref().and_then(|d| {
                [d.join(format!("{stem}.png")), d.join(format!("{stem}_depth.png"))]
                    .into_iter()
                    .find(|p| p.is_file())
            });
            Sample {
                name: stem,
                input,
                reference,
                depth,
                params: opts.params,
            }
        })
        .collect())
}

fn load_sample(s: &Sample, meters_per_unit: f64) -> uwimg_core::Result<(Image, Option<Image>, Option<DepthMap>)> {
    let img = read_rgb8(&s.input)?;
    let reference = match &s.reference {
        Some(p) if p.is_file() => Some(read_rgb8(p)?),
        _ => None,
    };
    let depth = match &s.depth {
        Some(p) if p.is_file() => Some(read_depth16(p, meters_per_unit)?),
        _ => None,
    };
    Ok((img, reference, depth))
}

fn restore(
    method: Method,
    img: &Image,
    depth: Option<&DepthMap>,
    params: Option<&WaterParams>,
    inversion: &InversionConfig,
) -> Result<Image, String> {
    let model = || -> Result<(&DepthMap, &WaterParams), String> {
        match (depth, params) {
            (Some(d), Some(p)) => Ok((d, p)),
            (None, _) => Err("needs a range map (--depth-dir or a manifest)".into()),
            (_, None) => Err("needs water parameters (--beta/--ambient/--alpha or a manifest)".into()),
        }
    };
    let out = match method {
        Method::He => Ok(equalize_hist(img)),
        Method::GrayWorld => gray_world_balance(img),
        Method::Udcp => restore_udcp(img, &UdcpConfig::default()),
        Method::Analytic => {
            let (d, p) = model()?;
            analytic_invert(img, d, p, inversion).map(|r| r.image)
        }
        Method::GradDesc => {
            let (d, p) = model()?;
            invert_by_gradient_descent(img, d, p, inversion).map(|r| r.image)
        }
    };
    out.map_err(|e| e.to_string())
}

// -------------------------------------------------------------------- ablate

#[derive(Debug, Clone)]
pub struct AblateOpts {
    /// Synthesised dataset root containing the manifest.
    pub dataset_dir: PathBuf,
    pub losses: Vec<LossSpec>,
    /// Settings shared by every run; the loss field is replaced per run.
    pub inversion: InversionConfig,
    pub limit: Option<usize>,
    pub meters_per_unit: f64,
}

#[derive(Debug, Clone)]
pub struct AblateOutput {
    /// One row per loss with mean MSE, PSNR and SSIM against the clear images.
    pub summary: ComparisonTable,
    /// Rows `<loss>/<image>` with the metrics plus final loss and iterations.
    pub per_image: ComparisonTable,
}

pub fn cmd_ablate(opts: &AblateOpts) -> CliResult<AblateOutput> {
    if opts.losses.is_empty() {
        return Err(CliError::Usage("loss list is empty".into()));
    }
    for l in &opts.losses {
        l.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    require_dir(&opts.dataset_dir, "dataset directory")?;
    let manifest_path = opts.dataset_dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CliError::Usage(format!("manifest not found: {}", manifest_path.display())));
    }
    let mut entries = DatasetManifest::read_csv(&manifest_path)?.entries;
    if let Some(n) = opts.limit {
        entries.truncate(n);
    }
    if entries.is_empty() {
        return Err(CliError::Usage(format!("{} lists no samples", manifest_path.display())));
    }
    let loaded = par::map_slice(&entries, |e| {
        uwimg_core::dataset::load_entry(&opts.dataset_dir, e, opts.meters_per_unit)
    });

    let metric_cols: Vec<String> = FULL_REFERENCE.iter().map(|s| s.to_string()).collect();
    let mut summary = ComparisonTable::new("loss", metric_cols.clone());
    let mut detail_cols = metric_cols.clone();
    detail_cols.extend(["final_loss".to_string(), "iterations".to_string()]);
    let mut per_image = ComparisonTable::new("loss/image", detail_cols);

    for spec in &opts.losses {
        let cfg = InversionConfig {
            loss: *spec,
            ..opts.inversion.clone()
        };
        let jobs: Vec<usize> = (0..entries.len()).collect();
        let results = par::map_slice(&jobs, |&i| ablate_one(&loaded[i], &cfg));
        let mut rows = ComparisonTable::new("image", metric_cols.clone());
        for (e, r) in entries.iter().zip(results) {
            let label = format!("{}/{}", spec.kind, entry_name(e));
            match r {
                Ok(cells) => {
                    rows.push(label.clone(), cells[..3].to_vec());
                    per_image.push(label, cells);
                }
                Err(reason) => per_image.push_absent(label, format!("failed: {reason}")),
            }
        }
        if rows.rows.is_empty() {
            summary.push_absent(spec.kind.name(), "every image failed");
        } else {
            summary.push(spec.kind.name(), rows.means());
        }
    }
    summary.notes.extend(per_image.notes.iter().cloned());
    Ok(AblateOutput { summary, per_image })
}

fn ablate_one(
    sample: &uwimg_core::Result<uwimg_core::dataset::StoredSample>,
    cfg: &InversionConfig,
) -> Result<Vec<Option<f64>>, String> {
    let s = sample.as_ref().map_err(|e| e.to_string())?;
    let out = invert_by_gradient_descent(&s.degraded, &s.depth, &s.params, cfg).map_err(|e| match e {
        Error::DescentFailure { reason, trace } => format!(
            "{reason} (trace of {} values, last {:?})",
            trace.len(),
            trace.last()
        ),
        other => other.to_string(),
    })?;
    let m = mse(&out.image, &s.clear).map_err(|e| e.to_string())?;
    let ssim = ssim_index(&out.image, &s.clear).ok();
    Ok(vec![
        Some(m),
        Some(psnr_from_mse(m, 1.0)),
        ssim,
        Some(out.final_loss()),
        Some(out.iterations() as f64),
    ])
}

/// Loss value of the final descent iterate, recomputed from scratch.
pub fn recompute_final_loss(
    spec: &LossSpec,
    restored_unclamped: &Image,
    observed: &Image,
    depth: &DepthMap,
    params: &WaterParams,
) -> CliResult<f64> {
    let predicted =
        uwimg_core::imaging::synthesize_improved_unclamped(restored_unclamped, depth, params)?;
    Ok(evaluate(spec, &predicted, observed)?.value)
}

// ------------------------------------------------------------------- helpers

pub fn parse_methods(names: &[String]) -> CliResult<Vec<Method>> {
    names
        .iter()
        .map(|n| n.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn parse_losses(names: &[String], mix_alpha: f64) -> CliResult<Vec<LossSpec>> {
    names
        .iter()
        .map(|n| {
            let kind: LossKind = n.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
            LossSpec::with_mix(kind, mix_alpha).map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

fn validate_metrics(metrics: &[String], have_reference: bool) -> CliResult<()> {
    if metrics.is_empty() {
        return Err(CliError::Usage("no metrics requested".into()));
    }
    for m in metrics {
        if !METRIC_NAMES.contains(&m.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown metric {m:?}; expected one of {}",
                METRIC_NAMES.join(", ")
            )));
        }
        if FULL_REFERENCE.contains(&m.as_str()) && !have_reference {
            return Err(CliError::Usage(format!("metric {m} needs reference images")));
        }
    }
    Ok(())
}

/// Computes only the requested metrics. Failures leave the cell absent and
/// are returned as notes.
fn score(img: &Image, reference: Option<&Image>, metrics: &[String]) -> (Vec<Option<f64>>, Vec<String>) {
    let mut notes = Vec::new();
    let needs_uiqm = metrics
        .iter()
        .any(|m| matches!(m.as_str(), "uicm" | "uism" | "uiconm" | "uiqm"));
    let nr = if needs_uiqm {
        match uiqm(img) {
            Ok(s) => Some(s),
            Err(e) => {
                notes.push(format!("uiqm: {e}"));
                None
            }
        }
    } else {
        None
    };
    let mse_v = if metrics.iter().any(|m| m == "mse" || m == "psnr") {
        reference.and_then(|r| match mse(img, r) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("mse: {e}"));
                None
            }
        })
    } else {
        None
    };
    let cells = metrics
        .iter()
        .map(|m| match m.as_str() {
            "uicm" => nr.map(|s| s.uicm),
            "uism" => nr.map(|s| s.uism),
            "uiconm" => nr.map(|s| s.uiconm),
            "uiqm" => nr.map(|s| s.uiqm),
            "mse" => mse_v,
            "psnr" => mse_v.map(|v| psnr_from_mse(v, 1.0)),
            "ssim" => reference.and_then(|r| match ssim_index(img, r) {
                Ok(v) => Some(v),
                Err(e) => {
                    notes.push(format!("ssim: {e}"));
                    None
                }
            }),
            _ => None,
        })
        .collect();
    if reference.is_none() && metrics.iter().any(|m| FULL_REFERENCE.contains(&m.as_str())) {
        notes.push("no reference image".into());
    }
    (cells, notes)
}

fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} not found: {}", path.display())))
    }
}

fn list_png(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let read = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = read
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

fn file_stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn entry_name(e: &ManifestEntry) -> String {
    format!("{}_{}", e.source_id, e.sample_index)
}
