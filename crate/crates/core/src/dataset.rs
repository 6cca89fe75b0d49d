//! Synthetic training-pair generation from in-air RGB-D captures.
//!
//! Each source pair is centre-cropped and resized, its range map cleaned up,
//! and one or more water-parameter draws are pushed through the improved
//! forward model. Everything written is recorded in a CSV manifest so any
//! degraded image can be regenerated from the manifest and the stored clear
//! image and range map.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, CHANNELS};
use crate::imaging::{synthesize_improved, Range, WaterParams, WaterRanges, WaterType};
use crate::io;
use crate::par;

pub const DEFAULT_METERS_PER_UNIT: f64 = 0.001;
pub const DEFAULT_MAX_RANGE: f64 = 10.0;
pub const DEFAULT_OUTPUT_SIZE: usize = 256;

/// Colour capture with its co-registered range map.
#[derive(Debug, Clone)]
pub struct RgbdPair {
    pub image: Image,
    pub depth: DepthMap,
    pub source_id: String,
}

/// Loads `<image_path>` (8-bit RGB) and `<depth_path>` (16-bit). A range map
/// of a different size is resampled (nearest neighbour) onto the image grid.
pub fn load_rgbd_pair(image_path: &Path, depth_path: &Path, meters_per_unit: f64) -> Result<RgbdPair> {
    let image = io::read_rgb8(image_path)?;
    let mut depth = io::read_depth16(depth_path, meters_per_unit)?;
    if depth.dims() != image.dims() {
        depth = resize_nearest(&depth, image.width(), image.height());
    }
    let source_id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(RgbdPair {
        image,
        depth,
        source_id,
    })
}

/// Paired inputs found in a directory: `<id>.png` with `<id>_depth.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPaths {
    pub source_id: String,
    pub image: PathBuf,
    pub depth: PathBuf,
}

/// Lists input pairs sorted by id. Images lacking a range map are returned
/// separately.
pub fn scan_pairs(dir: &Path) -> Result<(Vec<PairPaths>, Vec<PathBuf>)> {
    let read = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for entry in read {
        let path = entry
            .map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        if stem.ends_with("_depth") {
            continue;
        }
        let depth = dir.join(format!("{stem}_depth.png"));
        if depth.exists() {
            pairs.push(PairPaths {
                source_id: stem,
                image: path,
                depth,
            });
        } else {
            unpaired.push(path);
        }
    }
    pairs.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    unpaired.sort();
    Ok((pairs, unpaired))
}

/// Clamps ranges to `[0, max_range]` and fills zero (missing) ranges with the
/// median of the valid ones.
pub fn normalize_depth(depth: &DepthMap, max_range: f64) -> Result<DepthMap> {
    if !(max_range > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "max range must be positive, got {max_range}"
        )));
    }
    let clamped: Vec<f64> = depth.data().iter().map(|d| d.min(max_range)).collect();
    let mut valid: Vec<f64> = clamped.iter().copied().filter(|d| *d > 0.0).collect();
    if valid.is_empty() {
        return Err(Error::InvalidInput("depth map has no valid (non-zero) ranges".into()));
    }
    valid.sort_by(f64::total_cmp);
    let mid = valid.len() / 2;
    let median = if valid.len() % 2 == 0 {
        0.5 * (valid[mid - 1] + valid[mid])
    } else {
        valid[mid]
    };
    let data = clamped
        .into_iter()
        .map(|d| if d > 0.0 { d } else { median })
        .collect();
    DepthMap::new(depth.width(), depth.height(), data)
}

/// Seeded per-index draws of water parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSampler {
    pub water_type: String,
    pub ranges: WaterRanges,
    pub seed: u64,
    /// Sort attenuation draws so red >= green >= blue.
    #[serde(default = "yes")]
    pub enforce_order: bool,
}

fn yes() -> bool {
    true
}

impl ParamSampler {
    pub fn from_preset(water_type: WaterType, seed: u64) -> Self {
        Self {
            water_type: water_type.name().to_string(),
            ranges: water_type.ranges(),
            seed,
            enforce_order: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all: Vec<(&str, Range)> = self
            .ranges
            .beta
            .iter()
            .map(|r| ("beta", *r))
            .chain(self.ranges.ambient.iter().map(|r| ("ambient", *r)))
            .chain(std::iter::once(("alpha", self.ranges.alpha)))
            .collect();
        for (name, [lo, hi]) in all {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} range [{lo}, {hi}] is invalid")));
            }
            if lo < 0.0 || (name == "ambient" && hi > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} range [{lo}, {hi}] leaves the admissible domain"
                )));
            }
        }
        Ok(())
    }

    /// Deterministic in `(seed, index)`; each component uniform on its range.
    pub fn sample(&self, index: u64) -> WaterParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut draw = |[lo, hi]: Range| lo + (hi - lo) * rng.gen::<f64>();
        let mut beta = self.ranges.beta.map(&mut draw);
        let ambient = self.ranges.ambient.map(&mut draw);
        let alpha = draw(self.ranges.alpha);
        if self.enforce_order {
            beta.sort_by(|a, b| b.total_cmp(a));
        }
        WaterParams {
            beta,
            ambient,
            alpha,
        }
    }
}

pub fn sample_params(sampler: &ParamSampler, index: u64) -> WaterParams {
    sampler.sample(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub samples_per_pair: usize,
    pub width: usize,
    pub height: usize,
    pub meters_per_unit: f64,
    pub max_range: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            samples_per_pair: 1,
            width: DEFAULT_OUTPUT_SIZE,
            height: DEFAULT_OUTPUT_SIZE,
            meters_per_unit: DEFAULT_METERS_PER_UNIT,
            max_range: DEFAULT_MAX_RANGE,
        }
    }
}

/// One manifest row. Paths are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_id: String,
    pub sample_index: usize,
    pub beta_r: f64,
    pub beta_g: f64,
    pub beta_b: f64,
    pub alpha: f64,
    pub ambient_r: f64,
    pub ambient_g: f64,
    pub ambient_b: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    pub degraded_path: String,
    pub clear_path: String,
}

impl ManifestEntry {
    pub fn params(&self) -> WaterParams {
        WaterParams {
            beta: [self.beta_r, self.beta_g, self.beta_b],
            ambient: [self.ambient_r, self.ambient_g, self.ambient_b],
            alpha: self.alpha,
        }
    }

    /// Range map location, alongside the degraded and clear images.
    pub fn depth_path(&self) -> String {
        depth_rel_path(&self.source_id, self.sample_index)
    }
}

fn depth_rel_path(id: &str, k: usize) -> String {
    format!("depth/{id}_{k}.png")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub preset: String,
    /// Per-entry failures; generation carries on past them.
    pub errors: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CONFIG_ECHO_FILE: &str = "config.json";

impl DatasetManifest {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |e: csv::Error| Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        for e in &self.entries {
            w.serialize(e).map_err(io_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads rows back; seed and preset are not stored in the CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let io_err = |e: csv::Error| Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        };
        let mut r = csv::Reader::from_path(path).map_err(io_err)?;
        let entries = r
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
            .map_err(io_err)?;
        Ok(Self {
            entries,
            ..Default::default()
        })
    }
}

/// What was used to produce a dataset, echoed as JSON beside the manifest.
#[derive(Debug, Serialize)]
struct ConfigEcho<'a> {
    sampler: &'a ParamSampler,
    generation: &'a GenerationConfig,
    sources: Vec<&'a str>,
}

/// Synthesises `samples_per_pair` degraded images per pair into `out_dir`.
///
/// The clear image and range map are quantised to their file precision
/// before synthesis, so a re-synthesis from the written files reproduces
/// the degraded image up to its own 8-bit rounding.
pub fn generate_batch(
    pairs: &[RgbdPair],
    sampler: &ParamSampler,
    cfg: &GenerationConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no RGB-D pairs to synthesise from".into()));
    }
    if cfg.samples_per_pair == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::InvalidParameter(
            "samples per pair and output size must be positive".into(),
        ));
    }
    sampler.validate()?;
    for sub in ["degraded", "clear", "depth"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir, source })?;
    }

    let mut order: Vec<&RgbdPair> = pairs.iter().collect();
    order.sort_by(|a, b| a.source_id.cmp(&b.source_id));

    let prepared = par::map_slice(&order, |pair| prepare_pair(pair, cfg));
    let jobs: Vec<(usize, usize)> = (0..order.len())
        .flat_map(|p| (0..cfg.samples_per_pair).map(move |k| (p, k)))
        .collect();

    let results = par::map_slice(&jobs, |&(p, k)| {
        let id = &order[p].source_id;
        let (clear, depth) = match &prepared[p] {
            Ok(v) => v,
            Err(e) => return Err(format!("{id}: {e}")),
        };
        let index = (p * cfg.samples_per_pair + k) as u64;
        let params = sampler.sample(index);
        write_entry(id, k, clear, depth, &params, cfg, out_dir).map_err(|e| format!("{id}_{k}: {e}"))
    });

    let mut manifest = DatasetManifest {
        seed: sampler.seed,
        preset: sampler.water_type.clone(),
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(entry) => manifest.entries.push(entry),
            Err(e) => manifest.errors.push(e),
        }
    }
    manifest.errors.dedup();
    manifest.write_csv(&out_dir.join(MANIFEST_FILE))?;
    let echo = ConfigEcho {
        sampler,
        generation: cfg,
        sources: order.iter().map(|p| p.source_id.as_str()).collect(),
    };
    let json = serde_json::to_string_pretty(&echo).expect("config echo serialises");
    let echo_path = out_dir.join(CONFIG_ECHO_FILE);
    std::fs::write(&echo_path, json).map_err(|source| Error::Io {
        path: echo_path,
        source,
    })?;
    Ok(manifest)
}

fn prepare_pair(pair: &RgbdPair, cfg: &GenerationConfig) -> Result<(Image, DepthMap)> {
    if pair.image.dims() != pair.depth.dims() {
        return Err(crate::error::shape_mismatch(pair.image.dims(), pair.depth.dims()));
    }
    let (x0, y0, cw, ch) = centre_crop(pair.image.width(), pair.image.height(), cfg.width, cfg.height);
    let clear = resize_bilinear(&pair.image, (x0, y0, cw, ch), cfg.width, cfg.height);
    let depth = crop(&pair.depth, (x0, y0, cw, ch));
    let depth = resize_nearest(&depth, cfg.width, cfg.height);
    let depth = normalize_depth(&depth, cfg.max_range)?;
    Ok((
        io::round_trip_u8(&clear),
        io::round_trip_depth(&depth, cfg.meters_per_unit),
    ))
}

fn write_entry(
    id: &str,
    k: usize,
    clear: &Image,
    depth: &DepthMap,
    params: &WaterParams,
    cfg: &GenerationConfig,
    out_dir: &Path,
) -> Result<ManifestEntry> {
    let degraded = synthesize_improved(clear, depth, params)?;
    let degraded_path = format!("degraded/{id}_{k}.png");
    let clear_path = format!("clear/{id}_{k}.png");
    io::write_rgb8(&out_dir.join(&degraded_path), &degraded)?;
    io::write_rgb8(&out_dir.join(&clear_path), clear)?;
    io::write_depth16(&out_dir.join(depth_rel_path(id, k)), depth, cfg.meters_per_unit)?;
    let (depth_min, depth_max) = depth.min_max();
    Ok(ManifestEntry {
        source_id: id.to_string(),
        sample_index: k,
        beta_r: params.beta[0],
        beta_g: params.beta[1],
        beta_b: params.beta[2],
        alpha: params.alpha,
        ambient_r: params.ambient[0],
        ambient_g: params.ambient[1],
        ambient_b: params.ambient[2],
        depth_min,
        depth_max,
        degraded_path,
        clear_path,
    })
}

/// Loaded files of one manifest row.
#[derive(Debug, Clone)]
pub struct StoredSample {
    pub degraded: Image,
    pub clear: Image,
    pub depth: DepthMap,
    pub params: WaterParams,
}

pub fn load_entry(out_dir: &Path, entry: &ManifestEntry, meters_per_unit: f64) -> Result<StoredSample> {
    Ok(StoredSample {
        degraded: io::read_rgb8(&out_dir.join(&entry.degraded_path))?,
        clear: io::read_rgb8(&out_dir.join(&entry.clear_path))?,
        depth: io::read_depth16(&out_dir.join(entry.depth_path()), meters_per_unit)?,
        params: entry.params(),
    })
}

/// Largest per-value gap between the stored degraded image and a fresh
/// synthesis from the row's clear image, range map and parameters.
pub fn verify_entry(out_dir: &Path, entry: &ManifestEntry, meters_per_unit: f64) -> Result<f64> {
    let s = load_entry(out_dir, entry, meters_per_unit)?;
    let again = synthesize_improved(&s.clear, &s.depth, &s.params)?;
    Ok(again
        .data()
        .iter()
        .zip(s.degraded.data())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// Largest centred window with the target aspect ratio: `(x0, y0, w, h)`.
fn centre_crop(w: usize, h: usize, tw: usize, th: usize) -> (usize, usize, usize, usize) {
    // Compare w/h with tw/th without floating point.
    if w * th > h * tw {
        let cw = (h * tw / th).max(1);
        ((w - cw) / 2, 0, cw, h)
    } else {
        let ch = (w * th / tw).max(1);
        (0, (h - ch) / 2, w, ch)
    }
}

fn crop(depth: &DepthMap, (x0, y0, cw, ch): (usize, usize, usize, usize)) -> DepthMap {
    let mut data = Vec::with_capacity(cw * ch);
    for y in y0..y0 + ch {
        data.extend_from_slice(&depth.data()[y * depth.width() + x0..y * depth.width() + x0 + cw]);
    }
    DepthMap::from_raw_unchecked(cw, ch, data)
}

/// Bilinear resample of the window `(x0, y0, cw, ch)` to `ow x oh`, pixel
/// centres aligned.
fn resize_bilinear(img: &Image, (x0, y0, cw, ch): (usize, usize, usize, usize), ow: usize, oh: usize) -> Image {
    let sample_axis = |o: usize, out: usize, len: usize| {
        let s = ((o as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        let i = s.floor() as usize;
        let j = (i + 1).min(len - 1);
        (i, j, s - i as f64)
    };
    let mut data = Vec::with_capacity(ow * oh * CHANNELS);
    for oy in 0..oh {
        let (ya, yb, fy) = sample_axis(oy, oh, ch);
        for ox in 0..ow {
            let (xa, xb, fx) = sample_axis(ox, ow, cw);
            for c in 0..CHANNELS {
                let p = |x: usize, y: usize| img.get(x0 + x, y0 + y, c);
                let top = p(xa, ya) * (1.0 - fx) + p(xb, ya) * fx;
                let bottom = p(xa, yb) * (1.0 - fx) + p(xb, yb) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Image::from_raw_unchecked(ow, oh, data)
}

/// Nearest-neighbour resample of a whole range map.
pub fn resize_nearest(depth: &DepthMap, ow: usize, oh: usize) -> DepthMap {
    let (w, h) = depth.dims();
    let mut data = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let sy = ((oy * h) / oh).min(h - 1);
        for ox in 0..ow {
            let sx = ((ox * w) / ow).min(w - 1);
            data.push(depth.get(sx, sy));
        }
    }
    DepthMap::from_raw_unchecked(ow, oh, data)
}
