//! No-reference underwater quality measure and its three components:
//! colourfulness (UICM), sharpness (UISM) and contrast (UIConM).
//!
//! Components are evaluated on intensities rescaled to `[0, 255]`, the scale
//! the published weights were fitted on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

/// Guard used wherever a logarithm could see zero.
pub const LOG_EPS: f64 = 1e-7;

/// PLIP gray-tone range.
const PLIP_GAMMA: f64 = 1026.0;

/// Luma weights applied to per-channel sharpness.
const UISM_CHANNEL_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UiqmConfig {
    /// Linear weights on (UICM, UISM, UIConM).
    pub weights: [f64; 3],
    /// Fraction trimmed from the low tail for UICM statistics.
    pub trim_low: f64,
    /// Fraction trimmed from the high tail.
    pub trim_high: f64,
    /// Block edge for UISM/UIConM; partial edge blocks are dropped.
    pub block: usize,
}

impl Default for UiqmConfig {
    fn default() -> Self {
        Self {
            weights: [0.0282, 0.2953, 3.5753],
            trim_low: 0.1,
            trim_high: 0.1,
            block: 8,
        }
    }
}

/// Component scores and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UiqmScores {
    pub uicm: f64,
    pub uism: f64,
    pub uiconm: f64,
    pub uiqm: f64,
}

pub fn uiqm_combine(uicm: f64, uism: f64, uiconm: f64) -> f64 {
    uiqm_combine_with(&UiqmConfig::default(), uicm, uism, uiconm)
}

pub fn uiqm_combine_with(cfg: &UiqmConfig, uicm: f64, uism: f64, uiconm: f64) -> f64 {
    let [c1, c2, c3] = cfg.weights;
    c1 * uicm + c2 * uism + c3 * uiconm
}

pub fn uiqm(img: &Image) -> Result<UiqmScores> {
    uiqm_with(&UiqmConfig::default(), img)
}

pub fn uiqm_with(cfg: &UiqmConfig, img: &Image) -> Result<UiqmScores> {
    let uicm = uicm_with(cfg, img)?;
    let uism = uism_with(cfg, img)?;
    let uiconm = uiconm_with(cfg, img)?;
    Ok(UiqmScores {
        uicm,
        uism,
        uiconm,
        uiqm: uiqm_combine_with(cfg, uicm, uism, uiconm),
    })
}

pub fn uicm(img: &Image) -> Result<f64> {
    uicm_with(&UiqmConfig::default(), img)
}

/// Colourfulness from the opponent planes `RG = R - G` and
/// `YB = (R + G) / 2 - B`, using asymmetric alpha-trimmed means and
/// untrimmed spreads about those means.
pub fn uicm_with(cfg: &UiqmConfig, img: &Image) -> Result<f64> {
    check_trim(cfg)?;
    let mut rg = Vec::with_capacity(img.pixel_count());
    let mut yb = Vec::with_capacity(img.pixel_count());
    for px in img.data().chunks_exact(CHANNELS) {
        let (r, g, b) = (255.0 * px[0], 255.0 * px[1], 255.0 * px[2]);
        rg.push(r - g);
        yb.push(0.5 * (r + g) - b);
    }
    let (mu_rg, var_rg) = trimmed_stats(&mut rg, cfg.trim_low, cfg.trim_high);
    let (mu_yb, var_yb) = trimmed_stats(&mut yb, cfg.trim_low, cfg.trim_high);
    Ok(-0.0268 * (mu_rg * mu_rg + mu_yb * mu_yb).sqrt() + 0.1586 * (var_rg + var_yb).sqrt())
}

fn check_trim(cfg: &UiqmConfig) -> Result<()> {
    if cfg.trim_low < 0.0 || cfg.trim_high < 0.0 || cfg.trim_low + cfg.trim_high >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "trim fractions must be non-negative and sum below 1, got {} + {}",
            cfg.trim_low, cfg.trim_high
        )));
    }
    Ok(())
}

/// Alpha-trimmed mean and the mean squared deviation from it over all samples.
fn trimmed_stats(values: &mut [f64], low: f64, high: f64) -> (f64, f64) {
    let k = values.len();
    values.sort_by(f64::total_cmp);
    let lo = (low * k as f64).ceil() as usize;
    let hi = (high * k as f64).floor() as usize;
    let kept = &values[lo.min(k)..k.saturating_sub(hi).max(lo.min(k))];
    let mu = if kept.is_empty() {
        values.iter().sum::<f64>() / k as f64
    } else {
        kept.iter().sum::<f64>() / kept.len() as f64
    };
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / k as f64;
    (mu, var)
}

pub fn uism(img: &Image) -> Result<f64> {
    uism_with(&UiqmConfig::default(), img)
}

/// Sharpness: per channel, Sobel magnitude multiplied into the channel, then
/// the block enhancement measure `2 / (k1 k2) * sum log(max / min)`.
pub fn uism_with(cfg: &UiqmConfig, img: &Image) -> Result<f64> {
    let (w, h) = img.dims();
    let blocks = block_grid(cfg, w, h)?;
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let plane: Vec<f64> = img.plane(c).into_iter().map(|v| 255.0 * v).collect();
        let edges = sobel_magnitude(&plane, w, h);
        let edge_map: Vec<f64> = edges.iter().zip(&plane).map(|(e, v)| e * v).collect();
        total += UISM_CHANNEL_WEIGHTS[c] * eme(&edge_map, w, blocks, cfg.block);
    }
    Ok(total)
}

fn eme(plane: &[f64], w: usize, (k1, k2): (usize, usize), block: usize) -> f64 {
    let mut sum = 0.0;
    for by in 0..k2 {
        for bx in 0..k1 {
            let (lo, hi) = block_extrema(plane, w, bx, by, block);
            if hi > lo {
                sum += hi.max(LOG_EPS).ln() - lo.max(LOG_EPS).ln();
            }
        }
    }
    2.0 / (k1 * k2) as f64 * sum
}

pub fn uiconm(img: &Image) -> Result<f64> {
    uiconm_with(&UiqmConfig::default(), img)
}

/// Contrast: block logAMEE of the intensity plane, with the block ratio
/// formed by PLIP subtraction over PLIP addition and the entropy-style
/// weighting `-r ln r`, averaged over blocks.
pub fn uiconm_with(cfg: &UiqmConfig, img: &Image) -> Result<f64> {
    let (w, h) = img.dims();
    let blocks = block_grid(cfg, w, h)?;
    let intensity: Vec<f64> = img
        .data()
        .chunks_exact(CHANNELS)
        .map(|px| 255.0 * (px[0] + px[1] + px[2]) / 3.0)
        .collect();
    let (k1, k2) = blocks;
    let mut sum = 0.0;
    for by in 0..k2 {
        for bx in 0..k1 {
            let (lo, hi) = block_extrema(&intensity, w, bx, by, cfg.block);
            let ratio = plip_sub(hi, lo) / plip_add(hi, lo).max(LOG_EPS);
            if ratio > LOG_EPS {
                sum += ratio * ratio.ln();
            }
        }
    }
    Ok(-sum / (k1 * k2) as f64)
}

fn plip_add(a: f64, b: f64) -> f64 {
    a + b - a * b / PLIP_GAMMA
}

fn plip_sub(a: f64, b: f64) -> f64 {
    PLIP_GAMMA * (a - b) / (PLIP_GAMMA - b)
}

fn block_grid(cfg: &UiqmConfig, w: usize, h: usize) -> Result<(usize, usize)> {
    if cfg.block == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    let (k1, k2) = (w / cfg.block, h / cfg.block);
    if k1 == 0 || k2 == 0 {
        return Err(Error::InvalidInput(format!(
            "image {w}x{h} holds no complete {0}x{0} block",
            cfg.block
        )));
    }
    Ok((k1, k2))
}

fn block_extrema(plane: &[f64], w: usize, bx: usize, by: usize, block: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in by * block..(by + 1) * block {
        for &v in &plane[y * w + bx * block..y * w + (bx + 1) * block] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Sobel gradient magnitude with replicated borders.
fn sobel_magnitude(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        plane[yc * w + xc]
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_component_rows_combine_to_reported_uiqm() {
        assert!((uiqm_combine(-0.332, 7.151, 0.593) - 4.22).abs() <= 0.01);
        assert!((uiqm_combine(-0.273, 7.169, 0.506) - 3.920).abs() <= 0.01);
        assert_eq!(uiqm_combine(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn gray_and_constant_images_score_zero() {
        let gray = Image::from_fn(32, 32, |x, y, _| ((x * 7 + y * 3) % 17) as f64 / 16.0).unwrap();
        assert_eq!(uicm(&gray).unwrap(), 0.0);
        let flat = Image::uniform(32, 24, [0.2, 0.5, 0.7]).unwrap();
        assert_eq!(uism(&flat).unwrap(), 0.0);
        assert_eq!(uiconm(&flat).unwrap(), 0.0);
    }

    #[test]
    fn uicm_on_constant_opponent_offset() {
        // R = G + delta, B = (R + G) / 2: YB = 0, RG = delta, zero spread.
        let make = |delta: f64| {
            let g = 0.3;
            let r = g + delta;
            Image::uniform(16, 16, [r, g, 0.5 * (r + g)]).unwrap()
        };
        let a = uicm(&make(0.1)).unwrap();
        let b = uicm(&make(0.2)).unwrap();
        assert!((a - (-0.0268 * 25.5)).abs() < 1e-9, "{a}");
        assert!((b - 2.0 * a).abs() < 1e-9);
    }

    #[test]
    fn trimming_drops_tails() {
        let mut v: Vec<f64> = (0..10).map(f64::from).collect();
        v[9] = 1000.0;
        let (mu, _) = trimmed_stats(&mut v, 0.1, 0.1);
        // keeps 1..=8
        assert!((mu - 4.5).abs() < 1e-12);
    }

    #[test]
    fn uism_grows_with_step_height() {
        let step = |hgt: f64| {
            Image::from_fn(32, 32, |x, _, _| if x < 13 { 0.2 } else { 0.2 + hgt }).unwrap()
        };
        let lo = uism(&step(0.1)).unwrap();
        let hi = uism(&step(0.5)).unwrap();
        assert!(lo > 0.0);
        assert!(hi > lo);
    }

    #[test]
    fn uiconm_peaks_near_inverse_e_ratio() {
        // Checkerboards alternating 0 and v at pixel scale: every block sees
        // the same PLIP ratio, and -r ln r peaks at r = 1/e.
        let board = |lo: f64, hi: f64| {
            Image::from_fn(32, 32, |x, y, _| if (x + y) % 2 == 0 { lo } else { hi }).unwrap()
        };
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 1..=44 {
            let lo = 0.02 * i as f64;
            let score = uiconm(&board(lo, 0.9)).unwrap();
            assert!(score >= 0.0);
            if score > best.0 {
                best = (score, lo);
            }
        }
        let (hi, lo) = (255.0 * 0.9, 255.0 * best.1);
        let r = plip_sub(hi, lo) / plip_add(hi, lo);
        assert!((r - (-1.0f64).exp()).abs() < 0.05, "{r}");
    }

    #[test]
    fn too_small_for_a_block() {
        let img = Image::filled(7, 20, 0.5).unwrap();
        assert!(uism(&img).is_err());
        assert!(uiconm(&img).is_err());
    }
}
