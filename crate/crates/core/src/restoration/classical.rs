//! Parameter-free baselines: histogram equalisation, gray-world balance and
//! underwater dark-channel (green/blue) transmission estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, TransmissionMap, CHANNELS};

const LEVELS: usize = 256;

/// Per-channel histogram equalisation over 256 levels. A channel holding a
/// single level is returned unchanged.
pub fn equalize_hist(observed: &Image) -> Image {
    let mut out = observed.data().to_vec();
    let n = observed.pixel_count();
    for c in 0..CHANNELS {
        let bins: Vec<usize> = observed
            .data()
            .iter()
            .skip(c)
            .step_by(CHANNELS)
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as usize)
            .collect();
        let mut hist = [0usize; LEVELS];
        for &b in &bins {
            hist[b] += 1;
        }
        let mut cdf = [0usize; LEVELS];
        let mut acc = 0;
        for (i, h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&v| v > 0).unwrap_or(0);
        if n == cdf_min {
            continue;
        }
        let span = (n - cdf_min) as f64;
        let lut: Vec<f64> = cdf
            .iter()
            .map(|&v| ((v.saturating_sub(cdf_min)) as f64 / span * 255.0).round() / 255.0)
            .collect();
        for (i, b) in bins.into_iter().enumerate() {
            out[i * CHANNELS + c] = lut[b];
        }
    }
    Image::from_raw_unchecked(observed.width(), observed.height(), out)
}

/// Scales each channel by `mean(all channels) / mean(channel)`, then clamps.
pub fn gray_world_balance(observed: &Image) -> Result<Image> {
    let means = observed.channel_means();
    if let Some(c) = means.iter().position(|m| *m == 0.0) {
        return Err(Error::InvalidInput(format!(
            "channel {c} has zero mean; gray-world gains are undefined"
        )));
    }
    let gray = means.iter().sum::<f64>() / CHANNELS as f64;
    let gains = means.map(|m| gray / m);
    let data = observed
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| (v * gains[i % CHANNELS]).clamp(0.0, 1.0))
        .collect();
    Ok(Image::from_raw_unchecked(observed.width(), observed.height(), data))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UdcpConfig {
    /// Odd patch edge for the dark-channel minimum filter.
    pub patch: usize,
    /// Fraction of haze removed.
    pub omega: f64,
    /// Lower clip on the transmission estimate.
    pub floor: f64,
    /// Fraction of brightest dark-channel pixels averaged into the ambient light.
    pub top_fraction: f64,
}

impl Default for UdcpConfig {
    fn default() -> Self {
        Self {
            patch: 15,
            omega: 0.95,
            floor: 0.05,
            top_fraction: 0.001,
        }
    }
}

impl UdcpConfig {
    fn validate(&self) -> Result<()> {
        if self.patch % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "dark-channel patch must be odd, got {}",
                self.patch
            )));
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "transmission floor must lie in (0, 1], got {}",
                self.floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UdcpEstimate {
    /// Same estimate replicated across the three channels.
    pub transmission: TransmissionMap,
    pub ambient: [f64; 3],
}

/// Green/blue dark channel: per-pixel `min(G, B)` followed by a patch minimum.
pub fn dark_channel_gb(img: &Image, patch: usize) -> Vec<f64> {
    let per_pixel: Vec<f64> = img
        .data()
        .chunks_exact(CHANNELS)
        .map(|px| px[1].min(px[2]))
        .collect();
    min_filter(&per_pixel, img.width(), img.height(), patch / 2)
}

fn min_filter(src: &[f64], w: usize, h: usize, pad: usize) -> Vec<f64> {
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(pad);
            let hi = (x + pad).min(w - 1);
            rows[y * w + x] = src[y * w + lo..=y * w + hi]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(pad);
        let hi = (y + pad).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).fold(f64::INFINITY, f64::min);
        }
    }
    out
}

/// Transmission `1 - omega * darkGB(I / A)` clipped to `[floor, 1]`, with the
/// ambient light taken as the mean colour of the brightest dark-channel pixels.
pub fn estimate_transmission_udcp(observed: &Image, cfg: &UdcpConfig) -> Result<UdcpEstimate> {
    cfg.validate()?;
    let dark = dark_channel_gb(observed, cfg.patch);
    let ambient = estimate_ambient(observed, &dark, cfg.top_fraction);
    let guard = ambient.map(|a| a.max(1e-6));
    let normalised = Image::from_raw_unchecked(
        observed.width(),
        observed.height(),
        observed
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v / guard[i % CHANNELS])
            .collect(),
    );
    let norm_dark = dark_channel_gb(&normalised, cfg.patch);
    let mut data = Vec::with_capacity(norm_dark.len() * CHANNELS);
    for d in norm_dark {
        let t = (1.0 - cfg.omega * d).clamp(cfg.floor, 1.0);
        data.extend_from_slice(&[t; CHANNELS]);
    }
    Ok(UdcpEstimate {
        transmission: TransmissionMap::from_raw_unchecked(observed.width(), observed.height(), data),
        ambient,
    })
}

fn estimate_ambient(img: &Image, dark: &[f64], top_fraction: f64) -> [f64; 3] {
    let count = ((dark.len() as f64 * top_fraction).ceil() as usize).clamp(1, dark.len());
    let mut order: Vec<usize> = (0..dark.len()).collect();
    order.sort_by(|&a, &b| dark[b].total_cmp(&dark[a]).then(a.cmp(&b)));
    let mut sum = [0.0; 3];
    for &i in &order[..count] {
        for c in 0..CHANNELS {
            sum[c] += img.data()[i * CHANNELS + c];
        }
    }
    sum.map(|s| s / count as f64)
}

/// Inverts the legacy model: `J = (I - A) / max(t, floor) + A`, clamped.
pub fn recover_with_transmission(
    observed: &Image,
    transmission: &TransmissionMap,
    ambient: [f64; 3],
    floor: f64,
) -> Result<Image> {
    if observed.dims() != transmission.dims() {
        return Err(crate::error::shape_mismatch(observed.dims(), transmission.dims()));
    }
    let data = observed
        .data()
        .iter()
        .zip(transmission.data())
        .enumerate()
        .map(|(i, (v, t))| {
            let a = ambient[i % CHANNELS];
            ((v - a) / t.max(floor) + a).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Image::from_raw_unchecked(observed.width(), observed.height(), data))
}

/// Dark-channel restoration using the green/blue prior.
pub fn restore_udcp(observed: &Image, cfg: &UdcpConfig) -> Result<Image> {
    let est = estimate_transmission_udcp(observed, cfg)?;
    recover_with_transmission(observed, &est.transmission, est.ambient, cfg.floor)
}
