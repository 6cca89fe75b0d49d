//! Dense image containers: interleaved RGB intensities, per-pixel range maps
//! and per-pixel per-channel transmission maps.

use crate::error::{shape_mismatch, Error, Result};

/// Number of colour channels carried by every [`Image`].
pub const CHANNELS: usize = 3;

/// Linear RGB image stored row-major with interleaved channels.
///
/// Values are nominally in `[0, 1]`; constructors reject non-finite data.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * CHANNELS {
            return Err(Error::InvalidInput(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite intensity {v}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image with every channel of every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height * CHANNELS])
    }

    /// Image with every pixel set to the same RGB triple.
    pub fn uniform(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * CHANNELS).collect();
        Self::new(width, height, data)
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, data)
    }

    /// Reassembles an image from three channel planes of `width * height` values.
    pub fn from_planes(width: usize, height: usize, planes: [&[f64]; 3]) -> Result<Self> {
        let n = width * height;
        if planes.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidInput("channel plane length mismatch".into()));
        }
        let mut data = Vec::with_capacity(n * CHANNELS);
        for i in 0..n {
            for plane in &planes {
                data.push(plane[i]);
            }
        }
        Self::new(width, height, data)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * CHANNELS);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Copies one channel out as a contiguous row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).copied().collect()
    }

    pub fn planes(&self) -> [Vec<f64>; 3] {
        [self.plane(0), self.plane(1), self.plane(2)]
    }

    /// Applies `f` to every value, producing a new image.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        Self::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Copy with all values clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Self::from_raw_unchecked(
            self.width,
            self.height,
            self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }

    /// Copy with one value replaced; bounds are the caller's responsibility.
    pub fn with_value(&self, index: usize, value: f64) -> Self {
        let mut data = self.data.clone();
        data[index] = value;
        Self::from_raw_unchecked(self.width, self.height, data)
    }

    /// Per-channel arithmetic mean.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sums = [0.0; 3];
        for px in self.data.chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sums[c] += px[c];
            }
        }
        let n = self.pixel_count() as f64;
        sums.map(|s| s / n)
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(shape_mismatch(self.dims(), other.dims()));
        }
        Ok(())
    }
}

/// Per-pixel camera-to-scene range in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "depth data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "depth values must be finite and non-negative, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Smallest and largest range.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Per-pixel per-channel transmission in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl TransmissionMap {
    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * CHANNELS);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Interleaved values, same layout as [`Image::data`].
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}
