//! PNG reading and writing: 8-bit RGB images and 16-bit range maps.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image};

/// Reads an 8-bit RGB (or RGBA, alpha dropped) image as `value / 255`.
pub fn read_rgb8(path: &Path) -> Result<Image> {
    let img = open(path)?;
    let rgb = match img {
        DynamicImage::ImageRgb8(buf) => buf,
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            img.to_rgb8()
        }
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("expected an 8-bit colour image, found {:?}", other.color()),
            })
        }
    };
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
    Image::new(w as usize, h as usize, data)
}

/// Quantises to 8 bits (round to nearest, clamped) and writes a PNG.
pub fn write_rgb8(path: &Path, img: &Image) -> Result<()> {
    let raw = quantize_u8(img);
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .expect("buffer length matches dimensions");
    save(path, DynamicImage::ImageRgb8(buf))
}

/// 8-bit values of `img` as written by [`write_rgb8`].
pub fn quantize_u8(img: &Image) -> Vec<u8> {
    img.data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Image after an 8-bit write/read round trip.
pub fn round_trip_u8(img: &Image) -> Image {
    let data = quantize_u8(img).into_iter().map(|v| f64::from(v) / 255.0).collect();
    Image::from_raw_unchecked(img.width(), img.height(), data)
}

/// Reads a 16-bit grayscale range map, scaling raw units to metres.
pub fn read_depth16(path: &Path, meters_per_unit: f64) -> Result<DepthMap> {
    let img = open(path)?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("expected 16-bit grayscale depth, found {:?}", img.color()),
        });
    };
    let (w, h) = buf.dimensions();
    let data = buf
        .into_raw()
        .into_iter()
        .map(|v| f64::from(v) * meters_per_unit)
        .collect();
    DepthMap::new(w as usize, h as usize, data)
}

/// Writes a range map as 16-bit grayscale in units of `meters_per_unit`.
pub fn write_depth16(path: &Path, depth: &DepthMap, meters_per_unit: f64) -> Result<()> {
    let raw = quantize_depth(depth, meters_per_unit);
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("buffer length matches dimensions");
    save(path, DynamicImage::ImageLuma16(buf))
}

pub fn quantize_depth(depth: &DepthMap, meters_per_unit: f64) -> Vec<u16> {
    depth
        .data()
        .iter()
        .map(|d| (d / meters_per_unit).round().clamp(0.0, f64::from(u16::MAX)) as u16)
        .collect()
}

/// Range map after a 16-bit write/read round trip.
pub fn round_trip_depth(depth: &DepthMap, meters_per_unit: f64) -> DepthMap {
    let data = quantize_depth(depth, meters_per_unit)
        .into_iter()
        .map(|v| f64::from(v) * meters_per_unit)
        .collect();
    DepthMap::from_raw_unchecked(depth.width(), depth.height(), data)
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    image::open(path).map_err(|e| Error::Codec {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn save(path: &Path, img: DynamicImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Codec {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
}
