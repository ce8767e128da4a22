//! 8-bit raster input/output.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat};

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// An interleaved 8-bit raster with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "raster {height}x{width}x{channels} cannot hold {} bytes",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn gray_from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, channels: 1, data }
    }
}

/// Reads any PNG or JPEG file; grayscale sources stay single-channel,
/// everything else is converted to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")));
    }
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(match img {
        DynamicImage::ImageLuma8(g) => RasterImage { height: h, width: w, channels: 1, data: g.into_raw() },
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            RasterImage { height: h, width: w, channels: 1, data: img.to_luma8().into_raw() }
        }
        other => RasterImage { height: h, width: w, channels: 3, data: other.to_rgb8().into_raw() },
    })
}

pub fn save_raster(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width as u32, img.height as u32);
    let dynimg = match img.channels {
        1 => DynamicImage::ImageLuma8(
            GrayImage::from_raw(w, h, img.data.clone()).ok_or_else(|| Error::invalid("raster size"))?,
        ),
        3 => DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w, h, img.data.clone()).ok_or_else(|| Error::invalid("raster size"))?,
        ),
        n => return Err(Error::invalid(format!("cannot save {n}-channel raster"))),
    };
    dynimg.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}

/// Min-max scales `g` to bytes; a constant grid becomes all zeros.
pub fn grid_to_bytes(g: &Grid2D) -> Vec<u8> {
    let (lo, hi) = g.min_max();
    let span = hi - lo;
    g.as_slice()
        .iter()
        .map(|&v| if span > 0.0 { (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

/// Writes `g` as an 8-bit grayscale PNG after min-max scaling.
pub fn save_image(g: &Grid2D, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = g.dims();
    save_raster(&RasterImage { height: h, width: w, channels: 1, data: grid_to_bytes(g) }, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range_maps_to_full_bytes() {
        let g = Grid2D::from_vec(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(grid_to_bytes(&g), vec![0, 128, 255]);
    }

    #[test]
    fn constant_is_black() {
        assert!(grid_to_bytes(&Grid2D::filled(4, 4, 7.0)).iter().all(|&b| b == 0));
    }

    #[test]
    fn ramp_is_monotone() {
        let g = Grid2D::from_fn(16, 16, |r, c| (r * 16 + c) as f64 / 255.0);
        let bytes = grid_to_bytes(&g);
        assert!(bytes.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!((bytes[0], bytes[255]), (0, 255));
    }

    #[test]
    fn png_round_trip_and_bad_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        let g = Grid2D::from_fn(5, 6, |r, c| (r + c) as f64);
        save_image(&g, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!((back.height, back.width, back.channels), (5, 6, 1));
        assert_eq!(back.data, grid_to_bytes(&g));

        let bad = dir.path().join("missing_dir").join("g.png");
        assert!(matches!(save_image(&g, &bad), Err(Error::Io { .. })));
    }
}
