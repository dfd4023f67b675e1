//! 16-bit grayscale PNG depth and distance images. A stored value `v` means
//! `v * scale` mm; 0 marks missing data.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma};
use pose_forge::geometry::{DepthMap, DistanceMap};
use pose_forge::CameraIntrinsics;

use crate::error::{read_file, write_file, HarnessError, Result};

pub fn decode_u16_png(bytes: &[u8], context: &str) -> Result<(usize, usize, Vec<u16>)> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| HarnessError::Validation(format!("{context}: {e}")))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        image::DynamicImage::ImageLuma8(_) => img.to_luma16(),
        other => {
            return Err(HarnessError::UnsupportedElement {
                context: context.into(),
                message: format!("expected a grayscale PNG, got {:?}", other.color()),
            })
        }
    };
    Ok((img.width() as usize, img.height() as usize, img.into_raw()))
}

pub fn encode_u16_png(width: usize, height: usize, values: Vec<u16>) -> Vec<u8> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, values).expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

/// Quantizes millimeter values to stored units; values beyond the 16-bit
/// range are an error.
pub fn quantize(values: &[f64], scale: f64, context: &str) -> Result<Vec<u16>> {
    values
        .iter()
        .map(|&v| {
            let q = (v / scale).round();
            if !(0.0..=u16::MAX as f64).contains(&q) {
                return Err(HarnessError::Validation(format!(
                    "{context}: {v} mm does not fit 16 bits at scale {scale}"
                )));
            }
            Ok(q as u16)
        })
        .collect()
}

pub fn load_depth(path: &Path, scale: f64) -> Result<DepthMap> {
    let ctx = path.display().to_string();
    let (w, h, raw) = decode_u16_png(&read_file(path)?, &ctx)?;
    Ok(DepthMap::new(w, h, raw.into_iter().map(|v| v as f64 * scale).collect())?)
}

pub fn save_depth(path: &Path, depth: &DepthMap, scale: f64) -> Result<()> {
    let q = quantize(&depth.data, scale, &path.display().to_string())?;
    write_file(path, &encode_u16_png(depth.width, depth.height, q))
}

pub fn save_distance(path: &Path, distance: &DistanceMap, scale: f64) -> Result<()> {
    let q = quantize(&distance.data, scale, &path.display().to_string())?;
    write_file(path, &encode_u16_png(distance.width, distance.height, q))
}

/// Inverse of `depth_to_distance`: Z-depth per pixel from the camera-center
/// distance.
pub fn distance_to_depth(distance: &DistanceMap, cam: &CameraIntrinsics) -> DepthMap {
    let mut data = Vec::with_capacity(distance.data.len());
    for v in 0..distance.height {
        let y = (v as f64 - cam.cy) / cam.fy;
        for u in 0..distance.width {
            let x = (u as f64 - cam.cx) / cam.fx;
            data.push(distance.get(u, v) / (x * x + y * y + 1.0).sqrt());
        }
    }
    DepthMap { width: distance.width, height: distance.height, data }
}
