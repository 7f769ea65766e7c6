//! Encoder-side image preprocessing: shorter-side bicubic resize, center crop,
//! scaling to [0, 1] and per-channel normalization, laid out as `[3, R, R]`.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use ndarray::Array3;

use super::BackboneProfile;
use crate::{Error, Result};

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

/// Offset of a centered window of `inner` inside `outer`, rounding a half
/// pixel to even like the reference pipeline does.
fn center_offset(outer: u32, inner: u32) -> u32 {
    let diff = outer - inner;
    let half = diff / 2;
    if diff % 2 == 1 && half % 2 == 1 {
        half + 1
    } else {
        half
    }
}

/// Target size after scaling the shorter side to `r`; the longer side is
/// truncated, not rounded.
fn resized_dims(width: u32, height: u32, r: u32) -> (u32, u32) {
    if width <= height {
        let h = (u64::from(r) * u64::from(height) / u64::from(width)) as u32;
        (r, h.max(r))
    } else {
        let w = (u64::from(r) * u64::from(width) / u64::from(height)) as u32;
        (w.max(r), r)
    }
}

pub fn preprocess_image(raw: &RgbImage, profile: &BackboneProfile) -> Result<Array3<f32>> {
    let (width, height) = raw.dimensions();
    if width == 0 || height == 0 {
        return Err(Error::Image(format!("zero-size image {width}x{height}")));
    }
    let r = profile.input_resolution;
    let resized;
    let source = if width.min(height) == r {
        raw
    } else {
        let (w, h) = resized_dims(width, height, r);
        resized = imageops::resize(raw, w, h, FilterType::CatmullRom);
        &resized
    };
    let (w, h) = source.dimensions();
    let left = center_offset(w, r);
    let top = center_offset(h, r);

    let side = r as usize;
    let mut out = Array3::<f32>::zeros((3, side, side));
    for y in 0..r {
        for x in 0..r {
            let px = source.get_pixel(left + x, top + y);
            for c in 0..3 {
                let v = f32::from(px[c]) / 255.0;
                out[[c, y as usize, x as usize]] =
                    (v - profile.channel_mean[c]) / profile.channel_std[c];
            }
        }
    }
    Ok(out)
}
