use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResizeMethod {
    Nearest,
    #[default]
    Bilinear,
}

impl FromStr for ResizeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nearest" => Ok(ResizeMethod::Nearest),
            "bilinear" => Ok(ResizeMethod::Bilinear),
            other => Err(Error::Config(format!(
                "unknown resize method '{other}' (expected nearest or bilinear)"
            ))),
        }
    }
}

fn scaled_dims(height: usize, width: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let h = (height as f64 * scale).round() as usize;
    let w = (width as f64 * scale).round() as usize;
    if h == 0 || w == 0 {
        return Err(Error::domain(format!(
            "scale {scale} shrinks {height}x{width} to an empty image"
        )));
    }
    Ok((h, w))
}

// Half-pixel-centre source coordinate.
#[inline]
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

#[inline]
fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let idx = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize;
    idx.min(src_len - 1)
}

fn bilinear_taps(dst_len: usize, src_len: usize) -> Vec<(usize, usize, f64)> {
    (0..dst_len)
        .map(|d| {
            let s = source_coord(d, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Resample to explicit dimensions.
pub fn resize_to(
    image: &Image,
    height: usize,
    width: usize,
    method: ResizeMethod,
) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::domain("resize target must be non-empty"));
    }
    if height == image.height() && width == image.width() {
        return Ok(image.clone());
    }
    let (ih, iw, ch) = (image.height(), image.width(), image.channels());
    let out = match method {
        ResizeMethod::Nearest => Image::from_fn(height, width, ch, |r, c, k| {
            image.get(nearest_index(r, ih, height), nearest_index(c, iw, width), k)
        }),
        ResizeMethod::Bilinear => {
            let rows = bilinear_taps(height, ih);
            let cols = bilinear_taps(width, iw);
            Image::from_fn(height, width, ch, |r, c, k| {
                let (r0, r1, fy) = rows[r];
                let (c0, c1, fx) = cols[c];
                let top = image.get(r0, c0, k) + (image.get(r0, c1, k) - image.get(r0, c0, k)) * fx;
                let bottom =
                    image.get(r1, c0, k) + (image.get(r1, c1, k) - image.get(r1, c0, k)) * fx;
                top + (bottom - top) * fy
            })
        }
    };
    Ok(out)
}

/// Resample by a scale factor; output dimensions are rounded.
pub fn resize(image: &Image, scale: f64, method: ResizeMethod) -> Result<Image> {
    let (h, w) = scaled_dims(image.height(), image.width(), scale)?;
    resize_to(image, h, w, method)
}

/// Nearest-neighbour resampling of a label map (abstentions carried along).
pub fn resize_labels_to(labels: &LabelMap, height: usize, width: usize) -> Result<LabelMap> {
    if height == 0 || width == 0 {
        return Err(Error::domain("resize target must be non-empty"));
    }
    if labels.same_dims(height, width) {
        return Ok(labels.clone());
    }
    let (ih, iw) = (labels.height(), labels.width());
    let out = (0..height)
        .flat_map(|r| {
            let sr = nearest_index(r, ih, height);
            (0..width).map(move |c| labels.get(sr, nearest_index(c, iw, width)))
        })
        .collect();
    LabelMap::new(height, width, out)
}
