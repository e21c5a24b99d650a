//! Raster types shared by every module.

use crate::error::{Error, Result};

/// Class identifier emitted by a segmentation model.
pub type ClassId = u16;

/// Row-major `height × width × channels` raster of reals, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "degenerate image dimensions {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "{}x{}x{} image needs {} samples, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "degenerate image");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn zeros_like(other: &Image) -> Self {
        Self::filled(other.height, other.width, other.channels, 0.0)
    }

    /// Build from a function of `(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "degenerate image");
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Per-pixel mean over channels, row-major.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        let inv = 1.0 / self.channels as f64;
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() * inv)
            .collect()
    }
}

/// `height × width` map of class ids; `None` is the abstain marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<Option<ClassId>>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<Option<ClassId>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "degenerate label map dimensions {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "{}x{} label map needs {} labels, got {}",
                height,
                width,
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn from_classes(height: usize, width: usize, classes: Vec<ClassId>) -> Result<Self> {
        Self::new(height, width, classes.into_iter().map(Some).collect())
    }

    pub fn filled(height: usize, width: usize, label: Option<ClassId>) -> Self {
        assert!(height > 0 && width > 0, "degenerate label map");
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Option<ClassId>] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Option<ClassId>] {
        &mut self.labels
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Option<ClassId>> {
        self.labels.iter()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<ClassId> {
        self.labels[row * self.width + col]
    }

    pub fn same_dims(&self, height: usize, width: usize) -> bool {
        self.height == height && self.width == width
    }

    pub fn abstain_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Largest class id present, if any pixel is labeled.
    pub fn max_class(&self) -> Option<ClassId> {
        self.labels.iter().flatten().copied().max()
    }
}
