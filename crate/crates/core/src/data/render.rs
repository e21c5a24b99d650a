use crate::error::{Error, Result};
use crate::image::{Image, LabelMap};

/// RGB colours per class; abstentions are always black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    pub fn new(colors: Vec<[u8; 3]>) -> Self {
        Self { colors }
    }

    /// A fixed, distinct, non-black colour for each of `num_classes` classes.
    pub fn default_for(num_classes: usize) -> Self {
        const BASE: [[u8; 3]; 12] = [
            [128, 64, 128],
            [244, 35, 232],
            [70, 70, 70],
            [102, 102, 156],
            [190, 153, 153],
            [153, 153, 153],
            [250, 170, 30],
            [220, 220, 0],
            [107, 142, 35],
            [152, 251, 152],
            [70, 130, 180],
            [220, 20, 60],
        ];
        let colors = (0..num_classes)
            .map(|c| {
                if c < BASE.len() {
                    BASE[c]
                } else {
                    // Deterministic spread for large class counts; never pure black.
                    let h = crate::seed::mix64(c as u64);
                    [(h as u8) | 1, (h >> 8) as u8, (h >> 16) as u8]
                }
            })
            .collect();
        Self { colors }
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }
}

/// Colour a label map; abstained pixels are black.
pub fn render_segmentation(labels: &LabelMap, palette: &Palette) -> Result<Image> {
    let mut data = Vec::with_capacity(labels.len() * 3);
    for label in labels.iter() {
        let rgb = match label {
            None => [0, 0, 0],
            Some(c) => *palette.colors.get(*c as usize).ok_or_else(|| {
                Error::domain(format!(
                    "palette has {} colours, label {c} needs more",
                    palette.len()
                ))
            })?,
        };
        data.extend(rgb.iter().map(|&v| v as f64 / 255.0));
    }
    Image::new(labels.height(), labels.width(), 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{decode_pnm, encode_pnm, BitDepth};

    #[test]
    fn all_abstain_is_black() {
        let img =
            render_segmentation(&LabelMap::filled(3, 3, None), &Palette::default_for(2)).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_class_single_colour() {
        let img = render_segmentation(&LabelMap::filled(2, 5, Some(3)), &Palette::default_for(4))
            .unwrap();
        for px in img.data().chunks(3) {
            assert_eq!(px, &[102.0 / 255.0, 102.0 / 255.0, 156.0 / 255.0]);
        }
    }

    #[test]
    fn palette_too_small() {
        assert!(
            render_segmentation(&LabelMap::filled(1, 1, Some(5)), &Palette::default_for(3))
                .is_err()
        );
    }

    #[test]
    fn ppm_round_trip_is_byte_exact() {
        let labels =
            LabelMap::new(2, 3, vec![Some(0), None, Some(1), Some(2), Some(13), None]).unwrap();
        let palette = Palette::default_for(20);
        let img = render_segmentation(&labels, &palette).unwrap();
        let bytes = encode_pnm(&img, BitDepth::Eight).unwrap();
        let back = decode_pnm(&bytes).unwrap();
        assert_eq!(encode_pnm(&back, BitDepth::Eight).unwrap(), bytes);
        let header = b"P6\n3 2\n255\n".len();
        assert_eq!(&bytes[header..header + 3], &[128, 64, 128]);
        assert_eq!(&bytes[header + 3..header + 6], &[0, 0, 0]);
        for (i, label) in labels.iter().enumerate() {
            let px = &bytes[header + 3 * i..header + 3 * i + 3];
            match label {
                None => assert_eq!(px, &[0, 0, 0]),
                Some(c) => assert_eq!(px, &palette.colors[*c as usize]),
            }
        }
    }
}
