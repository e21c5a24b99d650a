//! Portable anymap (PGM/PPM) reading and writing.
//!
//! Reads plain (P2/P3) and raw (P5/P6) files with any maxval in `1..=65535`;
//! raw samples wider than a byte are big-endian. Writes raw files only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ClassId, Image, LabelMap};

/// Sample value used for abstained pixels in label files.
pub const ABSTAIN_CODE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitDepth {
    Eight,
    #[default]
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u16 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

struct Raw {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u16,
    samples: Vec<u16>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&b) = self.data.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(&b) = self.data.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = match value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u32))
            {
                Some(v) => v,
                None => {
                    self.pos = start;
                    return self.err(format!("{what} is too large"));
                }
            };
            self.pos += 1;
        }
        if self.pos == start {
            return if self.pos >= self.data.len() {
                self.err(format!("unexpected end of data while reading {what}"))
            } else {
                self.err(format!(
                    "expected {what}, found byte 0x{:02x}",
                    self.data[self.pos]
                ))
            };
        }
        Ok(value)
    }
}

fn decode_raw(bytes: &[u8]) -> Result<Raw> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
    };
    if bytes.len() < 2 {
        return cur.err("file too short for a PNM magic number");
    }
    let (channels, binary) = match &bytes[..2] {
        b"P2" => (1, false),
        b"P3" => (3, false),
        b"P5" => (1, true),
        b"P6" => (3, true),
        _ => return cur.err("unsupported magic number (expected P2, P3, P5 or P6)"),
    };
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: maxval_at,
            message: format!("degenerate dimensions {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse {
            offset: maxval_at,
            message: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    let maxval = maxval as u16;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Parse {
            offset: maxval_at,
            message: "image dimensions overflow".into(),
        })?;

    let mut samples = Vec::with_capacity(count.min(1 << 24));
    if binary {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => return cur.err("expected a single whitespace byte after maxval"),
            None => return cur.err("truncated payload: no data after header"),
        }
        let width_bytes = if maxval > 255 { 2 } else { 1 };
        let need = count * width_bytes;
        let payload = &bytes[cur.pos..];
        if payload.len() < need {
            return Err(Error::Parse {
                offset: bytes.len(),
                message: format!(
                    "truncated payload: expected {need} bytes, found {}",
                    payload.len()
                ),
            });
        }
        for i in 0..count {
            let v = if width_bytes == 2 {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]])
            } else {
                payload[i] as u16
            };
            if v > maxval {
                return Err(Error::Parse {
                    offset: cur.pos + i * width_bytes,
                    message: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            samples.push(v);
        }
    } else {
        for _ in 0..count {
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval as u32 {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            samples.push(v as u16);
        }
    }
    Ok(Raw {
        width,
        height,
        channels,
        maxval,
        samples,
    })
}

fn encode_raw(
    width: usize,
    height: usize,
    channels: usize,
    maxval: u16,
    samples: &[u16],
) -> Vec<u8> {
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        out.reserve(samples.len() * 2);
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

/// Decode a PGM/PPM byte buffer into an image with values `sample / maxval`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let raw = decode_raw(bytes)?;
    let scale = 1.0 / raw.maxval as f64;
    Image::new(
        raw.height,
        raw.width,
        raw.channels,
        raw.samples.iter().map(|&s| s as f64 * scale).collect(),
    )
}

/// Encode a 1- or 3-channel image as raw PGM/PPM; values are clamped to
/// `[0, 1]` and rounded to the nearest level.
pub fn encode_pnm(image: &Image, depth: BitDepth) -> Result<Vec<u8>> {
    if !(image.channels() == 1 || image.channels() == 3) {
        return Err(Error::shape(format!(
            "PNM stores 1 or 3 channels, image has {}",
            image.channels()
        )));
    }
    let maxval = depth.maxval();
    let samples: Vec<u16> = image
        .data()
        .iter()
        .map(|v| {
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            (v * maxval as f64).round() as u16
        })
        .collect();
    Ok(encode_raw(
        image.width(),
        image.height(),
        image.channels(),
        maxval,
        &samples,
    ))
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn write_pnm(path: impl AsRef<Path>, image: &Image, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pnm(image, depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encode labels as an 8-bit P5 with the class id as sample value and
/// abstentions as [`ABSTAIN_CODE`].
pub fn encode_labels(labels: &LabelMap, num_classes: usize) -> Result<Vec<u8>> {
    if num_classes > ABSTAIN_CODE as usize {
        return Err(Error::Capacity(format!(
            "label files hold at most {} classes, got {num_classes}",
            ABSTAIN_CODE
        )));
    }
    let mut samples = Vec::with_capacity(labels.len());
    for label in labels.iter() {
        samples.push(match label {
            None => ABSTAIN_CODE as u16,
            Some(c) if (*c as usize) < num_classes => *c,
            Some(c) => {
                return Err(Error::Validation(format!(
                    "label {c} outside [0, {num_classes})"
                )))
            }
        });
    }
    Ok(encode_raw(
        labels.width(),
        labels.height(),
        1,
        ABSTAIN_CODE as u16,
        &samples,
    ))
}

/// Decode a grayscale label file. A sample equal to the file's maxval is an
/// abstention; any other sample must be below `num_classes` when given.
pub fn decode_labels(bytes: &[u8], num_classes: Option<usize>) -> Result<LabelMap> {
    let raw = decode_raw(bytes)?;
    if raw.channels != 1 {
        return Err(Error::Validation("label files must be grayscale".into()));
    }
    let labels = raw
        .samples
        .iter()
        .map(|&s| {
            if s == raw.maxval {
                Ok(None)
            } else if num_classes.is_some_and(|k| s as usize >= k) {
                Err(Error::Validation(format!(
                    "label {s} outside [0, {})",
                    num_classes.unwrap_or_default()
                )))
            } else {
                Ok(Some(s as ClassId))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LabelMap::new(raw.height, raw.width, labels)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelMap, num_classes: usize) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_labels(labels, num_classes)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_pgm_maps_by_maxval() {
        let img = decode_pnm(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n").unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 1));
    }

    #[test]
    fn plain_ppm() {
        let img = decode_pnm(b"P3 1 1 15 15 0 5").unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn malformed_inputs_are_errors() {
        for bad in [
            &b""[..],
            b"P",
            b"P7\n1 1\n255\n",
            b"P5\n2 2\n255\n\x00\x01",
            b"P5\n2 x\n255\n",
            b"P5\n0 2\n255\n",
            b"P5\n1 1\n70000\n\x00",
            b"P2\n1 2\n255\n7",
            b"P2\n1 1\n10\n11",
        ] {
            match decode_pnm(bad) {
                Err(Error::Parse { .. }) => {}
                other => panic!("{:?} gave {other:?}", String::from_utf8_lossy(bad)),
            }
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let err = decode_pnm(b"P5\n2 2\n255\n\x00\x01").unwrap_err();
        match err {
            Error::Parse { offset, message } => {
                assert_eq!(offset, 13);
                assert!(message.contains("expected 4 bytes, found 2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sixteen_bit_is_big_endian() {
        let img = Image::new(1, 2, 1, vec![1.0, 256.0 / 65535.0]).unwrap();
        let bytes = encode_pnm(&img, BitDepth::Sixteen).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[0xff, 0xff, 0x01, 0x00]);
    }

    #[test]
    fn label_round_trip_with_abstain() {
        let labels =
            LabelMap::new(2, 3, vec![Some(0), None, Some(4), Some(2), None, Some(1)]).unwrap();
        let bytes = encode_labels(&labels, 5).unwrap();
        assert_eq!(decode_labels(&bytes, Some(5)).unwrap(), labels);
    }

    #[test]
    fn all_abstain_file_is_maxval_bytes() {
        let labels = LabelMap::filled(3, 4, None);
        let bytes = encode_labels(&labels, 4).unwrap();
        assert!(bytes.ends_with(&[255u8; 12]));
        assert_eq!(bytes.len(), b"P5\n4 3\n255\n".len() + 12);
    }

    #[test]
    fn label_validation() {
        let labels = LabelMap::filled(2, 2, Some(3));
        assert!(matches!(
            encode_labels(&labels, 256),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            encode_labels(&labels, 3),
            Err(Error::Validation(_))
        ));
        let bytes = encode_labels(&labels, 4).unwrap();
        assert!(matches!(
            decode_labels(&bytes, Some(3)),
            Err(Error::Validation(_))
        ));
        assert!(decode_labels(b"P6 1 1 255 \x00\x00\x00", None).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(3, 4, 3, |r, c, ch| ((r * 4 + c) * 3 + ch) as f64 / 35.0);
        let path = dir.path().join("x.ppm");
        write_pnm(&path, &img, BitDepth::Eight).unwrap();
        let back = read_pnm(&path).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(matches!(
            read_pnm(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn sixteen_bit_round_trip_within_quantum(
            h in 1usize..6, w in 1usize..6, color in any::<bool>(),
            vals in proptest::collection::vec(0.0f64..=1.0, 75),
        ) {
            let ch = if color { 3 } else { 1 };
            let img = Image::from_fn(h, w, ch, |r, c, k| vals[(r * w + c) * ch + k]);
            let back = decode_pnm(&encode_pnm(&img, BitDepth::Sixteen).unwrap()).unwrap();
            prop_assert!(back.same_shape(&img));
            for (a, b) in back.data().iter().zip(img.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 65535.0);
            }
            // Quantized values survive a second trip exactly.
            let again = decode_pnm(&encode_pnm(&back, BitDepth::Sixteen).unwrap()).unwrap();
            prop_assert_eq!(again, back);
        }

        #[test]
        fn label_round_trip(h in 1usize..8, w in 1usize..8, codes in proptest::collection::vec(0u16..6, 64)) {
            let labels: Vec<_> = (0..h * w).map(|i| if codes[i] == 5 { None } else { Some(codes[i]) }).collect();
            let map = LabelMap::new(h, w, labels).unwrap();
            prop_assert_eq!(decode_labels(&encode_labels(&map, 5).unwrap(), Some(5)).unwrap(), map);
        }
    }
}
