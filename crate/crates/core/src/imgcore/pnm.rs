//! Binary PGM (`P5`) and grayscale PFM (`Pf`) codecs.

use std::fs;
use std::path::Path;

use super::{DisparityImage, GrayImage, ImageError, INVALID_DISPARITY};

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> ImageError {
        ImageError::Parse { offset: self.pos, msg: msg.into() }
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
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

    fn token(&mut self, comments: bool) -> Result<&'a str, ImageError> {
        if comments {
            self.skip_separators();
        } else {
            while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_whitespace()) {
                self.pos += 1;
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| ImageError::Parse {
            offset: start,
            msg: "non-ASCII header token".into(),
        })
    }

    fn number<N: std::str::FromStr>(&mut self, what: &str, comments: bool) -> Result<N, ImageError> {
        let tok = self.token(comments)?;
        let start = self.pos - tok.len();
        tok.parse().map_err(|_| ImageError::Parse {
            offset: start,
            msg: format!("invalid {what} {tok:?}"),
        })
    }

    /// Consumes the single whitespace byte that separates header and raster.
    fn raster_separator(&mut self) -> Result<(), ImageError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("missing whitespace before raster")),
        }
    }
}

fn magic<'a>(reader: &mut HeaderReader<'a>) -> Result<&'a str, ImageError> {
    if reader.bytes.len() < 2 || reader.bytes[0] != b'P' {
        return Err(reader.err("missing portable-map magic"));
    }
    reader.token(false)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let mut r = HeaderReader::new(bytes);
    let m = magic(&mut r)?;
    if m != "P5" {
        return Err(ImageError::Unsupported(format!("{m} (expected binary graymap P5)")));
    }
    let width: usize = r.number("width", true)?;
    let height: usize = r.number("height", true)?;
    let maxval: u32 = r.number("maxval", true)?;
    if width == 0 || height == 0 {
        return Err(r.err(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 {
        return Err(r.err("maxval must be positive"));
    }
    if maxval > 255 {
        return Err(ImageError::Unsupported(format!("P5 with maxval {maxval} (16-bit samples)")));
    }
    r.raster_separator()?;
    let need = width * height;
    let raster = &bytes[r.pos..];
    if raster.len() < need {
        return Err(ImageError::Parse {
            offset: bytes.len(),
            msg: format!("raster truncated: need {need} bytes, have {}", raster.len()),
        });
    }
    GrayImage::new(width, height, raster[..need].to_vec())
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io { path: path.into(), source })?;
    decode_pgm(&bytes)
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)).map_err(|source| ImageError::Io { path: path.into(), source })
}

/// Byte order of a PFM payload, carried by the sign of the scale field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfmEndian {
    Little,
    Big,
}

/// Result of reading a PFM: the disparities plus how many non-finite
/// samples were replaced by [`INVALID_DISPARITY`].
#[derive(Debug, Clone)]
pub struct PfmLoad {
    pub image: DisparityImage,
    pub nonfinite_replaced: usize,
}

pub fn decode_pfm(bytes: &[u8]) -> Result<PfmLoad, ImageError> {
    let mut r = HeaderReader::new(bytes);
    let m = magic(&mut r)?;
    match m {
        "Pf" => {}
        "PF" => return Err(ImageError::Unsupported("PF (color floatmap)".into())),
        other => return Err(ImageError::Unsupported(format!("{other} (expected grayscale floatmap Pf)"))),
    }
    let width: usize = r.number("width", false)?;
    let height: usize = r.number("height", false)?;
    let scale: f64 = r.number("scale", false)?;
    if width == 0 || height == 0 {
        return Err(r.err(format!("zero dimension {width}x{height}")));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(r.err("scale must be finite and non-zero"));
    }
    let endian = if scale < 0.0 { PfmEndian::Little } else { PfmEndian::Big };
    r.raster_separator()?;
    let need = width * height * 4;
    let raster = &bytes[r.pos..];
    if raster.len() < need {
        return Err(ImageError::Parse {
            offset: bytes.len(),
            msg: format!("raster truncated: need {need} bytes, have {}", raster.len()),
        });
    }
    let mut values = vec![0.0f32; width * height];
    let mut nonfinite = 0;
    for (i, chunk) in raster[..need].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let mut v = match endian {
            PfmEndian::Little => f32::from_le_bytes(raw),
            PfmEndian::Big => f32::from_be_bytes(raw),
        };
        if !v.is_finite() {
            v = INVALID_DISPARITY;
            nonfinite += 1;
        }
        // rows are stored bottom-up
        let (file_row, x) = (i / width, i % width);
        values[(height - 1 - file_row) * width + x] = v;
    }
    Ok(PfmLoad { image: DisparityImage::new(width, height, values)?, nonfinite_replaced: nonfinite })
}

pub fn encode_pfm(image: &DisparityImage, endian: PfmEndian) -> Vec<u8> {
    let scale = match endian {
        PfmEndian::Little => "-1.0",
        PfmEndian::Big => "1.0",
    };
    let mut out = format!("Pf\n{} {}\n{}\n", image.width(), image.height(), scale).into_bytes();
    out.reserve(image.values().len() * 4);
    for y in (0..image.height()).rev() {
        for x in 0..image.width() {
            let v = image.get(x, y);
            out.extend_from_slice(&match endian {
                PfmEndian::Little => v.to_le_bytes(),
                PfmEndian::Big => v.to_be_bytes(),
            });
        }
    }
    out
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<PfmLoad, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io { path: path.into(), source })?;
    decode_pfm(&bytes)
}

pub fn save_pfm(image: &DisparityImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(image, PfmEndian::Little))
        .map_err(|source| ImageError::Io { path: path.into(), source })
}
