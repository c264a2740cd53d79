//! Raster types and mask file I/O.
//!
//! Every image is row-major with the origin at the top-left corner: pixel
//! `(x, y)` lives at index `y * width + x`, `x` grows rightward and `y`
//! grows downward.
//!
//! Masks are read from binary PGM (`P5`, maxval 255) or 8-bit grayscale PNG.
//! Pixels `>= 128` become panel (label 1), everything else background.

use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Background (including bark).
pub const BACKGROUND: u8 = 0;
/// Wood panel.
pub const PANEL: u8 = 1;

/// Intensity threshold used when binarizing a loaded mask.
pub const BINARIZE_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed image data: {0}")]
    Malformed(String),
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: usize, height: usize },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("label {value} at index {index} is not a valid class id")]
    InvalidLabel { value: u8, index: usize },
    #[error("png encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
}

/// 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::ZeroArea { width, height });
        }
        check_len(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
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

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }
}

/// Per-pixel class labels: [`BACKGROUND`] or [`PANEL`].
///
/// A mask may have zero area in memory (so that callers can build one
/// incrementally), but it can be neither saved nor loaded in that state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl ClassMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, RasterError> {
        check_len(width, height, labels.len())?;
        if let Some(index) = labels.iter().position(|&l| l > PANEL) {
            return Err(RasterError::InvalidLabel {
                value: labels[index],
                index,
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Mask with every pixel set to `label`.
    ///
    /// # Panics
    ///
    /// If `label` is not a valid class id.
    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        assert!(label <= PANEL, "invalid class label {label}");
        Self {
            width,
            height,
            labels: vec![label; width * height],
        }
    }

    /// Builds a mask by evaluating the panel predicate at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut is_panel: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(u8::from(is_panel(x, y)));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn is_panel(&self, x: usize, y: usize) -> bool {
        self.get(x, y) == PANEL
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, panel: bool) {
        self.labels[y * self.width + x] = u8::from(panel);
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn panel_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == PANEL).count()
    }
}

/// Raw signed convolution responses, same shape as the source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedResponseImage {
    width: usize,
    height: usize,
    data: Vec<i32>,
}

impl SignedResponseImage {
    pub fn new(width: usize, height: usize, data: Vec<i32>) -> Result<Self, RasterError> {
        check_len(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.data
    }
}

fn check_len(width: usize, height: usize, actual: usize) -> Result<(), RasterError> {
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| RasterError::Malformed(format!("dimensions {width}x{height} overflow")))?;
    if expected != actual {
        return Err(RasterError::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Panel → 255, background → 0.
pub fn mask_to_gray(mask: &ClassMask) -> GrayImage {
    GrayImage {
        width: mask.width,
        height: mask.height,
        data: mask
            .labels
            .iter()
            .map(|&l| if l == PANEL { 255 } else { 0 })
            .collect(),
    }
}

/// Binarizes an intensity image with the `>= 128` rule.
pub fn gray_to_mask(image: &GrayImage) -> ClassMask {
    ClassMask {
        width: image.width,
        height: image.height,
        labels: image
            .data
            .iter()
            .map(|&v| u8::from(v >= BINARIZE_THRESHOLD))
            .collect(),
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ClassMask, RasterError> {
    let image = load_gray(path)?;
    Ok(gray_to_mask(&image))
}

/// Reads a PGM (P5) or 8-bit grayscale PNG, sniffing the format from its magic bytes.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_gray(&bytes)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(bytes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(RasterError::UnsupportedFormat(format!(
            "netpbm variant P{} (only binary P5 is accepted)",
            bytes[1] as char
        )))
    } else {
        Err(RasterError::UnsupportedFormat(
            "not a PGM or PNG file".into(),
        ))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and `#` comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(RasterError::Malformed("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::Malformed("PGM header value out of range".into()))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(RasterError::UnsupportedFormat(format!(
            "PGM maxval {maxval} (only 255 is accepted)"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(RasterError::Malformed(
            "missing whitespace after PGM header".into(),
        ));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroArea { width, height });
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| RasterError::Malformed("PGM dimensions overflow".into()))?;
    let body = &bytes[pos..];
    if body.len() < expected {
        return Err(RasterError::Malformed(format!(
            "PGM body holds {} bytes, expected {expected}",
            body.len()
        )));
    }
    GrayImage::new(width, height, body[..expected].to_vec())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let png_err = |e: png::DecodingError| RasterError::Malformed(format!("png: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(RasterError::UnsupportedFormat(format!(
            "png {color:?} at {depth:?} bits (only 8-bit grayscale is accepted)"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| RasterError::Malformed("png frame too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    if width == 0 || height == 0 {
        return Err(RasterError::ZeroArea { width, height });
    }
    buf.truncate(width * height);
    GrayImage::new(width, height, buf)
}

/// Writes the mask as PNG when the path ends in `.png`, otherwise as binary PGM.
pub fn save_mask(mask: &ClassMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    if mask.is_empty() {
        return Err(RasterError::ZeroArea {
            width: mask.width,
            height: mask.height,
        });
    }
    save_gray(&mask_to_gray(mask), path)
}

pub fn save_gray(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let bytes = if is_png_path(path) {
        encode_png(image)?
    } else {
        encode_pgm(image)
    };
    let io_err = |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes).map_err(io_err)?;
    out.flush().map_err(io_err)
}

fn is_png_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&image.data);
    out
}

pub fn encode_png(image: &GrayImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&image.data)?;
        writer.finish()?;
    }
    Ok(out)
}
