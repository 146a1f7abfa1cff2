//! Binary PGM (`P5`) encoding of grayscale images and export of the
//! intensity surface as plot-ready data.
//!
//! The encoder always writes the canonical header `P5\n<w> <h>\n255\n`
//! followed by `w * h` raw bytes, top row first. The decoder accepts any
//! whitespace layout and `#` comments in the header, but only maxval 255.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::normcodec::NormMatrix;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a binary PGM file (magic must be P5)")]
    BadMagic,
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("invalid image dimensions {width}x{height} for {len} pixels")]
    BadDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(ImageError::BadDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

pub fn pgm_header(width: usize, height: usize) -> String {
    format!("P5\n{width} {height}\n255\n")
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = pgm_header(img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

struct HeaderCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::BadHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::BadHeader(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageError::BadMagic);
    }
    let mut cur = HeaderCursor { buf: bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates maxval from the raster.
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageError::BadHeader("missing separator after maxval".into())),
    }
    let expected = width * height;
    let data = &bytes[cur.pos..];
    if data.len() < expected {
        return Err(ImageError::TruncatedPixelData {
            expected,
            found: data.len(),
        });
    }
    GrayImage::new(width, height, data[..expected].to_vec())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    decode_pgm(&fs::read(path)?)
}

/// Intensities laid out for a 3D surface plot: `z[y][x]` with `x` the
/// attribute (column) index and `y` the record (row) index.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub width: usize,
    pub height: usize,
    pub z: Vec<f64>,
}

impl SurfaceGrid {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.z[y * self.width + x]
    }

    /// `(x, y, z)` triples in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.z
            .iter()
            .enumerate()
            .map(|(k, &z)| (k % self.width, k / self.width, z))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,z\n");
        for (x, y, z) in self.triples() {
            let _ = writeln!(s, "{x},{y},{z}");
        }
        s
    }

    /// gnuplot "matrix" layout: one line per row, space-separated values.
    pub fn to_gnuplot_matrix(&self) -> String {
        let mut s = String::new();
        for row in self.z.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|z| z.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_csv())
    }

    pub fn write_gnuplot_matrix(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_gnuplot_matrix())
    }
}

impl From<&GrayImage> for SurfaceGrid {
    fn from(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            z: img.pixels.iter().map(|&p| f64::from(p)).collect(),
        }
    }
}

impl From<&NormMatrix> for SurfaceGrid {
    fn from(n: &NormMatrix) -> Self {
        Self {
            width: n.cols,
            height: n.rows,
            z: n.values.clone(),
        }
    }
}

pub fn surface_grid<'a, T>(source: &'a T) -> SurfaceGrid
where
    SurfaceGrid: From<&'a T>,
{
    SurfaceGrid::from(source)
}
