//! Minimal PFM and binary PPM (P6) readers and writers.
//!
//! PFM is written little-endian (scale `-1.0`) with rows stored bottom to
//! top, as the format prescribes. Images in memory are always top to bottom.

use std::io::{self, BufRead, Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed {format} header: {reason}")]
    Header {
        format: &'static str,
        reason: String,
    },
    #[error("truncated pixel data: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
}

/// Linear float RGB image, row-major, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: [f32; 3]) {
        self.pixels[y * self.width + x] = c;
    }
}

/// 8-bit RGB image, row-major, top row first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rgb8Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

fn header_err(format: &'static str, reason: impl Into<String>) -> ImageError {
    ImageError::Header {
        format,
        reason: reason.into(),
    }
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
fn read_token<R: BufRead>(r: &mut R, format: &'static str) -> Result<String, ImageError> {
    let mut tok = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return Err(header_err(format, "unexpected end of header"));
            }
            break;
        }
        let b = byte[0];
        if b == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(b);
    }
    String::from_utf8(tok).map_err(|_| header_err(format, "non-ascii token"))
}

fn parse<T: std::str::FromStr>(s: &str, format: &'static str, what: &str) -> Result<T, ImageError> {
    s.parse()
        .map_err(|_| header_err(format, format!("bad {what}: {s:?}")))
}

pub fn write_pfm<W: Write>(w: &mut W, img: &RgbImage) -> io::Result<()> {
    write!(w, "PF\n{} {}\n-1.0\n", img.width, img.height)?;
    let mut row = Vec::with_capacity(img.width * 12);
    for y in (0..img.height).rev() {
        row.clear();
        for x in 0..img.width {
            for c in img.get(x, y) {
                row.extend_from_slice(&c.to_le_bytes());
            }
        }
        w.write_all(&row)?;
    }
    Ok(())
}

pub fn read_pfm<R: BufRead>(r: &mut R) -> Result<RgbImage, ImageError> {
    const F: &str = "PFM";
    let magic = read_token(r, F)?;
    if magic != "PF" {
        return Err(header_err(F, format!("expected PF, found {magic:?}")));
    }
    let width: usize = parse(&read_token(r, F)?, F, "width")?;
    let height: usize = parse(&read_token(r, F)?, F, "height")?;
    let scale: f32 = parse(&read_token(r, F)?, F, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(header_err(F, "scale must be nonzero"));
    }
    let little = scale < 0.0;
    let expected = width * height * 12;
    let mut buf = Vec::with_capacity(expected);
    r.take(expected as u64).read_to_end(&mut buf)?;
    if buf.len() != expected {
        return Err(ImageError::Truncated {
            expected,
            got: buf.len(),
        });
    }
    let mut img = RgbImage::new(width, height);
    for (i, chunk) in buf.chunks_exact(12).enumerate() {
        let mut c = [0.0f32; 3];
        for (k, b) in chunk.chunks_exact(4).enumerate() {
            let bytes = [b[0], b[1], b[2], b[3]];
            c[k] = if little {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
        }
        let (x, row) = (i % width, i / width);
        img.set(x, height - 1 - row, c);
    }
    Ok(img)
}

pub fn write_ppm<W: Write>(w: &mut W, img: &Rgb8Image) -> io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)
}

pub fn read_ppm<R: BufRead>(r: &mut R) -> Result<Rgb8Image, ImageError> {
    const F: &str = "PPM";
    let magic = read_token(r, F)?;
    if magic != "P6" {
        return Err(header_err(F, format!("expected P6, found {magic:?}")));
    }
    let width: usize = parse(&read_token(r, F)?, F, "width")?;
    let height: usize = parse(&read_token(r, F)?, F, "height")?;
    let maxval: u32 = parse(&read_token(r, F)?, F, "maxval")?;
    if maxval != 255 {
        return Err(header_err(F, format!("only maxval 255 is supported, got {maxval}")));
    }
    let expected = width * height * 3;
    let mut data = Vec::with_capacity(expected);
    r.take(expected as u64).read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(ImageError::Truncated {
            expected,
            got: data.len(),
        });
    }
    Ok(Rgb8Image {
        width,
        height,
        data,
    })
}

/// Quantize a linear [0, 1] value to 8 bits, optionally applying `x^(1/2.2)`.
#[inline]
pub fn to_u8(x: f32, gamma: bool) -> u8 {
    let x = if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
    let x = if gamma { x.powf(1.0 / 2.2) } else { x };
    (x * 255.0 + 0.5) as u8
}

/// Convert a float image to 8 bits. `gamma` selects the 2.2 preview curve.
pub fn quantize(img: &RgbImage, gamma: bool) -> Rgb8Image {
    let mut data = Vec::with_capacity(img.pixels.len() * 3);
    for p in &img.pixels {
        data.extend(p.iter().map(|&c| to_u8(c, gamma)));
    }
    Rgb8Image {
        width: img.width,
        height: img.height,
        data,
    }
}
