//! 8-bit grayscale images, float working images, and binary PGM (P5) I/O.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PGM: {0}")]
    Malformed(String),
    #[error("image dimensions must be non-zero, got {0}x{1}")]
    Empty(usize, usize),
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty(width, height));
        }
        if data.len() != width * height {
            return Err(ImageError::Malformed(format!(
                "buffer length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
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

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Copy out a sub-rectangle. Panics if it does not fit.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage {
            width: w,
            height: h,
            data,
        }
    }

    /// Rotate 90 degrees clockwise: pixel (x, y) moves to (h - 1 - y, x).
    pub fn rotate90_cw(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let mut out = GrayImage::new(h, w);
        for y in 0..h {
            for x in 0..w {
                out.set(h - 1 - y, x, self.get(x, y));
            }
        }
        out
    }

    pub fn to_f32(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), ImageError> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_pgm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_pgm<R: Read>(r: R) -> Result<Self, ImageError> {
        let mut r = BufReader::new(r);
        let magic = next_token(&mut r)?;
        if magic != "P5" {
            return Err(ImageError::Malformed(format!("expected P5 magic, found {magic:?}")));
        }
        let width = parse_usize(&next_token(&mut r)?)?;
        let height = parse_usize(&next_token(&mut r)?)?;
        let maxval = parse_usize(&next_token(&mut r)?)?;
        if maxval != 255 {
            return Err(ImageError::Malformed(format!("unsupported maxval {maxval}")));
        }
        let mut data = vec![0u8; width * height];
        r.read_exact(&mut data)
            .map_err(|_| ImageError::Malformed("truncated pixel data".into()))?;
        Self::from_raw(width, height, data)
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::read_pgm(std::fs::File::open(path)?)
    }
}

fn parse_usize(s: &str) -> Result<usize, ImageError> {
    s.parse()
        .map_err(|_| ImageError::Malformed(format!("bad header integer {s:?}")))
}

/// Read one whitespace-delimited header token, skipping `#` comments. Consumes
/// exactly one whitespace byte after the token, as the format requires.
fn next_token<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(ImageError::Malformed("unexpected end of header".into()));
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut line = Vec::new();
            r.read_until(b'\n', &mut line)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c as char);
    }
}

/// Row-major float image used for smoothing, pyramids and sub-pixel work.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn empty() -> Self {
        Self {
            width: 0,
            height: 0,
            data: Vec::new(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Bilinear sample with pixel centers at integer coordinates. Returns
    /// `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let (w, h) = (self.width, self.height);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        if x0 >= w || y0 >= h {
            return None;
        }
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let x1 = if x0 + 1 < w { x0 + 1 } else { x0 };
        let y1 = if y0 + 1 < h { y0 + 1 } else { y0 };
        if (x1 == x0 && fx > 0.0) || (y1 == y0 && fy > 0.0) {
            return None;
        }
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        Some((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy)
    }

    /// Separable Gaussian blur with clamped borders.
    pub fn gaussian_blur(&self, sigma: f32) -> FloatImage {
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f32> = (-radius..=radius)
            .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f32 = kernel.iter().sum();
        let kernel: Vec<f32> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let xx = (x + k as isize - radius).clamp(0, w - 1);
                    acc += kv * self.data[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = acc;
            }
        }
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = (y + k as isize - radius).clamp(0, h - 1);
                    acc += kv * tmp[(yy * w + x) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        FloatImage {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    /// Bilinear resize with center-aligned pixel grids.
    pub fn resize(&self, new_w: usize, new_h: usize) -> FloatImage {
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let mut data = Vec::with_capacity(new_w * new_h);
        for y in 0..new_h {
            let yy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            for x in 0..new_w {
                let xx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                data.push(self.sample(xx, yy).unwrap_or(0.0));
            }
        }
        FloatImage {
            width: new_w,
            height: new_h,
            data,
        }
    }

    /// Round to the nearest 8-bit value, saturating.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let img = GrayImage::from_fn(7, 5, |x, y| (x * 31 + y * 7) as u8);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = GrayImage::read_pgm(&buf[..]).unwrap();
        assert_eq!(img, back);

        let mut commented = b"P5\n# made by hand\n7 5\n255\n".to_vec();
        commented.extend_from_slice(img.as_raw());
        assert_eq!(GrayImage::read_pgm(&commented[..]).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_p2_and_truncation() {
        assert!(GrayImage::read_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(GrayImage::read_pgm(&b"P5\n4 4\n255\n\x01\x02"[..]).is_err());
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x + 10 * y) as u8);
        let r = img.rotate90_cw();
        assert_eq!((r.width(), r.height()), (3, 5));
        assert_eq!(r.get(2, 0), img.get(0, 0));
        assert_eq!(r.rotate90_cw().rotate90_cw().rotate90_cw(), img);
    }

    #[test]
    fn bilinear_sample_interpolates() {
        let img = GrayImage::from_fn(2, 2, |x, y| (x * 100 + y * 10) as u8).to_f32();
        assert_eq!(img.sample(0.5, 0.5), Some(55.0));
        assert_eq!(img.sample(1.0, 1.0), Some(110.0));
        assert_eq!(img.sample(1.01, 0.0), None);
        assert_eq!(img.sample(-0.01, 0.0), None);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = GrayImage::from_fn(16, 16, |_, _| 77).to_f32();
        let b = img.gaussian_blur(2.0);
        assert!(b.data.iter().all(|v| (v - 77.0).abs() < 1e-3));
    }
}
