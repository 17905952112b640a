//! Brightness-statistics quadtree: reduces the first image to square candidate
//! landing regions (ROIs) with low brightness variance, adequate mean
//! brightness (no shadow) and a large enough ground footprint.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::image::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum QuadtreeError {
    #[error("no region satisfied the landing criteria")]
    EmptyResult,
    #[error("range must be positive, got {0}")]
    InvalidRange(f64),
    #[error("invalid criteria: {0}")]
    InvalidCriteria(String),
    #[error("image {0}x{1} is too small for the minimum region size")]
    ImageTooSmall(usize, usize),
}

/// Axis-aligned pixel rectangle `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn square(x0: usize, y0: usize, size: usize) -> Self {
        Self {
            x0,
            y0,
            width: size,
            height: size,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// Candidate landing region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub index: usize,
    pub x0: usize,
    pub y0: usize,
    pub width_px: usize,
    pub height_px: usize,
    pub mean_brightness: f64,
    pub stddev_brightness: f64,
    /// Smaller ground side length (m).
    pub footprint_m: f64,
}

impl Roi {
    pub fn rect(&self) -> Rect {
        Rect {
            x0: self.x0,
            y0: self.y0,
            width: self.width_px,
            height: self.height_px,
        }
    }

    /// Pixel-coordinate center of the region.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + 0.5 * (self.width_px as f64 - 1.0),
            self.y0 as f64 + 0.5 * (self.height_px as f64 - 1.0),
        )
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.x0 as f64 - 0.5
            && v >= self.y0 as f64 - 0.5
            && u < (self.x0 + self.width_px) as f64 - 0.5
            && v < (self.y0 + self.height_px) as f64 - 0.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadtreeCriteria {
    /// Maximum brightness standard deviation (0-255 scale). The default
    /// sits between textured flat ground (about 3) and a 10 m leaf holding a
    /// quarter of a 2 m boulder's shadow (about 9) under a 30 degree sun.
    pub max_stddev: f64,
    /// Minimum mean brightness (0-255 scale); darker regions are shadow.
    pub min_mean: f64,
    pub min_size_px: usize,
    /// Smallest acceptable ground side length (m).
    pub min_footprint_m: f64,
    pub max_depth: usize,
}

impl Default for QuadtreeCriteria {
    fn default() -> Self {
        Self {
            max_stddev: 8.0,
            min_mean: 20.0,
            min_size_px: 16,
            min_footprint_m: 9.5,
            max_depth: 8,
        }
    }
}

impl QuadtreeCriteria {
    pub fn validate(&self) -> Result<(), QuadtreeError> {
        if self.min_size_px < 2 {
            return Err(QuadtreeError::InvalidCriteria("min_size_px must be >= 2".into()));
        }
        if !(self.min_footprint_m > 0.0) {
            return Err(QuadtreeError::InvalidCriteria("min_footprint_m must be > 0".into()));
        }
        if !(self.max_stddev >= 0.0) {
            return Err(QuadtreeError::InvalidCriteria("max_stddev must be >= 0".into()));
        }
        Ok(())
    }
}

/// Summed-area tables of pixel values and squared values.
pub struct IntegralImage {
    stride: usize,
    sum: Vec<u64>,
    sq: Vec<u64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sq = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut rs = 0u64;
            let mut rq = 0u64;
            for (x, &v) in img.row(y).iter().enumerate() {
                rs += v as u64;
                rq += (v as u64) * (v as u64);
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + rs;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + rq;
            }
        }
        Self { stride, sum, sq }
    }

    fn boxed(table: &[u64], stride: usize, r: &Rect) -> u64 {
        let (x0, y0, x1, y1) = (r.x0, r.y0, r.x0 + r.width, r.y0 + r.height);
        table[y1 * stride + x1] + table[y0 * stride + x0] - table[y0 * stride + x1] - table[y1 * stride + x0]
    }

    /// Exact population mean and standard deviation over `r`.
    pub fn stats(&self, r: &Rect) -> (f64, f64) {
        let n = r.area() as u128;
        let s = Self::boxed(&self.sum, self.stride, r) as u128;
        let q = Self::boxed(&self.sq, self.stride, r) as u128;
        // n^2 var = n q - s^2, evaluated exactly in integers
        let num = n * q - s * s;
        let mean = s as f64 / n as f64;
        let var = num as f64 / (n * n) as f64;
        (mean, var.sqrt())
    }
}

/// Mean and population standard deviation of the pixels in `rect`.
pub fn roi_stats(image: &GrayImage, rect: &Rect) -> (f64, f64) {
    assert!(
        rect.area() > 0 && rect.x0 + rect.width <= image.width() && rect.y0 + rect.height <= image.height(),
        "rect out of bounds"
    );
    IntegralImage::new(image).stats(rect)
}

/// Ground extent of an image-space region seen at `range_m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub across_m: f64,
    pub down_m: f64,
}

impl Footprint {
    pub fn min_side(&self) -> f64 {
        self.across_m.min(self.down_m)
    }

    pub fn area_m2(&self) -> f64 {
        self.across_m * self.down_m
    }
}

/// Ground footprint from pixel size and laser range. The down-range (image
/// vertical) axis is stretched by `1 / cos(look_angle)`.
pub fn footprint_of(rect: &Rect, range_m: f64, cam: &CameraModel, look_angle: f64) -> Footprint {
    let gsd = cam.gsd_at(range_m);
    Footprint {
        across_m: rect.width as f64 * gsd,
        down_m: rect.height as f64 * gsd / look_angle.cos().abs().max(1e-6),
    }
}

/// Terminal node of the decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    pub rect: Rect,
    pub depth: usize,
    pub mean: f64,
    pub stddev: f64,
    pub footprint_m: f64,
    pub accepted: bool,
}

/// Full quadtree output: every leaf (accepted or not) plus the accepted ROIs.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// Centered square crop actually decomposed.
    pub crop: Rect,
    /// All leaves, row-major by `(y0, x0)`; they tile `crop` exactly.
    pub leaves: Vec<Leaf>,
    /// Accepted leaves as ROIs, indexed in the same row-major order.
    pub rois: Vec<Roi>,
}

impl Decomposition {
    /// Accepted ROIs, or `EmptyResult` when nothing survived.
    pub fn candidates(&self) -> Result<&[Roi], QuadtreeError> {
        if self.rois.is_empty() {
            Err(QuadtreeError::EmptyResult)
        } else {
            Ok(&self.rois)
        }
    }

    pub fn accepted_area_px(&self) -> usize {
        self.leaves.iter().filter(|l| l.accepted).map(|l| l.rect.area()).sum()
    }

    /// CSV `index,x0,y0,size_px,mean,stddev,footprint_m,accepted`; rejected
    /// leaves have an empty index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,x0,y0,size_px,mean,stddev,footprint_m,accepted")?;
        let mut next = 0;
        for l in &self.leaves {
            let idx = if l.accepted {
                next += 1;
                (next - 1).to_string()
            } else {
                String::new()
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                idx, l.rect.x0, l.rect.y0, l.rect.width, l.mean, l.stddev, l.footprint_m, l.accepted
            )?;
        }
        Ok(())
    }
}

/// Largest centered square with a power-of-two side.
pub fn center_crop(width: usize, height: usize) -> Rect {
    let side = width.min(height);
    let side = if side == 0 { 0 } else { 1usize << (usize::BITS - 1 - side.leading_zeros()) };
    Rect::square((width - side) / 2, (height - side) / 2, side)
}

struct Ctx<'a> {
    integral: &'a IntegralImage,
    criteria: &'a QuadtreeCriteria,
    range_m: f64,
    cam: &'a CameraModel,
    look_angle: f64,
}

impl Ctx<'_> {
    fn recurse(&self, rect: Rect, depth: usize, out: &mut Vec<Leaf>) {
        let (mean, stddev) = self.integral.stats(&rect);
        let footprint = footprint_of(&rect, self.range_m, self.cam, self.look_angle).min_side();
        let c = self.criteria;
        let half = rect.width / 2;
        let child_fp = footprint_of(&Rect::square(0, 0, half), self.range_m, self.cam, self.look_angle).min_side();
        let can_split =
            depth < c.max_depth && rect.width.is_multiple_of(2) && half >= c.min_size_px && child_fp >= c.min_footprint_m;
        // dark regions are subdivided too, so lit sub-regions are still found
        // and lowering max_stddev can only shrink the accepted area
        if (stddev > c.max_stddev || mean < c.min_mean) && can_split {
            for (dy, dx) in [(0, 0), (0, half), (half, 0), (half, half)] {
                self.recurse(Rect::square(rect.x0 + dx, rect.y0 + dy, half), depth + 1, out);
            }
            return;
        }
        let accepted = stddev <= c.max_stddev
            && mean >= c.min_mean
            && footprint >= c.min_footprint_m
            && rect.width >= c.min_size_px;
        out.push(Leaf {
            rect,
            depth,
            mean,
            stddev,
            footprint_m: footprint,
            accepted,
        });
    }
}

/// Decompose `image` into homogeneous square leaves.
///
/// Non-square inputs are center-cropped to the largest power-of-two square.
/// `look_angle` is the boresight angle from local vertical (radians).
pub fn decompose(
    image: &GrayImage,
    criteria: &QuadtreeCriteria,
    range_m: f64,
    cam: &CameraModel,
    look_angle: f64,
) -> Result<Decomposition, QuadtreeError> {
    if !(range_m > 0.0 && range_m.is_finite()) {
        return Err(QuadtreeError::InvalidRange(range_m));
    }
    criteria.validate()?;
    let crop = center_crop(image.width(), image.height());
    if crop.width < criteria.min_size_px {
        return Err(QuadtreeError::ImageTooSmall(image.width(), image.height()));
    }
    let integral = IntegralImage::new(image);
    let ctx = Ctx {
        integral: &integral,
        criteria,
        range_m,
        cam,
        look_angle,
    };
    let mut leaves = Vec::new();
    ctx.recurse(crop, 0, &mut leaves);
    leaves.sort_by_key(|l| (l.rect.y0, l.rect.x0));
    let rois = leaves
        .iter()
        .filter(|l| l.accepted)
        .enumerate()
        .map(|(index, l)| Roi {
            index,
            x0: l.rect.x0,
            y0: l.rect.y0,
            width_px: l.rect.width,
            height_px: l.rect.height,
            mean_brightness: l.mean,
            stddev_brightness: l.stddev,
            footprint_m: l.footprint_m,
        })
        .collect();
    Ok(Decomposition { crop, leaves, rois })
}
