//! Upper/lower panel boundary extraction with the vertical Prewitt pair.
//!
//! `G_Y1` responds positively where intensity drops going down the image
//! (panel above, background below: the lower boundary); `G_Y2 = -G_Y1`
//! responds positively on the opposite transition (the upper boundary).
//! Boundary points are taken one per column, then grouped into segments by
//! column gaps and short segments are discarded.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{mask_to_gray, ClassMask, GrayImage, SignedResponseImage};
use crate::robustfit::Point;

pub type Kernel3 = [[i32; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrewittKernels {
    pub g_y1: Kernel3,
    pub g_y2: Kernel3,
}

pub const PREWITT_VERTICAL: PrewittKernels = PrewittKernels {
    g_y1: [[1, 1, 1], [0, 0, 0], [-1, -1, -1]],
    g_y2: [[-1, -1, -1], [0, 0, 0], [1, 1, 1]],
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("image is {width}x{height}, convolution needs at least 3x3")]
    ImageTooSmall { width: usize, height: usize },
    #[error("response images differ in size: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("mask contains no panel pixels")]
    NoPanelPixels,
    #[error("no qualifying edge responses")]
    NoEdgeResponses,
    #[error("all {0} boundary segments were filtered out")]
    AllSegmentsFiltered(Boundary),
    #[error("invalid edge parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Upper,
    Lower,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Upper => "upper",
            Boundary::Lower => "lower",
        }
    }

    /// Offset from a detected pixel row to the boundary it marks.
    ///
    /// Detected points sit on the background row adjacent to the panel; the
    /// boundary itself lies half a pixel toward the panel.
    pub fn row_offset(self) -> f64 {
        match self {
            Boundary::Upper => 0.5,
            Boundary::Lower => -0.5,
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgePoint {
    pub x: u32,
    pub y: u32,
}

impl EdgePoint {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl From<EdgePoint> for Point {
    fn from(p: EdgePoint) -> Self {
        Point::new(f64::from(p.x), f64::from(p.y))
    }
}

/// Column-ordered run of boundary points, at most one per column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSegment {
    pub boundary: Boundary,
    pub points: Vec<EdgePoint>,
}

impl EdgeSegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgePointSet {
    pub upper: Vec<EdgeSegment>,
    pub lower: Vec<EdgeSegment>,
    pub width: usize,
    pub height: usize,
}

impl EdgePointSet {
    pub fn segments(&self, boundary: Boundary) -> &[EdgeSegment] {
        match boundary {
            Boundary::Upper => &self.upper,
            Boundary::Lower => &self.lower,
        }
    }

    pub fn points(&self, boundary: Boundary) -> impl Iterator<Item = EdgePoint> + '_ {
        self.segments(boundary)
            .iter()
            .flat_map(|s| s.points.iter().copied())
    }

    /// All points of one boundary pooled across segments, shifted from the
    /// detected pixel row onto the boundary position.
    pub fn fit_points(&self, boundary: Boundary) -> Vec<Point> {
        let dy = boundary.row_offset();
        self.points(boundary)
            .map(|p| Point::new(f64::from(p.x), f64::from(p.y) + dy))
            .collect()
    }

    /// Column range `[min, max]` covered by a boundary, if it has any points.
    pub fn x_range(&self, boundary: Boundary) -> Option<(u32, u32)> {
        let mut xs = self.points(boundary).map(|p| p.x);
        let first = xs.next()?;
        Some(xs.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
    }

    pub fn point_count(&self) -> usize {
        self.points(Boundary::Upper).count() + self.points(Boundary::Lower).count()
    }

    /// Debug dump: `x,y,boundary,segment_id`, segment ids counted per boundary.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,y,boundary,segment_id")?;
        for boundary in [Boundary::Upper, Boundary::Lower] {
            for (id, seg) in self.segments(boundary).iter().enumerate() {
                for p in &seg.points {
                    writeln!(out, "{},{},{},{}", p.x, p.y, boundary, id)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdgeDetectParams {
    /// Edge-strength cutoff; a point qualifies when its strength is strictly greater.
    pub response_threshold: f64,
    pub min_segment_length: usize,
    /// Largest column step allowed between consecutive points of one segment.
    pub gap_tolerance: usize,
}

impl Default for EdgeDetectParams {
    fn default() -> Self {
        Self {
            response_threshold: 1.0,
            min_segment_length: 20,
            gap_tolerance: 2,
        }
    }
}

impl EdgeDetectParams {
    pub fn validate(&self) -> Result<(), EdgeError> {
        if !(self.response_threshold >= 0.0 && self.response_threshold.is_finite()) {
            return Err(EdgeError::InvalidParams(format!(
                "response_threshold must be a finite nonnegative number, got {}",
                self.response_threshold
            )));
        }
        if self.min_segment_length < 2 {
            return Err(EdgeError::InvalidParams(format!(
                "min_segment_length must be at least 2, got {}",
                self.min_segment_length
            )));
        }
        if self.gap_tolerance < 1 {
            return Err(EdgeError::InvalidParams(
                "gap_tolerance must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// 3x3 correlation with replicate-edge padding, no normalization:
/// `out(x, y) = Σ kernel[1+dy][1+dx] · image(x+dx, y+dy)`.
pub fn convolve3x3(image: &GrayImage, kernel: &Kernel3) -> Result<SignedResponseImage, EdgeError> {
    let (w, h) = (image.width(), image.height());
    if w < 3 || h < 3 {
        return Err(EdgeError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let src = image.as_slice();
    let mut out = vec![0i32; w * h];

    for y in 0..h {
        let rows = [y.saturating_sub(1), y, (y + 1).min(h - 1)];
        let rows = rows.map(|r| &src[r * w..(r + 1) * w]);
        let dst = &mut out[y * w..(y + 1) * w];
        let taps: Vec<(i32, &[u8], usize)> = (0..3)
            .flat_map(|ky| (0..3).map(move |kx| (ky, kx)))
            .filter(|&(ky, kx)| kernel[ky][kx] != 0)
            .map(|(ky, kx)| (kernel[ky][kx], rows[ky], kx))
            .collect();

        for (x, d) in dst.iter_mut().enumerate() {
            let cols = [x.saturating_sub(1), x, (x + 1).min(w - 1)];
            let mut acc = 0i32;
            for &(weight, row, kx) in &taps {
                acc += weight * i32::from(row[cols[kx]]);
            }
            *d = acc;
        }
    }
    Ok(SignedResponseImage::new(w, h, out).expect("buffer sized from image"))
}

/// Per-pixel `sqrt(r1² + r2²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStrength {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl EdgeStrength {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

pub fn edge_strength(
    r1: &SignedResponseImage,
    r2: &SignedResponseImage,
) -> Result<EdgeStrength, EdgeError> {
    let d1 = (r1.width(), r1.height());
    let d2 = (r2.width(), r2.height());
    if d1 != d2 {
        return Err(EdgeError::DimensionMismatch(d1, d2));
    }
    let data = r1
        .as_slice()
        .iter()
        .zip(r2.as_slice())
        .map(|(&a, &b)| {
            let (a, b) = (f64::from(a), f64::from(b));
            (a * a + b * b).sqrt() as f32
        })
        .collect();
    Ok(EdgeStrength {
        width: d1.0,
        height: d1.1,
        data,
    })
}

/// Finds the topmost upper-boundary and bottommost lower-boundary point in
/// every column, grouped into raw (unfiltered) segments.
pub fn extract_boundary_points(
    mask: &ClassMask,
    params: &EdgeDetectParams,
) -> Result<EdgePointSet, EdgeError> {
    params.validate()?;
    if mask.panel_count() == 0 {
        return Err(EdgeError::NoPanelPixels);
    }
    let gray = mask_to_gray(mask);
    let r1 = convolve3x3(&gray, &PREWITT_VERTICAL.g_y1)?;
    let r2 = convolve3x3(&gray, &PREWITT_VERTICAL.g_y2)?;
    let strength = edge_strength(&r1, &r2)?;

    let (w, h) = (mask.width(), mask.height());
    let threshold = params.response_threshold;
    let qualifies = |resp: &SignedResponseImage, x: usize, y: usize| {
        resp.get(x, y) > 0 && f64::from(strength.get(x, y)) > threshold
    };

    // Row-order sweeps keep memory access sequential on full frames.
    let mut upper: Vec<Option<u32>> = vec![None; w];
    let mut remaining = w;
    for y in 0..h {
        if remaining == 0 {
            break;
        }
        for (x, slot) in upper.iter_mut().enumerate() {
            if slot.is_none() && qualifies(&r2, x, y) {
                *slot = Some(y as u32);
                remaining -= 1;
            }
        }
    }
    let mut lower: Vec<Option<u32>> = vec![None; w];
    let mut remaining = w;
    for y in (0..h).rev() {
        if remaining == 0 {
            break;
        }
        for (x, slot) in lower.iter_mut().enumerate() {
            if slot.is_none() && qualifies(&r1, x, y) {
                *slot = Some(y as u32);
                remaining -= 1;
            }
        }
    }

    let upper = group_segments(&upper, Boundary::Upper, params.gap_tolerance);
    let lower = group_segments(&lower, Boundary::Lower, params.gap_tolerance);
    if upper.is_empty() && lower.is_empty() {
        return Err(EdgeError::NoEdgeResponses);
    }
    Ok(EdgePointSet {
        upper,
        lower,
        width: w,
        height: h,
    })
}

fn group_segments(
    rows: &[Option<u32>],
    boundary: Boundary,
    gap_tolerance: usize,
) -> Vec<EdgeSegment> {
    let mut segments: Vec<EdgeSegment> = Vec::new();
    let mut last_x: Option<usize> = None;
    for (x, y) in rows.iter().enumerate() {
        let Some(y) = *y else { continue };
        let point = EdgePoint::new(x as u32, y);
        match (last_x, segments.last_mut()) {
            (Some(prev), Some(seg)) if x - prev <= gap_tolerance => seg.points.push(point),
            _ => segments.push(EdgeSegment {
                boundary,
                points: vec![point],
            }),
        }
        last_x = Some(x);
    }
    segments
}

/// Drops segments shorter than `min_segment_length`.
///
/// Fails when either boundary is left without a segment: such a panel cannot
/// be fitted.
pub fn filter_segments(
    points: &EdgePointSet,
    params: &EdgeDetectParams,
) -> Result<EdgePointSet, EdgeError> {
    params.validate()?;
    let keep = |segs: &[EdgeSegment], boundary| {
        let kept: Vec<EdgeSegment> = segs
            .iter()
            .filter(|s| s.len() >= params.min_segment_length)
            .cloned()
            .collect();
        if kept.is_empty() {
            Err(EdgeError::AllSegmentsFiltered(boundary))
        } else {
            Ok(kept)
        }
    };
    Ok(EdgePointSet {
        upper: keep(&points.upper, Boundary::Upper)?,
        lower: keep(&points.lower, Boundary::Lower)?,
        width: points.width,
        height: points.height,
    })
}

/// Extraction followed by segment filtering.
pub fn detect_edges(
    mask: &ClassMask,
    params: &EdgeDetectParams,
) -> Result<EdgePointSet, EdgeError> {
    let raw = extract_boundary_points(mask, params)?;
    filter_segments(&raw, params)
}
